"""Tangency detection between folding manifolds and the stable plane field.

Two detectors on purpose, sharing no mathematics:

  * the Newton detector solves the s*c_T orthogonality conditions
    "stable plane at embed(t) lies inside the fold tangent at t" in the k
    fold parameters, using the pullback bundle of the cocycle module;
  * the sweep detector never touches planes: it orders stable leaves by a
    scalar leaf coordinate built from forward orbits only, and bisects for
    the first leaf the fold patch reaches (elliptic folds only).

Agreement of the two is itself a checked invariant.  Classification counts
coincident tangent directions: c_T = d_T - k_T with k_T the generic
intersection index dim TU + dim TS - d.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ambient import (
    AmbientPoint,
    Subspace,
    intersection_directions,
    orthonormalize,
    principal_angles,
    wrap_difference,
)
from .errors import (
    DimensionMismatch,
    EmptyIntersection,
    InvalidDimension,
    LeftDomain,
    NoConvergence,
    NotElliptic,
    OutOfDomain,
)
from .cocycle import stable_plane
from .folding import FoldingManifold, embed, normal_frame, tangent_frame
from .systems import apply, apply_many, differential

# Principal angles below this count as coincident tangent directions.
CLASS_ANGLE_TOL = 1e-6
NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 50
NEWTON_FD_STEP = 1e-6
MIN_DAMPING = 2.0**-10
SWEEP_GRID = 9
SWEEP_FD_STEP = 1e-5
SWEEP_SOLVE_TOL = 1e-13
LEAF_SERIES_TERMS = 40


class Transverse:
    """Marker for a generic (non-tangencial) intersection of tangent spaces."""

    __slots__ = ()

    def __repr__(self):
        return "Transverse()"


TRANSVERSE = Transverse()


@dataclass(frozen=True)
class TangencyClass:
    """Codimension c_T, tangency dimension d_T, signed co-index k_T."""

    c_T: int
    d_T: int
    k_T: int

    def __post_init__(self):
        if self.c_T != self.d_T - self.k_T:
            raise InvalidDimension("tangency class must satisfy c_T = d_T - k_T")
        if self.d_T < 1 or self.c_T < 1:
            raise InvalidDimension("a tangency needs d_T >= 1 and c_T >= 1")

    def to_dict(self) -> dict:
        return {"cT": self.c_T, "dT": self.d_T, "kT": self.k_T}


@dataclass(frozen=True, eq=False)
class TangencyReport:
    """Outcome of one detector run.

    t_star is the fold parameter of the detected point, plane the common
    tangencial subspace (d_T directions).  residual_norm means the detector's
    own convergence measure: the tangency-residual norm for newton, the final
    bisection bracket width for sweep.  leaf_parameter is the sweep's leaf
    coordinate of the tangency leaf, None for newton reports.
    """

    detector: str
    t_star: np.ndarray
    point: AmbientPoint
    plane: Subspace
    tangency_class: TangencyClass
    residual_norm: float
    principal_angle_values: np.ndarray
    iterations: int
    leaf_parameter: float = None

    def to_dict(self) -> dict:
        return {
            "detector": self.detector,
            "t_star": self.t_star.tolist(),
            "point": self.point.coords.tolist(),
            "class": self.tangency_class.to_dict(),
            "residual_norm": self.residual_norm,
            "principal_angles": self.principal_angle_values.tolist(),
            "iterations": self.iterations,
            "leaf_parameter": self.leaf_parameter,
        }


# ---------------------------------------------------------------------------
# classification


def classify(tu: Subspace, ts: Subspace, ambient_dim: int, angle_tol: float = CLASS_ANGLE_TOL):
    """Tangency class of two tangent subspaces meeting at a point.

    d_T counts principal angles below angle_tol; k_T = dim TU + dim TS - d
    is the dimension a generic intersection would have.  Returns TRANSVERSE
    when the count is generic (d_T = max(k_T, 0)), else the TangencyClass
    with c_T = d_T - k_T > 0.
    """
    if tu.ambient_dim != ambient_dim or ts.ambient_dim != ambient_dim:
        raise DimensionMismatch("subspaces do not live in the stated ambient dimension")
    angles = principal_angles(tu, ts)
    d_t = angles.count_below(angle_tol)
    k_t = tu.dim + ts.dim - ambient_dim
    if d_t <= max(k_t, 0):
        return TRANSVERSE
    return TangencyClass(c_T=d_t - k_t, d_T=d_t, k_T=k_t)


# ---------------------------------------------------------------------------
# the residual the Newton detector drives to zero


def _canonical_stable_basis(sys, plane: Subspace) -> np.ndarray:
    """Basis of an estimated stable plane depending on the plane alone.

    The pullback chain returns some orthonormal basis whose in-plane
    orientation carries orbit history, and nearby base points have
    decorrelated orbits; differencing such bases is meaningless.  Projecting
    the scenario's reference stable frame onto the plane and orthonormalizing
    gives a basis that varies as smoothly as the plane itself.
    """
    reference = sys.stable_frame.frame
    projected = plane.frame @ (plane.frame.T @ reference)
    return orthonormalize(projected).frame


def tangency_residual(sys, fold: FoldingManifold, t, pullback_steps: int = 60) -> np.ndarray:
    """Components of the stable-plane basis orthogonal to the fold tangent.

    At x = embed(fold, t) the stable plane (s columns, in the canonical
    basis above) is projected on the orthonormal normal frame of the fold
    (c_T columns); the s*c_T numbers vanish exactly when the stable plane
    lies inside the tangent plane.  Layout is stable-vector-major: entries
    [j*c_T:(j+1)*c_T] belong to the j-th stable basis vector.
    """
    t = np.asarray(t, dtype=float)
    x = embed(fold, t)
    est = stable_plane(sys, x, n=pullback_steps)
    normal = normal_frame(fold, t)
    basis = _canonical_stable_basis(sys, est.plane)
    return (normal.frame.T @ basis).T.ravel()


def _report_for_point(sys, fold, detector, t, residual_norm, iterations,
                      pullback_steps, leaf_parameter=None) -> TangencyReport:
    point = embed(fold, t)
    tu = tangent_frame(fold, t)
    ts = stable_plane(sys, point, n=pullback_steps).plane
    angles = principal_angles(tu, ts)
    tangency_class = classify(tu, ts, fold.ambient_dim)
    if tangency_class is TRANSVERSE:
        raise NoConvergence(
            "detected point classifies as transverse; angle and residual "
            "tolerances are inconsistent"
        )
    directions = intersection_directions(tu, ts, CLASS_ANGLE_TOL)
    return TangencyReport(
        detector=detector,
        t_star=np.array(t, dtype=float),
        point=point,
        plane=Subspace(directions),
        tangency_class=tangency_class,
        residual_norm=float(residual_norm),
        principal_angle_values=angles.angles,
        iterations=iterations,
        leaf_parameter=leaf_parameter,
    )


def find_tangency_newton(
    sys,
    fold: FoldingManifold,
    t0=None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    fd_step: float = NEWTON_FD_STEP,
    pullback_steps: int = 60,
) -> TangencyReport:
    """Damped Newton on the tangency residual in the k fold parameters.

    The system is square (s*c_T equations, k = s*c_T unknowns); the Jacobian
    is a central finite difference.  Iterates leaving the fold's model domain
    or the contracting box raise LeftDomain; stagnation raises NoConvergence.
    """
    k = fold.k
    t = np.zeros(k) if t0 is None else np.array(t0, dtype=float)
    if t.shape != (k,):
        raise DimensionMismatch(f"start parameter must have length {k}")

    box_dim = getattr(sys, "box_dim", 0)

    def residual_at(params):
        if np.max(np.abs(params)) > 1.0:
            raise OutOfDomain("parameter outside the model domain")
        x = embed(fold, params)
        if box_dim and np.any(np.abs(x.coords[:box_dim]) > sys.epsilon):
            raise OutOfDomain("iterate left the contracting box")
        return tangency_residual(sys, fold, params, pullback_steps)

    try:
        res = residual_at(t)
    except OutOfDomain as exc:
        raise LeftDomain(str(exc)) from exc
    norm = float(np.linalg.norm(res))

    for iteration in range(max_iter):
        if norm < tol:
            return _report_for_point(
                sys, fold, "newton", t, norm, iteration, pullback_steps
            )
        jac = np.empty((res.size, k))
        try:
            for j in range(k):
                step = np.zeros(k)
                step[j] = fd_step
                jac[:, j] = (residual_at(t + step) - residual_at(t - step)) / (2.0 * fd_step)
        except OutOfDomain as exc:
            raise LeftDomain(str(exc)) from exc
        try:
            full_step = np.linalg.solve(jac, res)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular tangency Jacobian at iteration {iteration}") from exc

        damping = 1.0
        accepted = False
        any_inside = False
        while damping >= MIN_DAMPING:
            trial = t - damping * full_step
            try:
                trial_res = residual_at(trial)
            except OutOfDomain:
                damping /= 2.0
                continue
            any_inside = True
            trial_norm = float(np.linalg.norm(trial_res))
            if trial_norm < norm:
                t, res, norm = trial, trial_res, trial_norm
                accepted = True
                break
            damping /= 2.0
        if not accepted:
            if not any_inside:
                raise LeftDomain("every damped Newton trial left the model domain")
            raise NoConvergence(
                f"damping exhausted at residual {norm:.3e} (iteration {iteration})"
            )

    if norm < tol:
        return _report_for_point(sys, fold, "newton", t, norm, max_iter, pullback_steps)
    raise NoConvergence(f"tangency residual {norm:.3e} after {max_iter} iterations")


# ---------------------------------------------------------------------------
# leaf families for the sweep detector


def _skew_linear(sys, coords: np.ndarray) -> np.ndarray:
    """The linear skeleton (contraction x base matrix), no displacement fields."""
    bd = sys.box_dim
    out = np.empty_like(coords)
    out[:, :bd] = coords[:, :bd] * sys.contraction_rates
    out[:, bd:] = coords[:, bd:] @ sys.base.matrix.T.astype(float)
    return out


@dataclass(frozen=True, eq=False)
class LeafFamily:
    """Stable leaves ordered by a scalar leaf coordinate.

    The coordinate of x is the expanding component of the offset from the
    anchor's orbit:  w . wrap(x - a)  plus the series
    sum_n lambda^{-(n+1)} w . (delta(x_n) - delta(a_n)),  where delta is the
    pointwise displacement of the map over its linear skeleton and w the
    expanding covector of that skeleton.  Each term uses only wrapped
    pointwise quantities, so no lift bookkeeping enters; two points lie on
    the same stable leaf exactly when their coordinates agree (the partial
    sums differ by lambda^{-N} w . (x_N - y_N), which contracts).  The
    anchor is a fixed point, so leaf parameter 0 is the anchor's own leaf.
    """

    system: object
    anchor: AmbientPoint
    radius: float
    terms: int

    @cached_property
    def covector(self) -> np.ndarray:
        return self.system.unstable_direction

    def leaf_value_many(self, coords: np.ndarray) -> np.ndarray:
        """Leaf coordinates of coordinate rows (m, d); anchored at zero."""
        sys = self.system
        mask = sys.periodic_mask
        rows = np.vstack([coords, self.anchor.coords[None, :]])
        w = self.covector
        total = wrap_difference(rows - self.anchor.coords, mask) @ w
        factor = 1.0
        for _ in range(self.terms):
            images = apply_many(sys, rows)
            displacement = wrap_difference(images - _skew_linear(sys, rows), mask)
            factor /= sys.expansion_rate
            values = displacement @ w
            total += factor * (values - values[-1])
            rows = images
        return total[:-1] - total[-1]

    def leaf_value(self, x: AmbientPoint) -> float:
        return float(self.leaf_value_many(x.coords[None, :])[0])


def build_leaf_family(sys, radius: float = 0.5, terms: int = LEAF_SERIES_TERMS) -> LeafFamily:
    """Leaf family of a c_T = 1 scenario, anchored at the refined fixed point."""
    if sys.c_T != 1:
        raise NotElliptic("leaf families require a single expanding direction (c_T = 1)")
    if not (radius > 0.0):
        raise InvalidDimension("leaf family radius must be positive")
    coords = sys.reference_point.coords.copy()
    for _ in range(30):
        point = sys.point(coords)
        image = apply(sys, point)
        gap = wrap_difference(image.coords - point.coords, sys.periodic_mask)
        if np.max(np.abs(gap)) < 1e-14:
            break
        jac = differential(sys, point) - np.eye(sys.d)
        coords = point.coords - np.linalg.solve(jac, gap)
    else:
        raise NoConvergence("anchor fixed point did not refine to 1e-14")
    return LeafFamily(system=sys, anchor=sys.point(coords), radius=radius, terms=terms)


# ---------------------------------------------------------------------------
# the sweep detector


def _fold_grid(fold: FoldingManifold, per_axis: int):
    axes = [np.linspace(-1.0, 1.0, per_axis)] * fold.k
    mesh = np.meshgrid(*axes, indexing="ij")
    params = np.stack([g.ravel() for g in mesh], axis=-1)
    coords = np.array([embed(fold, t).coords for t in params])
    return params, coords


def _phi_batch(fold: FoldingManifold, leaves: LeafFamily, params: np.ndarray) -> np.ndarray:
    coords = np.array([embed(fold, t).coords for t in params])
    return leaves.leaf_value_many(coords)


def _phi_and_gradient(fold, leaves, t):
    k = fold.k
    probes = [t]
    for j in range(k):
        step = np.zeros(k)
        step[j] = SWEEP_FD_STEP
        probes.append(np.clip(t + step, -1.0, 1.0))
        probes.append(np.clip(t - step, -1.0, 1.0))
    values = _phi_batch(fold, leaves, np.array(probes))
    grad = np.empty(k)
    for j in range(k):
        lo, hi = probes[2 + 2 * j][j], probes[1 + 2 * j][j]
        grad[j] = (values[1 + 2 * j] - values[2 + 2 * j]) / (hi - lo)
    return values[0], grad


def fold_meets_leaf(fold: FoldingManifold, leaves: LeafFamily, tau: float,
                    starts=None, grid_phi=None, warm=None) -> tuple:
    """Whether the fold patch meets the leaf with coordinate tau.

    Gauss-Newton on the single equation phi(t) = tau; returns
    (found, parameter or None).  Without a warm start the three most
    promising coarse-grid points are tried.  With one (the solution on a
    nearby leaf, during bisection) only the warm point is tried: the
    certified fold is a single quadratic well over the patch, so if the
    nearest known point cannot reach the leaf, no farther start can.
    """
    if warm is not None:
        candidates = [np.array(warm, dtype=float)]
    else:
        if starts is None or grid_phi is None:
            starts, coords = _fold_grid(fold, SWEEP_GRID)
            grid_phi = leaves.leaf_value_many(coords)
        order = np.argsort(np.abs(grid_phi - tau))
        candidates = [starts[idx].copy() for idx in order[:3]]
    for t in candidates:
        best, stalled = np.inf, 0
        for _ in range(20):
            value, grad = _phi_and_gradient(fold, leaves, t)
            miss = value - tau
            if abs(miss) < SWEEP_SOLVE_TOL:
                return True, t
            # on leaves the patch never reaches, the iteration parks at the
            # patch minimum and the miss stops shrinking; bail out early
            if abs(miss) > 0.9 * best:
                stalled += 1
                if stalled >= 3:
                    break
            else:
                stalled = 0
            best = min(best, abs(miss))
            weight = grad @ grad
            if weight < 1e-24:
                break
            t = np.clip(t - miss * grad / weight, -1.0, 1.0)
    return False, None


def _polish_minimum(fold, leaves, t0):
    """Newton on the leaf-coordinate gradient; the elliptic fold has a unique
    interior minimum, which is where the infimum leaf touches the patch."""
    k = fold.k
    t = t0.copy()
    for _ in range(12):
        _, grad = _phi_and_gradient(fold, leaves, t)
        if np.linalg.norm(grad) < 1e-8:
            break
        hessian = np.empty((k, k))
        for j in range(k):
            step = np.zeros(k)
            step[j] = SWEEP_FD_STEP
            _, gp = _phi_and_gradient(fold, leaves, np.clip(t + step, -1, 1))
            _, gm = _phi_and_gradient(fold, leaves, np.clip(t - step, -1, 1))
            hessian[:, j] = (gp - gm) / (2.0 * SWEEP_FD_STEP)
        hessian = 0.5 * (hessian + hessian.T)
        try:
            delta = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            break
        candidate = np.clip(t - delta, -1.0, 1.0)
        if np.max(np.abs(candidate - t)) < 1e-14:
            t = candidate
            break
        t = candidate
    return t


def find_tangency_sweep(
    sys,
    fold: FoldingManifold,
    leaves: LeafFamily = None,
    bisection_tol: float = 1e-12,
    pullback_steps: int = 60,
) -> TangencyReport:
    """Leaf-ordering detector: bisect for the first leaf the fold reaches.

    Works for elliptic folds only: the patch meets exactly the leaves with
    coordinate above the patch minimum, so the boundary of the occupied set
    is the tangency leaf.  The detection itself uses forward orbits only;
    the stable plane enters just to classify the already-found point.
    """
    if fold.kind != "elliptic" or fold.c_T != 1:
        raise NotElliptic("the sweep detector needs an elliptic fold with c_T = 1")
    if leaves is None:
        leaves = build_leaf_family(sys)

    params, coords = _fold_grid(fold, SWEEP_GRID)
    grid_phi = leaves.leaf_value_many(coords)
    tau_true = float(np.min(grid_phi))
    if not (-leaves.radius < tau_true < leaves.radius):
        raise EmptyIntersection(
            f"no leaf in (-{leaves.radius}, {leaves.radius}) meets the fold patch "
            f"(nearest coordinate {tau_true:.6g})"
        )
    t_witness = params[int(np.argmin(grid_phi))].copy()

    # seed a tight bracket around the polished patch minimum; the grid value
    # tau_true stays available as a guaranteed-true fallback end
    t_near = _polish_minimum(fold, leaves, t_witness)
    tau_near = float(_phi_batch(fold, leaves, t_near[None, :])[0])
    gap = max(1e3 * bisection_tol, abs(tau_near) * 1e-12)
    hi = tau_near + gap
    found, t_hi = fold_meets_leaf(fold, leaves, hi, params, grid_phi, warm=t_near)
    if found:
        t_witness = t_hi
    else:
        hi = tau_true

    # establish a false lower end below the patch minimum, doubling the
    # probed width; a true probe tightens the upper end instead
    lo = min(tau_near - gap, hi - bisection_tol)
    for _ in range(40):
        found, t_lo = fold_meets_leaf(fold, leaves, lo, params, grid_phi, warm=t_witness)
        if not found:
            break
        width = max(hi - lo, gap)
        hi, t_witness = lo, t_lo
        lo = hi - 2.0 * width
    else:
        raise NoConvergence("could not bracket the tangency leaf from below")

    iterations = 0
    while hi - lo > bisection_tol and iterations < 200:
        mid = 0.5 * (lo + hi)
        found, t_mid = fold_meets_leaf(fold, leaves, mid, params, grid_phi, warm=t_witness)
        if found:
            hi, t_witness = mid, t_mid
        else:
            lo = mid
        iterations += 1

    leaf_parameter = 0.5 * (lo + hi)
    t_star = _polish_minimum(fold, leaves, t_witness)
    return _report_for_point(
        sys,
        fold,
        "sweep",
        t_star,
        hi - lo,
        iterations,
        pullback_steps,
        leaf_parameter=float(leaf_parameter),
    )
