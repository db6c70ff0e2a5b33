"""Folding manifolds: quadratic graph embeddings whose tangent planes sweep a cone.

A folding manifold here is the graph of c_T quadratics over a k-dimensional
model domain [-1,1]^k, pushed into the ambient space by an affine isometry
plus a scale (the chart).  Three kinds are built in:

  elliptic  k = s, one quadratic  q = t_1^2 + ... + t_s^2
  saddle    k = s, one quadratic  q = t_1 t_2 + t_2 t_3 + ... + t_{s-1} t_s
  mixed     k = c_T * s, blocks x, y^1, ..., y^{c_T-1} of size s with
            q_m = x . y^m for m < c_T and a diagonal head quadratic on x
            normalized so that det A(center) = +2 exactly

Every kind is stored uniformly as (H_l, g_l) pairs, one symmetric Hessian
and one gradient per quadratic, so the recovery map E -> x(E) is a single
linear solve for all of them, and chart perturbations just add to (H, g).

The saddle chain quadratic is singular at the cone center when s is odd
(the zero-diagonal tridiagonal loses rank), so only even s gives a folding
manifold of that kind; construction still succeeds and the certificate
reports the failure honestly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ambient import (
    AmbientPoint,
    ConeField,
    Subspace,
    orthonormalize,
    wrap_difference,
)
from .errors import (
    DimensionMismatch,
    InvalidDimension,
    NotAGraph,
    OutOfDomain,
    ReconstructionFailed,
    SingularSystem,
)

FOLD_KINDS = ("elliptic", "saddle", "mixed")

# A solved parameter must land this close to [-1,1]^k to count as inside.
DOMAIN_SLACK = 1e-9
# Reconstruction residual allowed for a solved fold point.
RECONSTRUCTION_TOL = 1e-10


def _standard_quadratics(kind: str, s: int, c_T: int) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """The (Hessian, gradient) pairs of the built-in fold kinds."""
    if kind == "elliptic":
        if c_T != 1:
            raise InvalidDimension("elliptic folds have a single quadratic (c_T = 1)")
        hessians = (2.0 * np.eye(s),)
    elif kind == "saddle":
        if c_T != 1:
            raise InvalidDimension("saddle folds have a single quadratic (c_T = 1)")
        if s < 2:
            raise InvalidDimension("saddle quadratic needs at least two parameters")
        h = np.zeros((s, s))
        for j in range(s - 1):
            h[j, j + 1] = 1.0
            h[j + 1, j] = 1.0
        hessians = (h,)
    elif kind == "mixed":
        if c_T < 2:
            raise InvalidDimension("mixed folds are the c_T >= 2 kind; use elliptic or saddle for c_T = 1")
        k = c_T * s
        hs = []
        for m in range(1, c_T):
            h = np.zeros((k, k))
            for i in range(s):
                h[i, m * s + i] = 1.0
                h[m * s + i, i] = 1.0
            hs.append(h)
        # Head quadratic on the x block: diag(sigma_1, ..., sigma_{s-1}, 2).
        # Signs are chosen so the assembled center system has det exactly +2
        # for every (c_T, s): det A = (-1)^{s^2 (c_T-1)} * det(M).
        sigma = np.ones(s)
        sigma[-1] = 2.0
        if (s * (c_T - 1)) % 2 == 1:
            if s >= 2:
                sigma[0] = -1.0
            else:
                sigma[-1] = -2.0
        head = np.zeros((k, k))
        head[:s, :s] = np.diag(sigma)
        hs.append(head)
        hessians = tuple(hs)
    else:
        raise InvalidDimension(f"unknown fold kind {kind!r}")
    k = hessians[0].shape[0]
    gradients = tuple(np.zeros(k) for _ in hessians)
    return hessians, gradients


@dataclass(frozen=True, eq=False)
class FoldingManifold:
    """A quadratic fold with its placement chart.

    kind            -- elliptic | saddle | mixed
    s               -- dimension of the cone planes the fold covers
    c_T             -- number of quadratics (codimension of the fold)
    chart_center    -- ambient coordinates of the model origin
    chart_rotation  -- d x d orthogonal matrix; the first s columns span the
                       cone center, the first k columns span the tangent
                       plane at the origin
    chart_scale     -- isotropic scale applied to model coordinates
    hessians        -- c_T symmetric k x k matrices
    gradients       -- c_T k-vectors (nonzero only for perturbed folds)
    periodic_mask   -- ambient periodicity flags for produced points
    """

    kind: str
    s: int
    c_T: int
    chart_center: np.ndarray
    chart_rotation: np.ndarray
    chart_scale: float
    hessians: tuple
    gradients: tuple
    periodic_mask: np.ndarray

    def __post_init__(self):
        if self.kind not in FOLD_KINDS:
            raise InvalidDimension(f"unknown fold kind {self.kind!r}")
        if self.s < 1 or self.c_T < 1:
            raise InvalidDimension("fold needs s >= 1 and c_T >= 1")
        if self.kind in ("elliptic", "saddle") and self.c_T != 1:
            raise InvalidDimension(f"{self.kind} folds require c_T = 1")
        k = self.k
        d = k + self.c_T
        center = np.asarray(self.chart_center, dtype=float)
        rotation = np.asarray(self.chart_rotation, dtype=float)
        mask = np.asarray(self.periodic_mask, dtype=bool)
        if center.shape != (d,) or mask.shape != (d,):
            raise DimensionMismatch(f"chart center/mask must have length {d}")
        if rotation.shape != (d, d):
            raise DimensionMismatch(f"chart rotation must be {d}x{d}")
        if np.max(np.abs(rotation.T @ rotation - np.eye(d))) > 1e-10:
            raise InvalidDimension("chart rotation is not orthogonal")
        if not (self.chart_scale > 0.0):
            raise InvalidDimension("chart scale must be positive")
        hessians = tuple(np.asarray(h, dtype=float) for h in self.hessians)
        gradients = tuple(np.asarray(g, dtype=float) for g in self.gradients)
        if len(hessians) != self.c_T or len(gradients) != self.c_T:
            raise DimensionMismatch("need exactly c_T Hessians and gradients")
        for h, g in zip(hessians, gradients):
            if h.shape != (k, k) or g.shape != (k,):
                raise DimensionMismatch("quadratic data has wrong shape")
            if np.max(np.abs(h - h.T)) > 1e-12:
                raise InvalidDimension("Hessians must be symmetric")
        object.__setattr__(self, "chart_center", center)
        object.__setattr__(self, "chart_rotation", rotation)
        object.__setattr__(self, "periodic_mask", mask)
        object.__setattr__(self, "hessians", hessians)
        object.__setattr__(self, "gradients", gradients)

    @property
    def k(self) -> int:
        """Intrinsic dimension: s for elliptic/saddle, c_T * s for mixed."""
        return self.s if self.kind in ("elliptic", "saddle") else self.c_T * self.s

    @property
    def ambient_dim(self) -> int:
        return self.k + self.c_T

    @cached_property
    def center_plane(self) -> Subspace:
        """The cone center the chart was aligned to (first s rotation columns)."""
        return Subspace(self.chart_rotation[:, : self.s])

    def quadratic_values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.array(
            [0.5 * t @ h @ t + g @ t for h, g in zip(self.hessians, self.gradients)]
        )

    def quadratic_jacobian(self, t: np.ndarray) -> np.ndarray:
        """c_T x k matrix of quadratic gradients at t."""
        t = np.asarray(t, dtype=float)
        return np.array([h @ t + g for h, g in zip(self.hessians, self.gradients)])

    def model_to_ambient(self, model: np.ndarray) -> np.ndarray:
        return self.chart_center + self.chart_scale * (self.chart_rotation @ model)

    def ambient_to_model(self, coords: np.ndarray) -> np.ndarray:
        delta = wrap_difference(np.asarray(coords, dtype=float) - self.chart_center, self.periodic_mask)
        return (self.chart_rotation.T @ delta) / self.chart_scale


def build_fold(
    kind: str,
    s: int,
    c_T: int = 1,
    chart_center=None,
    chart_rotation=None,
    chart_scale: float = 1.0,
    periodic_mask=None,
) -> FoldingManifold:
    """Construct a standard fold; identity chart in R^{k + c_T} by default."""
    hessians, gradients = _standard_quadratics(kind, s, c_T)
    k = hessians[0].shape[0]
    d = k + c_T
    if chart_center is None:
        chart_center = np.zeros(d)
    if chart_rotation is None:
        chart_rotation = np.eye(d)
    if periodic_mask is None:
        periodic_mask = np.zeros(d, dtype=bool)
    return FoldingManifold(
        kind=kind,
        s=s,
        c_T=c_T,
        chart_center=np.asarray(chart_center, dtype=float),
        chart_rotation=np.asarray(chart_rotation, dtype=float),
        chart_scale=float(chart_scale),
        hessians=hessians,
        gradients=gradients,
        periodic_mask=np.asarray(periodic_mask, dtype=bool),
    )


def perturb_fold(fold: FoldingManifold, hessian_offsets, gradient_offsets) -> FoldingManifold:
    """A new fold with (H_l, g_l) shifted; used by the chart-perturbation runs."""
    hs = tuple(h + np.asarray(dh, dtype=float) for h, dh in zip(fold.hessians, hessian_offsets))
    gs = tuple(g + np.asarray(dg, dtype=float) for g, dg in zip(fold.gradients, gradient_offsets))
    return FoldingManifold(
        kind=fold.kind,
        s=fold.s,
        c_T=fold.c_T,
        chart_center=fold.chart_center,
        chart_rotation=fold.chart_rotation,
        chart_scale=fold.chart_scale,
        hessians=hs,
        gradients=gs,
        periodic_mask=fold.periodic_mask,
    )


def _check_domain(fold: FoldingManifold, t: np.ndarray):
    if np.max(np.abs(t)) > 1.0 + DOMAIN_SLACK:
        raise OutOfDomain(f"parameter leaves the model domain: |t|_inf = {np.max(np.abs(t)):.6g}")


def embed(fold: FoldingManifold, t) -> AmbientPoint:
    """Chart image of (t, q(t))."""
    t = np.asarray(t, dtype=float)
    if t.shape != (fold.k,):
        raise DimensionMismatch(f"parameter must have length {fold.k}")
    _check_domain(fold, t)
    model = np.concatenate([t, fold.quadratic_values(t)])
    return AmbientPoint(fold.model_to_ambient(model), fold.periodic_mask)


def tangent_frame(fold: FoldingManifold, t) -> Subspace:
    """Orthonormalized tangent plane of the fold at parameter t (dimension k)."""
    t = np.asarray(t, dtype=float)
    _check_domain(fold, t)
    jac_model = np.vstack([np.eye(fold.k), fold.quadratic_jacobian(t)])
    return orthonormalize(fold.chart_rotation @ jac_model)


def normal_frame(fold: FoldingManifold, t) -> Subspace:
    """Orthonormal basis of the tangent plane's orthogonal complement (dim c_T)."""
    t = np.asarray(t, dtype=float)
    _check_domain(fold, t)
    dq = fold.quadratic_jacobian(t)
    normal_model = np.vstack([-dq.T, np.eye(fold.c_T)])
    return orthonormalize(fold.chart_rotation @ normal_model)


def _graph_basis(fold: FoldingManifold, e: Subspace) -> tuple[np.ndarray, np.ndarray]:
    """Express E in model coordinates as vectors e_i + tail_i.

    Returns (a, c): a[i] is the k-dimensional leading part of the i-th
    normalized basis vector, c[i] its c_T-dimensional quadratic-coordinate
    part.  Raises NotAGraph when E does not project onto the chart center.
    """
    if e.dim != fold.s:
        raise DimensionMismatch(f"plane dimension {e.dim} != fold cone dimension {fold.s}")
    if e.ambient_dim != fold.ambient_dim:
        raise DimensionMismatch("plane lives in a different ambient space")
    v_model = fold.chart_rotation.T @ e.frame      # d x s
    head = v_model[: fold.s, :]                    # s x s
    sv = np.linalg.svd(head, compute_uv=False)
    if sv[-1] < 1e-10:
        raise NotAGraph("plane does not project onto the fold's center split")
    w = np.linalg.solve(head.T, v_model.T).T       # columns e_i + tail
    return w[: fold.k, :].T, w[fold.k :, :].T


def fold_linear_system(fold: FoldingManifold, e: Subspace) -> tuple[np.ndarray, np.ndarray]:
    """The square system A t = b whose solution is the point of tangency.

    A basis vector (a_i, c_i) of E lies in the tangent plane at t exactly
    when a_i . grad q_l(t) = c_{l i} for every quadratic, which is linear
    in t.  Rows are ordered quadratic-major: (l, i) -> l * s + i.
    """
    a, c = _graph_basis(fold, e)
    k = fold.k
    n_rows = fold.c_T * fold.s
    mat = np.zeros((n_rows, k))
    rhs = np.zeros(n_rows)
    for ell, (h, g) in enumerate(zip(fold.hessians, fold.gradients)):
        for i in range(fold.s):
            mat[ell * fold.s + i] = a[i] @ h
            rhs[ell * fold.s + i] = c[i, ell] - g @ a[i]
    return mat, rhs


def _solve_raw(fold: FoldingManifold, e: Subspace) -> np.ndarray:
    mat, rhs = fold_linear_system(fold, e)
    det = np.linalg.det(mat)
    if abs(det) < 1e-12:
        raise SingularSystem(f"tangency system is singular (det = {det:.3e})")
    t = np.linalg.solve(mat, rhs)
    _check_domain(fold, t)
    return t


def reconstruction_residual(fold: FoldingManifold, e: Subspace, t: np.ndarray) -> float:
    """Largest orthogonal defect of E's basis vectors against the tangent plane."""
    frame = tangent_frame(fold, t).frame
    defect = e.frame - frame @ (frame.T @ e.frame)
    return float(np.max(np.linalg.norm(defect, axis=0)))


def solve_fold_point(fold: FoldingManifold, e: Subspace) -> np.ndarray:
    """Parameter t at which the fold's tangent plane contains E."""
    t = _solve_raw(fold, e)
    residual = reconstruction_residual(fold, e, t)
    if residual > RECONSTRUCTION_TOL:
        raise ReconstructionFailed(
            f"solved point fails verification (residual {residual:.3e})"
        )
    return t


@dataclass(frozen=True)
class FoldingCertificate:
    """Outcome of sweeping the cone and solving for the tangent point of each plane."""

    kind: str
    k: int
    s: int
    c_T: int
    alpha: float
    grid: int
    max_residual: float
    unique: bool
    continuity_modulus: float
    out_of_domain: int
    singular: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "s": self.s,
            "c_T": self.c_T,
            "alpha": self.alpha,
            "grid": self.grid,
            "max_residual": self.max_residual,
            "unique": self.unique,
            "continuity_modulus": self.continuity_modulus,
            "out_of_domain": self.out_of_domain,
            "singular": self.singular,
            "pass": self.passed,
        }


def _cone_grid(cone: ConeField, grid_per_axis: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Graph-map samples covering the cone up to its boundary shell.

    Returns an array of flattened graph maps, each of operator norm <= alpha,
    plus index pairs of adjacent samples for the continuity modulus.  Up to
    three free entries the grid is a full tensor product; beyond that the
    budget explodes (15 entries for the c_T = 2, s = 3 fold), so planes are
    sampled along grid_per_axis^3 deterministic unit directions in entry
    space with grid_per_axis magnitudes each, adjacency along each ray.
    """
    rows = cone.complement.dim
    cols = cone.dim
    entries = rows * cols
    alpha = cone.aperture
    axis = np.linspace(-alpha, alpha, grid_per_axis)
    if entries <= 3:
        grids = np.meshgrid(*([axis] * entries), indexing="ij")
        flat = np.stack([g.ravel() for g in grids], axis=-1)
        # Clamp to the operator-norm ball: corners of the entry box exceed it.
        adjacency = []
        shape = (grid_per_axis,) * entries
        strides = np.cumprod((1,) + shape[:-1][::-1])[::-1]
        total = flat.shape[0]
        for flat_idx in range(total):
            rem = flat_idx
            idx = []
            for st in strides:
                idx.append(rem // st)
                rem = rem % st
            for axis_i in range(entries):
                if idx[axis_i] + 1 < grid_per_axis:
                    adjacency.append((flat_idx, flat_idx + int(strides[axis_i])))
        samples = flat
    else:
        rng = np.random.default_rng(0)
        n_dirs = grid_per_axis**3
        dirs = rng.standard_normal((n_dirs, entries))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        mags = np.linspace(0.0, alpha, grid_per_axis)
        samples = (dirs[:, None, :] * mags[None, :, None]).reshape(-1, entries)
        adjacency = []
        for di in range(n_dirs):
            base = di * grid_per_axis
            for mi in range(grid_per_axis - 1):
                adjacency.append((base + mi, base + mi + 1))
    # Rescale any sample whose operator norm exceeds alpha back onto the shell.
    out = []
    for row in samples:
        L = row.reshape(rows, cols)
        norm = np.linalg.norm(L, 2)
        if norm > alpha and norm > 0.0:
            L = L * (alpha / norm)
        out.append(L.ravel())
    return np.array(out), adjacency


def verify_folding(fold: FoldingManifold, cone: ConeField, grid_per_axis: int = 21) -> FoldingCertificate:
    """Certify that every sampled cone plane is tangent at exactly one fold point.

    For each plane on the grid the linear system is solved and verified; a
    deterministic subsample is re-solved by damped Newton from three offset
    starts to confirm uniqueness (the quadratic fold makes the tangency
    system affine, so the starts must collapse onto the same solution).
    """
    if grid_per_axis < 2:
        raise InvalidDimension("grid_per_axis must be at least 2")
    rows = cone.complement.dim
    cols = cone.dim
    samples, adjacency = _cone_grid(cone, grid_per_axis)
    total = samples.shape[0]

    max_residual = 0.0
    out_of_domain = 0
    singular = 0
    unique = True
    points = np.full((total, fold.ambient_dim), np.nan)
    params = np.full((total, fold.k), np.nan)

    mask = fold.periodic_mask
    for idx in range(total):
        L = samples[idx].reshape(rows, cols)
        plane = cone.plane_from_graph(L)
        try:
            t = _solve_raw(fold, plane)
        except OutOfDomain:
            out_of_domain += 1
            continue
        except SingularSystem:
            singular += 1
            continue
        params[idx] = t
        points[idx] = embed(fold, t).coords
        max_residual = max(max_residual, reconstruction_residual(fold, plane, t))

    # Multi-start agreement on a deterministic subsample of solved planes.
    solved = np.flatnonzero(~np.isnan(params[:, 0]))
    if solved.size:
        stride = max(1, int(math.ceil(solved.size / 200)))
        rng = np.random.default_rng(0)
        for idx in solved[::stride]:
            L = samples[idx].reshape(rows, cols)
            plane = cone.plane_from_graph(L)
            mat, rhs = fold_linear_system(fold, plane)
            for _ in range(3):
                start = params[idx] + 0.1 * rng.standard_normal(fold.k)
                refined = _newton_affine(mat, rhs, start)
                if refined is None or np.linalg.norm(refined - params[idx]) > 1e-8:
                    unique = False

    continuity = 0.0
    for i, j in adjacency:
        if np.isnan(points[i, 0]) or np.isnan(points[j, 0]):
            continue
        step = np.linalg.norm(wrap_difference(points[j] - points[i], mask))
        continuity = max(continuity, float(step))

    passed = (
        max_residual < 1e-9
        and unique
        and out_of_domain == 0
        and singular == 0
    )
    return FoldingCertificate(
        kind=fold.kind,
        k=fold.k,
        s=fold.s,
        c_T=fold.c_T,
        alpha=cone.aperture,
        grid=total,
        max_residual=max_residual,
        unique=unique,
        continuity_modulus=continuity,
        out_of_domain=out_of_domain,
        singular=singular,
        passed=passed,
    )


def _newton_affine(mat: np.ndarray, rhs: np.ndarray, start: np.ndarray, max_iter: int = 20):
    """Damped Newton on the affine residual mat @ t - rhs from a given start."""
    t = np.array(start, dtype=float)
    for _ in range(max_iter):
        r = mat @ t - rhs
        if np.linalg.norm(r) < 1e-12:
            return t
        try:
            step = np.linalg.solve(mat, r)
        except np.linalg.LinAlgError:
            return None
        t = t - step
    r = mat @ t - rhs
    return t if np.linalg.norm(r) < 1e-10 else None
