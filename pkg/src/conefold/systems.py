"""Model diffeomorphisms with exact differentials.

The systems here are skew products f = g x h on [-epsilon, epsilon]^{d-n} x T^n:
g is a diagonal linear contraction of the box, h is either a hyperbolic toral
automorphism or the same automorphism surgered near a fixed point so that the
fixed point turns into a source along the old stable direction (the classical
way to manufacture a nontrivial attractor on T^2 with explicit formulas).

Everything is immutable and pure; apply/differential are vectorized where the
certificates need throughput.  Perturbed variants attach compactly supported
polynomial bump fields with a sampled C^1 bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg
import scipy.optimize

from .ambient import (
    AmbientPoint,
    ConeField,
    Subspace,
    graph_norm,
    orthonormalize,
    wrap_difference,
)
from .errors import (
    DimensionMismatch,
    InvalidDimension,
    NoConvergence,
    NoSuchAutomorphism,
    OutOfDomain,
)
from .folding import FoldingManifold, build_fold

CAT_MATRIX = np.array([[2, 1], [1, 1]], dtype=np.int64)

DEFAULT_EPSILON = 0.5
DEFAULT_CONTRACTION = 0.5
DEFAULT_SURGERY_RADIUS = 0.15
DEFAULT_FIXED_POINT_MULTIPLIER = 1.5
# Offset of the fold chart center from the reference point, along the
# stable eigendirection (stays on the reference leaf, clears the surgery ball).
FOLD_LEAF_OFFSET = 0.3
# Ball radius the whole fold patch must fit into.
FOLD_PATCH_RADIUS = 0.1
DEFAULT_ALPHA = {"elliptic": 0.1, "saddle": 0.1, "mixed": 0.05}


# ---------------------------------------------------------------------------
# bump and surgery profiles


def surgery_profile(u):
    """C^1 radial profile (1-u)^16 (1+16u) on [0,1], zero beyond.

    Flat to first order at 0 and vanishing to high order at 1.  The exponent
    is chosen so the surgered map stays a diffeomorphism at fixed-point
    multiplier 1.5: the profile enters the derivative through d(u b(u))/du,
    whose minimum -( (15/18)^15 * 4.5 ) ~ -0.292 keeps
    lambda_minus + mu * d(u b)/du > 0.
    """
    u = np.asarray(u, dtype=float)
    inside = u < 1.0
    uu = np.where(inside, u, 1.0)
    return np.where(inside, (1.0 - uu) ** 16 * (1.0 + 16.0 * uu), 0.0)


def surgery_profile_deriv(u):
    u = np.asarray(u, dtype=float)
    inside = u < 1.0
    uu = np.where(inside, u, 1.0)
    return np.where(inside, -272.0 * uu * (1.0 - uu) ** 15, 0.0)


def bump_profile(u):
    """C^2 bump (1-u^2)^3 on [0,1], zero beyond; used for perturbation fields."""
    u = np.asarray(u, dtype=float)
    inside = u < 1.0
    uu = np.where(inside, u, 1.0)
    return np.where(inside, (1.0 - uu**2) ** 3, 0.0)


def bump_profile_deriv(u):
    u = np.asarray(u, dtype=float)
    inside = u < 1.0
    uu = np.where(inside, u, 1.0)
    return np.where(inside, -6.0 * uu * (1.0 - uu**2) ** 2, 0.0)


def _centered_lift(xt):
    """Representative of torus coordinates in [-1/2, 1/2)^n (offset from 0)."""
    xt = np.asarray(xt, dtype=float)
    return xt - np.round(xt)


# ---------------------------------------------------------------------------
# toral automorphisms


def _sign_fix_columns(frame: np.ndarray) -> np.ndarray:
    out = frame.copy()
    for j in range(out.shape[1]):
        lead = np.argmax(np.abs(out[:, j]))
        if out[lead, j] < 0:
            out[:, j] = -out[:, j]
    return out


@dataclass(frozen=True, eq=False)
class ToralAutomorphism:
    """Hyperbolic integer matrix acting on T^n, |det| = 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise InvalidDimension("automorphism matrix must be square, n >= 2")
        if not np.array_equal(m, np.rint(m)):
            raise InvalidDimension("automorphism matrix must be integer")
        m = np.rint(m).astype(np.int64)
        det = round(float(np.linalg.det(m.astype(float))))
        if abs(det) != 1:
            raise InvalidDimension(f"automorphism must have |det| = 1, got {det}")
        moduli = np.abs(np.linalg.eigvals(m.astype(float)))
        if np.any(np.abs(moduli - 1.0) < 1e-9):
            raise InvalidDimension("matrix has an eigenvalue on the unit circle")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix.astype(float))

    @cached_property
    def stable_dim(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) < 1.0))

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        inv = np.rint(np.linalg.inv(self.matrix.astype(float))).astype(np.int64)
        if not np.array_equal(inv @ self.matrix, np.eye(self.dim, dtype=np.int64)):
            raise InvalidDimension("matrix is not invertible over the integers")
        return inv

    @cached_property
    def stable_subspace(self) -> Subspace:
        """Orthonormal basis of the invariant subspace inside the unit circle."""
        _, z, sdim = scipy.linalg.schur(self.matrix.astype(float), output="real", sort="iuc")
        if sdim != self.stable_dim:
            raise InvalidDimension("Schur sort disagrees with spectrum count")
        return Subspace(_sign_fix_columns(z[:, :sdim]))

    @cached_property
    def unstable_subspace(self) -> Subspace:
        _, z, sdim = scipy.linalg.schur(self.matrix.astype(float), output="real", sort="ouc")
        return Subspace(_sign_fix_columns(z[:, :sdim]))

    def apply_torus(self, xt):
        xt = np.asarray(xt, dtype=float)
        return np.mod(xt @ self.matrix.T.astype(float), 1.0)

    def torus_displacement(self, xt):
        """Nonlinear part of the torus map (identically zero here)."""
        xt = np.asarray(xt, dtype=float)
        return np.zeros_like(xt)

    def torus_differential(self, xt):
        return self.matrix.astype(float)

    def torus_differential_many(self, xt):
        xt = np.asarray(xt, dtype=float)
        m = xt.shape[0]
        return np.broadcast_to(self.matrix.astype(float), (m, self.dim, self.dim)).copy()


# ---------------------------------------------------------------------------
# the surgered automorphism on T^2


@dataclass(frozen=True, eq=False)
class DASystem:
    """Symmetric hyperbolic automorphism of T^2 surgered near the origin.

    The map is h(x) = Ax + mu * b(|x|/rho) * (v_s . x) v_s on the centered
    lift, with b the surgery profile.  The displacement is parallel to the
    stable eigendirection v_s, so the affine foliation by v_s-lines is
    invariant exactly and the unstable coordinate transforms linearly:
    (v_u . h(x)) = lambda_plus (v_u . x).  The origin's stable multiplier
    becomes lambda_minus + mu (default 1.5 > 1), turning it into a source
    and splitting off a pair of genuine saddles on the v_s axis.
    """

    matrix: np.ndarray = None
    rho: float = DEFAULT_SURGERY_RADIUS
    mu: float = None

    def __post_init__(self):
        m = CAT_MATRIX if self.matrix is None else np.asarray(self.matrix)
        if not np.array_equal(m, np.rint(m)) or m.shape != (2, 2):
            raise InvalidDimension("surgery base must be an integer 2x2 matrix")
        m = np.rint(m).astype(np.int64)
        if m[0, 1] != m[1, 0]:
            raise InvalidDimension("surgery base must be symmetric (orthogonal eigenbasis)")
        base = ToralAutomorphism(m)  # runs the hyperbolicity checks
        if base.stable_dim != 1:
            raise InvalidDimension("surgery base must have a one-dimensional stable direction")
        if not (0.0 < self.rho < 0.5):
            raise InvalidDimension("surgery radius must lie in (0, 1/2)")
        object.__setattr__(self, "matrix", m)
        if self.mu is None:
            object.__setattr__(
                self, "mu", DEFAULT_FIXED_POINT_MULTIPLIER - self.lambda_minus
            )
        if not (self.mu > 0.0):
            raise InvalidDimension("surgery strength must be positive")

    @property
    def dim(self) -> int:
        return 2

    @cached_property
    def _eigen(self):
        a, b, c = float(self.matrix[0, 0]), float(self.matrix[0, 1]), float(self.matrix[1, 1])
        disc = math.sqrt((a - c) ** 2 + 4.0 * b * b)
        lam_hi = (a + c + disc) / 2.0
        lam_lo = (a + c - disc) / 2.0
        # order by modulus: expanding first
        if abs(lam_hi) < abs(lam_lo):
            lam_hi, lam_lo = lam_lo, lam_hi
        def unit_eigvec(lam):
            # rows of (A - lam I) are proportional; null direction
            if abs(b) > 1e-14:
                v = np.array([b, lam - a])
            else:
                v = np.array([1.0, 0.0]) if abs(a - lam) < abs(c - lam) else np.array([0.0, 1.0])
            v = v / np.linalg.norm(v)
            return v if v[np.argmax(np.abs(v))] > 0 else -v
        return lam_hi, lam_lo, unit_eigvec(lam_hi), unit_eigvec(lam_lo)

    @property
    def lambda_plus(self) -> float:
        return self._eigen[0]

    @property
    def lambda_minus(self) -> float:
        return self._eigen[1]

    @property
    def v_u(self) -> np.ndarray:
        return self._eigen[2]

    @property
    def v_s(self) -> np.ndarray:
        return self._eigen[3]

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        return ToralAutomorphism(self.matrix).inverse_matrix

    @cached_property
    def w_star(self) -> float:
        """Distance of the split-off saddles from the origin along v_s.

        Solves b(w/rho) = (1 - lambda_minus)/mu; the profile is strictly
        decreasing on (0, 1), so the root is unique.
        """
        target = (1.0 - self.lambda_minus) / self.mu
        if not (0.0 < target < 1.0):
            raise InvalidDimension("surgery strength leaves no saddle pair on the axis")
        u_star = scipy.optimize.brentq(
            lambda u: float(surgery_profile(u)) - target, 1e-14, 1.0 - 1e-14, xtol=1e-15
        )
        return self.rho * u_star

    @cached_property
    def saddle_point(self) -> np.ndarray:
        """The saddle on the positive-v_s side, as torus coordinates in [0,1)."""
        return np.mod(self.w_star * self.v_s, 1.0)

    @cached_property
    def saddle_multiplier(self) -> float:
        """Multiplier along the leaf at the split-off saddles; in (0, 1)."""
        u = self.w_star / self.rho
        slope = float(surgery_profile(u) + u * surgery_profile_deriv(u))
        return self.lambda_minus + self.mu * slope

    def _surgery_term(self, delta):
        """Displacement mu b(|delta|/rho) (v_s . delta) v_s; delta (..., 2)."""
        r = np.linalg.norm(delta, axis=-1)
        beta = surgery_profile(r / self.rho)
        w = delta @ self.v_s
        return (self.mu * beta * w)[..., None] * self.v_s

    def apply_torus(self, xt):
        xt = np.asarray(xt, dtype=float)
        delta = _centered_lift(xt)
        linear = xt @ self.matrix.T.astype(float)
        return np.mod(linear + self._surgery_term(delta), 1.0)

    def torus_displacement(self, xt):
        """Nonlinear part: image minus the linear action, before wrapping."""
        return self._surgery_term(_centered_lift(xt))

    def torus_differential(self, xt):
        return self.torus_differential_many(np.asarray(xt, dtype=float)[None, :])[0]

    def torus_differential_many(self, xt):
        xt = np.asarray(xt, dtype=float)
        delta = _centered_lift(xt)
        r = np.linalg.norm(delta, axis=-1)
        u = r / self.rho
        beta = surgery_profile(u)
        dbeta = surgery_profile_deriv(u)
        w = delta @ self.v_s
        # grad of b(u) w: b(u) v_s + (b'(u) w / (rho^2 u)) delta, second term
        # continuous through u = 0 because b'(u) vanishes linearly there.
        safe_u = np.where(u > 1e-300, u, 1.0)
        coeff = np.where(u > 1e-300, dbeta * w / (self.rho**2 * safe_u), 0.0)
        grad = beta[:, None] * self.v_s[None, :] + coeff[:, None] * delta
        out = np.broadcast_to(
            self.matrix.astype(float), (xt.shape[0], 2, 2)
        ).copy()
        out += self.mu * self.v_s[None, :, None] * grad[:, None, :]
        return out

    def verify_diffeomorphism(self, n_radial: int = 256, n_angular: int = 128) -> dict:
        """Minimum differential determinant over a polar grid in the surgery ball."""
        radii = np.linspace(0.0, self.rho, n_radial)
        angles = np.linspace(0.0, 2.0 * math.pi, n_angular, endpoint=False)
        rr, aa = np.meshgrid(radii, angles, indexing="ij")
        pts = np.stack([rr * np.cos(aa), rr * np.sin(aa)], axis=-1).reshape(-1, 2)
        dets = np.linalg.det(self.torus_differential_many(np.mod(pts, 1.0)))
        return {
            "min_det": float(np.min(dets)),
            "max_det": float(np.max(dets)),
            "passed": bool(np.min(dets) > 0.0),
            "samples": int(pts.shape[0]),
        }


# ---------------------------------------------------------------------------
# bump perturbations


# Sampled maximum of profile + |profile'| / r happens on a 1-d radial grid
# because both the field and its differential are radial times a constant.
_PROFILE_GRID = np.linspace(0.0, 1.0, 10001)


def bump_c1_factor(radius: float) -> float:
    """Sampled sup over the support of pointwise |field| + |D field| per unit amplitude."""
    vals = bump_profile(_PROFILE_GRID) + np.abs(bump_profile_deriv(_PROFILE_GRID)) / radius
    return float(np.max(vals))


@dataclass(frozen=True, eq=False)
class BumpPerturbation:
    """Compactly supported displacement amplitude * (1-u^2)^3 * direction."""

    center: np.ndarray
    radius: float
    direction: np.ndarray
    amplitude: float
    mode: str
    c1_bound: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if center.ndim != 1 or direction.shape != center.shape:
            raise DimensionMismatch("bump center and direction must be equal-length vectors")
        if not (self.radius > 0.0):
            raise InvalidDimension("bump radius must be positive")
        if self.amplitude < 0.0:
            raise InvalidDimension("bump amplitude must be nonnegative")
        norm = np.linalg.norm(direction)
        if abs(norm - 1.0) > 1e-9:
            raise InvalidDimension("bump direction must be a unit vector")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "direction", direction)

    @property
    def dim(self) -> int:
        return self.center.size

    def displacement(self, deltas):
        """Field value at wrapped offsets from the center; deltas (..., d)."""
        deltas = np.asarray(deltas, dtype=float)
        u = np.linalg.norm(deltas, axis=-1) / self.radius
        return (self.amplitude * bump_profile(u))[..., None] * self.direction

    def displacement_jacobian(self, delta):
        """d x d differential of the field at a single wrapped offset."""
        delta = np.asarray(delta, dtype=float)
        r = float(np.linalg.norm(delta))
        u = r / self.radius
        if u >= 1.0 or r < 1e-300:
            return np.zeros((self.dim, self.dim))
        grad = bump_profile_deriv(u) * delta / (self.radius**2 * u)
        return self.amplitude * np.outer(self.direction, grad)


# ---------------------------------------------------------------------------
# the skew-product scenario


@dataclass(frozen=True, eq=False)
class ScenarioSystem:
    """Contraction x base skew product with an optional fold chart attached."""

    c_T: int
    s: int
    kind: str
    contraction_rates: np.ndarray
    base: object
    epsilon: float
    alpha: float
    fold: FoldingManifold
    perturbations: tuple
    seed: int

    def __post_init__(self):
        rates = np.asarray(self.contraction_rates, dtype=float)
        if rates.ndim != 1:
            raise DimensionMismatch("contraction rates must be a vector")
        if rates.size and not np.all((rates > 0.0) & (rates < 1.0)):
            raise InvalidDimension("contraction rates must lie in (0, 1)")
        if not (self.epsilon > 0.0):
            raise InvalidDimension("box half-width must be positive")
        object.__setattr__(self, "contraction_rates", rates)
        object.__setattr__(self, "perturbations", tuple(self.perturbations))
        for b in self.perturbations:
            if b.dim != self.d:
                raise DimensionMismatch("perturbation dimension does not match scenario")

    @property
    def box_dim(self) -> int:
        return self.contraction_rates.size

    @property
    def n(self) -> int:
        return self.base.dim

    @property
    def d(self) -> int:
        return self.box_dim + self.n

    @cached_property
    def periodic_mask(self) -> np.ndarray:
        return np.concatenate(
            [np.zeros(self.box_dim, dtype=bool), np.ones(self.n, dtype=bool)]
        )

    def point(self, coords) -> AmbientPoint:
        return AmbientPoint(np.asarray(coords, dtype=float), self.periodic_mask)

    @cached_property
    def reference_point(self) -> AmbientPoint:
        """Fixed point the charts are anchored to: a surgery saddle, else the origin."""
        torus = (
            self.base.saddle_point
            if isinstance(self.base, DASystem)
            else np.zeros(self.n)
        )
        return self.point(np.concatenate([np.zeros(self.box_dim), torus]))

    @cached_property
    def torus_stable_direction(self) -> np.ndarray:
        if isinstance(self.base, DASystem):
            return self.base.v_s
        sub = self.base.stable_subspace
        if sub.dim != 1:
            raise InvalidDimension("scenario base must have a one-dimensional stable direction")
        return sub.frame[:, 0]

    @cached_property
    def stable_frame(self) -> Subspace:
        """Exact stable bundle of the unperturbed product: box plus v_s."""
        frame = np.zeros((self.d, self.box_dim + 1))
        frame[: self.box_dim, : self.box_dim] = np.eye(self.box_dim)
        frame[self.box_dim :, self.box_dim] = self.torus_stable_direction
        return Subspace(frame)

    @cached_property
    def unstable_direction(self) -> np.ndarray:
        """Ambient unit vector along the base's expanding direction (n = 2 only)."""
        if isinstance(self.base, DASystem):
            vu = self.base.v_u
        else:
            sub = self.base.unstable_subspace
            if sub.dim != 1:
                raise InvalidDimension("no single expanding direction for this base")
            vu = sub.frame[:, 0]
        out = np.zeros(self.d)
        out[self.box_dim :] = vu
        return out

    @cached_property
    def expansion_rate(self) -> float:
        if isinstance(self.base, DASystem):
            return self.base.lambda_plus
        moduli = np.abs(self.base.eigenvalues)
        return float(np.max(moduli))

    def sample_domain(self, rng: np.random.Generator, count: int) -> np.ndarray:
        box = rng.uniform(-self.epsilon, self.epsilon, size=(count, self.box_dim))
        torus = rng.uniform(0.0, 1.0, size=(count, self.n))
        return np.hstack([box, torus])

    def split(self, coords):
        coords = np.asarray(coords, dtype=float)
        return coords[..., : self.box_dim], coords[..., self.box_dim :]


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Toy linear diffeomorphism of a box; keeps the same operation surface."""

    matrix: np.ndarray
    halfwidth: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise InvalidDimension("linear system matrix must be square, d >= 2")
        if abs(np.linalg.det(m)) < 1e-12:
            raise InvalidDimension("linear system must be invertible")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def periodic_mask(self) -> np.ndarray:
        return np.zeros(self.d, dtype=bool)

    def point(self, coords) -> AmbientPoint:
        return AmbientPoint(np.asarray(coords, dtype=float), self.periodic_mask)

    def sample_domain(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(-self.halfwidth, self.halfwidth, size=(count, self.d))


# ---------------------------------------------------------------------------
# core operations


def _apply_core(sys: ScenarioSystem, coords: np.ndarray) -> np.ndarray:
    box, torus = sys.split(coords)
    out = np.empty_like(coords)
    out[:, : sys.box_dim] = box * sys.contraction_rates
    out[:, sys.box_dim :] = sys.base.apply_torus(torus)
    for bump in sys.perturbations:
        deltas = wrap_difference(coords - bump.center, sys.periodic_mask)
        out = out + bump.displacement(deltas)
    out[:, sys.box_dim :] = np.mod(out[:, sys.box_dim :], 1.0)
    return out


def apply(sys, x: AmbientPoint) -> AmbientPoint:
    """One step of the diffeomorphism."""
    if isinstance(sys, LinearSystem):
        return AmbientPoint(sys.matrix @ x.coords, sys.periodic_mask)
    return AmbientPoint(_apply_core(sys, x.coords[None, :])[0], sys.periodic_mask)


def apply_many(sys, coords: np.ndarray) -> np.ndarray:
    """Vectorized apply on an (m, d) array of coordinate rows."""
    coords = np.asarray(coords, dtype=float)
    if isinstance(sys, LinearSystem):
        return coords @ sys.matrix.T
    return _apply_core(sys, coords)


def differential(sys, x: AmbientPoint) -> np.ndarray:
    """Exact d x d differential at x."""
    if isinstance(sys, LinearSystem):
        return sys.matrix.copy()
    bd = sys.box_dim
    out = np.zeros((sys.d, sys.d))
    out[:bd, :bd] = np.diag(sys.contraction_rates)
    out[bd:, bd:] = sys.base.torus_differential(x.coords[bd:])
    for bump in sys.perturbations:
        delta = wrap_difference(x.coords - bump.center, sys.periodic_mask)
        out += bump.displacement_jacobian(delta)
    return out


def differential_many(sys, coords: np.ndarray) -> np.ndarray:
    """Vectorized differentials, (m, d, d)."""
    coords = np.asarray(coords, dtype=float)
    m = coords.shape[0]
    if isinstance(sys, LinearSystem):
        return np.broadcast_to(sys.matrix, (m, sys.d, sys.d)).copy()
    bd = sys.box_dim
    out = np.zeros((m, sys.d, sys.d))
    idx = np.arange(bd)
    out[:, idx, idx] = sys.contraction_rates
    out[:, bd:, bd:] = sys.base.torus_differential_many(coords[:, bd:])
    for bump in sys.perturbations:
        deltas = wrap_difference(coords - bump.center, sys.periodic_mask)
        for i in range(m):
            out[i] += bump.displacement_jacobian(deltas[i])
    return out


def inverse_apply(sys, y: AmbientPoint, guess: AmbientPoint = None) -> AmbientPoint:
    """Newton inversion; the unperturbed linear inverse seeds the iteration."""
    if isinstance(sys, LinearSystem):
        return AmbientPoint(np.linalg.solve(sys.matrix, y.coords), sys.periodic_mask)
    bd = sys.box_dim
    if guess is None:
        box = y.coords[:bd] / sys.contraction_rates
        minv = (
            sys.base.inverse_matrix
            if hasattr(sys.base, "inverse_matrix")
            else np.linalg.inv(sys.base.matrix.astype(float))
        )
        torus = np.mod(y.coords[bd:] @ np.asarray(minv, dtype=float).T, 1.0)
        current = np.concatenate([box, torus])
    else:
        current = guess.coords.copy()
    for _ in range(50):
        xp = AmbientPoint(current, sys.periodic_mask)
        residual = wrap_difference(
            _apply_core(sys, xp.coords[None, :])[0] - y.coords, sys.periodic_mask
        )
        if np.max(np.abs(residual)) < 1e-11:
            result = xp
            break
        step = np.linalg.solve(differential(sys, xp), residual)
        current = xp.coords - step
    else:
        raise NoConvergence("inverse iteration did not reach 1e-11 in 50 steps")
    if bd and np.any(np.abs(result.coords[:bd]) > sys.epsilon + 1e-9):
        raise OutOfDomain("preimage lies outside the contracting box")
    return result


@dataclass(frozen=True)
class TrappingReport:
    """Worst-case margin by which sampled images stay inside the domain box."""

    passed: bool
    margin: float
    samples: int
    grid_per_axis: int

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "margin": self.margin,
            "samples": self.samples,
            "grid_per_axis": self.grid_per_axis,
        }


_KRONECKER_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)


def _kronecker_points(count: int, dim: int) -> np.ndarray:
    """Deterministic low-discrepancy sample of the torus."""
    alphas = np.array([math.sqrt(p) % 1.0 for p in _KRONECKER_PRIMES[:dim]])
    j = np.arange(1, count + 1)[:, None]
    return np.mod(j * alphas[None, :], 1.0)


def verify_trapping(sys: ScenarioSystem, grid_per_axis: int = 9) -> TrappingReport:
    """Sample the domain and report the minimum interior margin of the image.

    Box axes carry a full per-axis grid; torus coordinates (no boundary to
    violate) are covered by a Kronecker sequence of grid_per_axis^2 points,
    which keeps mixed scenarios affordable.
    """
    if grid_per_axis < 2:
        raise InvalidDimension("grid_per_axis must be at least 2")
    bd = sys.box_dim
    torus_pts = _kronecker_points(grid_per_axis**2, sys.n)
    if bd == 0:
        coords = torus_pts
    else:
        axes = [np.linspace(-sys.epsilon, sys.epsilon, grid_per_axis)] * bd
        mesh = np.meshgrid(*axes, indexing="ij")
        box_pts = np.stack([g.ravel() for g in mesh], axis=-1)
        coords = np.hstack(
            [
                np.repeat(box_pts, torus_pts.shape[0], axis=0),
                np.tile(torus_pts, (box_pts.shape[0], 1)),
            ]
        )
    images = apply_many(sys, coords)
    if bd == 0:
        margin = math.inf
    else:
        margin = float(np.min(sys.epsilon - np.abs(images[:, :bd])))
    return TrappingReport(
        passed=margin > 0.0,
        margin=margin,
        samples=coords.shape[0],
        grid_per_axis=grid_per_axis,
    )


# ---------------------------------------------------------------------------
# automorphism search for the c_T >= 2 base


def _companion(coeffs: tuple) -> np.ndarray:
    """Companion matrix of x^n + c_{n-1} x^{n-1} + ... + c_1 x + c_0."""
    n = len(coeffs)
    mat = np.zeros((n, n), dtype=np.int64)
    mat[1:, :-1] = np.eye(n - 1, dtype=np.int64)
    mat[:, -1] = -np.asarray(coeffs, dtype=np.int64)
    return mat


def find_automorphism(
    n: int,
    coeff_bound: int = 3,
    circle_margin: float = 0.05,
    rate_ratio: float = 0.55,
    predicate=None,
) -> ToralAutomorphism:
    """Deterministic search for a hyperbolic integer matrix with 1 stable direction.

    Candidates are companion matrices of monic integer polynomials with unit
    constant term, enumerated by growing coefficient bound and then
    lexicographically.  A candidate must have exactly one eigenvalue inside
    the unit circle, all eigenvalues at distance > circle_margin from it,
    stable-to-unstable modulus ratio <= rate_ratio (so subspace pullback
    converges fast enough to serve as an oracle), and a not-too-small least
    singular value; an optional caller predicate can reject further.
    """
    if n < 2:
        raise InvalidDimension("automorphism dimension must be at least 2")
    for bound in range(1, coeff_bound + 1):
        for head in itertools.product(range(-bound, bound + 1), repeat=n - 1):
            for c0 in (-1, 1):
                coeffs = (c0,) + head  # (c_0, c_1, ..., c_{n-1})
                if max(abs(c) for c in coeffs) != bound:
                    continue
                mat = _companion(coeffs)
                moduli = np.abs(np.linalg.eigvals(mat.astype(float)))
                if np.sum(moduli < 1.0) != 1:
                    continue
                if np.min(np.abs(moduli - 1.0)) <= circle_margin:
                    continue
                lam_s = float(np.min(moduli))
                lam_u_min = float(np.min(moduli[moduli > 1.0]))
                if lam_s / lam_u_min > rate_ratio:
                    continue
                if np.min(np.linalg.svd(mat.astype(float), compute_uv=False)) < 1e-3:
                    continue
                candidate = ToralAutomorphism(mat)
                if predicate is not None and not predicate(candidate):
                    continue
                return candidate
    raise NoSuchAutomorphism(
        f"no degree-{n} automorphism with the required spectrum within "
        f"coefficient bound {coeff_bound}"
    )


def _single_step_cone_predicate(box_dim: int, rates: np.ndarray, alpha: float):
    """Reject bases whose one-step pullback fails to contract the cone.

    Companion matrices are non-normal, so a spectrally fine candidate can
    still expand some boundary plane's graph norm for one step in the
    standard metric; 200 deterministic boundary samples must all contract.
    """

    def check(aut: ToralAutomorphism) -> bool:
        n = aut.dim
        d = box_dim + n
        frame = np.zeros((d, box_dim + 1))
        frame[:box_dim, :box_dim] = np.eye(box_dim)
        sub = aut.stable_subspace
        if sub.dim != 1:
            return False
        frame[box_dim:, box_dim] = sub.frame[:, 0]
        cone = ConeField(Subspace(frame), alpha)
        df = np.zeros((d, d))
        df[:box_dim, :box_dim] = np.diag(rates)
        df[box_dim:, box_dim:] = aut.matrix.astype(float)
        rng = np.random.default_rng(0)
        rows, cols = cone.complement.dim, cone.dim
        for _ in range(200):
            L = rng.standard_normal((rows, cols))
            norm = np.linalg.norm(L, 2)
            L *= rng.uniform(0.5, 1.0) * alpha / norm
            plane = cone.plane_from_graph(L)
            pulled = orthonormalize(np.linalg.solve(df, plane.frame))
            ratio = graph_norm(pulled, cone) / graph_norm(plane, cone)
            if not ratio < 0.95:
                return False
        return True

    return check


@lru_cache(maxsize=None)
def _cached_base(n: int, box_dim: int, rates_key: tuple, alpha: float) -> ToralAutomorphism:
    rates = np.asarray(rates_key, dtype=float)
    return find_automorphism(
        n, predicate=_single_step_cone_predicate(box_dim, rates, alpha)
    )


# ---------------------------------------------------------------------------
# scenario construction


def _fold_scale(kind: str, s: int, c_T: int, k: int) -> float:
    """Chart scale fitting the whole model patch inside FOLD_PATCH_RADIUS."""
    if kind == "elliptic":
        qmax = float(s)
    elif kind == "saddle":
        qmax = float(s - 1)
    else:
        head = 1.0 + 0.5 * (s - 1)
        qmax = math.sqrt((c_T - 1) * s**2 + head**2)
    return FOLD_PATCH_RADIUS / math.sqrt(k + qmax**2)


def build_scenario(c_T: int, s: int, kind: str = None, alpha: float = None, seed: int = 0) -> ScenarioSystem:
    """Assemble the standard scenario for a requested tangency class.

    c_T = 1 uses the surgered T^2 base with d = s + 1 and an elliptic or
    saddle fold of dimension s; c_T >= 2 (which needs s > c_T) uses a linear
    hyperbolic base on T^n, n = d - s + 1 with d = c_T (s + 1), and the mixed
    fold of dimension k = d - c_T.  The fold chart is centered on the stable
    leaf of the reference fixed point, offset along the stable direction, and
    aligned so its center tangent plane equals the stable bundle there; the
    unperturbed tangency sits at parameter zero by construction.
    """
    if not (isinstance(c_T, int) and isinstance(s, int)) or c_T < 1 or s < 1:
        raise InvalidDimension("c_T and s must be integers >= 1")
    if kind is None:
        kind = "elliptic" if c_T == 1 else "mixed"
    if kind not in ("elliptic", "saddle", "mixed"):
        raise InvalidDimension(f"unknown scenario kind {kind!r}")
    if kind in ("elliptic", "saddle") and c_T != 1:
        raise InvalidDimension(f"{kind} scenarios require c_T = 1")
    if kind == "mixed" and c_T < 2:
        raise InvalidDimension("mixed scenarios require c_T >= 2")
    if kind == "saddle" and s % 2 == 1:
        raise InvalidDimension(
            "saddle folds need even s: the chain quadratic is singular at the center for odd s"
        )
    if c_T >= 2 and s <= c_T:
        raise InvalidDimension("heterodimensional scenarios require s > c_T")
    if alpha is None:
        alpha = DEFAULT_ALPHA[kind]
    if not (0.0 < alpha < 1.0):
        raise InvalidDimension("cone aperture must lie in (0, 1)")

    box_dim = s - 1
    rates = np.full(box_dim, DEFAULT_CONTRACTION)
    if c_T == 1:
        base = DASystem()
        d = s + 1
    else:
        d = c_T * (s + 1)
        n = d - s + 1
        base = _cached_base(n, box_dim, tuple(rates.tolist()), float(alpha))

    skeleton = ScenarioSystem(
        c_T=c_T,
        s=s,
        kind=kind,
        contraction_rates=rates,
        base=base,
        epsilon=DEFAULT_EPSILON,
        alpha=float(alpha),
        fold=None,
        perturbations=(),
        seed=int(seed),
    )
    if skeleton.d != d:
        raise InvalidDimension("dimension bookkeeping failed")

    stable = skeleton.stable_frame
    center = skeleton.reference_point.coords.copy()
    center[box_dim:] += FOLD_LEAF_OFFSET * skeleton.torus_stable_direction
    center = AmbientPoint(center, skeleton.periodic_mask).coords

    k = d - c_T
    if kind in ("elliptic", "saddle"):
        rotation = np.hstack([stable.frame, skeleton.unstable_direction[:, None]])
    else:
        rotation = np.hstack(
            [stable.frame, stable.orthogonal_complement().frame]
        )
    fold = build_fold(
        kind,
        s,
        c_T,
        chart_center=center,
        chart_rotation=rotation,
        chart_scale=_fold_scale(kind, s, c_T, k),
        periodic_mask=skeleton.periodic_mask,
    )
    if fold.k != k:
        raise InvalidDimension("fold dimension bookkeeping failed")
    return replace_scenario(skeleton, fold=fold)


def replace_scenario(sys: ScenarioSystem, **changes) -> ScenarioSystem:
    """Immutable update helper (dataclasses.replace with cached fields reset)."""
    return replace(sys, **changes)


def with_perturbations(sys: ScenarioSystem, bumps) -> ScenarioSystem:
    return replace_scenario(sys, perturbations=tuple(bumps))


# ---------------------------------------------------------------------------
# serialization


_SCENARIO_KEYS = {
    "d",
    "n",
    "c_T",
    "s",
    "lambda",
    "base_matrix",
    "surgery",
    "epsilon",
    "alpha",
    "seed",
    "fold",
    "perturbations",
}
_FOLD_KEYS = {"kind", "s", "c_T", "center", "rotation", "scale", "hessians", "gradients"}
_BUMP_KEYS = {"center", "radius", "direction", "amplitude", "mode", "c1_bound"}


def scenario_to_dict(sys: ScenarioSystem) -> dict:
    if isinstance(sys.base, DASystem):
        base_matrix = sys.base.matrix
        surgery = {"rho": float(sys.base.rho), "mu": float(sys.base.mu)}
    else:
        base_matrix = sys.base.matrix
        surgery = None
    fold = sys.fold
    if fold is not None:
        fold_dict = {
            "kind": fold.kind,
            "s": fold.s,
            "c_T": fold.c_T,
            "center": fold.chart_center.tolist(),
            "rotation": fold.chart_rotation.tolist(),
            "scale": fold.chart_scale,
            "hessians": [h.tolist() for h in fold.hessians],
            "gradients": [g.tolist() for g in fold.gradients],
        }
    else:
        fold_dict = None
    return {
        "d": sys.d,
        "n": sys.n,
        "c_T": sys.c_T,
        "s": sys.s,
        "lambda": sys.contraction_rates.tolist(),
        "base_matrix": base_matrix.tolist(),
        "surgery": surgery,
        "epsilon": float(sys.epsilon),
        "alpha": float(sys.alpha),
        "seed": int(sys.seed),
        "fold": fold_dict,
        "perturbations": [
            {
                "center": b.center.tolist(),
                "radius": float(b.radius),
                "direction": b.direction.tolist(),
                "amplitude": float(b.amplitude),
                "mode": b.mode,
                "c1_bound": float(b.c1_bound),
            }
            for b in sys.perturbations
        ],
    }


def _require_keys(data: dict, allowed: set, label: str):
    extra = set(data) - allowed
    if extra:
        raise ValueError(f"unknown {label} keys: {sorted(extra)}")
    missing = allowed - set(data)
    if missing:
        raise ValueError(f"missing {label} keys: {sorted(missing)}")


def scenario_from_dict(data: dict) -> ScenarioSystem:
    _require_keys(data, _SCENARIO_KEYS, "scenario")
    if data["surgery"] is not None:
        surgery = data["surgery"]
        _require_keys(surgery, {"rho", "mu"}, "surgery")
        base = DASystem(
            matrix=np.asarray(data["base_matrix"]),
            rho=float(surgery["rho"]),
            mu=float(surgery["mu"]),
        )
    else:
        base = ToralAutomorphism(np.asarray(data["base_matrix"]))
    fold = None
    mask = np.concatenate(
        [
            np.zeros(len(data["lambda"]), dtype=bool),
            np.ones(base.dim, dtype=bool),
        ]
    )
    if data["fold"] is not None:
        fd = data["fold"]
        _require_keys(fd, _FOLD_KEYS, "fold")
        fold = FoldingManifold(
            kind=str(fd["kind"]),
            s=int(fd["s"]),
            c_T=int(fd["c_T"]),
            chart_center=np.asarray(fd["center"], dtype=float),
            chart_rotation=np.asarray(fd["rotation"], dtype=float),
            chart_scale=float(fd["scale"]),
            hessians=tuple(np.asarray(h, dtype=float) for h in fd["hessians"]),
            gradients=tuple(np.asarray(g, dtype=float) for g in fd["gradients"]),
            periodic_mask=mask,
        )
    bumps = []
    for bump_data in data["perturbations"]:
        _require_keys(bump_data, _BUMP_KEYS, "perturbation")
        bumps.append(
            BumpPerturbation(
                center=np.asarray(bump_data["center"], dtype=float),
                radius=float(bump_data["radius"]),
                direction=np.asarray(bump_data["direction"], dtype=float),
                amplitude=float(bump_data["amplitude"]),
                mode=str(bump_data["mode"]),
                c1_bound=float(bump_data["c1_bound"]),
            )
        )
    if fold is not None:
        kind = fold.kind
    else:
        kind = "elliptic" if int(data["c_T"]) == 1 else "mixed"
    sys = ScenarioSystem(
        c_T=int(data["c_T"]),
        s=int(data["s"]),
        kind=kind,
        contraction_rates=np.asarray(data["lambda"], dtype=float),
        base=base,
        epsilon=float(data["epsilon"]),
        alpha=float(data["alpha"]),
        fold=fold,
        perturbations=tuple(bumps),
        seed=int(data["seed"]),
    )
    if sys.d != int(data["d"]) or sys.n != int(data["n"]):
        raise ValueError("stored dimensions are inconsistent with the matrices")
    return sys
