"""Points, subspaces, cones, and the principal-angle toolbox.

All geometry in the package is expressed through orthonormal frames:
a ``Subspace`` is a matrix with orthonormal columns, a ``ConeField`` is
a center subspace plus an aperture on graph norms over that center, and
closeness of subspaces is always measured through principal angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidDimension, RankDeficient

# Default tolerance below which two subspaces count as equal.
ANGLE_TOL = 1e-9
# Singular values below this are treated as rank loss.
RANK_TOL = 1e-10
# Frames must be orthonormal to this accuracy on construction.
ORTHONORMALITY_TOL = 1e-12


def _as_matrix(frame) -> np.ndarray:
    m = np.asarray(frame, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise InvalidDimension(f"frame must be a 2-d array, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class AmbientPoint:
    """A point of the phase space, with periodic coordinates stored in [0, 1).

    coords         -- length-d float vector
    periodic_mask  -- length-d bool vector; True marks a circle coordinate
    """

    coords: np.ndarray
    periodic_mask: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).copy()
        mask = np.asarray(self.periodic_mask, dtype=bool).copy()
        if coords.ndim != 1 or mask.shape != coords.shape:
            raise DimensionMismatch("coords and periodic_mask must be equal-length vectors")
        if coords.size < 2:
            raise InvalidDimension("ambient dimension must be at least 2")
        coords[mask] = np.mod(coords[mask], 1.0)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "periodic_mask", mask)

    @property
    def dim(self) -> int:
        return self.coords.size

    def displacement_to(self, other: "AmbientPoint") -> np.ndarray:
        """Shortest displacement vector from self to other (wrapping circles)."""
        if other.dim != self.dim or not np.array_equal(other.periodic_mask, self.periodic_mask):
            raise DimensionMismatch("points live on different spaces")
        return wrap_difference(other.coords - self.coords, self.periodic_mask)

    def distance_to(self, other: "AmbientPoint") -> float:
        return float(np.linalg.norm(self.displacement_to(other)))


def wrap_difference(delta, periodic_mask) -> np.ndarray:
    """Reduce periodic components of a difference vector into [-1/2, 1/2)."""
    delta = np.array(delta, dtype=float, copy=True)
    mask = np.asarray(periodic_mask, dtype=bool)
    delta[..., mask] -= np.round(delta[..., mask])
    return delta


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace given by a d x s matrix with orthonormal columns."""

    frame: np.ndarray

    def __post_init__(self):
        frame = _as_matrix(self.frame)
        d, s = frame.shape
        if not (1 <= s < d):
            raise InvalidDimension(f"subspace dimension must satisfy 1 <= s < d, got s={s}, d={d}")
        gram = frame.T @ frame
        if np.max(np.abs(gram - np.eye(s))) > ORTHONORMALITY_TOL:
            raise RankDeficient("frame columns are not orthonormal; use orthonormalize()")
        object.__setattr__(self, "frame", frame)

    @property
    def ambient_dim(self) -> int:
        return self.frame.shape[0]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    def contains_direction(self, v, tol: float = ANGLE_TOL) -> bool:
        """True if the unit vector along v lies in the subspace up to tol."""
        v = np.asarray(v, dtype=float)
        v = v / np.linalg.norm(v)
        residual = v - self.frame @ (self.frame.T @ v)
        return bool(np.linalg.norm(residual) < tol)

    def same_subspace(self, other: "Subspace", tol: float = ANGLE_TOL) -> bool:
        """Equality as subspaces: every principal angle below tol."""
        angles = principal_angles(self, other).angles
        return self.dim == other.dim and bool(np.all(angles < tol))

    def orthogonal_complement(self) -> "Subspace":
        """Deterministic orthonormal basis of the complement."""
        d, s = self.frame.shape
        # Full QR of [frame | I] and keep the directions beyond the first s.
        q, _ = np.linalg.qr(np.hstack([self.frame, np.eye(d)]), mode="reduced")
        comp = q[:, s:d]
        # Re-orthogonalize against the frame to kill roundoff leakage.
        comp = comp - self.frame @ (self.frame.T @ comp)
        q2, r2 = np.linalg.qr(comp)
        q2 = q2 * np.sign(np.diag(r2))
        return Subspace(q2)


@dataclass(frozen=True, eq=False)
class PrincipalAngles:
    """Nondecreasing principal angles between two subspaces, in [0, pi/2]."""

    angles: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        object.__setattr__(self, "angles", a)

    @property
    def largest(self) -> float:
        return float(self.angles[-1])

    def count_below(self, tol: float) -> int:
        return int(np.sum(self.angles < tol))


@dataclass(frozen=True, eq=False)
class ConeField:
    """Constant cone of s-planes around a center subspace.

    A plane E belongs to the cone iff it is the graph of a linear map
    L : center -> center-perp with operator norm below the aperture.
    """

    center: Subspace
    aperture: float
    complement: Subspace = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.aperture < 1.0):
            raise InvalidDimension("cone aperture must lie in (0, 1)")
        object.__setattr__(self, "complement", self.center.orthogonal_complement())

    @property
    def ambient_dim(self) -> int:
        return self.center.ambient_dim

    @property
    def dim(self) -> int:
        return self.center.dim

    def plane_from_graph(self, graph_map) -> Subspace:
        """Plane spanned by center + complement @ L for a (d-s) x s map L."""
        L = np.asarray(graph_map, dtype=float)
        if L.shape != (self.complement.dim, self.center.dim):
            raise DimensionMismatch(
                f"graph map must be {(self.complement.dim, self.center.dim)}, got {L.shape}"
            )
        raw = self.center.frame + self.complement.frame @ L
        return orthonormalize(raw)


def orthonormalize(raw_frame) -> Subspace:
    """Orthonormalize the columns of a raw frame into a Subspace.

    Raises InvalidDimension unless 1 <= s < d, RankDeficient when the
    smallest singular value drops below RANK_TOL.  Already-orthonormal
    frames are returned unchanged up to sign-fixed QR (R diagonal > 0),
    which makes the result vary smoothly with the input.
    """
    m = _as_matrix(raw_frame)
    d, s = m.shape
    if not (1 <= s < d):
        raise InvalidDimension(f"need 1 <= s < d, got s={s}, d={d}")
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[-1] < RANK_TOL:
        raise RankDeficient(f"frame is numerically rank deficient (sigma_min={sv[-1]:.3e})")
    q, r = np.linalg.qr(m)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return Subspace(q * signs)


def principal_angles(u: Subspace, v: Subspace) -> PrincipalAngles:
    """Principal angles between two subspaces of the same ambient space.

    Delegates to the combined sine/cosine algorithm so that angles near
    zero keep full precision (the plain arccos of singular values of
    U^T V loses half the digits there).
    """
    if u.ambient_dim != v.ambient_dim:
        raise DimensionMismatch(
            f"ambient dimensions differ: {u.ambient_dim} vs {v.ambient_dim}"
        )
    angles = np.sort(scipy.linalg.subspace_angles(u.frame, v.frame))
    return PrincipalAngles(angles)


def intersection_directions(u: Subspace, v: Subspace, tol: float) -> np.ndarray:
    """Orthonormal basis (d x m) of the common directions of u and v.

    A direction counts as common when its principal angle is below tol;
    returns a (d, 0) array when the subspaces are transverse.
    """
    if u.ambient_dim != v.ambient_dim:
        raise DimensionMismatch("ambient dimensions differ")
    uu, sv, _ = np.linalg.svd(u.frame.T @ v.frame, full_matrices=False)
    sv = np.clip(sv, -1.0, 1.0)
    keep = np.arccos(sv) < tol
    basis = u.frame @ uu[:, keep]
    if basis.shape[1] == 0:
        return np.zeros((u.ambient_dim, 0))
    q, r = np.linalg.qr(basis)
    return q * np.sign(np.diag(r))


def graph_norm(e: Subspace, cone: ConeField) -> float:
    """Operator norm of the map L whose graph over cone.center is E.

    Returns math.inf when E fails to project isomorphically onto the
    center (E is then not a graph at all).
    """
    if e.ambient_dim != cone.ambient_dim:
        raise DimensionMismatch("plane and cone live in different spaces")
    if e.dim != cone.dim:
        raise DimensionMismatch(f"plane dimension {e.dim} != cone dimension {cone.dim}")
    head = cone.center.frame.T @ e.frame          # s x s
    tail = cone.complement.frame.T @ e.frame      # (d-s) x s
    sv_head = np.linalg.svd(head, compute_uv=False)
    if sv_head[-1] < RANK_TOL:
        return math.inf
    L = np.linalg.solve(head.T, tail.T).T         # L = tail @ head^{-1}
    return float(np.linalg.norm(L, 2))


def cone_membership(e: Subspace, cone: ConeField) -> bool:
    """Strict membership: graph norm below the aperture."""
    return graph_norm(e, cone) < cone.aperture
