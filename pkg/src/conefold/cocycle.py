"""Grassmannian cocycle: plane transport, stable-bundle pullback, cone certificates.

The diffeomorphism induces (x, E) -> (f(x), Df(x) E) on pairs of points and
s-planes.  The stable bundle is the attracting fixed section of the inverse
cocycle, so it is computed by pulling a seed plane back along a forward orbit
with re-orthonormalization.  Nothing global is stored: detectors ask for the
stable plane at single points and the certificate samples the trapping region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import (
    AmbientPoint,
    ConeField,
    Subspace,
    graph_norm,
    orthonormalize,
    principal_angles,
)
from .errors import DimensionMismatch, InvalidDimension, NoConvergence
from .systems import apply, differential, differential_many

PULLBACK_STEPS = 60
PULLBACK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BundlePoint:
    """A point together with a plane attached at that point."""

    point: AmbientPoint
    plane: Subspace

    def __post_init__(self):
        if self.plane.ambient_dim != self.point.coords.size:
            raise DimensionMismatch(
                "plane and point live in different ambient dimensions"
            )


@dataclass(frozen=True, eq=False)
class StableBundleEstimate:
    """Pullback estimate of the stable plane at a point.

    cauchy_gap is the sine of the largest principal angle between the full
    pullback and the one-step-shorter pullback; gap_history, when requested,
    lists that gap for every depth 1..n (depth m compared against m-1).
    """

    plane: Subspace
    iterations: int
    cauchy_gap: float
    gap_history: tuple = None


def grassmann_step(sys, b: BundlePoint) -> BundlePoint:
    """One step of the induced map: (x, E) -> (f(x), Df(x) E)."""
    df = differential(sys, b.point)
    return BundlePoint(
        point=apply(sys, b.point),
        plane=orthonormalize(df @ b.plane.frame),
    )


def _default_seed(sys) -> Subspace:
    seed = getattr(sys, "stable_frame", None)
    if seed is None:
        raise DimensionMismatch(
            "system has no canonical stable frame; pass an explicit seed plane"
        )
    return seed


def _pull_chain(dfs, seed: Subspace, depth: int) -> Subspace:
    """Pull the seed plane from orbit level `depth` back to level 0."""
    plane = seed
    for i in reversed(range(depth)):
        plane = orthonormalize(np.linalg.solve(dfs[i], plane.frame))
    return plane


def _gap(u: Subspace, v: Subspace) -> float:
    return float(np.sin(principal_angles(u, v).largest))


def stable_plane(
    sys,
    x: AmbientPoint,
    n: int = PULLBACK_STEPS,
    seed: Subspace = None,
    tol: float = PULLBACK_TOL,
    with_history: bool = False,
) -> StableBundleEstimate:
    """Stable plane at x by pullback power iteration along the forward orbit.

    The seed plane (default: the scenario's cone center) is placed at the
    n-th forward image and pulled back through the inverse differentials.
    Convergence is measured against the pullback seeded one level earlier;
    with_history recomputes that gap at every depth, which costs O(n^2)
    small solves and is meant for diagnostics, not detector loops.
    """
    if n < 2:
        raise InvalidDimension("pullback needs at least two steps for a gap")
    if seed is None:
        seed = _default_seed(sys)
    dfs = []
    point = x
    for _ in range(n):
        dfs.append(differential(sys, point))
        point = apply(sys, point)

    estimate = _pull_chain(dfs, seed, n)
    shorter = _pull_chain(dfs, seed, n - 1)
    cauchy_gap = _gap(estimate, shorter)

    history = None
    if with_history:
        chain = [_pull_chain(dfs, seed, m) for m in range(n + 1)]
        history = tuple(_gap(chain[m], chain[m - 1]) for m in range(1, n + 1))

    if cauchy_gap > tol:
        raise NoConvergence(
            f"stable-plane pullback gap {cauchy_gap:.3e} exceeds {tol:.1e} after {n} steps"
        )
    return StableBundleEstimate(
        plane=estimate,
        iterations=n,
        cauchy_gap=cauchy_gap,
        gap_history=history,
    )


@dataclass(frozen=True)
class ConeCertificate:
    """Sampled check that pullback maps the cone strictly into itself."""

    alpha: float
    samples: int
    max_ratio: float
    passed: bool
    seed: int

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "samples": self.samples,
            "max_ratio": self.max_ratio,
            "pass": self.passed,
            "seed": self.seed,
        }


def verify_cone_invariance(
    sys, cone: ConeField, samples: int = 10000, seed: int = 0
) -> ConeCertificate:
    """Certify Df(y)^{-1} C(f(y)) subset C(y) with graph-norm contraction.

    Points y are sampled uniformly over the domain (their images stay inside
    by trapping); each carries a plane drawn on the cone's boundary shell,
    graph norm in [alpha/2, alpha), attached at the image point and pulled
    back through the exact differential.  The certificate records the worst
    ratio of pulled-back graph norm to original graph norm.
    """
    if samples < 1:
        raise InvalidDimension("need at least one sample")
    rng = np.random.default_rng(seed)
    pts = sys.sample_domain(rng, samples)
    dfs = differential_many(sys, pts)
    rows, cols = cone.complement.dim, cone.dim
    alpha = cone.aperture
    max_ratio = 0.0
    for i in range(samples):
        graph = rng.standard_normal((rows, cols))
        norm = np.linalg.norm(graph, 2)
        graph *= rng.uniform(0.5, 1.0) * alpha / norm
        plane = cone.plane_from_graph(graph)
        pulled = orthonormalize(np.linalg.solve(dfs[i], plane.frame))
        ratio = graph_norm(pulled, cone) / graph_norm(plane, cone)
        if ratio > max_ratio:
            max_ratio = float(ratio)
    return ConeCertificate(
        alpha=alpha,
        samples=samples,
        max_ratio=max_ratio,
        passed=max_ratio < 1.0,
        seed=seed,
    )
