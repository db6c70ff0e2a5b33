"""Tests for tangency classification and the two independent detectors."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from conefold.ambient import Subspace, orthonormalize, principal_angles
from conefold.errors import (
    DimensionMismatch,
    EmptyIntersection,
    LeftDomain,
    NotElliptic,
)
from conefold.folding import FoldingManifold, embed, normal_frame, tangent_frame
from conefold.systems import (
    BumpPerturbation,
    ScenarioSystem,
    ToralAutomorphism,
    apply,
    build_scenario,
    with_perturbations,
)
from conefold.systems import CAT_MATRIX
from conefold.tangency import (
    TRANSVERSE,
    LeafFamily,
    TangencyClass,
    build_leaf_family,
    classify,
    find_tangency_newton,
    find_tangency_sweep,
    fold_meets_leaf,
    tangency_residual,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def shifted_fold(fold, shift):
    center = fold.chart_center + shift
    center = np.where(fold.periodic_mask, np.mod(center, 1.0), center)
    return FoldingManifold(
        kind=fold.kind,
        s=fold.s,
        c_T=fold.c_T,
        chart_center=center,
        chart_rotation=fold.chart_rotation,
        chart_scale=fold.chart_scale,
        hessians=fold.hessians,
        gradients=fold.gradients,
        periodic_mask=fold.periodic_mask,
    )


def overlap_bump(sys, amplitude):
    # compactly supported displacement whose support straddles the fold patch
    center = sys.fold.chart_center.copy()
    center[sys.box_dim:] = np.mod(center[sys.box_dim:] + 0.02, 1.0)
    center[: sys.box_dim] += 0.02
    direction = np.zeros(sys.d)
    direction[-2:] = [0.6, 0.8]
    return BumpPerturbation(
        center=center,
        radius=0.05,
        direction=direction,
        amplitude=amplitude,
        mode="overlap",
        c1_bound=amplitude / 0.05,
    )


@pytest.fixture(scope="module")
def elliptic2():
    return build_scenario(1, 2)


@pytest.fixture(scope="module")
def elliptic1():
    return build_scenario(1, 1)


@pytest.fixture(scope="module")
def perturbed2(elliptic2):
    return with_perturbations(elliptic2, (overlap_bump(elliptic2, 1e-3),))


@pytest.fixture(scope="module")
def sweep2(elliptic2):
    return find_tangency_sweep(elliptic2, elliptic2.fold)


@pytest.fixture(scope="module")
def leaves2(elliptic2):
    return build_leaf_family(elliptic2)


# ---------------------------------------------------------------------------
# classification


def test_classify_two_lines_in_3d_meeting_along_each_other():
    e = np.eye(3)
    c = classify(Subspace(e[:, :1]), Subspace(e[:, :1]), 3)
    assert (c.c_T, c.d_T, c.k_T) == (2, 1, -1)


def test_classify_line_inside_plane_in_3d():
    e = np.eye(3)
    c = classify(Subspace(e[:, :1]), Subspace(e[:, :2]), 3)
    assert (c.c_T, c.d_T, c.k_T) == (1, 1, 0)


def test_classify_coincident_planes_in_3d():
    e = np.eye(3)
    c = classify(Subspace(e[:, :2]), Subspace(e[:, :2]), 3)
    assert (c.c_T, c.d_T, c.k_T) == (1, 2, 1)


def test_classify_planes_sharing_generic_line_is_transverse():
    # two planes in R^3 always share a line; that is the generic picture
    e = np.eye(3)
    assert classify(Subspace(e[:, :2]), Subspace(e[:, 1:]), 3) is TRANSVERSE


def test_classify_disjoint_lines_in_3d_is_transverse():
    e = np.eye(3)
    assert classify(Subspace(e[:, :1]), Subspace(e[:, 1:2]), 3) is TRANSVERSE


def test_classify_random_planes_are_generically_transverse():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = orthonormalize(rng.standard_normal((5, 2)))
        v = orthonormalize(rng.standard_normal((5, 3)))
        assert classify(u, v, 5) is TRANSVERSE


def test_classify_rejects_wrong_ambient_dimension():
    e = np.eye(3)
    with pytest.raises(DimensionMismatch):
        classify(Subspace(e[:, :1]), Subspace(e[:, :1]), 4)


def test_tangency_class_validates_identity():
    with pytest.raises(Exception):
        TangencyClass(c_T=2, d_T=1, k_T=1)


def test_tangency_class_json_layout():
    c = TangencyClass(c_T=1, d_T=2, k_T=1)
    assert c.to_dict() == {"cT": 1, "dT": 2, "kT": 1}


# ---------------------------------------------------------------------------
# the residual


@pytest.mark.parametrize(
    "c_T,s,kind",
    [(1, 1, None), (1, 2, None), (1, 2, "saddle"), (2, 3, None)],
)
def test_residual_vanishes_at_center_of_built_scenarios(c_T, s, kind):
    sys = build_scenario(c_T, s, kind=kind)
    r = tangency_residual(sys, sys.fold, np.zeros(sys.fold.k))
    assert r.shape == (s * c_T,)
    assert np.linalg.norm(r) < 1e-12


def test_residual_matches_closed_form_on_linear_base(elliptic2):
    # for the unperturbed system the stable plane is the constant frame
    # box + v_s, so the residual must equal the normal-frame coefficients of
    # that exact frame, computable without any pullback
    sys = elliptic2
    fold = sys.fold
    exact = sys.stable_frame.frame
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = rng.uniform(-0.8, 0.8, size=fold.k)
        expected = (normal_frame(fold, t).frame.T @ exact).T.ravel()
        got = tangency_residual(sys, fold, t)
        npt.assert_allclose(got, expected, atol=1e-10)


def test_residual_layout_is_stable_vector_major():
    sys = build_scenario(2, 3)
    fold = sys.fold
    t = np.full(fold.k, 0.05)
    r = tangency_residual(sys, fold, t)
    assert r.shape == (fold.s * fold.c_T,)
    exact = sys.stable_frame.frame
    expected = (normal_frame(fold, t).frame.T @ exact).T.ravel()
    npt.assert_allclose(r, expected, atol=1e-10)


def test_residual_at_center_grows_continuously_with_bump_amplitude(elliptic2):
    norms = []
    for amp in (1e-5, 1e-4, 1e-3):
        pert = with_perturbations(elliptic2, (overlap_bump(elliptic2, amp),))
        norms.append(np.linalg.norm(tangency_residual(pert, elliptic2.fold, np.zeros(2))))
    assert norms[0] < norms[1] < norms[2]
    # linear response: a decade of amplitude is about a decade of residual
    assert 3.0 < norms[1] / norms[0] < 30.0
    assert 3.0 < norms[2] / norms[1] < 30.0
    assert norms[0] < 1e-3


def test_residual_responds_continuously_to_chart_translation(perturbed2):
    fold = perturbed2.fold
    shift_dir = perturbed2.unstable_direction
    base = np.linalg.norm(tangency_residual(perturbed2, fold, np.zeros(2)))
    gaps = []
    for delta in (1e-3, 1e-4, 1e-5):
        moved = shifted_fold(fold, delta * shift_dir)
        r = np.linalg.norm(tangency_residual(perturbed2, moved, np.zeros(2)))
        gaps.append(abs(r - base))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-5


def test_fd_jacobian_agrees_with_half_step_estimate(perturbed2):
    fold = perturbed2.fold
    t = np.array([0.013, -0.009])

    def fd_jacobian(h):
        jac = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            jac[:, j] = (
                tangency_residual(perturbed2, fold, t + e)
                - tangency_residual(perturbed2, fold, t - e)
            ) / (2.0 * h)
        return jac

    full = fd_jacobian(1e-6)
    half = fd_jacobian(5e-7)
    assert np.linalg.norm(full - half) / np.linalg.norm(full) < 1e-4


# ---------------------------------------------------------------------------
# Newton detector


@pytest.mark.parametrize(
    "c_T,s,kind,expected",
    [
        (1, 1, None, (1, 1, 0)),
        (1, 2, None, (1, 2, 1)),
        (1, 3, None, (1, 3, 2)),
        (1, 2, "saddle", (1, 2, 1)),
        (2, 3, None, (2, 3, 1)),
    ],
)
def test_newton_detects_center_tangency_of_built_scenarios(c_T, s, kind, expected):
    sys = build_scenario(c_T, s, kind=kind)
    report = find_tangency_newton(sys, sys.fold)
    assert report.detector == "newton"
    assert report.iterations == 0
    assert report.residual_norm < 1e-9
    npt.assert_allclose(report.t_star, np.zeros(sys.fold.k), atol=1e-12)
    c = report.tangency_class
    assert (c.c_T, c.d_T, c.k_T) == expected
    assert report.plane.dim == c.d_T
    assert report.leaf_parameter is None


def test_newton_converges_back_from_offset_start(elliptic2):
    report = find_tangency_newton(elliptic2, elliptic2.fold, t0=np.array([0.08, -0.06]))
    assert report.residual_norm < 1e-9
    npt.assert_allclose(report.t_star, [0.0, 0.0], atol=1e-7)
    assert 0 < report.iterations <= 10


def test_newton_tracks_perturbed_tangency(perturbed2):
    report = find_tangency_newton(perturbed2, perturbed2.fold)
    assert report.residual_norm < 1e-9
    # small perturbation moves the tangency a little, not far
    moved = np.linalg.norm(report.t_star)
    assert 1e-5 < moved < 0.05
    c = report.tangency_class
    assert (c.c_T, c.d_T, c.k_T) == (1, 2, 1)


def test_newton_report_point_is_embedded_parameter(elliptic2):
    report = find_tangency_newton(elliptic2, elliptic2.fold)
    npt.assert_array_equal(
        report.point.coords, embed(elliptic2.fold, report.t_star).coords
    )


def test_newton_report_json_layout(elliptic2):
    d = find_tangency_newton(elliptic2, elliptic2.fold).to_dict()
    assert set(d) == {
        "detector",
        "t_star",
        "point",
        "class",
        "residual_norm",
        "principal_angles",
        "iterations",
        "leaf_parameter",
    }
    assert d["detector"] == "newton"
    assert set(d["class"]) == {"cT", "dT", "kT"}
    assert len(d["t_star"]) == elliptic2.fold.k
    assert len(d["point"]) == elliptic2.d
    assert len(d["principal_angles"]) == elliptic2.s
    assert d["leaf_parameter"] is None


def test_newton_reports_are_bit_identical(perturbed2):
    first = find_tangency_newton(perturbed2, perturbed2.fold)
    second = find_tangency_newton(perturbed2, perturbed2.fold)
    npt.assert_array_equal(first.t_star, second.t_star)
    npt.assert_array_equal(first.point.coords, second.point.coords)
    assert first.to_dict() == second.to_dict()


def test_newton_raises_left_domain_for_outside_start(elliptic2):
    with pytest.raises(LeftDomain):
        find_tangency_newton(elliptic2, elliptic2.fold, t0=np.array([5.0, 0.0]))


def test_newton_rejects_wrong_start_shape(elliptic2):
    with pytest.raises(DimensionMismatch):
        find_tangency_newton(elliptic2, elliptic2.fold, t0=np.zeros(3))


# ---------------------------------------------------------------------------
# leaf families


def test_leaf_family_anchor_has_zero_coordinate(leaves2):
    assert abs(leaves2.leaf_value(leaves2.anchor)) < 1e-15


def test_leaf_family_is_affine_for_unperturbed_scenario(elliptic2, leaves2):
    # exact unstable coordinate: moving along the expanding direction adds
    # exactly the step, moving along stable directions adds nothing
    sys = elliptic2
    x = sys.fold.chart_center
    base = leaves2.leaf_value(sys.point(x))
    step = leaves2.leaf_value(sys.point(x + 0.007 * sys.unstable_direction))
    assert abs(step - base - 0.007) < 1e-13
    stable_move = sys.stable_frame.frame @ np.array([0.03, -0.02])
    same = leaves2.leaf_value(sys.point(x + stable_move))
    assert abs(same - base) < 1e-13


def test_leaf_coordinate_is_dynamically_invariant(perturbed2):
    # phi(f(x)) = lambda * phi(x) is what makes level sets stable leaves
    leaves = build_leaf_family(perturbed2)
    lam = perturbed2.expansion_rate
    rng = np.random.default_rng(5)
    for _ in range(5):
        t = rng.uniform(-1.0, 1.0, size=2)
        x = embed(perturbed2.fold, t)
        before = leaves.leaf_value(x)
        after = leaves.leaf_value(apply(perturbed2, x))
        assert abs(after - lam * before) < 1e-11


def test_leaf_family_requires_single_expanding_direction():
    sys = build_scenario(2, 3)
    with pytest.raises(NotElliptic):
        build_leaf_family(sys)


# ---------------------------------------------------------------------------
# sweep detector


def test_sweep_finds_center_tangency_unperturbed(elliptic2, sweep2):
    report = sweep2
    assert report.detector == "sweep"
    assert abs(report.leaf_parameter) < 1e-10
    npt.assert_allclose(report.t_star, [0.0, 0.0], atol=1e-9)
    assert report.residual_norm <= 1e-12
    assert report.iterations > 0
    c = report.tangency_class
    assert (c.c_T, c.d_T, c.k_T) == (1, 2, 1)
    npt.assert_allclose(
        report.point.coords, elliptic2.fold.chart_center, atol=1e-9
    )


def test_sweep_leaf_parameter_tracks_chart_translation(elliptic1):
    # moving the chart h along the expanding direction moves the tangency
    # leaf by exactly h while the in-chart parameter stays at the center
    h = 2.5e-3
    moved = shifted_fold(elliptic1.fold, h * elliptic1.unstable_direction)
    report = find_tangency_sweep(elliptic1, moved)
    assert abs(report.leaf_parameter - h) < 1e-9
    npt.assert_allclose(report.t_star, [0.0], atol=1e-6)


def test_sweep_is_bit_deterministic(elliptic1):
    first = find_tangency_sweep(elliptic1, elliptic1.fold)
    second = find_tangency_sweep(elliptic1, elliptic1.fold)
    npt.assert_array_equal(first.t_star, second.t_star)
    assert first.to_dict() == second.to_dict()


def test_sweep_sidedness_of_leaf_predicate(elliptic2, sweep2, leaves2):
    tbar = sweep2.leaf_parameter
    below, _ = fold_meets_leaf(elliptic2.fold, leaves2, tbar - 1e-6)
    above, _ = fold_meets_leaf(elliptic2.fold, leaves2, tbar + 1e-6)
    assert not below
    assert above


def test_sweep_rejects_non_elliptic_folds():
    mixed = build_scenario(2, 3)
    with pytest.raises(NotElliptic):
        find_tangency_sweep(mixed, mixed.fold)
    saddle = build_scenario(1, 2, kind="saddle")
    with pytest.raises(NotElliptic):
        find_tangency_sweep(saddle, saddle.fold)


def test_sweep_raises_when_no_leaf_in_family_is_met(elliptic2):
    leaves = build_leaf_family(elliptic2, radius=5e-4)
    moved = shifted_fold(elliptic2.fold, 0.01 * elliptic2.unstable_direction)
    with pytest.raises(EmptyIntersection):
        find_tangency_sweep(elliptic2, moved, leaves=leaves)


def test_sweep_report_json_layout(sweep2):
    d = sweep2.to_dict()
    assert d["detector"] == "sweep"
    assert isinstance(d["leaf_parameter"], float)
    assert set(d["class"]) == {"cT", "dT", "kT"}


# ---------------------------------------------------------------------------
# the detectors agree


def test_detectors_agree_unperturbed(elliptic2, sweep2):
    newton = find_tangency_newton(elliptic2, elliptic2.fold)
    assert newton.point.distance_to(sweep2.point) < 1e-6
    assert newton.tangency_class == sweep2.tangency_class


def test_detectors_agree_under_perturbation(perturbed2):
    newton = find_tangency_newton(perturbed2, perturbed2.fold)
    sweep = find_tangency_sweep(perturbed2, perturbed2.fold)
    assert newton.point.distance_to(sweep.point) < 1e-6
    assert newton.tangency_class == sweep.tangency_class
    # the perturbation moved the tangency leaf off the anchor leaf
    assert abs(sweep.leaf_parameter) > 1e-7
