"""conefold: cone-field certification and tangency detection for skew products."""

__version__ = "0.1.0"

from .errors import (
    ConefoldError,
    DimensionMismatch,
    EmptyIntersection,
    InvalidDimension,
    LeftDomain,
    NoConvergence,
    NoSuchAutomorphism,
    NotAGraph,
    NotElliptic,
    OutOfDomain,
    RankDeficient,
    ReconstructionFailed,
    SingularSystem,
)
from .ambient import (
    AmbientPoint,
    ConeField,
    PrincipalAngles,
    Subspace,
    cone_membership,
    graph_norm,
    intersection_directions,
    orthonormalize,
    principal_angles,
    wrap_difference,
)
from .folding import (
    FoldingCertificate,
    FoldingManifold,
    build_fold,
    embed,
    fold_linear_system,
    normal_frame,
    perturb_fold,
    solve_fold_point,
    tangent_frame,
    verify_folding,
)
from .cocycle import (
    BundlePoint,
    ConeCertificate,
    StableBundleEstimate,
    grassmann_step,
    stable_plane,
    verify_cone_invariance,
)
from .systems import (
    BumpPerturbation,
    DASystem,
    LinearSystem,
    ScenarioSystem,
    ToralAutomorphism,
    TrappingReport,
    apply,
    apply_many,
    build_scenario,
    differential,
    differential_many,
    find_automorphism,
    inverse_apply,
    scenario_from_dict,
    scenario_to_dict,
    verify_trapping,
    with_perturbations,
)
from .tangency import (
    LeafFamily,
    TangencyClass,
    TangencyReport,
    TRANSVERSE,
    Transverse,
    build_leaf_family,
    classify,
    find_tangency_newton,
    find_tangency_sweep,
    fold_meets_leaf,
    tangency_residual,
)
from .robustness import (
    ExperimentResult,
    MagnitudeLadder,
    PersistenceStats,
    TrialRow,
    fold_perturbation_experiment,
    persistence_experiment,
    random_perturbation,
    sampled_c1_size,
    thread_count,
    trial_seed,
)

__all__ = [
    "__version__",
    "ConefoldError",
    "DimensionMismatch",
    "EmptyIntersection",
    "InvalidDimension",
    "LeftDomain",
    "NoConvergence",
    "NoSuchAutomorphism",
    "NotAGraph",
    "NotElliptic",
    "OutOfDomain",
    "RankDeficient",
    "ReconstructionFailed",
    "SingularSystem",
    "AmbientPoint",
    "ConeField",
    "PrincipalAngles",
    "Subspace",
    "cone_membership",
    "graph_norm",
    "intersection_directions",
    "orthonormalize",
    "principal_angles",
    "wrap_difference",
    "FoldingCertificate",
    "FoldingManifold",
    "build_fold",
    "embed",
    "fold_linear_system",
    "normal_frame",
    "perturb_fold",
    "solve_fold_point",
    "tangent_frame",
    "verify_folding",
    "BumpPerturbation",
    "DASystem",
    "LinearSystem",
    "ScenarioSystem",
    "ToralAutomorphism",
    "TrappingReport",
    "apply",
    "apply_many",
    "build_scenario",
    "differential",
    "differential_many",
    "find_automorphism",
    "inverse_apply",
    "scenario_from_dict",
    "scenario_to_dict",
    "verify_trapping",
    "with_perturbations",
    "BundlePoint",
    "ConeCertificate",
    "StableBundleEstimate",
    "grassmann_step",
    "stable_plane",
    "verify_cone_invariance",
    "LeafFamily",
    "TangencyClass",
    "TangencyReport",
    "TRANSVERSE",
    "Transverse",
    "build_leaf_family",
    "classify",
    "find_tangency_newton",
    "find_tangency_sweep",
    "fold_meets_leaf",
    "tangency_residual",
    "ExperimentResult",
    "MagnitudeLadder",
    "PersistenceStats",
    "TrialRow",
    "fold_perturbation_experiment",
    "persistence_experiment",
    "random_perturbation",
    "sampled_c1_size",
    "thread_count",
    "trial_seed",
]
