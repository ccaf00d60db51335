"""Pose estimation and correspondence evaluation on synthetic scenes."""

from .errors import (
    AllPointsBehindCamera,
    DegenerateConfiguration,
    DimensionMismatch,
    Divergence,
    EmptyGroundTruth,
    EmptySet,
    GridTooLarge,
    MinCDError,
    MissingDepth,
    MissingFeatures,
    NearPiRotation,
    NoConsensus,
    NonFiniteInput,
    NotInFrontOfCamera,
    NotOneToOne,
    TooFewPoints,
)
from .features import (
    DEFAULT_FEATURE_DIM,
    CorrespondenceSet,
    KeypointSet2D,
    KeypointSet3D,
    MatchConfig,
    feature_distance,
    feature_distance_matrix,
    match_by_threshold,
    nearest_3d_match,
    normalize_features,
)
from .chamfer import (
    ChamferReport,
    LossWeights,
    SolverConfig,
    TraceRow,
    chamfer_cost,
    chamfer_grad_twist,
    mincd_objective,
    save_trace_csv,
    solve_pose_chamfer,
)
from .evaluation import (
    EvalRecord,
    MetricConfig,
    inlier_ratio,
    match_scene,
    registration_success,
    run_pipeline,
    summary_from_records,
    summary_markdown,
    write_records_jsonl,
)
from .keypoint import (
    DEFAULT_S_TH,
    GroundTruthCorrectness,
    KeypointReport,
    SelectConfig,
    SelectedKeypoints,
    evaluate_selection,
    guided_reprojection_total,
    key_loss,
    key_loss_iou,
    key_loss_smooth,
    keypoint_precision_recall,
    reprojection_correctness,
    sample_uniform_2d,
    select_3d_keypoints,
    tau_criterion,
)
from .blindpnp import (
    DEFAULT_TAU,
    GridSpec,
    InlierConfig,
    brute_force_best_pose,
    check_inequality8,
    kappa,
    kappa_star,
)
from .pnp import (
    MIN_PNP_POINTS,
    RansacConfig,
    pnp_linear,
    pnp_ransac,
    pnp_refine,
    reprojection_cost,
    reprojection_grad_twist,
)
from .synth import (
    DEFAULT_INTRINSICS,
    NoiseSpec,
    ScenePair,
    generate_scene,
    perturb_pose,
)
from .geometry import (
    CameraIntrinsics,
    Pose,
    Twist,
    exp_action_jacobian,
    pose_difference,
    project,
    project_points,
    projection_jacobian,
    reprojection_error,
    rotation_angle_deg,
    se3_exp,
    se3_log,
    skew,
    so3_exp,
)

__version__ = "0.1.0"
