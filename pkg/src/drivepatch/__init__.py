"""drivepatch: black-box adversarial patch optimization and evaluation for
camera-based driving oracles."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1

from .image import ImageBuffer
from .nes import NesConfig, OptResult, OptState, estimate_gradient, optimize, step
from .objective import ObjectiveConfig, candidate_objective, cosine_similarity, semantic_loss, tv_norm
from .oracle import (
    Action,
    EmbeddingVector,
    HashEmbedder,
    HttpEmbedder,
    HttpOracle,
    MockOracle,
    OracleResponse,
    hash_embed,
    http_describe,
    http_embed,
    parse_action,
)
from .patch import Patch, clip_patch, load_patch, new_random_patch, quantize_patch, save_patch
from .rng import RngStream
from .scenario import (
    FrameRecord,
    ScenarioConfig,
    TrialRecord,
    build_distance_schedule,
    builtin_scenarios,
    desk_variant,
    load_frames,
    render_frame,
    run_trial,
)
from .transforms import (
    CameraModel,
    PatchPlacement,
    Rect,
    TransformSample,
    apply_transform,
    composite_patch,
    project_patch_rect,
    sample_transform,
)
from .metrics import (
    MetricsReport,
    asr,
    asr_by_distance,
    bleu4,
    cluster_bootstrap_p,
    compute_report,
    detection_degradation,
    detection_rate,
    persistence,
    semantic_similarity,
)
