"""depthseg: atomic-column depth estimation from noisy micrographs, cast as
per-pixel depth-class segmentation.

The pipeline: generate synthetic atomic models (`lattice`), render clean
images through a parametric contrast proxy (`imaging`), corrupt them with
scaled Poisson noise (`noise`), build ring-smoothed depth labels and loss
weights (`labels`), train a UNet classifier (`network`, `training`), and
analyze the results (`evaluation`, `saliency`).  `cli` ties it together.
"""

__version__ = "0.1.0"

from .data import SampleSet, SynthesisConfig, load_dataset, save_dataset, synthesize_dataset
from .evaluation import (
    CalibrationCurve,
    EvalReport,
    calibration,
    confusion_matrix,
    evaluate_model,
    metrics,
    noise_sweep,
    track_sequence,
)
from .imaging import CleanImage, ContrastCurve, default_contrast_curve, ingest_external, render
from .labels import (
    DepthMap,
    LabelBundle,
    SmoothedLabelMap,
    WeightMap,
    build_label_bundle,
    build_weights,
    project_depth,
    smooth_labels,
)
from .lattice import (
    D_MAX,
    NUM_DEPTH_CLASSES,
    AtomicModel,
    Column,
    ProfileKind,
    Species,
    SurfaceProfile,
    generate_model,
    model_stats,
)
from .network import (
    DepthEstimate,
    ModelConfig,
    ModelParameters,
    ProbabilityMap,
    build_model,
    count_parameters,
    forward,
    load_checkpoint,
    median_filter,
    predict,
    save_checkpoint,
)
from .noise import NoisyImage, corrupt, derive_noise_seed, empirical_snr
from .saliency import SaliencyMap, gradient_spread, input_gradient
from .training import (
    TrainConfig,
    TrainRecord,
    TwoStagePipeline,
    train,
    train_joint_baseline,
    train_sequential_baseline,
    weighted_ce,
)
