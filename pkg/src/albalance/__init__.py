"""Edge-guided, class-balanced active learning for raster segmentation."""

from .raster import (
    PROV_HUMAN,
    PROV_NONE,
    PROV_PSEUDO,
    UNLABELED,
    LabelMask,
    MetricReport,
    ProbabilityMap,
    RasterImage,
    argmax_map,
    class_proportions,
    confusion_matrix,
    entropy_sum,
    evaluate,
)
from .edges import EdgeConfig, edge_mask, schedule_high_threshold
from .units import LabelingUnit, grid_units, partition_units, rle_decode, rle_encode
from .acquisition import (
    ClassStats,
    PrototypeProvider,
    ScoreFileProvider,
    UnitScore,
    balanced_score,
    initial_select,
    normalize_perf,
    prototype_classify,
    sample_candidate_pool,
    select_batch,
)
from .pseudo import PseudoConfig, generate_pseudo, ratio_thresholds
from .model import (
    ContrastiveBatch,
    ModelParams,
    TrainConfig,
    TrainingSet,
    contrastive_loss,
    extract_features,
    fit,
    forward,
    loss_and_grad,
    poor_classes,
)
from .synth import ClassStyle, DatasetSpec, SynthDataset, default_spec, synth_dataset
from .harness import LogRecord, RunConfig, RunLog, Runner, oracle_label, resume_run, run_loop

__version__ = "0.1.0"
