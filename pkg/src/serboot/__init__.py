"""serboot: bootstrapped selection of synthesized training data for
speech emotion recognition in low-resource languages."""

__version__ = "0.1.0"

from .data import (  # noqa: E402,F401
    Dataset,
    EmotionClass,
    LabeledSample,
    SoftLabel,
    argmax_label,
    make_soft_label,
    merge_datasets,
    validate_dataset,
)
from .featio import (  # noqa: F401
    filter_by_language,
    load_manifest,
    read_feature_file,
    write_dataset,
    write_feature_file,
)
from .net import Model, TrainConfig, forward, loss_and_grad, predict, train  # noqa: F401
from .evaluation import (  # noqa: F401
    FoldPlan,
    Metrics,
    MetricsReport,
    compute_metrics,
    cross_validate,
    partition_speakers,
)
from .bootstrap import (  # noqa: F401
    PipelineResult,
    SelectionRound,
    chi1,
    chi2,
    kl_divergence,
    median,
    run_pipeline,
    select_round,
)
from .synthbench import BenchConfig, copypaste_augment, generate, noise_augment, selection_quality  # noqa: F401
