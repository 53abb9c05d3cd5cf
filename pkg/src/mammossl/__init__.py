"""Semi-supervised classification experiments for small imbalanced image corpora."""

from .dedims import DissimilarityReport, FeatureSource, cosine_distance, dedims, feature_dissimilarity, feature_source_from_params
from .data import (
    LabelBudget,
    ManifestRecord,
    SplitSpec,
    SyntheticDataset,
    binary_subset,
    derived_seed,
    generate_synthetic,
    load_manifest,
    patient_disjoint_split,
    sample_label_budget,
    save_manifest,
)
from .errors import ConfigurationError, ContractError, DataError, TrainingError
from .experiment import (
    CONFIGURATIONS,
    ComparisonRecord,
    ExperimentConfig,
    ImageDataset,
    RunResult,
    compare_runs,
    emit_report,
    load_experiment_config,
    load_image_dataset,
    load_report,
    run_configuration,
)
from .metrics import (
    ConfusionMatrix,
    MetricReport,
    accuracy,
    aggregate,
    balanced_accuracy,
    compute_report,
    confusion_from_predictions,
    fbeta,
    g_mean,
    metric_records,
    precision,
    recall,
    specificity,
)
from .mixmatch import (
    LabeledBatch,
    MixMatchConfig,
    MixedBatch,
    PbcWeights,
    PseudoLabeledBatch,
    compound_loss,
    guess_labels,
    mix_match_batch,
    mix_up,
    pbc_weights,
    rampup,
    sample_mix_lambda,
    sharpen,
)
from .model import (
    ClassifierConfig,
    ModelParams,
    OptimState,
    backward,
    euclidean_loss,
    extract_penultimate,
    forward,
    gradient_check,
    init_model,
    load_params,
    save_params,
    sgd_step,
    soft_cross_entropy,
    weighted_cross_entropy,
)
from .preprocess import (
    BinaryLabel,
    augment,
    background_mask,
    binarize_birads,
    binary_dilate,
    binary_erode,
    huang_threshold,
    read_image,
    remove_background,
    resize_bilinear,
    rolling_ball_background,
    standardize_batch,
    write_image,
)
from .stats import WilcoxonResult, wilcoxon_signed_rank
from .training import TrainOutcome, evaluate_params, train_ssdl, train_supervised

__version__ = "0.1.0"
