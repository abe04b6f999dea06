"""labelqc: label-quality benchmarking and cleaning toolkit.

Inject controlled label noise, run four label-error detectors, evaluate both
detection accuracy and downstream-model impact, rank methods with
nonparametric statistics, and review suspicious samples interactively.
"""

from .data import (
    DataCard,
    Dataset,
    SplitPair,
    load_dataset_csv,
    make_blobs,
    read_data_card,
    save_dataset_csv,
    train_test_split,
    write_data_card,
)
from .detectors import (
    DetectionReport,
    DetectorConfig,
    compute_confident_joint,
    detect_aum,
    detect_cincer,
    detect_confident_learning,
    detect_simifeat,
)
from .harness import ExperimentConfig, clean_and_retrain, export_results, run_grid
from .metrics import MetricReport, classification_metrics, detection_metrics
from .models import (
    ClassifierSpec,
    corrected_loss,
    cross_val_proba,
    estimate_T_anchor,
    estimate_T_clusterability,
    predict_proba,
    train_classifier,
)
from .noise import (
    CorruptionRecord,
    NoiseSpec,
    TransitionMatrix,
    apply_corruption,
    build_asymmetric_T,
    build_class_dependent_T,
    build_uniform_T,
    corrupt_dataset,
    inject_multi_annotator,
    instance_flip_distribution,
)
from .ranking import (
    CliqueDiagram,
    RankTable,
    build_cliques,
    friedman_test,
    holm_adjust,
    render_cd_svg,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
