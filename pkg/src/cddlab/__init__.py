"""Cross-domain distillation lab for anomaly detection with noisy training sets."""

from .cdd import (
    CddSchedules,
    ConfidenceTable,
    DomainPartition,
    PseudoSelection,
    affinity_select,
    compute_confidence,
    construct_domains,
    k_for_epoch,
    lambda_schedule,
    perturb_teacher_features,
    r_schedule,
    run_cdd,
    train_domain_student,
    train_global_cross,
    train_global_hc,
)
from .datagen import (
    FuadSplit,
    GenSpec,
    ImageSample,
    build_fuad_split,
    generate_corpus,
    load_corpus,
    load_mvtec_layout,
    save_corpus,
)
from .distill import (
    AnomalyMap,
    LossReport,
    anomaly_map,
    cos_sim,
    layer_cos_loss,
    score_dataset,
    train_rd,
)
from .harness import RunConfig, emit_plots, execute_run, run_sweep
from .metrics import MetricsReport, evaluate, pixel_auc, pro, roc_auc
from .models import (
    FeaturePyramid,
    ModelConfig,
    StudentNet,
    TeacherNet,
    build_student,
    build_teacher,
    clone_params,
    load_checkpoint,
    load_params,
    save_checkpoint,
    student_forward,
    teacher_forward,
    teacher_forward_many,
)

__version__ = "0.1.0"
