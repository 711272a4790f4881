"""corekit: coreset selection and bias auditing for spuriously correlated data.

The toolkit covers the full pipeline: sample characterization scores,
class/group-balanced selection policies, bias-level quantification, and
group-robustness evaluation of models trained on the selected coresets.
"""

__version__ = "0.1.0"

from .characterize import (
    EmbeddingMatrix,
    ScoreVector,
    el2n,
    forgetting,
    selfsup_score,
    supproto_score,
    uncertainty,
)
from .data_model import (
    GroupKey,
    GroupTable,
    LabeledDataset,
    SynthConfig,
    generate_synthetic,
    group_table,
    load_dataset_csv,
    load_embeddings,
    load_scores,
    save_dataset_csv,
    save_embeddings,
    save_scores,
)
from .metrics import (
    BiasReport,
    EvalReport,
    bias_conflict_ap,
    bias_level,
    group_eval,
    label_alignment,
    random_ap_baseline,
)
from .select import (
    Coreset,
    allocate_balanced,
    allocate_group_balanced,
    load_coreset,
    save_coreset,
    select_difficult,
    select_difficult_star,
    select_easy,
    select_group_policy,
    select_median,
    select_random,
    select_stratified,
)
from .trainer import (
    TrainConfig,
    TrainedModel,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    save_dynamics_csv,
    scaled_epochs,
    train,
)

__all__ = [
    "BiasReport",
    "Coreset",
    "EmbeddingMatrix",
    "EvalReport",
    "GroupKey",
    "GroupTable",
    "LabeledDataset",
    "ScoreVector",
    "SynthConfig",
    "TrainConfig",
    "TrainedModel",
    "TrainingDiverged",
    "allocate_balanced",
    "allocate_group_balanced",
    "bias_conflict_ap",
    "bias_level",
    "el2n",
    "forgetting",
    "generate_synthetic",
    "group_eval",
    "group_table",
    "label_alignment",
    "load_checkpoint",
    "load_coreset",
    "load_dataset_csv",
    "load_embeddings",
    "load_scores",
    "random_ap_baseline",
    "save_checkpoint",
    "save_coreset",
    "save_dataset_csv",
    "save_embeddings",
    "save_scores",
    "scaled_epochs",
    "select_difficult",
    "select_difficult_star",
    "select_easy",
    "select_group_policy",
    "select_median",
    "select_random",
    "select_stratified",
    "selfsup_score",
    "supproto_score",
    "train",
    "uncertainty",
]
