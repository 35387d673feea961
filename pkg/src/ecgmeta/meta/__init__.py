from .model import (
    Batch,
    FeatureCache,
    FusionModel,
    assemble_model,
    generate_answers,
    prepare_batch,
    task_loss,
)
from .learner import (
    MetaConfig,
    inner_adapt,
    meta_test,
    meta_train,
    meta_train_step,
    supervised_baseline_train,
)

__all__ = [
    "Batch", "FeatureCache", "FusionModel", "assemble_model",
    "generate_answers", "prepare_batch", "task_loss",
    "MetaConfig", "inner_adapt", "meta_test", "meta_train",
    "meta_train_step", "supervised_baseline_train",
]
