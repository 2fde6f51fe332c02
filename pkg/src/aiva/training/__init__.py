from .ablation import (
    ABLATION_VARIANTS,
    AblationError,
    rows_to_csv,
    run_ablation,
    run_lambda_sweep,
    variant_config,
)
from .checkpoint import (
    Checkpoint,
    CheckpointCorruptError,
    CheckpointError,
    CheckpointFormatError,
    CheckpointVersionError,
    checkpoint_id,
    load_checkpoint,
    save_checkpoint,
)
from .loop import (
    HISTORY_COLUMNS,
    PreparedExample,
    TrainConfig,
    TrainResult,
    batch_loss,
    evaluate,
    history_csv,
    save_result,
    train,
)
from .metrics import Metrics, compute_metrics
from .optim import AdamState, adam_step, collect_grads, zero_grads

__all__ = [
    "ABLATION_VARIANTS",
    "AblationError",
    "AdamState",
    "Checkpoint",
    "CheckpointCorruptError",
    "CheckpointError",
    "CheckpointFormatError",
    "CheckpointVersionError",
    "HISTORY_COLUMNS",
    "Metrics",
    "PreparedExample",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "batch_loss",
    "checkpoint_id",
    "collect_grads",
    "compute_metrics",
    "evaluate",
    "history_csv",
    "load_checkpoint",
    "rows_to_csv",
    "run_ablation",
    "run_lambda_sweep",
    "save_checkpoint",
    "save_result",
    "train",
    "variant_config",
    "zero_grads",
]
