"""Meta-learning of model initializations through adjoint gradient-flow ODEs."""

from amaml._core import (
    AdjointResult,
    ContractError,
    DataError,
    Dataset,
    MetaConfig,
    MetaIterLog,
    MlpSpec,
    NumericalError,
    ParseError,
    Task,
    __version__,
    adaptation_curve,
    alpine_value,
    cosmixture_value,
    dynamics_hvp,
    init_params,
    meta_train_synthetic,
    mse_grad,
    mse_loss,
    nrmse,
    predict,
    predict_all,
    sample_synthetic_task,
    task_grad,
)

__all__ = [
    "AdjointResult",
    "ContractError",
    "DataError",
    "Dataset",
    "MetaConfig",
    "MetaIterLog",
    "MlpSpec",
    "NumericalError",
    "ParseError",
    "Task",
    "__version__",
    "adaptation_curve",
    "alpine_value",
    "cosmixture_value",
    "dynamics_hvp",
    "init_params",
    "meta_train_synthetic",
    "mse_grad",
    "mse_loss",
    "nrmse",
    "predict",
    "predict_all",
    "sample_synthetic_task",
    "task_grad",
]
