from .base import (
    ModelKind,
    ModelSpec,
    central_difference,
    finite_diff_grad,
    init_parameters,
    local_loss,
    local_loss_grad,
    log_prior,
    log_prior_grad,
    negative_log_likelihood,
    negative_log_likelihood_grad,
    pack,
    predict_proba,
    softmax,
    unpack,
)
from .data import (
    Dataset,
    LabeledExample,
    SyntheticBlobs,
    concatenate,
    generate_synthetic_dataset,
    load_csv_dataset,
    save_csv_dataset,
    shift_dataset,
)
from .ensemble import PosteriorEnsemble, ensemble_predict

__all__ = [
    "Dataset",
    "LabeledExample",
    "ModelKind",
    "ModelSpec",
    "PosteriorEnsemble",
    "SyntheticBlobs",
    "central_difference",
    "concatenate",
    "ensemble_predict",
    "finite_diff_grad",
    "generate_synthetic_dataset",
    "init_parameters",
    "load_csv_dataset",
    "local_loss",
    "local_loss_grad",
    "log_prior",
    "log_prior_grad",
    "negative_log_likelihood",
    "negative_log_likelihood_grad",
    "pack",
    "predict_proba",
    "save_csv_dataset",
    "shift_dataset",
    "softmax",
    "unpack",
]
