"""Localization models: SAE+MLP classifier and OU-kernel GP regressor."""

from .dnn import (
    DnnClassifier,
    DnnConfig,
    Encoder,
    accuracy,
    normalize_input,
    predict_labels,
    train_classifier,
    train_sae,
)
from .gp import (
    GpConfig,
    GpModel,
    gp_fit,
    gp_predict,
    gp_predict_many,
    localization_error,
    ou_kernel,
)
from .store import load_model, save_model
