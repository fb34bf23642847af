"""Forecasters sharing one fit/predict contract: naive, MSVR, FFNN, LSTM, BiLSTM."""

from .base import (
    KINDS,
    DivergenceError,
    ForecasterError,
    ForecasterSpec,
    ForecastModel,
    LayoutMismatchError,
    NaiveForecaster,
    TrainingLog,
)
from .io import CorruptModelFileError, ModelKindError, ModelVersionError, load, save
from .msvr import ConvergenceWarning, MSVRForecaster, irwls, kernel_matrix, msvr_objective
from .neural import BiLSTMForecaster, FFNNForecaster, LSTMForecaster, gradient_check

# Models that accept the delay-embedded (23, 2) target window.
PHASE_SPACE_COMPATIBLE = frozenset({"naive", "ffnn", "lstm", "bilstm"})

_CLASSES = {
    "naive": NaiveForecaster,
    "msvr": MSVRForecaster,
    "ffnn": FFNNForecaster,
    "lstm": LSTMForecaster,
    "bilstm": BiLSTMForecaster,
}


def make_model(spec: ForecasterSpec) -> ForecastModel:
    return _CLASSES[spec.kind](spec)


def fit(spec: ForecasterSpec, train, val=None) -> ForecastModel:
    return make_model(spec).fit(train, val)


def predict(model: ForecastModel, ds):
    return model.predict(ds)


__all__ = [
    "KINDS", "PHASE_SPACE_COMPATIBLE", "ForecasterSpec", "ForecastModel", "TrainingLog",
    "NaiveForecaster", "MSVRForecaster", "FFNNForecaster", "LSTMForecaster", "BiLSTMForecaster",
    "make_model", "fit", "predict", "gradient_check", "save", "load", "irwls", "kernel_matrix",
    "msvr_objective", "ForecasterError", "DivergenceError", "LayoutMismatchError",
    "CorruptModelFileError", "ModelKindError", "ModelVersionError", "ConvergenceWarning",
]
