from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..windowing import WindowedDataset

KINDS = ("naive", "msvr", "ffnn", "lstm", "bilstm")


class ForecasterError(Exception):
    pass


class DivergenceError(ForecasterError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class LayoutMismatchError(ForecasterError):
    pass


@dataclass
class ForecasterSpec:
    """Model kind plus hyperparameters; unused fields are ignored per kind."""

    kind: str = "lstm"
    hidden: int = 64
    layers: int = 1
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    clip_norm: float = 5.0
    activation: str = "relu"  # FFNN hidden layers
    C: float = 10.0
    epsilon: float = 0.1
    kernel: str = "rbf"
    gamma: float | None = None  # default 1 / input dimension
    tol: float = 1e-6
    max_iter: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for name in ("hidden", "layers", "batch_size", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.C <= 0 or self.epsilon < 0:
            raise ValueError("learning_rate and C must be positive, epsilon non-negative")
        if self.kernel not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ForecasterSpec":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainingLog:
    epochs: list[tuple[int, float, float, float]] = field(default_factory=list)
    seconds: float = 0.0
    best_epoch: int | None = None
    note: str = ""

    def append(self, epoch: int, train_loss: float, val_loss: float, seconds: float) -> None:
        self.epochs.append((epoch, float(train_loss), float(val_loss), float(seconds)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for row in self.epochs:
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])


class ForecastModel:
    """Uniform fit/predict contract. Predictions are 24 values per sample.

    ``predict_scaled`` returns standardized values; ``predict`` converts them
    to physical units with the target scale seen at fit time.
    """

    kind = "base"

    def __init__(self, spec: ForecasterSpec | None = None):
        self.spec = spec or ForecasterSpec(kind=self.kind)
        self.params: dict[str, np.ndarray] = {}
        self.layout: dict = {}
        self.target_scale: tuple[float, float] = (0.0, 1.0)
        self.log = TrainingLog()

    @property
    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _record_layout(self, ds: WindowedDataset) -> None:
        self.layout = {"steps": ds.steps, "n_features": ds.n_features, "feature_names": list(ds.feature_names)}
        self.target_scale = tuple(float(v) for v in ds.target_scale)

    def _check_layout(self, ds: WindowedDataset) -> None:
        if not self.layout:
            raise ForecasterError(f"{self.kind} model is not fitted")
        if (ds.steps, ds.n_features) != (self.layout["steps"], self.layout["n_features"]):
            raise LayoutMismatchError(
                f"input layout {(ds.steps, ds.n_features)} does not match training layout "
                f"{(self.layout['steps'], self.layout['n_features'])}"
            )

    def fit(self, train: WindowedDataset, val: WindowedDataset | None = None) -> "ForecastModel":
        start = time.perf_counter()
        self.log = TrainingLog()
        self._record_layout(train)
        self._fit(train, val)
        self.log.seconds = time.perf_counter() - start
        return self

    def _fit(self, train, val):
        raise NotImplementedError

    def predict_scaled(self, ds: WindowedDataset) -> np.ndarray:
        self._check_layout(ds)
        return self._predict(ds)

    def _predict(self, ds):
        raise NotImplementedError

    def predict(self, ds: WindowedDataset) -> np.ndarray:
        mean, std = self.target_scale
        return self.predict_scaled(ds) * std + mean


class NaiveForecaster(ForecastModel):
    """Seasonal naive: the next 24 hours repeat the last 24 observed hours."""

    kind = "naive"

    def _fit(self, train, val):
        pass

    def _check_layout(self, ds):
        if not self.layout:
            raise ForecasterError("naive model is not fitted")

    def _predict(self, ds):
        return np.array(ds.history, dtype=float, copy=True)
