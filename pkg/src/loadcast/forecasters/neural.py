"""FFNN, LSTM and BiLSTM forecasters in plain numpy.

Gradients are derived by hand (backpropagation through time for the
recurrent models) and trained with Adam on the MSE of scaled targets.

LSTM cell, per time step, on the concatenation ``z = [h_{t-1}, x_t]``::

    f_t = sigmoid(W_f z + b_f)
    i_t = sigmoid(W_i z + b_i)
    g_t = tanh(W_C z + b_C)          # candidate cell state
    C_t = f_t * C_{t-1} + i_t * g_t
    o_t = sigmoid(W_o z + b_o)
    h_t = o_t * tanh(C_t)

The four gate matrices are stored stacked row-wise in the order f, i, C, o.
"""

from __future__ import annotations

import copy
import logging
import time

import numpy as np

from ..windowing import WindowedDataset, flatten
from .base import DivergenceError, ForecastModel, ForecasterSpec

logger = logging.getLogger(__name__)

GATES = ("f", "i", "C", "o")


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot(rng, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def gate_blocks(W: np.ndarray, hidden: int) -> dict[str, np.ndarray]:
    """Views of the stacked gate matrix (or bias) keyed by gate name."""
    return {g: W[k * hidden:(k + 1) * hidden] for k, g in enumerate(GATES)}


# ---------------------------------------------------------------- LSTM layer

def lstm_forward(W, b, x, hidden):
    """Run one direction over ``x`` of shape ``(B, T, f)``; h0 = C0 = 0."""
    B, T, _ = x.shape
    H = hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        z = np.concatenate([h, x[:, t]], axis=1)
        a = z @ W.T + b
        f = sigmoid(a[:, :H])
        i = sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = sigmoid(a[:, 3 * H:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        cache.append((z, f, i, g, o, c_prev, tc))
    return hs, cache


def lstm_backward(W, dhs, cache, hidden):
    """Gradients w.r.t. W, b and the layer input given dL/dh_t for every t."""
    B, T, H = dhs.shape
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    dx = np.empty((B, T, W.shape[1] - H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        z, f, i, g, o, c_prev, tc = cache[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        da = np.concatenate(
            [dc * c_prev * f * (1.0 - f), dc * g * i * (1.0 - i), dc * i * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dc_next = dc * f
        dW += da.T @ z
        db += da.sum(axis=0)
        dz = da @ W
        dh_next = dz[:, :H]
        dx[:, t] = dz[:, H:]
    return dW, db, dx


# ---------------------------------------------------------------- networks

class NeuralForecaster(ForecastModel):
    """Shared mini-batch Adam training loop with early stopping."""

    def _init_params(self, rng, steps: int, n_features: int) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _model_inputs(self, ds: WindowedDataset) -> np.ndarray:
        return ds.inputs

    def forward(self, params, X):
        """Return ``(predictions, cache)`` for model inputs ``X``."""
        raise NotImplementedError

    def backward(self, params, cache, dpred) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def loss_and_gradients(self, params, X, Y):
        pred, cache = self.forward(params, X)
        resid = pred - Y
        loss = float(np.mean(resid * resid))
        grads = self.backward(params, cache, 2.0 * resid / resid.size)
        return loss, grads

    def initialize(self, steps: int, n_features: int, rng=None) -> None:
        rng = rng if rng is not None else np.random.default_rng(self.spec.seed)
        self.params = self._init_params(rng, steps, n_features)
        self.layout = {"steps": steps, "n_features": n_features, "feature_names": []}

    def _predict(self, ds):
        return self._predict_array(self._model_inputs(ds))

    def _predict_array(self, X, chunk: int = 1024):
        out = [self.forward(self.params, X[s:s + chunk])[0] for s in range(0, len(X), chunk)]
        return np.concatenate(out, axis=0) if out else np.zeros((0, 24))

    def _mse(self, X, Y) -> float:
        if len(X) == 0:
            return float("nan")
        r = self._predict_array(X) - Y
        return float(np.mean(r * r))

    def _fit(self, train, val):
        spec = self.spec
        rng = np.random.default_rng(spec.seed)
        self.params = self._init_params(rng, train.steps, train.n_features)
        X, Y = self._model_inputs(train), train.targets
        Xv, Yv = (self._model_inputs(val), val.targets) if val is not None and len(val) else (None, None)

        m = {k: np.zeros_like(v) for k, v in self.params.items()}
        v2 = {k: np.zeros_like(v) for k, v in self.params.items()}
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        best = (np.inf, None, None)
        stale = 0
        start = time.perf_counter()
        for epoch in range(1, spec.max_epochs + 1):
            order = rng.permutation(len(X))
            batch_losses = []
            for s in range(0, len(X), spec.batch_size):
                idx = order[s:s + spec.batch_size]
                loss, grads = self.loss_and_gradients(self.params, X[idx], Y[idx])
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                batch_losses.append(loss * len(idx))
                if spec.clip_norm:
                    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                    if norm > spec.clip_norm:
                        grads = {k: g * (spec.clip_norm / norm) for k, g in grads.items()}
                step += 1
                lr_t = spec.learning_rate * np.sqrt(1 - beta2 ** step) / (1 - beta1 ** step)
                for k, g in grads.items():
                    m[k] = beta1 * m[k] + (1 - beta1) * g
                    v2[k] = beta2 * v2[k] + (1 - beta2) * g * g
                    self.params[k] = self.params[k] - lr_t * m[k] / (np.sqrt(v2[k]) + eps)
            train_loss = sum(batch_losses) / len(X)
            val_loss = self._mse(Xv, Yv) if Xv is not None else train_loss
            if not np.isfinite(train_loss) or not np.isfinite(val_loss):
                raise DivergenceError(epoch, train_loss if not np.isfinite(train_loss) else val_loss)
            self.log.append(epoch, train_loss, val_loss, time.perf_counter() - start)
            if val_loss < best[0]:
                best = (val_loss, epoch, copy.deepcopy(self.params))
                stale = 0
            else:
                stale += 1
                if stale >= spec.patience:
                    break
        self.params = best[2]
        self.log.best_epoch = best[1]


class FFNNForecaster(NeuralForecaster):
    """Dense network on the flattened window: ``layers`` hidden layers of ``hidden`` units."""

    kind = "ffnn"

    def _model_inputs(self, ds):
        return flatten(ds)

    def _init_params(self, rng, steps, n_features):
        dims = [steps * n_features] + [self.spec.hidden] * self.spec.layers + [24]
        params = {}
        for k in range(len(dims) - 1):
            params[f"dense{k}_W"] = glorot(rng, dims[k + 1], dims[k])
            params[f"dense{k}_b"] = np.zeros(dims[k + 1])
        return params

    def _act(self, a):
        return np.maximum(a, 0.0) if self.spec.activation == "relu" else np.tanh(a)

    def _act_grad(self, a, out):
        return (a > 0).astype(float) if self.spec.activation == "relu" else 1.0 - out * out

    def forward(self, params, X):
        if X.ndim == 3:
            X = X.reshape(X.shape[0], -1)
        n = len(params) // 2
        h = X
        cache = []
        for k in range(n):
            a = h @ params[f"dense{k}_W"].T + params[f"dense{k}_b"]
            if k < n - 1:
                out = self._act(a)
                cache.append((h, a, out))
                h = out
            else:
                cache.append((h, a, None))
                h = a
        return h, cache

    def backward(self, params, cache, dpred):
        n = len(cache)
        grads = {}
        d = dpred
        for k in range(n - 1, -1, -1):
            h_in, a, out = cache[k]
            if out is not None:
                d = d * self._act_grad(a, out)
            grads[f"dense{k}_W"] = d.T @ h_in
            grads[f"dense{k}_b"] = d.sum(axis=0)
            if k:
                d = d @ params[f"dense{k}_W"]
        return grads


class LSTMForecaster(NeuralForecaster):
    """Stacked (Bi)LSTM with a dense head from the final hidden state to 24 outputs.

    Bidirectional layers concatenate forward and backward hidden states; the
    head reads ``[h_forward(T), h_backward(1)]``, i.e. each direction's state
    after consuming the whole window.
    """

    kind = "lstm"
    bidirectional = False

    @property
    def directions(self) -> tuple[str, ...]:
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    def _init_params(self, rng, steps, n_features):
        H = self.spec.hidden
        width = len(self.directions)
        params = {}
        in_dim = n_features
        for layer in range(self.spec.layers):
            for d in self.directions:
                params[f"l{layer}_{d}_W"] = np.concatenate(
                    [glorot(rng, H, H + in_dim) for _ in GATES], axis=0
                )
                b = np.zeros(4 * H)
                b[:H] = 1.0  # forget gate
                params[f"l{layer}_{d}_b"] = b
            in_dim = width * H
        params["head_W"] = glorot(rng, 24, width * H)
        params["head_b"] = np.zeros(24)
        return params

    def forward(self, params, X):
        H = self.spec.hidden
        seq = X
        caches = []
        for layer in range(self.spec.layers):
            outs = []
            layer_cache = {}
            for d in self.directions:
                xin = seq if d == "fwd" else seq[:, ::-1]
                hs, cache = lstm_forward(params[f"l{layer}_{d}_W"], params[f"l{layer}_{d}_b"], xin, H)
                layer_cache[d] = cache
                outs.append(hs if d == "fwd" else hs[:, ::-1])
            caches.append(layer_cache)
            seq = np.concatenate(outs, axis=2) if len(outs) > 1 else outs[0]
        final = seq[:, -1, :H]
        if self.bidirectional:
            final = np.concatenate([final, seq[:, 0, H:]], axis=1)
        pred = final @ params["head_W"].T + params["head_b"]
        return pred, (caches, final, X.shape)

    def backward(self, params, cache, dpred):
        H = self.spec.hidden
        caches, final, (B, T, _) = cache
        grads = {"head_W": dpred.T @ final, "head_b": dpred.sum(axis=0)}
        dfinal = dpred @ params["head_W"]
        width = len(self.directions)
        dseq = np.zeros((B, T, width * H))
        dseq[:, -1, :H] = dfinal[:, :H]
        if self.bidirectional:
            dseq[:, 0, H:] = dfinal[:, H:]
        for layer in range(self.spec.layers - 1, -1, -1):
            dinput = None
            for k, d in enumerate(self.directions):
                dh = dseq[:, :, k * H:(k + 1) * H]
                if d == "bwd":
                    dh = dh[:, ::-1]
                dW, db, dx = lstm_backward(params[f"l{layer}_{d}_W"], np.ascontiguousarray(dh), caches[layer][d], H)
                grads[f"l{layer}_{d}_W"] = dW
                grads[f"l{layer}_{d}_b"] = db
                if d == "bwd":
                    dx = dx[:, ::-1]
                dinput = dx if dinput is None else dinput + dx
            dseq = dinput
        return grads


class BiLSTMForecaster(LSTMForecaster):
    kind = "bilstm"
    bidirectional = True


def batch_loss(model, params, X, Y) -> float:
    pred, _ = model.forward(params, X)
    r = pred - Y
    return float(np.mean(r * r))


def gradient_check(spec: ForecasterSpec, batch, tolerance: float = 1e-4, step: float = 1e-5,
                   floor: float = 1e-6, rng=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``batch`` is ``(X, Y)`` or a WindowedDataset. The relative error of each
    entry is ``|a - n| / max(|a| + |n|, floor)``; the floor stops entries
    whose true gradient is ~0 from turning round-off into a large ratio.
    """
    from . import make_model

    model = make_model(spec)
    if isinstance(batch, WindowedDataset):
        X, Y = model._model_inputs(batch), batch.targets
    else:
        X, Y = batch
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    steps, n_features = (X.shape[1], X.shape[2]) if X.ndim == 3 else (1, X.shape[1])
    model.initialize(steps, n_features, rng)
    params = model.params
    _, grads = model.loss_and_gradients(params, X, Y)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = batch_loss(model, params, X, Y)
            flat[j] = orig - step
            lm = batch_loss(model, params, X, Y)
            flat[j] = orig
            num = (lp - lm) / (2 * step)
            worst = max(worst, abs(g[j] - num) / max(abs(g[j]) + abs(num), floor))
    if worst >= tolerance:
        logger.warning("%s gradient check failed: max relative error %.3g >= %.3g", spec.kind, worst, tolerance)
    return worst
