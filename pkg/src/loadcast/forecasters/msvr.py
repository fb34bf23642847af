"""Multi-output support vector regression trained by IRWLS.

Minimizes ``1/2 sum_j beta_j' K beta_j + C sum_i L(u_i)`` where ``u_i`` is
the Euclidean norm of the residual vector of sample ``i`` across all outputs
and ``L(u) = (u - eps)^2`` for ``u >= eps``, else 0. Each iteration solves
the weighted least-squares system on the current support vectors

    [K_s + diag(1/a_s)   1] [beta_s]   [Y_s]
    [1'                  0] [b'    ] = [0  ]

with ``a_i = 2C (u_i - eps) / u_i``, followed by a backtracking line search
so the objective never increases.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ..windowing import flatten
from .base import ForecastModel

logger = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


def kernel_matrix(A, B, kind: str = "rbf", gamma: float = 1.0) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    # a private copy keeps numpy from switching to a symmetric product (with
    # different rounding) when A and B share memory
    B = np.array(B, dtype=float, copy=True)
    if kind == "linear":
        return A @ B.T
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _residual_norms(K, Y, beta, bias):
    E = Y - K @ beta - bias[None, :]
    return np.sqrt((E * E).sum(axis=1))


def msvr_objective(K, Y, beta, bias, C, eps) -> float:
    u = _residual_norms(K, Y, beta, bias)
    slack = np.maximum(u - eps, 0.0)
    return float(0.5 * np.sum(beta * (K @ beta)) + C * np.sum(slack * slack))


def irwls(K, Y, C: float, eps: float, tol: float = 1e-6, max_iter: int = 200):
    """Fit coefficients ``beta`` (n x d) and bias (d,) on a precomputed kernel.

    Returns ``(beta, bias, objective_history, converged)``.
    """
    n, d = Y.shape
    beta = np.zeros((n, d))
    bias = np.zeros(d)
    history = [msvr_objective(K, Y, beta, bias, C, eps)]
    converged = False
    for _ in range(max_iter):
        u = _residual_norms(K, Y, beta, bias)
        sv = np.flatnonzero(u > eps)
        cand_beta = np.zeros_like(beta)
        if len(sv) == 0:
            # every point inside the tube: only the regulariser is left, so head for beta = 0
            if not beta.any():
                converged = True
                break
            cand_bias = bias
        else:
            a = 2.0 * C * (u[sv] - eps) / u[sv]
            m = len(sv)
            A = np.zeros((m + 1, m + 1))
            A[:m, :m] = K[np.ix_(sv, sv)] + np.diag(1.0 / a)
            A[:m, m] = 1.0
            A[m, :m] = 1.0
            rhs = np.zeros((m + 1, d))
            rhs[:m] = Y[sv]
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
            cand_beta[sv] = sol[:m]
            cand_bias = sol[m]

        prev = history[-1]
        step = 1.0
        while True:
            new_beta = beta + step * (cand_beta - beta)
            new_bias = bias + step * (cand_bias - bias)
            obj = msvr_objective(K, Y, new_beta, new_bias, C, eps)
            if obj <= prev:
                break
            step *= 0.5
            if step < 1e-16:
                new_beta, new_bias, obj = beta, bias, prev
                break
        beta, bias = new_beta, new_bias
        history.append(obj)
        if prev == 0 or (prev - obj) / abs(prev) < tol:
            converged = True
            break
    return beta, bias, history, converged


class MSVRForecaster(ForecastModel):
    """Kernel expansion over retained training windows, one coefficient column per output hour."""

    kind = "msvr"

    def _gamma(self, dim: int) -> float:
        return self.spec.gamma if self.spec.gamma is not None else 1.0 / dim

    def fit_arrays(self, X, Y) -> "MSVRForecaster":
        X = np.array(X, dtype=float, copy=True)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        gamma = self._gamma(X.shape[1])
        K = kernel_matrix(X, X, self.spec.kernel, gamma)
        beta, bias, history, converged = irwls(K, Y, self.spec.C, self.spec.epsilon, self.spec.tol, self.spec.max_iter)
        if not converged:
            warnings.warn(
                f"IRWLS did not converge in {self.spec.max_iter} iterations; keeping best iterate",
                ConvergenceWarning, stacklevel=2,
            )
        self.params = {"support_inputs": X, "beta": beta, "bias": bias, "gamma": np.array([gamma])}
        self.objective_history = history
        for k, obj in enumerate(history):
            self.log.append(k, obj, float("nan"), 0.0)
        return self

    def predict_arrays(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        p = self.params
        K = kernel_matrix(X, p["support_inputs"], self.spec.kernel, float(p["gamma"][0]))
        return K @ p["beta"] + p["bias"][None, :]

    def _fit(self, train, val):
        self.fit_arrays(flatten(train), train.targets)

    def _predict(self, ds):
        return self.predict_arrays(flatten(ds))
