"""Comparison predictors sharing the LDformer interface.

Every predictor maps a real history ``(L, 2, S, S)`` to the next frame with
``predict_one`` and rolls out ``predict_multi`` by feeding its own
predictions back. The three stateless rules also accept any array whose
leading axis is time (scalars, complex frames).
"""

from __future__ import annotations

import math
import time

import numpy as np

from .dataset import DatasetSplit, WindowSet
from .errors import NumericalError
from .nn import functional as F
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import Adam
from .nn.tensor import Tensor, add, as_tensor, matmul, mul, no_grad, tsum


def repeat_last(history) -> np.ndarray:
    """Persistence: the most recent frame."""
    return np.array(np.asarray(history)[-1], copy=True)


def linear_trend(history) -> np.ndarray:
    """Two-point extrapolation ``2 H[t-1] - H[t-2]``; a single frame is repeated."""
    h = np.asarray(history)
    if len(h) < 2:
        return repeat_last(h)
    return h[-1] + (h[-1] - h[-2])


def moving_average(history, window: int | None = None) -> np.ndarray:
    """Mean of the last ``min(window, L)`` frames (all of them by default)."""
    h = np.asarray(history)
    w = len(h) if window is None else max(1, min(int(window), len(h)))
    return h[-w:].mean(axis=0)


class Predictor:
    kind = "predictor"

    def predict_one(self, history: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_multi(self, history: np.ndarray, horizon: int) -> np.ndarray:
        """Iterated one-step rollout, ``(horizon,) + frame shape``."""
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        window = np.asarray(history, dtype=np.float64)
        out = []
        for _ in range(horizon):
            nxt = self.predict_one(window)
            out.append(nxt)
            window = np.concatenate([window[1:], nxt[None]], axis=0)
        return np.stack(out)

    @property
    def parameter_count(self) -> int:
        return 0


class RepeatLast(Predictor):
    kind = "repeat-last"

    def predict_one(self, history):
        return repeat_last(history)


class LinearTrend(Predictor):
    kind = "linear-trend"

    def predict_one(self, history):
        return linear_trend(history)


class MovingAverage(Predictor):
    kind = "moving-average"

    def __init__(self, window: int | None = None):
        self.window = window

    def predict_one(self, history):
        return moving_average(history, self.window)


def moving_average_matrix(length: int, k: int) -> np.ndarray:
    """``A`` with ``trend = A @ series``: centered window of ``k``, edge-replicated."""
    if not 1 <= k <= length:
        raise ValueError(f"moving-average kernel {k} must be in [1, {length}]")
    front, back = (k - 1) // 2, k // 2
    a = np.zeros((length, length))
    for t in range(length):
        for j in range(t - front, t + back + 1):
            a[t, min(max(j, 0), length - 1)] += 1.0 / k
    return a


def decompose(series: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Split along the last axis into (trend, remainder) with ``trend + remainder == series``."""
    series = np.asarray(series, dtype=np.float64)
    trend = series @ moving_average_matrix(series.shape[-1], k).T
    return trend, series - trend


def _series(hist: np.ndarray) -> np.ndarray:
    """(B, L, 2, S, S) to per-entry series (B, E, L)."""
    b, length = hist.shape[:2]
    return np.moveaxis(hist.reshape(b, length, -1), 1, 2)


class _Trained(Predictor):
    """Shared fit/predict loop for the learned per-entry forecasters."""

    def __init__(self, history_len: int, seed: int = 0):
        self.history_len = history_len
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self.trained = False

    def _forward(self, series: Tensor) -> Tensor:
        raise NotImplementedError

    def _check_ready(self):
        if not self.trained:
            raise RuntimeError(f"{self.kind} predictor has not been trained")

    def _predict_batch(self, hist: np.ndarray) -> np.ndarray:
        with no_grad():
            out = self._forward(Tensor(_series(hist))).data
        return out.reshape(hist.shape[:1] + hist.shape[2:])

    def predict_one(self, history):
        self._check_ready()
        h = np.asarray(history, dtype=np.float64)
        if len(h) != self.history_len:
            raise ValueError(f"{self.kind} expects L={self.history_len}, got {len(h)}")
        pred = self._predict_batch(h[None])[0]
        if not np.all(np.isfinite(pred)):
            raise NumericalError(f"{self.kind} produced non-finite values")
        return pred

    def _loss(self, windows: WindowSet, idx) -> Tensor:
        seqs = windows.sequences(idx)
        L = self.history_len
        pred = self._forward(Tensor(_series(seqs[:, :L])))
        target = seqs[:, L].reshape(len(idx), -1)
        return F.mse_loss(pred, target)

    def validation_loss(self, windows: WindowSet, batch: int = 64) -> float:
        total = 0.0
        with no_grad():
            for j in range(0, len(windows), batch):
                idx = np.arange(j, min(j + batch, len(windows)))
                total += float(self._loss(windows, idx).data) * len(idx)
        return total / len(windows)

    def fit(self, split: DatasetSplit, epochs: int = 30, lr: float = 1e-3, batch: int = 8, patience: int = 5, log=None):
        """Adam on one-step MSE with early stopping; keeps the best-validation weights."""
        if split.train.history_len != self.history_len:
            raise ValueError(f"split uses L={split.train.history_len}, model L={self.history_len}")
        opt = Adam(self.params, lr=lr)
        rng = np.random.default_rng(self.seed + 1)
        best, best_val, stale = None, math.inf, 0
        self.history = {"train": [], "val": []}
        for epoch in range(1, epochs + 1):
            losses = []
            order = rng.permutation(len(split.train))
            for i in range(0, len(order), batch):
                opt.zero_grad()
                loss = self._loss(split.train, order[i:i + batch])
                if not math.isfinite(float(loss.data)):
                    raise NumericalError(f"{self.kind}: non-finite loss at epoch {epoch}, batch {i // batch}")
                loss.backward()
                opt.step()
                losses.append(float(loss.data))
            val = self.validation_loss(split.val)
            self.history["train"].append(float(np.mean(losses)))
            self.history["val"].append(val)
            if log is not None:
                log(f"{self.kind} epoch {epoch}: train {np.mean(losses):.6g} val {val:.6g}")
            if val < best_val:
                best_val, stale = val, 0
                best = {k: v.data.copy() for k, v in self.params.items()}
            else:
                stale += 1
                if stale >= patience:
                    break
        for k, v in best.items():
            self.params[k].data = v
        self.trained = True
        return self

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def save(self, path):
        save_checkpoint(path, {k: v.data for k, v in self.params.items()})

    def load(self, path):
        state = load_checkpoint(path)
        for k, v in state.items():
            if k not in self.params or self.params[k].shape != v.shape:
                raise ValueError(f"checkpoint tensor {k!r} does not fit {self.kind}")
            self.params[k].data = v.astype(np.float64)
        self.trained = True
        return self


class TimeLinear(_Trained):
    """Shared per-entry MLP over the time axis: L -> hidden -> 1."""

    kind = "time-linear"

    def __init__(self, history_len: int, hidden: int = 32, seed: int = 0):
        super().__init__(history_len, seed)
        self.hidden = hidden
        rng = np.random.default_rng(seed)
        b1 = math.sqrt(6.0 / history_len)
        b2 = math.sqrt(3.0 / hidden)
        self.params = {
            "w1": Tensor(rng.uniform(-b1, b1, (history_len, hidden)), requires_grad=True),
            "b1": Tensor(np.zeros(hidden), requires_grad=True),
            "w2": Tensor(rng.uniform(-b2, b2, (hidden, 1)), requires_grad=True),
            "b2": Tensor(np.zeros(1), requires_grad=True),
        }

    @staticmethod
    def count_for(history_len: int, hidden: int) -> int:
        return (history_len * hidden + hidden) + (hidden + 1)

    def _forward(self, series: Tensor) -> Tensor:
        p = self.params
        h = F.leaky_relu(F.linear(series, p["w1"], p["b1"]))
        out = F.linear(h, p["w2"], p["b2"])
        return out.reshape(out.shape[:-1])


class DLinear(_Trained):
    """Trend/remainder decomposition with one affine map per entry for each part."""

    kind = "dlinear"

    def __init__(self, history_len: int, entries: int, kernel: int = 5, seed: int = 0):
        super().__init__(history_len, seed)
        if kernel > history_len:
            raise ValueError(f"moving-average kernel {kernel} exceeds history length {history_len}")
        self.kernel = kernel
        self.entries = entries
        self._avg = moving_average_matrix(history_len, kernel).T.copy()
        w0 = np.full((entries, history_len), 1.0 / history_len)
        self.params = {
            "trend.w": Tensor(w0.copy(), requires_grad=True),
            "trend.b": Tensor(np.zeros(entries), requires_grad=True),
            "remainder.w": Tensor(w0.copy(), requires_grad=True),
            "remainder.b": Tensor(np.zeros(entries), requires_grad=True),
        }

    @staticmethod
    def count_for(history_len: int, entries: int) -> int:
        return 2 * entries * (history_len + 1)

    def _forward(self, series: Tensor) -> Tensor:
        p = self.params
        trend = matmul(series, as_tensor(self._avg))
        remainder = add(series, -trend)
        out_t = add(tsum(mul(trend, p["trend.w"]), axis=-1), p["trend.b"])
        out_r = add(tsum(mul(remainder, p["remainder.w"]), axis=-1), p["remainder.b"])
        return add(out_t, out_r)
