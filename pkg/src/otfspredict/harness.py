"""Evaluation, experiment sweeps and timing benchmarks with CSV output.

All metric values are computed on de-normalized complex frames. Timings use
``time.perf_counter`` around each single-sample prediction.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .channel import MobilityProfile, PowerDelayProfile, eva_profile, generate_sequence
from .dataset import WindowSet, real_to_complex, to_real_tensor
from .metrics import compute_mae, compute_rmse
from .otfs import OtfsDims

CSV_HEADER = ["predictor", "horizon", "history", "samples", "rmse", "mae", "infer_ms", "params"]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if np.isnan(x) else f"{x:.6g}"


@dataclass
class MetricsReport:
    predictor: str
    horizon: int
    history: int
    samples: int
    rmse: float
    mae: float
    infer_s: float  # mean seconds per sample (whole rollout at this horizon)
    params: int = 0
    total_s: float = 0.0
    target_range: tuple[int, int] = (0, 0)  # sequence indices of the scored frames

    def row(self) -> list[str]:
        return [self.predictor, _fmt(self.horizon), _fmt(self.history), _fmt(self.samples),
                _fmt(self.rmse), _fmt(self.mae), _fmt(self.infer_s * 1e3), _fmt(self.params)]


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list[MetricsReport] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def at(self, value, predictor: str) -> MetricsReport:
        i = self.values.index(value)
        per_point = len(self.reports) // len(self.values)
        for r in self.reports[i * per_point:(i + 1) * per_point]:
            if r.predictor == predictor:
                return r
        raise KeyError(f"no {predictor!r} report at {self.axis}={value}")


def write_csv(reports: Sequence[MetricsReport], path=None, axis: str | None = None, values=None) -> str:
    """Rows in the fixed schema; sweeps over speed prepend one axis column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if axis is None:
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.row())
    else:
        w.writerow([axis] + CSV_HEADER)
        per_point = len(reports) // len(values)
        for i, r in enumerate(reports):
            w.writerow([_fmt(values[i // per_point])] + r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _kind(predictor) -> str:
    return getattr(predictor, "kind", type(predictor).__name__.lower())


def evaluate(
    predictor,
    windows: WindowSet,
    horizon: int = 1,
    *,
    dims: OtfsDims,
    norm_scale: float = 1.0,
    history: int | None = None,
) -> MetricsReport:
    """Score ``predictor`` on every window at step ``horizon`` of its rollout.

    ``history`` keeps only the most recent frames of each window (default: all).
    Predictions and targets are multiplied by ``norm_scale`` before scoring.
    """
    if len(windows) == 0:
        raise ValueError("empty test set")
    if horizon < 1 or horizon > windows.horizon:
        raise ValueError(f"horizon {horizon} outside 1..{windows.horizon} available in the windows")
    length = windows.history_len if history is None else int(history)
    if not 1 <= length <= windows.history_len:
        raise ValueError(f"history {length} outside 1..{windows.history_len}")
    preds, truths, times = [], [], []
    for w in windows:
        hist = w.history[-length:]
        t0 = time.perf_counter()
        out = predictor.predict_multi(hist, horizon)
        times.append(time.perf_counter() - t0)
        preds.append(out[horizon - 1])
        truths.append(w.target[horizon - 1])
    p = real_to_complex(np.stack(preds)) * norm_scale
    t = real_to_complex(np.stack(truths)) * norm_scale
    idx = windows.target_indices + horizon - 1
    return MetricsReport(
        predictor=_kind(predictor), horizon=horizon, history=length, samples=len(windows),
        rmse=compute_rmse(p, t, dims), mae=compute_mae(p, t, dims),
        infer_s=float(np.mean(times)), params=int(predictor.parameter_count),
        total_s=float(np.sum(times)), target_range=(int(idx.min()), int(idx.max())),
    )


def check_disjoint(test: MetricsReport, *others: WindowSet):
    """Raise if any scored frame index appears among the targets of ``others``."""
    lo, hi = test.target_range
    for ws in others:
        seen = ws.target_indices
        last = seen + ws.horizon - 1
        if np.any((last >= lo) & (seen <= hi)):
            raise AssertionError("test frames overlap training/validation targets")


def sweep_history(predictors, windows: WindowSet, lengths: Sequence[int], *, dims, norm_scale=1.0) -> SweepResult:
    """Evaluate each predictor on the same windows truncated to each history length."""
    lengths = sorted(int(x) for x in lengths)
    res = SweepResult("history", lengths)
    for length in lengths:
        for p in predictors:
            res.reports.append(evaluate(p, windows, 1, dims=dims, norm_scale=norm_scale, history=length))
    return res


def sweep_horizon(predictors, windows: WindowSet, horizons: Sequence[int], *, dims, norm_scale=1.0) -> SweepResult:
    """Per-step error of autoregressive rollouts; ``total_s`` holds the time over the whole test set."""
    horizons = sorted(int(h) for h in horizons)
    res = SweepResult("horizon", horizons)
    for h in horizons:
        for p in predictors:
            res.reports.append(evaluate(p, windows, h, dims=dims, norm_scale=norm_scale))
    return res


def speed_seeds(base_seed: int, speeds: Sequence[float]) -> list[int]:
    """One distinct seed per test speed, none equal to the training seed."""
    return [base_seed + 1000 * (i + 1) for i in range(len(speeds))]


def sweep_speed(
    predictors,
    speeds: Sequence[float],
    *,
    dims: OtfsDims,
    norm_scale: float,
    history_len: int,
    frames: int,
    seed: int,
    carrier_hz: float = 2.5e9,
    pdp: PowerDelayProfile | None = None,
) -> SweepResult:
    """Fresh test sequences at each speed, scaled by the training normalization."""
    speeds = sorted(float(s) for s in speeds)
    pdp = eva_profile() if pdp is None else pdp
    seeds = speed_seeds(seed, speeds)
    res = SweepResult("speed_kmh", speeds, meta={"seeds": dict(zip(speeds, seeds))})
    for speed, s in zip(speeds, seeds):
        seq = generate_sequence(dims, MobilityProfile(speed, carrier_hz), pdp, frames, s)
        ws = WindowSet(to_real_tensor(seq.frames) / norm_scale, 0, history_len, 1)
        for p in predictors:
            res.reports.append(evaluate(p, ws, 1, dims=dims, norm_scale=norm_scale))
    return res


def time_call(fn: Callable[[], object], warmup: int = 10, runs: int = 100) -> float:
    """Mean wall-clock seconds of ``fn`` over ``runs`` calls after ``warmup`` discarded calls."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    for _ in range(warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(runs):
        fn()
    return (time.perf_counter() - t0) / runs


def bench(predictors, history: np.ndarray, warmup: int = 10, runs: int = 100) -> list[MetricsReport]:
    """Parameter counts and mean single-sample inference time; error fields are NaN."""
    out = []
    for p in predictors:
        sec = time_call(lambda: p.predict_one(history), warmup, runs)
        out.append(MetricsReport(_kind(p), 1, len(history), runs, float("nan"), float("nan"), sec, int(p.parameter_count), sec * runs))
    return out
