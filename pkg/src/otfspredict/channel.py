"""Tapped-delay-line fading channels and their delay-Doppler diagnostics.

Tap processes are sum-of-sinusoids Jakes realizations. Each tap uses
``N_SINUSOIDS`` equal-power components whose arrival angles are evenly
spaced over a half circle (with a random offset per tap), so every
component has a distinct Doppler shift and the time autocorrelation of a
single long realization follows ``J0(2*pi*f_d*tau)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .otfs import DdChannelMatrix, OtfsDims, dd_to_td_channel, td_to_dd_channel

SPEED_OF_LIGHT = 299_792_458.0
N_SINUSOIDS = 64

# 3GPP TS 36.104 Annex B.2 Extended Vehicular A profile.
EVA_DELAYS_NS = (0.0, 30.0, 150.0, 310.0, 370.0, 710.0, 1090.0, 1730.0, 2510.0)
EVA_POWERS_DB = (0.0, -1.5, -1.4, -3.6, -0.6, -9.1, -7.0, -12.0, -16.9)


@dataclass(frozen=True)
class MobilityProfile:
    speed_kmh: float = 500.0
    carrier_hz: float = 2.5e9
    subcarrier_spacing_hz: float = 15e3

    def __post_init__(self):
        if self.speed_kmh < 0:
            raise ValueError("speed must be non-negative")
        if self.carrier_hz <= 0 or self.subcarrier_spacing_hz <= 0:
            raise ValueError("carrier and subcarrier spacing must be positive")


@dataclass(frozen=True)
class PowerDelayProfile:
    tap_delays_s: tuple[float, ...]
    tap_powers_db: tuple[float, ...]

    def __post_init__(self):
        if len(self.tap_delays_s) != len(self.tap_powers_db) or not self.tap_delays_s:
            raise ValueError("delays and powers must be non-empty and equally long")
        d = np.asarray(self.tap_delays_s)
        if np.any(d < 0) or np.any(np.diff(d) < 0):
            raise ValueError("tap delays must be non-negative and non-decreasing")

    @property
    def n_taps(self) -> int:
        return len(self.tap_delays_s)

    @property
    def linear_powers(self) -> np.ndarray:
        """Tap powers normalized to unit sum."""
        p = 10.0 ** (np.asarray(self.tap_powers_db, dtype=float) / 10.0)
        return p / p.sum()

    def delay_samples(self, sample_rate: float) -> np.ndarray:
        return np.rint(np.asarray(self.tap_delays_s) * sample_rate).astype(int)


def eva_profile() -> PowerDelayProfile:
    return PowerDelayProfile(
        tuple(d * 1e-9 for d in EVA_DELAYS_NS), tuple(EVA_POWERS_DB)
    )


def single_tap_profile(delay_s: float = 0.0) -> PowerDelayProfile:
    return PowerDelayProfile((delay_s,), (0.0,))


def max_doppler(profile: MobilityProfile) -> float:
    """Maximum Doppler shift in Hz."""
    return (profile.speed_kmh / 3.6) * profile.carrier_hz / SPEED_OF_LIGHT


def sample_rate_for(dims: OtfsDims, profile: MobilityProfile) -> float:
    return dims.m * profile.subcarrier_spacing_hz


@dataclass
class TapGainTrack:
    """Complex tap gains, shape ``(n_taps, total_samples)``."""

    gains: np.ndarray
    sample_rate: float

    @property
    def total_samples(self) -> int:
        return self.gains.shape[1]


def generate_tap_gains(
    pdp: PowerDelayProfile,
    f_d: float,
    sample_rate: float,
    total_samples: int,
    rng: np.random.Generator,
) -> TapGainTrack:
    if total_samples <= 0:
        raise ValueError("total_samples must be positive")
    if f_d < 0 or sample_rate <= 0:
        raise ValueError("need f_d >= 0 and sample_rate > 0")
    powers = pdp.linear_powers
    t = np.arange(total_samples) / sample_rate
    gains = np.zeros((pdp.n_taps, total_samples), dtype=np.complex128)
    k = np.arange(N_SINUSOIDS)
    for i, p in enumerate(powers):
        angles = np.pi * (k + rng.uniform()) / N_SINUSOIDS
        phases = rng.uniform(0.0, 2.0 * np.pi, N_SINUSOIDS)
        freqs = f_d * np.cos(angles)
        amp = math.sqrt(p / N_SINUSOIDS)
        for f, ph in zip(freqs, phases):
            gains[i] += np.exp(1j * (2.0 * np.pi * f * t + ph))
        gains[i] *= amp
    return TapGainTrack(gains, sample_rate)


def build_htd(
    track: TapGainTrack,
    pdp: PowerDelayProfile,
    dims: OtfsDims,
    sample_rate: float,
    frame_index: int,
) -> np.ndarray:
    """Circulant-support time-domain channel of one frame.

    Row ``p`` carries the gains at sample ``p`` of the frame, placed on the
    cyclic diagonal of each tap's delay. Taps that round to the same sample
    delay add up.
    """
    s = dims.size
    n_frames = track.total_samples // s
    if not 0 <= frame_index < n_frames:
        raise IndexError(f"frame {frame_index} outside track of {n_frames} frames")
    seg = track.gains[:, frame_index * s:(frame_index + 1) * s]
    h = np.zeros((s, s), dtype=np.complex128)
    rows = np.arange(s)
    for tap, d in enumerate(pdp.delay_samples(sample_rate)):
        h[rows, (rows - d) % s] += seg[tap]
    return h


@dataclass(frozen=True)
class SequenceMeta:
    profile: MobilityProfile
    pdp: PowerDelayProfile
    seed: int
    frame_duration_s: float


@dataclass
class ChannelSequence:
    """Time-ordered DD channel frames, stored as a ``(T, MN, MN)`` array."""

    dims: OtfsDims
    frames: np.ndarray
    meta: SequenceMeta = field(repr=False)

    def __post_init__(self):
        s = self.dims.size
        if self.frames.ndim != 3 or self.frames.shape[1:] != (s, s) or len(self.frames) < 1:
            raise ValueError(f"frames must have shape (T>=1, {s}, {s}), got {self.frames.shape}")

    def __len__(self) -> int:
        return len(self.frames)

    def frame(self, i: int) -> DdChannelMatrix:
        return DdChannelMatrix(self.dims, self.frames[i])


def generate_sequence(
    dims: OtfsDims,
    profile: MobilityProfile,
    pdp: PowerDelayProfile,
    frame_count: int,
    seed: int,
) -> ChannelSequence:
    """Contiguous DD frames from one continuous tap realization."""
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    rate = sample_rate_for(dims, profile)
    rng = np.random.default_rng(seed)
    s = dims.size
    track = generate_tap_gains(pdp, max_doppler(profile), rate, s * frame_count, rng)
    frames = np.empty((frame_count, s, s), dtype=np.complex128)
    for i in range(frame_count):
        frames[i] = td_to_dd_channel(build_htd(track, pdp, dims, rate, i), dims).mat
    meta = SequenceMeta(profile, pdp, int(seed), s / rate)
    return ChannelSequence(dims, frames, meta)


def time_varying_response(frame: DdChannelMatrix) -> np.ndarray:
    """Recover ``g[p, l]``, the gain at sample ``p`` of the path with cyclic delay ``l``."""
    h_td = dd_to_td_channel(frame)
    s = frame.dims.size
    p = np.arange(s)
    return h_td[p[:, None], (p[:, None] - p[None, :]) % s]


def tf_grid(frame: DdChannelMatrix) -> np.ndarray:
    """TF response ``H[m, n]`` (subcarrier m, symbol n), symbol-averaged, unit-energy scaled."""
    m, n = frame.dims.m, frame.dims.n
    g = time_varying_response(frame)[:, :m]
    g_sym = g.reshape(n, m, m).mean(axis=1)  # (symbol, delay)
    # unnormalized DFT over delay, scaled so the grid's energy is the mean path power
    resp = np.fft.fft(g_sym, axis=1).T / math.sqrt(n)
    return resp / math.sqrt(m)


def dd_spread_grid(frame: DdChannelMatrix) -> np.ndarray:
    """Magnitude of the DD spreading function on the (delay, Doppler) grid.

    Each delay tap's full-frame gain track is transformed over all ``MN``
    samples, which resolves Doppler to one bin per frame duration. Bins are
    then folded modulo ``N`` by summing energy, matching the Doppler
    periodicity of the DD domain. The grid's total energy equals the mean
    path power of the frame exactly.
    """
    m, n = frame.dims.m, frame.dims.n
    s = frame.dims.size
    g = time_varying_response(frame)[:, :m]  # (sample, delay)
    power = np.abs(np.fft.fft(g, axis=0)) ** 2 / (s * s)
    folded = power.reshape(m, n, m).sum(axis=0)  # bin q = a*n + k folds onto k
    return np.sqrt(folded.T)


def top_fraction_energy(grid: np.ndarray, fraction: float) -> float:
    """Share of energy carried by the strongest ``ceil(fraction * size)`` bins."""
    e = np.sort((np.abs(grid) ** 2).ravel())[::-1]
    k = max(1, math.ceil(fraction * e.size))
    total = e.sum()
    return float(e[:k].sum() / total) if total > 0 else 0.0


def _normalized_corr(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.ravel(), b.ravel()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(np.abs(np.vdot(a, b)) / den) if den > 0 else 1.0


def frame_correlation(seq: ChannelSequence) -> np.ndarray:
    """Normalized correlation of consecutive complex DD frames."""
    return np.array([_normalized_corr(seq.frames[i], seq.frames[i + 1]) for i in range(len(seq) - 1)])


@dataclass
class SparsityReport:
    top1: np.ndarray
    top5: np.ndarray
    top10: np.ndarray
    dd_corr: np.ndarray
    tf_corr: np.ndarray

    def summary(self) -> dict[str, float]:
        def m(x):
            return float(np.mean(x)) if len(x) else float("nan")

        return {
            "top1_mean": m(self.top1),
            "top5_mean": m(self.top5),
            "top10_mean": m(self.top10),
            "dd_corr_mean": m(self.dd_corr),
            "tf_corr_mean": m(self.tf_corr),
        }


def sparsity_report(seq: ChannelSequence) -> SparsityReport:
    """Per-frame top-k energy shares and consecutive-frame grid correlations.

    Correlations compare per-bin energy maps (squared magnitudes) of the DD
    spreading function and of the TF response.
    """
    if len(seq) == 0:
        raise ValueError("empty sequence")
    dd = [dd_spread_grid(seq.frame(i)) ** 2 for i in range(len(seq))]
    tf = [np.abs(tf_grid(seq.frame(i))) ** 2 for i in range(len(seq))]
    return SparsityReport(
        top1=np.array([top_fraction_energy(np.sqrt(g), 0.01) for g in dd]),
        top5=np.array([top_fraction_energy(np.sqrt(g), 0.05) for g in dd]),
        top10=np.array([top_fraction_energy(np.sqrt(g), 0.10) for g in dd]),
        dd_corr=np.array([_normalized_corr(dd[i], dd[i + 1]) for i in range(len(dd) - 1)]),
        tf_corr=np.array([_normalized_corr(tf[i], tf[i + 1]) for i in range(len(tf) - 1)]),
    )
