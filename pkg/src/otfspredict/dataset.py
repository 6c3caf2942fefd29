"""Supervised windows over DD channel sequences, normalization and the on-disk format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .channel import ChannelSequence, MobilityProfile, SequenceMeta
from .errors import BadMagicError, FormatError, TruncatedFileError, VersionMismatchError
from .otfs import DdChannelMatrix, OtfsDims

MAGIC = b"OTFSDS1\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIIIQddd")


def to_real_tensor(frames) -> np.ndarray:
    """Stack complex frames into a real ``(L, 2, S, S)`` array (real plane, imaginary plane)."""
    if isinstance(frames, np.ndarray) and frames.ndim == 3:
        mats = frames
    else:
        frames = list(frames)
        if not frames:
            raise ValueError("no frames given")
        shapes = {f.mat.shape for f in frames}
        if len(shapes) != 1:
            raise ValueError(f"frames have mixed sizes: {sorted(shapes)}")
        mats = np.stack([f.mat for f in frames])
    return np.stack([mats.real, mats.imag], axis=1).astype(np.float64)


def from_real_tensor(t: np.ndarray, dims: OtfsDims) -> DdChannelMatrix:
    t = np.asarray(t)
    s = dims.size
    if t.shape != (2, s, s):
        raise ValueError(f"expected real tensor of shape (2, {s}, {s}), got {t.shape}")
    return DdChannelMatrix(dims, t[0] + 1j * t[1])


def real_to_complex(t: np.ndarray) -> np.ndarray:
    """``(..., 2, S, S)`` real pairs to ``(..., S, S)`` complex."""
    return t[..., 0, :, :] + 1j * t[..., 1, :, :]


@dataclass(frozen=True)
class SampleWindow:
    history: np.ndarray  # (L, 2, S, S)
    target: np.ndarray  # (H, 2, S, S)
    t_index: int  # sequence index of target[0]


class WindowSet(Sequence[SampleWindow]):
    """Sliding windows over one contiguous block of real frames.

    ``frames[i]`` is sequence frame ``offset + i``; windows are views, never copies.
    """

    def __init__(self, frames: np.ndarray, offset: int, history_len: int, horizon: int, stride: int = 1):
        if history_len < 1 or horizon < 1 or stride < 1:
            raise ValueError("history_len, horizon and stride must be >= 1")
        span = history_len + horizon
        if len(frames) < span:
            raise ValueError(f"block of {len(frames)} frames is too short for L={history_len} + H={horizon}")
        self.frames = frames
        self.offset = offset
        self.history_len = history_len
        self.horizon = horizon
        self.stride = stride
        self.starts = np.arange(0, len(frames) - span + 1, stride)

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        s = int(self.starts[i])
        L = self.history_len
        return SampleWindow(self.frames[s:s + L], self.frames[s + L:s + L + self.horizon], self.offset + s + L)

    def __iter__(self) -> Iterator[SampleWindow]:
        return (self[i] for i in range(len(self)))

    @property
    def target_indices(self) -> np.ndarray:
        return self.offset + self.starts + self.history_len

    def sequences(self, idx) -> np.ndarray:
        """History plus first target, stacked: ``(B, L + 1, 2, S, S)``."""
        L = self.history_len
        return np.stack([self.frames[s:s + L + 1] for s in self.starts[idx]])

    def scaled(self, factor: float) -> "WindowSet":
        return WindowSet(self.frames * factor, self.offset, self.history_len, self.horizon, self.stride)


def make_windows(seq: ChannelSequence, history_len: int, horizon: int = 1, stride: int = 1) -> list[SampleWindow]:
    """All sliding windows; count is ``(T - L - H) // stride + 1``."""
    if len(seq) < history_len + horizon:
        raise ValueError(f"sequence of {len(seq)} frames is too short for L={history_len} + H={horizon}")
    return list(WindowSet(to_real_tensor(seq.frames), 0, history_len, horizon, stride))


@dataclass
class DatasetSplit:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    norm_scale: float = 1.0
    source: ChannelSequence | None = None

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.norm_scale


def split_dataset(
    seq: ChannelSequence,
    history_len: int = 10,
    horizon: int = 1,
    stride: int = 1,
    fractions: tuple[float, float, float] = (0.70, 0.15, 0.15),
) -> DatasetSplit:
    """Chronological split into train/val/test blocks, windowed independently.

    Each block is windowed on its own, so no frame (history or target) is
    shared between splits. Values are left unnormalized.
    """
    real = to_real_tensor(seq.frames)
    t = len(real)
    n_train = int(round(fractions[0] * t))
    n_val = int(round(fractions[1] * t))
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, t)]
    sets = [WindowSet(real[a:b], a, history_len, horizon, stride) for a, b in bounds]
    return DatasetSplit(*sets, norm_scale=1.0, source=seq)


def normalize(split: DatasetSplit) -> DatasetSplit:
    """Scale all splits by the train block's max absolute entry."""
    train = split.train
    used = train.frames[: train.starts[-1] + train.history_len + train.horizon]
    scale = float(np.max(np.abs(used))) * split.norm_scale
    if scale == 0.0:
        raise ValueError("train set is all zeros; cannot normalize")
    f = split.norm_scale / scale
    return replace(
        split,
        train=train.scaled(f),
        val=split.val.scaled(f),
        test=split.test.scaled(f),
        norm_scale=scale,
    )


# on-disk format ------------------------------------------------------------


def encode_sequence(seq: ChannelSequence) -> bytes:
    m = seq.meta
    header = _HEADER.pack(
        MAGIC, VERSION, seq.dims.m, seq.dims.n, len(seq), m.seed,
        m.profile.speed_kmh, m.profile.carrier_hz, m.frame_duration_s,
    )
    body = np.ascontiguousarray(seq.frames, dtype="<c8").tobytes()
    return header + body


def decode_sequence(buf: bytes) -> ChannelSequence:
    if len(buf) < 8:
        raise TruncatedFileError(f"file has {len(buf)} bytes, shorter than the 8-byte magic", len(buf))
    if buf[:8] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:8])!r}, expected {MAGIC!r}", 0)
    if len(buf) < 12:
        raise TruncatedFileError("file ends inside the version field", len(buf))
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != VERSION:
        raise VersionMismatchError(f"dataset version {version}, expected {VERSION}", 8)
    if len(buf) < _HEADER.size:
        raise TruncatedFileError(f"header needs {_HEADER.size} bytes, file has {len(buf)}", len(buf))
    _, _, m, n, count, seed, speed, carrier, frame_s = _HEADER.unpack_from(buf, 0)
    dims = OtfsDims(m, n)
    s = dims.size
    need = _HEADER.size + count * s * s * 8
    if len(buf) < need:
        raise TruncatedFileError(f"header promises {count} frames ({need} bytes), file has {len(buf)}", len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} unexpected trailing bytes", need)
    frames = np.frombuffer(buf, dtype="<c8", count=count * s * s, offset=_HEADER.size)
    frames = frames.reshape(count, s, s).astype(np.complex128)
    spacing = n / frame_s if frame_s > 0 else 15e3
    meta = SequenceMeta(MobilityProfile(speed, carrier, spacing), None, int(seed), frame_s)
    return ChannelSequence(dims, frames, meta)


def save_dataset(path, data: ChannelSequence | DatasetSplit):
    """Write a sequence (or a split's source sequence) to ``path``."""
    if isinstance(data, DatasetSplit):
        if data.source is None:
            raise ValueError("split has no source sequence to save")
        data = data.source
    Path(path).write_bytes(encode_sequence(data))


def load_dataset(path) -> ChannelSequence:
    return decode_sequence(Path(path).read_bytes())
