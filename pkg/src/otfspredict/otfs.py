"""Delay-Doppler signal-domain transforms for OTFS.

All DFT matrices use the unitary (1/sqrt(n)) normalization, so every map
here is an isometry. Vectors follow column-major stacking: the DD grid
entry ``X[m, n]`` lives at index ``m + M * n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OtfsDims:
    """Grid size: ``m`` delay bins by ``n`` Doppler bins."""

    m: int
    n: int

    def __post_init__(self):
        if int(self.m) < 1 or int(self.n) < 1:
            raise ValueError(f"OTFS dims must be positive, got m={self.m}, n={self.n}")

    @property
    def size(self) -> int:
        return self.m * self.n


@dataclass(frozen=True)
class DdChannelMatrix:
    """Effective (MN x MN) delay-Doppler channel matrix."""

    dims: OtfsDims
    mat: np.ndarray

    def __post_init__(self):
        s = self.dims.size
        if self.mat.shape != (s, s):
            raise ValueError(f"expected {s}x{s} channel matrix, got {self.mat.shape}")
        if not np.all(np.isfinite(self.mat)):
            raise ValueError("channel matrix has non-finite entries")

    @property
    def fro_norm(self) -> float:
        return float(np.linalg.norm(self.mat))


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with ``F[k, l] = exp(-2j*pi*k*l/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError(f"DFT size must be >= 1, got {n}")
    k = np.arange(n)
    # reduce k*l mod n before the exponent to keep phases accurate for large n
    return np.exp(-2j * np.pi * (np.outer(k, k) % n) / n) / np.sqrt(n)


def _check_grid(x: np.ndarray, dims: OtfsDims) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.shape != (dims.m, dims.n):
        raise ValueError(f"expected {dims.m}x{dims.n} grid, got {x.shape}")
    return x


def _check_vec(x: np.ndarray, dims: OtfsDims) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.shape != (dims.size,):
        raise ValueError(f"expected vector of length {dims.size}, got shape {x.shape}")
    return x


def isfft(x_dd: np.ndarray, dims: OtfsDims) -> np.ndarray:
    """DD grid to TF grid: ``F_M @ X_DD @ F_N^H``."""
    x_dd = _check_grid(x_dd, dims)
    return dft_matrix(dims.m) @ x_dd @ dft_matrix(dims.n).conj().T


def sfft(x_tf: np.ndarray, dims: OtfsDims) -> np.ndarray:
    """TF grid back to DD grid: ``F_M^H @ X_TF @ F_N``."""
    x_tf = _check_grid(x_tf, dims)
    return dft_matrix(dims.m).conj().T @ x_tf @ dft_matrix(dims.n)


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major stacking of a grid."""
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, dims: OtfsDims) -> np.ndarray:
    return np.asarray(v).reshape(dims.m, dims.n, order="F")


def _apply_blocks(v: np.ndarray, f: np.ndarray, m: int) -> np.ndarray:
    """Apply ``(f kron I_m)`` to the leading axis of ``v`` without forming the Kronecker product."""
    n = f.shape[0]
    blocks = v.reshape((n, m) + v.shape[1:])
    out = np.tensordot(f, blocks, axes=(1, 0))
    return out.reshape(v.shape)


def heisenberg_transmit(x_dd_vec: np.ndarray, dims: OtfsDims) -> np.ndarray:
    """Time-domain transmit samples ``s = (F_N^H kron I_M) x_DD``."""
    x = _check_vec(x_dd_vec, dims)
    return _apply_blocks(x, dft_matrix(dims.n).conj().T, dims.m)


def wigner_receive(r: np.ndarray, dims: OtfsDims) -> np.ndarray:
    """DD-domain receive vector ``y = (F_N kron I_M) r``."""
    r = _check_vec(r, dims)
    return _apply_blocks(r, dft_matrix(dims.n), dims.m)


def td_to_dd_channel(h_td: np.ndarray, dims: OtfsDims) -> DdChannelMatrix:
    """Unitary conjugation ``(F_N kron I_M) H_TD (F_N^H kron I_M)``."""
    h = np.asarray(h_td, dtype=np.complex128)
    s = dims.size
    if h.shape != (s, s):
        raise ValueError(f"expected {s}x{s} time-domain channel, got {h.shape}")
    f = dft_matrix(dims.n)
    left = _apply_blocks(h, f, dims.m)
    # right-multiplying by (F^H kron I) == applying (F kron I) to the rows' conjugate
    h_dd = _apply_blocks(left.conj().T, f, dims.m).conj().T
    return DdChannelMatrix(dims, np.ascontiguousarray(h_dd))


def dd_to_td_channel(h_dd: DdChannelMatrix) -> np.ndarray:
    """Inverse of :func:`td_to_dd_channel`."""
    f_h = dft_matrix(h_dd.dims.n).conj().T
    left = _apply_blocks(h_dd.mat, f_h, h_dd.dims.m)
    return _apply_blocks(left.conj().T, f_h, h_dd.dims.m).conj().T


def apply_awgn(signal: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circularly-symmetric complex white Gaussian noise at ``snr_db``.

    The SNR reference is the mean per-entry power of ``signal``. ``snr_db =
    inf`` returns the signal unchanged.
    """
    x = np.asarray(signal, dtype=np.complex128)
    if x.size == 0:
        raise ValueError("cannot add noise to an empty signal")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal has non-finite entries")
    if np.isposinf(snr_db):
        return x.copy()
    if not np.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite or +inf, got {snr_db}")
    power = float(np.mean(np.abs(x) ** 2))
    if power == 0.0:
        raise ValueError("SNR is undefined for an all-zero signal")
    noise_var = power / 10.0 ** (snr_db / 10.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + np.sqrt(noise_var / 2.0) * noise
