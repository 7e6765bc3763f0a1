"""Narrowband single-source observation model for a linear subarray."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_core import Subarray


def as_positions(sub) -> np.ndarray:
    """Positions of a :class:`Subarray` or of any 1-D array-like, as floats."""
    if isinstance(sub, Subarray):
        return sub.as_array()
    pos = np.asarray(sub, dtype=float)
    if pos.ndim != 1 or pos.size == 0:
        raise ValueError("positions must be a non-empty 1-D sequence")
    return pos


def check_direction(u: float) -> float:
    u = float(u)
    if not -1.0 < u < 1.0:
        raise ValueError(f"direction u={u} outside the open interval (-1, 1)")
    return u


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass(frozen=True)
class SignalParams:
    channel_gain: complex = 1.0
    symbol: complex = 1.0
    noise_variance: float = 1.0
    n_snapshots: int = 1

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        if not np.isclose(abs(self.symbol), 1.0, rtol=0, atol=1e-12):
            raise ValueError("symbol must have unit magnitude")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be positive")

    @classmethod
    def for_snr(cls, snr: float, m: int, n_snapshots: int = 1) -> "SignalParams":
        """Unit noise power with the gain chosen so the aggregate SNR equals ``snr``."""
        return cls(channel_gain=complex(np.sqrt(snr / (m * n_snapshots))), n_snapshots=n_snapshots)


@dataclass(frozen=True)
class Snapshot:
    observation: np.ndarray
    true_direction: float


def steering_vector(sub, u: float) -> np.ndarray:
    u = check_direction(u)
    return np.exp(-1j * np.pi * as_positions(sub) * u)


def diversity(sub) -> float:
    pos = as_positions(sub)
    return float(np.mean((pos - pos.mean()) ** 2))


def snr_and_diversity(p: SignalParams, sub) -> tuple[float, float]:
    pos = as_positions(sub)
    s = pos.size * p.n_snapshots * abs(p.channel_gain) ** 2 / p.noise_variance
    return float(s), diversity(pos)


def unit_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    """Circular complex normal draws with unit total variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def snapshot_from_noise(p: SignalParams, sub, u: float, noise: np.ndarray) -> Snapshot:
    """Observation built from pre-drawn unit-variance noise (scaled by the noise std)."""
    a = steering_vector(sub, u)
    noise = np.asarray(noise, dtype=complex)
    if noise.shape != a.shape:
        raise ValueError(f"noise length {noise.shape} does not match subarray size {a.shape}")
    y = p.channel_gain * a * p.symbol + np.sqrt(p.noise_variance) * noise
    return Snapshot(observation=y, true_direction=float(u))


def generate_snapshot(p: SignalParams, sub, u: float, rng: np.random.Generator) -> Snapshot:
    m = as_positions(sub).size
    return snapshot_from_noise(p, sub, u, unit_noise(rng, m))


def sample_covariance(y) -> np.ndarray:
    y = np.asarray(y, dtype=complex).ravel()
    if y.size == 0:
        raise ValueError("empty observation")
    return np.outer(y, y.conj())
