"""Maximum-likelihood single-source direction estimation by two-level grid search."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_model import as_positions

# relative gap below which two objective values count as a tie
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    coarse_step_deg: float = 0.2
    fine_step_deg: float = 0.01
    domain: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if not (self.coarse_step_deg > 0 and self.fine_step_deg > 0):
            raise ValueError("grid steps must be positive")
        if not self.fine_step_deg < self.coarse_step_deg:
            raise ValueError("fine_step_deg must be smaller than coarse_step_deg")
        lo, hi = self.domain
        if not -1.0 <= lo < hi <= 1.0:
            raise ValueError("domain must be a sub-interval of [-1, 1]")

    @property
    def theta_bounds(self) -> tuple[float, float]:
        lo, hi = self.domain
        return math.degrees(math.asin(lo)), math.degrees(math.asin(hi))

    def coarse_thetas(self) -> np.ndarray:
        lo, hi = self.theta_bounds
        step = self.coarse_step_deg
        k = np.arange(math.ceil(lo / step), math.floor(hi / step) + 1)
        th = k * step
        return th[(th > lo) & (th < hi)]

    def fine_thetas(self, center_deg: float) -> np.ndarray:
        lo, hi = self.theta_bounds
        half = int(round(self.coarse_step_deg / self.fine_step_deg))
        th = center_deg + np.arange(-half, half + 1) * self.fine_step_deg
        return th[(th > lo) & (th < hi)]


def _objective(r_hat: np.ndarray, pos: np.ndarray, u: np.ndarray) -> np.ndarray:
    a = np.exp(-1j * np.pi * np.outer(pos, u))
    return np.real(np.einsum("mk,mk->k", a.conj(), r_hat @ a))


def _argmax_low(values: np.ndarray) -> int:
    # grids are ascending in u, so the first near-maximal entry is the smallest u
    best = values.max()
    return int(np.flatnonzero(values >= best - _TIE_RTOL * abs(best))[0])


def mle_estimate(r_hat, sub, grid: GridSpec | None = None) -> float:
    """Direction ``u`` maximizing ``a(u)^H R a(u)``.

    A coarse pass over the angle grid is followed by one fine pass within
    one coarse step of the coarse winner. Ties go to the smaller ``u``.
    """
    grid = grid or GridSpec()
    pos = as_positions(sub)
    r_hat = np.asarray(r_hat, dtype=complex)
    if r_hat.shape != (pos.size, pos.size):
        raise ValueError(f"covariance shape {r_hat.shape} does not match {pos.size} positions")
    if pos.size < 2:
        raise ValueError("the estimator needs at least two antennas")
    coarse = grid.coarse_thetas()
    th_c = coarse[_argmax_low(_objective(r_hat, pos, np.sin(np.radians(coarse))))]
    fine = grid.fine_thetas(th_c)
    u_fine = np.sin(np.radians(fine))
    return float(u_fine[_argmax_low(_objective(r_hat, pos, u_fine))])


class SnapshotEstimator:
    """MLE for a fixed subarray with cached coarse steering matrix.

    For a single snapshot the objective reduces to ``|a(u)^H y|^2``, which this
    class evaluates directly; results equal :func:`mle_estimate` on ``y y^H``.
    """

    def __init__(self, sub, grid: GridSpec | None = None):
        self.grid = grid or GridSpec()
        self.positions = as_positions(sub)
        if self.positions.size < 2:
            raise ValueError("the estimator needs at least two antennas")
        self._coarse = self.grid.coarse_thetas()
        self._a_coarse = np.exp(1j * np.pi * np.outer(np.sin(np.radians(self._coarse)), self.positions))

    def estimate(self, y) -> float:
        y = np.asarray(y, dtype=complex).ravel()
        if y.size != self.positions.size:
            raise ValueError(f"observation length {y.size} does not match {self.positions.size} positions")
        obj = np.abs(self._a_coarse @ y) ** 2
        th_c = self._coarse[_argmax_low(obj)]
        u_fine = np.sin(np.radians(self.grid.fine_thetas(th_c)))
        a = np.exp(1j * np.pi * np.outer(u_fine, self.positions))
        return float(u_fine[_argmax_low(np.abs(a @ y) ** 2)])
