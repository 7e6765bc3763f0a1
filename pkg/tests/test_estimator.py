import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antsel.beam_metrics import crlb
from antsel.estimator import GridSpec, SnapshotEstimator, _objective, mle_estimate
from antsel.signal_model import SignalParams, generate_snapshot, sample_covariance, steering_vector

ULA6 = np.arange(6.0)


def clean_cov(pos, u):
    return sample_covariance(steering_vector(pos, u))


class TestGridSpec:
    def test_defaults(self):
        g = GridSpec()
        th = g.coarse_thetas()
        assert th[0] == pytest.approx(-89.8) and th[-1] == pytest.approx(89.8)
        assert 0.0 in th
        assert np.allclose(np.diff(th), 0.2)

    def test_fine_window(self):
        th = GridSpec().fine_thetas(10.0)
        assert th.size == 41
        assert th[0] == pytest.approx(9.8) and th[-1] == pytest.approx(10.2)

    def test_fine_window_clipped_to_domain(self):
        th = GridSpec().fine_thetas(89.8)
        assert th.max() < 90.0

    @pytest.mark.parametrize("kw", [dict(coarse_step_deg=0.0), dict(fine_step_deg=0.3), dict(domain=(0.5, 0.2)),
                                    dict(domain=(-1.5, 1.0))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            GridSpec(**kw)


class TestMle:
    def test_noise_free_off_grid(self):
        assert abs(mle_estimate(clean_cov(ULA6, 0.3), ULA6) - 0.3) <= 2e-4

    def test_on_grid_zero(self):
        assert mle_estimate(clean_cov(ULA6, 0.0), ULA6) == 0.0

    def test_identity_returns_smallest_u(self):
        u = mle_estimate(np.eye(4), np.arange(4.0))
        assert u == pytest.approx(math.sin(math.radians(-89.99)), abs=1e-12)

    def test_scale_invariant(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=6) + 1j * rng.normal(size=6)
        r = sample_covariance(y)
        assert mle_estimate(r, ULA6) == mle_estimate(7.5 * r, ULA6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mle_estimate(np.eye(3), ULA6)

    def test_needs_two_antennas(self):
        with pytest.raises(ValueError):
            mle_estimate(np.eye(1), [0.0])

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.95, 0.95), st.integers(0, 2 ** 31))
    def test_beats_every_coarse_point(self, u, seed):
        rng = np.random.default_rng(seed)
        pos = np.array([0, 0.5, 1, 9, 9.5, 10])
        y = steering_vector(pos, u) + 0.5 * (rng.normal(size=6) + 1j * rng.normal(size=6))
        r = sample_covariance(y)
        est = mle_estimate(r, pos)
        coarse = np.sin(np.radians(GridSpec().coarse_thetas()))
        assert _objective(r, pos, np.array([est]))[0] >= _objective(r, pos, coarse).max() - 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.95, 0.95), st.integers(0, 2 ** 31))
    def test_snapshot_path_matches_covariance_path(self, u, seed):
        rng = np.random.default_rng(seed)
        pos = np.array([0, 1, 3, 4.5])
        y = steering_vector(pos, u) + 0.3 * (rng.normal(size=4) + 1j * rng.normal(size=4))
        assert SnapshotEstimator(pos).estimate(y) == pytest.approx(mle_estimate(sample_covariance(y), pos), abs=1e-12)


def test_snapshot_length_checked():
    with pytest.raises(ValueError):
        SnapshotEstimator(ULA6).estimate(np.ones(5))


def test_high_snr_mse_near_crlb():
    pos = np.arange(21) * 0.5
    snr = 10 ** 3.0
    p = SignalParams.for_snr(snr, 21)
    est = SnapshotEstimator(pos)
    rng = np.random.default_rng(2024)
    errs = []
    for _ in range(500):
        u = rng.uniform(-0.9, 0.9)
        errs.append(est.estimate(generate_snapshot(p, pos, u, rng).observation) - u)
    ratio = np.mean(np.square(errs)) / crlb(snr, pos)
    assert 1 / 3 <= ratio <= 3
