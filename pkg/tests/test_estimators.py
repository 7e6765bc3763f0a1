import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from antsel.array_core import ArrayGeometry
from antsel.estimators import (MLDOAEstimator, NeuralSelector, PSLConstrainedSelector, TRAExhaustiveSelector,
                               TRAGreedySelector, ULASelector, make_selector)
from antsel.neural import init_model, default_layer_dims, save_model
from antsel.signal_model import steering_vector

X = np.array([[0.2, 10.0], [-0.5, 0.0]])


@pytest.mark.parametrize("cls", [TRAGreedySelector, TRAExhaustiveSelector, PSLConstrainedSelector, ULASelector,
                                 NeuralSelector, MLDOAEstimator])
def test_clone_round_trips_params(cls):
    est = cls()
    twin = clone(est)
    assert twin.get_params() == est.get_params()


def test_set_params():
    sel = TRAGreedySelector().set_params(m_target=3, n_antennas=9)
    assert sel.get_params()["m_target"] == 3


def test_predict_shape_and_popcount():
    sel = TRAGreedySelector(n_antennas=11, m_target=4, n_grid=512).fit()
    out = sel.predict(X)
    assert out.shape == (2, 11) and out.dtype == np.int8
    assert out.sum(axis=1).tolist() == [4, 4]


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ULASelector().predict(X)


def test_predict_needs_two_columns():
    with pytest.raises(ValueError):
        ULASelector().fit().predict(np.zeros((2, 3)))


def test_m_target_validated_on_fit():
    with pytest.raises(ValueError):
        ULASelector(m_target=1).fit()


def test_full_array_greedy_falls_back():
    r = TRAGreedySelector(n_antennas=5, m_target=5, n_grid=256).fit().select(0.1, 10.0)
    assert r.chosen.bits == (1,) * 5


def test_psl_c_cache_scales_objective():
    sel = PSLConstrainedSelector(n_antennas=11, m_target=4).fit()
    a = sel.select(0.2, 0.0)
    b = sel.select(0.4, 10.0)
    assert a.chosen == b.chosen
    assert b.objective == pytest.approx(a.objective / 10)


def test_ula_selector():
    r = ULASelector(m_target=6).fit().select(0.3, 20.0)
    assert r.chosen.indices == (0, 2, 4, 6, 8, 10) and r.mult_count == 0


class TestNeuralSelector:
    def test_fit_on_labels(self):
        rng = np.random.default_rng(0)
        Xs = np.column_stack([rng.uniform(-0.9, 0.9, 40), rng.uniform(-10, 20, 40)])
        Y = np.zeros((40, 7))
        Y[:, [0, 1, 5]] = 1
        sel = NeuralSelector(n_antennas=7, m_target=3, hidden=(8,), iterations=300, batch_fraction=0.5).fit(Xs, Y)
        assert sel.predict(Xs[:5]).sum(axis=1).tolist() == [3] * 5
        assert sel.scores(Xs).shape == (40, 7)

    def test_load_from_file(self, tmp_path):
        model = init_model(default_layer_dims(21), np.random.default_rng(1))
        save_model(model, tmp_path / "m.json")
        sel = NeuralSelector(m_target=4, model_path=str(tmp_path / "m.json")).fit()
        r = sel.select(0.1, 5.0)
        assert r.mult_count == 5488 and r.chosen.popcount == 4
        direct = NeuralSelector.from_model(model, m_target=4).select(0.1, 5.0)
        assert direct.chosen == r.chosen

    def test_needs_labels_or_path(self):
        with pytest.raises(ValueError):
            NeuralSelector().fit()

    def test_output_size_checked(self, tmp_path):
        save_model(init_model((2, 4, 9), np.random.default_rng(1)), tmp_path / "m.json")
        with pytest.raises(ValueError):
            NeuralSelector(m_target=4, model_path=str(tmp_path / "m.json")).fit()


def test_mle_estimator_noise_free():
    pos = np.arange(6.0)
    est = MLDOAEstimator(positions=pos).fit()
    y = np.vstack([steering_vector(pos, 0.3), steering_vector(pos, 0.0)])
    u = est.predict(y)
    assert abs(u[0] - 0.3) <= 2e-4 and u[1] == 0.0


def test_mle_estimator_needs_positions():
    with pytest.raises(ValueError):
        MLDOAEstimator().fit()


class TestMakeSelector:
    g = ArrayGeometry(11, 0.5)

    def test_names(self):
        assert isinstance(make_selector("tra-g", self.g, 4), TRAGreedySelector)
        assert isinstance(make_selector("ula", self.g, 4), ULASelector)

    def test_psl_argument(self):
        assert make_selector("psl-c:0.4", self.g, 4).delta == 0.4
        assert make_selector("psl-c", self.g, 4, delta=0.3).delta == 0.3
        assert make_selector("psl-c", self.g, 4).delta == 1.0

    def test_auto(self):
        # 10 unique pairs against 65 greedy evaluations
        assert isinstance(make_selector("auto", self.g, 2), TRAExhaustiveSelector)
        assert isinstance(make_selector("auto", ArrayGeometry(21, 0.5), 8), TRAGreedySelector)

    def test_errors(self):
        with pytest.raises(ValueError):
            make_selector("nope", self.g, 4)
        with pytest.raises(ValueError):
            make_selector("tra-dl", self.g, 4)
