"""scikit-learn style wrappers around the selectors and the direction estimator.

Selectors take ``X`` with rows ``[u_hat, snr_db]`` and ``predict`` returns a
0/1 array of shape ``(n_samples, n_antennas)``. ``select`` returns the full
:class:`~antsel.selector.SelectionResult` for one row.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .array_core import ArrayGeometry, greedy_evaluation_count, positions_from_selection, unique_set_stats
from .beam_metrics import DEFAULT_N_GRID, AnchorSet, anchor_set, crlb
from .estimator import GridSpec, SnapshotEstimator
from .neural import (AdamConfig, Dataset, MlpModel, forward_batch, init_model, load_model,
                     normalize_inputs, default_layer_dims, select_top_m, train)
from .selector import (Method, SelectionQuery, SelectionResult, multiplication_count, select_exhaustive_tra,
                       select_greedy_tra, select_psl_c, select_ula)
from .signal_model import check_direction, db_to_linear


class _SelectorBase(BaseEstimator):
    """Shared plumbing; subclasses implement ``_select``."""

    def _geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_antennas, self.spacing)

    def fit(self, X=None, y=None):
        self.geometry_ = self._geometry()
        if not 2 <= self.m_target <= self.geometry_.n_antennas:
            raise ValueError(f"m_target must be in [2, {self.geometry_.n_antennas}]")
        self._prepare()
        return self

    def _prepare(self):
        pass

    def select(self, u_hat: float, snr_db: float) -> SelectionResult:
        check_is_fitted(self, "geometry_")
        return self._select(check_direction(u_hat), float(snr_db))

    def predict(self, X) -> np.ndarray:
        X = check_array(X, dtype=float, ensure_min_features=2)
        if X.shape[1] != 2:
            raise ValueError("X must have exactly two columns: u_hat, snr_db")
        return np.array([self.select(u, s).chosen.as_array() for u, s in X], dtype=np.int8)


class _TraMixin:
    def _query(self, u_hat: float, snr_db: float, n_anchors: int) -> SelectionQuery:
        anchors = anchor_set(u_hat, self.delta_u, n_anchors)
        return SelectionQuery(anchors, float(db_to_linear(snr_db)), self.geometry_, self.m_target,
                              self.n_grid, self.clamp)


class TRAGreedySelector(_TraMixin, _SelectorBase):
    def __init__(self, n_antennas=21, spacing=0.5, m_target=4, delta_u=0.1, n_anchors=5,
                 n_grid=DEFAULT_N_GRID, clamp=False):
        self.n_antennas = n_antennas
        self.spacing = spacing
        self.m_target = m_target
        self.delta_u = delta_u
        self.n_anchors = n_anchors
        self.n_grid = n_grid
        self.clamp = clamp

    def _select(self, u_hat, snr_db):
        if self.m_target == self.geometry_.n_antennas:
            return select_exhaustive_tra(self._query(u_hat, snr_db, self.n_anchors))
        return select_greedy_tra(self._query(u_hat, snr_db, self.n_anchors))


class TRAExhaustiveSelector(_TraMixin, _SelectorBase):
    def __init__(self, n_antennas=21, spacing=0.5, m_target=4, delta_u=0.1, n_anchors=5,
                 n_grid=DEFAULT_N_GRID, clamp=False, max_candidates=50_000):
        self.n_antennas = n_antennas
        self.spacing = spacing
        self.m_target = m_target
        self.delta_u = delta_u
        self.n_anchors = n_anchors
        self.n_grid = n_grid
        self.clamp = clamp
        self.max_candidates = max_candidates

    def _select(self, u_hat, snr_db):
        return select_exhaustive_tra(self._query(u_hat, snr_db, self.n_anchors), self.max_candidates)


class PSLConstrainedSelector(_SelectorBase):
    """Maximum-diversity layout whose PSL at ``u_hat`` stays below ``delta``."""

    def __init__(self, n_antennas=21, spacing=0.5, m_target=4, delta=1.0, n_grid=DEFAULT_N_GRID):
        self.n_antennas = n_antennas
        self.spacing = spacing
        self.m_target = m_target
        self.delta = delta
        self.n_grid = n_grid

    def _prepare(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        self._cache = {}

    def _select(self, u_hat, snr_db):
        # the choice does not depend on the SNR, and with delta = 1 not on u_hat either
        key = None if self.delta >= 1.0 else u_hat
        res = self._cache.get(key)
        if res is None:
            if len(self._cache) >= 4096:
                self._cache.clear()
            q = SelectionQuery(AnchorSet((u_hat,)), 1.0, self.geometry_, self.m_target, self.n_grid)
            res = self._cache[key] = select_psl_c(q, self.delta)
        # the cached objective is the CRLB at unit SNR, which scales as 1/S
        return SelectionResult(res.chosen, res.objective / float(db_to_linear(snr_db)),
                               res.evaluations, res.mult_count, res.flagged)


class ULASelector(_SelectorBase):
    def __init__(self, n_antennas=21, spacing=0.5, m_target=4):
        self.n_antennas = n_antennas
        self.spacing = spacing
        self.m_target = m_target

    def _prepare(self):
        self.chosen_ = select_ula(self.geometry_, self.m_target)

    def _select(self, u_hat, snr_db):
        pos = positions_from_selection(self.chosen_, self.geometry_).as_array()
        return SelectionResult(self.chosen_, crlb(float(db_to_linear(snr_db)), pos), 1, 0)


class NeuralSelector(_SelectorBase):
    """Network that scores antennas from ``[u_hat, snr_db]``; the top-M scores win.

    ``fit(X, Y)`` trains on 0/1 labels ``Y``. Alternatively set ``model_path`` and
    call ``fit()`` with no labels to load a saved network.
    """

    def __init__(self, n_antennas=21, spacing=0.5, m_target=4, hidden=(16, 32, 64, 32, 16),
                 learning_rate=0.001, iterations=200, batch_fraction=0.1, random_state=0,
                 model_path=None):
        self.n_antennas = n_antennas
        self.spacing = spacing
        self.m_target = m_target
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.batch_fraction = batch_fraction
        self.random_state = random_state
        self.model_path = model_path

    def fit(self, X=None, y=None):
        super().fit()
        if y is None:
            if self.model_path is None:
                raise ValueError("either labels or model_path are required")
            self.model_ = load_model(self.model_path)
        else:
            X = check_array(X, dtype=float)
            Y = check_array(y, dtype=float)
            if X.shape[1] != 2 or Y.shape != (X.shape[0], self.geometry_.n_antennas):
                raise ValueError("X must be (n, 2) and y must be (n, n_antennas)")
            rng = np.random.default_rng(self.random_state)
            model = init_model(default_layer_dims(self.geometry_.n_antennas, self.hidden), rng)
            cfg = AdamConfig(learning_rate=self.learning_rate, iterations=self.iterations,
                             batch_fraction=self.batch_fraction)
            self.model_ = train(model, Dataset(normalize_inputs(X[:, 0], X[:, 1]), Y, self.m_target), cfg, rng)
        if self.model_.n_outputs != self.geometry_.n_antennas:
            raise ValueError("model output size does not match n_antennas")
        return self

    @classmethod
    def from_model(cls, model: MlpModel, m_target: int, spacing: float = 0.5) -> "NeuralSelector":
        sel = cls(n_antennas=model.n_outputs, spacing=spacing, m_target=m_target)
        _SelectorBase.fit(sel)
        sel.model_ = model
        return sel

    def scores(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        return forward_batch(self.model_, normalize_inputs(X[:, 0], X[:, 1]))

    def _select(self, u_hat, snr_db):
        chosen = select_top_m(self.scores([[u_hat, snr_db]])[0], self.m_target)
        pos = positions_from_selection(chosen, self.geometry_).as_array()
        mults = multiplication_count(Method.TRA_DL, layer_dims=self.model_.layer_dims)
        return SelectionResult(chosen, crlb(float(db_to_linear(snr_db)), pos), 1, mults)


class MLDOAEstimator(BaseEstimator):
    """Grid-search ML direction estimator for a fixed subarray.

    ``predict`` takes complex snapshots, one per row, and returns ``u`` estimates.
    """

    def __init__(self, positions=None, coarse_step_deg=0.2, fine_step_deg=0.01):
        self.positions = positions
        self.coarse_step_deg = coarse_step_deg
        self.fine_step_deg = fine_step_deg

    def fit(self, X=None, y=None):
        if self.positions is None:
            raise ValueError("positions are required")
        grid = GridSpec(self.coarse_step_deg, self.fine_step_deg)
        self.estimator_ = SnapshotEstimator(np.asarray(self.positions, dtype=float), grid)
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "estimator_")
        Y = np.atleast_2d(np.asarray(Y, dtype=complex))
        return np.array([self.estimator_.estimate(row) for row in Y])


METHODS = ("tra-g", "tra-exh", "psl-c", "ula", "tra-dl", "auto")


def make_selector(method: str, geometry: ArrayGeometry, m_target: int, delta_u: float = 0.1,
                  n_anchors: int = 5, n_grid: int = DEFAULT_N_GRID, delta: float | None = None,
                  model_path=None, max_candidates: int = 50_000, clamp: bool = False) -> _SelectorBase:
    """Build and fit a selector from a method name.

    ``method`` may carry an argument after a colon: ``psl-c:0.5`` sets the PSL
    bound and ``tra-dl:model.json`` names the network file. ``auto`` uses the
    exhaustive search when the unique set is smaller than the greedy budget.
    """
    name, _, arg = method.partition(":")
    common = dict(n_antennas=geometry.n_antennas, spacing=geometry.spacing, m_target=m_target)
    tra = dict(common, delta_u=delta_u, n_anchors=n_anchors, n_grid=n_grid, clamp=clamp)
    if name == "auto":
        n = geometry.n_antennas
        small = m_target == n or unique_set_stats(n, m_target).unique_count < greedy_evaluation_count(n, m_target)
        name = "tra-exh" if small else "tra-g"
    if name == "tra-g":
        sel = TRAGreedySelector(**tra)
    elif name == "tra-exh":
        sel = TRAExhaustiveSelector(**tra, max_candidates=max_candidates)
    elif name == "psl-c":
        d = float(arg) if arg else (1.0 if delta is None else delta)
        sel = PSLConstrainedSelector(**common, delta=d, n_grid=n_grid)
    elif name == "ula":
        sel = ULASelector(**common)
    elif name == "tra-dl":
        path = arg or model_path
        if path is None:
            raise ValueError("tra-dl needs a model file")
        sel = NeuralSelector(**common, model_path=path)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return sel.fit()
