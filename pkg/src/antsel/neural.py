"""Feedforward network that imitates greedy TRA selection.

The network maps a direction prior and an SNR to one score per antenna; the
top-M scores form the selection. Everything is plain numpy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .array_core import ArrayGeometry, SelectionVector
from .beam_metrics import AnchorSet
from .selector import SelectionQuery, multiplication_count, select_greedy_tra
from .signal_model import db_to_linear

SNR_DB_SCALE = 30.0
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """A model file is malformed or internally inconsistent."""


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    metadata: dict = field(default_factory=dict)
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.layer_dims = tuple(int(g) for g in self.layer_dims)
        dims = self.layer_dims
        if len(dims) < 2 or min(dims) < 1:
            raise ModelFormatError("layer_dims needs at least input and output sizes, all positive")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ModelFormatError("one weight matrix and one bias vector are needed per layer")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for h, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[h], dims[h + 1]) or b.shape != (dims[h + 1],):
                raise ModelFormatError(f"layer {h + 1} has shapes {w.shape}/{b.shape}, "
                                       f"expected {(dims[h], dims[h + 1])}/{(dims[h + 1],)}")

    @property
    def n_outputs(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def multiplications(self) -> int:
        return multiplication_count("tra-dl", layer_dims=self.layer_dims)

    def copy(self) -> "MlpModel":
        return replace(self, weights=[w.copy() for w in self.weights],
                       biases=[b.copy() for b in self.biases],
                       metadata=dict(self.metadata), loss_history=list(self.loss_history))


def default_layer_dims(n_antennas: int, hidden=(16, 32, 64, 32, 16)) -> tuple[int, ...]:
    return (2, *hidden, n_antennas)


def init_model(layer_dims, rng: np.random.Generator) -> MlpModel:
    """Glorot-uniform weights and zero biases."""
    dims = tuple(int(g) for g in layer_dims)
    if len(dims) < 2:
        raise ModelFormatError("layer_dims needs at least input and output sizes")
    weights, biases = [], []
    for a, b in zip(dims[:-1], dims[1:]):
        lim = math.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-lim, lim, size=(a, b)))
        biases.append(np.zeros(b))
    return MlpModel(dims, weights, biases)


def normalize_inputs(u, snr_db) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    s = np.atleast_1d(np.asarray(snr_db, dtype=float))
    return np.column_stack(np.broadcast_arrays(u, s / SNR_DB_SCALE))


def _sigmoid(z):
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts, pre = [x], []
    last = len(model.weights) - 1
    for h, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(_sigmoid(z) if h == last else np.maximum(z, 0.0))
    return acts, pre


def forward_batch(model: MlpModel, x) -> np.ndarray:
    """Outputs for rows of already-normalized inputs."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.layer_dims[0]:
        raise ValueError(f"inputs have {x.shape[1]} features, model expects {model.layer_dims[0]}")
    return _forward_cache(model, x)[0][-1]


def forward(model: MlpModel, u: float, snr_db: float) -> np.ndarray:
    return forward_batch(model, normalize_inputs(u, snr_db))[0]


def loss(predicted, label) -> float:
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(label.as_array() if isinstance(label, SelectionVector) else label, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"prediction length {p.shape} does not match label length {t.shape}")
    return float(np.mean((p - t) ** 2))


def batch_loss(model: MlpModel, x, targets) -> float:
    out = forward_batch(model, x)
    return float(np.mean((out - np.asarray(targets, dtype=float)) ** 2))


def gradients(model: MlpModel, x, targets):
    """Gradient of the batch-mean squared error with respect to every parameter.

    Returns ``(weight_grads, bias_grads)``; a single sample may be passed as
    1-D arrays. ReLU has zero derivative at zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    acts, pre = _forward_cache(model, x)
    n_rows, n_out = t.shape
    out = acts[-1]
    delta = (2.0 / (n_rows * n_out)) * (out - t) * out * (1.0 - out)
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for h in range(len(model.weights) - 1, -1, -1):
        gw[h] = acts[h].T @ delta
        gb[h] = delta.sum(axis=0)
        if h:
            delta = (delta @ model.weights[h].T) * (pre[h - 1] > 0)
    return gw, gb


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    iterations: int = 200
    batch_fraction: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")


@dataclass
class AdamState:
    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros(cls, model: MlpModel) -> "AdamState":
        params = [*model.weights, *model.biases]
        return cls(0, [np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(model: MlpModel, grads, state: AdamState, config: AdamConfig) -> None:
    """Bias-corrected Adam update, applied in place to ``model`` and ``state``."""
    gw, gb = grads
    params = [*model.weights, *model.biases]
    state.step += 1
    c1 = 1.0 - config.beta1 ** state.step
    c2 = 1.0 - config.beta2 ** state.step
    for p, g, m, v in zip(params, [*gw, *gb], state.m, state.v):
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        p -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


@dataclass(frozen=True)
class TrainingSample:
    u: float
    snr_db: float
    label: SelectionVector


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray   # (n, 2) normalized
    targets: np.ndarray  # (n, N) 0/1
    m_target: int

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("empty dataset")
        m = samples[0].label.popcount
        x = normalize_inputs([s.u for s in samples], [s.snr_db for s in samples])
        t = np.array([s.label.as_array() for s in samples], dtype=float)
        return cls(x, t, m)


def generate_dataset(n_samples: int, u_range, snr_db_range, geometry: ArrayGeometry, m_target: int,
                     rng: np.random.Generator, n_grid: int | None = None) -> list[TrainingSample]:
    """Label random (direction, SNR) draws with greedy selection at a single anchor."""
    if n_samples < 0:
        raise ValueError("n_samples must be non-negative")
    u_lo, u_hi = u_range
    s_lo, s_hi = snr_db_range
    if not -1.0 < u_lo <= u_hi < 1.0:
        raise ValueError("u_range must lie inside (-1, 1)")
    extra = {} if n_grid is None else {"n_grid": n_grid}
    out = []
    for _ in range(n_samples):
        u = float(rng.uniform(u_lo, u_hi))
        snr_db = float(rng.uniform(s_lo, s_hi))
        q = SelectionQuery(AnchorSet((u,)), float(db_to_linear(snr_db)), geometry, m_target, **extra)
        out.append(TrainingSample(u, snr_db, select_greedy_tra(q).chosen))
    return out


def train(model: MlpModel, data: Dataset, config: AdamConfig, rng: np.random.Generator) -> MlpModel:
    """Train a copy of ``model``; one Adam update per iteration on a random batch.

    The returned model's ``loss_history`` holds the batch loss seen by each update.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.targets.shape[1] != model.n_outputs:
        raise ValueError("dataset label length does not match the model output size")
    out = model.copy()
    out.loss_history = []
    state = AdamState.zeros(out)
    batch = math.ceil(config.batch_fraction * len(data))
    for _ in range(config.iterations):
        idx = rng.choice(len(data), size=batch, replace=False)
        x, t = data.inputs[idx], data.targets[idx]
        out.loss_history.append(batch_loss(out, x, t))
        adam_step(out, gradients(out, x, t), state, config)
    return out


def select_top_m(scores, m: int) -> SelectionVector:
    s = np.asarray(scores, dtype=float).ravel()
    if not 1 <= m <= s.size:
        raise ValueError(f"M must be in [1, {s.size}], got {m}")
    # stable sort on the negated scores keeps lower indices first among ties
    top = np.argsort(-s, kind="stable")[:m]
    return SelectionVector.from_indices(sorted(top.tolist()), s.size)


def predict_selection(model: MlpModel, u: float, snr_db: float, m: int) -> SelectionVector:
    return select_top_m(forward(model, u, snr_db), m)


# --- persistence --------------------------------------------------------------

def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError("cannot serialize non-finite parameter")
    return format(float(v), ".17g")


def _array_text(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ", ".join(_num(v) for v in a) + "]"
    return "[\n      " + ",\n      ".join(_array_text(r) for r in a) + "\n    ]"


def save_model(model: MlpModel, destination) -> None:
    """Write a JSON document; numbers carry 17 significant digits so they round-trip exactly."""
    layers = []
    for w, b in zip(model.weights, model.biases):
        layers.append('    {"weights": ' + _array_text(w) + ',\n     "biases": ' + _array_text(b) + "}")
    head = {
        "format": FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "input_scaling": {"u": 1.0, "snr_db": 1.0 / SNR_DB_SCALE},
        "metadata": model.metadata,
    }
    text = json.dumps(head, indent=2, sort_keys=True)[:-2] + ',\n  "layers": [\n' + ",\n".join(layers) + "\n  ]\n}\n"
    Path(destination).write_text(text, encoding="utf-8")


def load_model(source) -> MlpModel:
    try:
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_VERSION:
        raise ModelFormatError("unsupported or missing model format version")
    try:
        dims = doc["layer_dims"]
        layers = doc["layers"]
        weights = [np.asarray(layer["weights"], dtype=float) for layer in layers]
        biases = [np.asarray(layer["biases"], dtype=float) for layer in layers]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"incomplete model file: {exc}") from exc
    scale = doc.get("input_scaling", {}).get("snr_db")
    if scale is not None and not math.isclose(scale, 1.0 / SNR_DB_SCALE, rel_tol=1e-15):
        raise ModelFormatError("model was trained with a different SNR input scaling")
    return MlpModel(tuple(dims), weights, biases, metadata=doc.get("metadata", {}))
