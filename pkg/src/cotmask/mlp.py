"""Fully connected ReLU network with hand-written backprop, Adam and ensembles.

Weights follow the ``z_k = relu(W_k z_{k-1} + b_k)`` convention with
``W_k`` of shape ``(out, in)``; batches are rows, so the code computes
``Z @ W.T + b``.  By default the output layer is rectified as well, which
keeps predictions non-negative.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .core import BAND_NAMES, BAND_NAMES_NO_CIRRUS, COT_MAX, Dataset
from .errors import (
    BadConfig,
    BadShape,
    DimensionMismatch,
    IoError,
    ShapeMismatch,
    SingularSystem,
    StaleCache,
    VersionMismatch,
)
from .features import Normalizer, augment_and_normalize, normalize

MAGIC = b"COTMLP01"


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    relu_output: bool = True

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def num_layers(self):
        return len(self.weights)

    @property
    def hidden_dim(self):
        return self.weights[0].shape[0] if self.num_layers > 1 else 0

    def copy(self) -> MlpParams:
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.relu_output)

    def arrays(self):
        """Parameters in serialization order: W1, b1, W2, b2, ..."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_mlp(input_dim, hidden_dim=64, num_layers=5, seed=0, relu_output=True) -> MlpParams:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    if input_dim < 1 or hidden_dim < 1 or num_layers < 2:
        raise BadShape(f"bad architecture: input_dim={input_dim}, hidden_dim={hidden_dim}, layers={num_layers}")
    rng = np.random.default_rng([int(seed), 1])
    sizes = [input_dim] + [hidden_dim] * (num_layers - 1) + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, relu_output)


@dataclass
class Cache:
    inputs: list[np.ndarray]  # z_{k-1} fed into layer k
    preacts: list[np.ndarray]  # W_k z_{k-1} + b_k


def forward(p: MlpParams, x):
    """Return ``(y_hat, cache)``; ``y_hat`` has shape ``(n,)`` (or scalar for 1-D ``x``)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    z = x[None, :] if single else x
    if z.shape[1] != p.input_dim:
        raise DimensionMismatch(f"input has {z.shape[1]} features, network expects {p.input_dim}")
    inputs, preacts = [], []
    last = p.num_layers - 1
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(z)
        a = z @ w.T + b
        preacts.append(a)
        z = np.maximum(a, 0.0) if (k < last or p.relu_output) else a
    y = z[:, 0]
    return (y[0] if single else y), Cache(inputs, preacts)


def mse_loss(y_hat, y):
    """Mean squared error and its gradient with respect to ``y_hat``."""
    y_hat = np.atleast_1d(np.asarray(y_hat, dtype=np.float64))
    diff = y_hat - np.atleast_1d(np.asarray(y, dtype=np.float64))
    n = diff.shape[0]
    return float(np.mean(diff * diff)), 2.0 * diff / n


def backward(p: MlpParams, cache: Cache, dloss) -> Grads:
    """Gradients of the loss w.r.t. every weight and bias.

    ``dloss`` is dL/dy_hat per batch row.  The ReLU derivative at exactly 0
    is taken as 0.
    """
    if len(cache.inputs) != p.num_layers or any(
        a.shape[1] != w.shape[0] for a, w in zip(cache.preacts, p.weights)
    ):
        raise StaleCache("activation cache does not match the network")
    g = np.atleast_1d(np.asarray(dloss, dtype=np.float64)).reshape(-1, 1)
    if g.shape[0] != cache.inputs[0].shape[0]:
        raise StaleCache("dloss batch size does not match the cached forward pass")
    gw = [None] * p.num_layers
    gb = [None] * p.num_layers
    last = p.num_layers - 1
    for k in range(last, -1, -1):
        if k < last or p.relu_output:
            g = g * (cache.preacts[k] > 0.0)
        gw[k] = g.T @ cache.inputs[k]
        gb[k] = g.sum(axis=0)
        if k:
            g = g @ p.weights[k]
    return Grads(gw, gb)


@dataclass
class AdamState:
    m_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_w: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(p: MlpParams, lr=3e-4, beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    if lr <= 0:
        raise BadConfig(f"learning rate must be positive, got {lr}")
    zw = [np.zeros_like(w) for w in p.weights]
    zb = [np.zeros_like(b) for b in p.biases]
    return AdamState(zw, zb, [z.copy() for z in zw], [z.copy() for z in zb], 0, lr, beta1, beta2, epsilon)


def _adam_update(param, grad, m, v, s, t):
    m = s.beta1 * m + (1.0 - s.beta1) * grad
    v = s.beta2 * v + (1.0 - s.beta2) * (grad * grad)
    m_hat = m / (1.0 - s.beta1 ** t)
    v_hat = v / (1.0 - s.beta2 ** t)
    return param - s.lr * m_hat / (np.sqrt(v_hat) + s.epsilon), m, v


def adam_step(p: MlpParams, grads: Grads, state: AdamState):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    for a, b in zip(p.weights + p.biases, grads.weights + grads.biases):
        if a.shape != b.shape:
            raise ShapeMismatch(f"parameter shape {a.shape} vs gradient shape {b.shape}")
    t = state.t + 1
    new_w, new_b, m_w, m_b, v_w, v_b = [], [], [], [], [], []
    for k in range(p.num_layers):
        w, m, v = _adam_update(p.weights[k], grads.weights[k], state.m_w[k], state.v_w[k], state, t)
        new_w.append(w), m_w.append(m), v_w.append(v)
        b, m, v = _adam_update(p.biases[k], grads.biases[k], state.m_b[k], state.v_b[k], state, t)
        new_b.append(b), m_b.append(m), v_b.append(v)
    return MlpParams(new_w, new_b, p.relu_output), replace(state, m_w=m_w, m_b=m_b, v_w=v_w, v_b=v_b, t=t)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    num_updates: int = 100_000
    learning_rate: float = 3e-4
    noise_level: float = 0.03
    seed: int = 0
    eval_every: int = 5_000
    hidden_dim: int = 64
    num_layers: int = 5
    relu_output: bool = True

    def __post_init__(self):
        if self.batch_size < 1 or self.num_updates < 0 or self.eval_every < 1:
            raise BadConfig("batch_size and eval_every must be positive and num_updates non-negative")
        if not self.learning_rate > 0:
            raise BadConfig(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.noise_level <= 0.2:
            raise BadConfig(f"noise_level must lie in [0, 0.2], got {self.noise_level}")

    @classmethod
    def paper(cls, **overrides) -> TrainConfig:
        """Full-length recipe: 2,000,000 updates instead of the desk-scale default."""
        return cls(**{"num_updates": 2_000_000, **overrides})


def _rng(seed, purpose):
    return np.random.default_rng([int(seed), purpose])


# rng namespaces derived from the root seed
_BATCHES, _NOISE = 2, 3


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    best_step: int | None = None
    best_val_mae: float = float("inf")
    best_params: MlpParams | None = None


def clean_mae(p: MlpParams, x_norm, y):
    y_hat, _ = forward(p, x_norm)
    return float(np.mean(np.abs(np.clip(y_hat, 0.0, COT_MAX) - y)))


def train(train: Dataset, val: Dataset | None, cfg: TrainConfig, nz: Normalizer):
    """Fit an MLP with Adam on MSE, adding Gaussian input noise every batch.

    Batches are drawn uniformly with replacement.  Every ``cfg.eval_every``
    updates the history records the mean training loss since the last record
    and the validation MAE on clean inputs.  Returns the final iterate; the
    best validation iterate is kept in the history.
    """
    x_train, y_train = train.bands, train.cot
    nz = nz.with_noise_level(cfg.noise_level)
    params = init_mlp(x_train.shape[1], cfg.hidden_dim, cfg.num_layers, cfg.seed, cfg.relu_output)
    state = init_adam(params, cfg.learning_rate)
    history = History()
    x_val = normalize(val.bands, nz) if val is not None and len(val) else None

    def record(step, losses):
        row = {"step": step, "train_loss": float(np.mean(losses)) if losses else float("nan")}
        if x_val is not None:
            row["val_mae"] = clean_mae(params, x_val, val.cot)
            if row["val_mae"] < history.best_val_mae:
                history.best_val_mae = row["val_mae"]
                history.best_step = step
                history.best_params = params.copy()
        history.rows.append(row)

    record(0, [])
    batch_rng = _rng(cfg.seed, _BATCHES)
    noise_rng = _rng(cfg.seed, _NOISE)
    n = x_train.shape[0]
    losses = []
    for step in range(1, cfg.num_updates + 1):
        idx = batch_rng.integers(0, n, size=cfg.batch_size)
        xb = augment_and_normalize(x_train[idx], nz, noise_rng)
        y_hat, cache = forward(params, xb)
        loss, dloss = mse_loss(y_hat, y_train[idx])
        losses.append(loss)
        params, state = adam_step(params, backward(params, cache, dloss), state)
        if step % cfg.eval_every == 0 or step == cfg.num_updates:
            record(step, losses)
            losses = []
    return params, history


@dataclass
class Model:
    """A trained network bundled with its normalizer and provenance."""

    params: MlpParams
    normalizer: Normalizer
    band_names: tuple[str, ...] = BAND_NAMES
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.band_names = tuple(self.band_names)
        if self.band_names not in (BAND_NAMES, BAND_NAMES_NO_CIRRUS):
            raise BadShape(f"unsupported band set {self.band_names}")
        if self.params.input_dim != len(self.band_names) or self.normalizer.dim != len(self.band_names):
            raise BadShape("network, normalizer and band list disagree on input dimension")

    @property
    def input_dim(self):
        return self.params.input_dim

    @property
    def cirrus_present(self):
        return "b10" in self.band_names

    def raw_predict(self, x):
        y, _ = forward(self.params, normalize(x, self.normalizer))
        return y

    def predict(self, x, clamp=True):
        y = self.raw_predict(x)
        return np.clip(y, 0.0, COT_MAX) if clamp else y


@dataclass
class Ensemble:
    members: list[Model]

    def __post_init__(self):
        if not self.members:
            raise BadShape("an ensemble needs at least one member")
        dims = {m.input_dim for m in self.members}
        if len(dims) != 1:
            raise BadShape(f"ensemble members disagree on input dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.members)

    @property
    def input_dim(self):
        return self.members[0].input_dim

    @property
    def normalizer(self):
        return self.members[0].normalizer

    @property
    def band_names(self):
        return self.members[0].band_names

    def predict(self, x, clamp=True):
        return np.mean([m.predict(x, clamp) for m in self.members], axis=0)


def predict(model, x, clamp=True):
    """Prediction of a single model, an ensemble (member mean) or a linear baseline."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, model expects {model.input_dim}")
    return model.predict(x, clamp)


def train_model(train_set: Dataset, val: Dataset | None, cfg: TrainConfig, nz: Normalizer):
    """Convenience wrapper: train and bundle into a :class:`Model`."""
    params, history = train(train_set, val, cfg, nz)
    meta = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    return Model(params, nz.with_noise_level(cfg.noise_level), train_set.band_names, meta), history


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    normalizer: Normalizer

    @property
    def input_dim(self):
        return self.weights.shape[0]

    def predict(self, x, clamp=True):
        y = normalize(x, self.normalizer) @ self.weights + self.bias
        return np.clip(y, 0.0, COT_MAX) if clamp else y


RIDGE = 1e-8


def fit_linear_regression(train: Dataset, nz: Normalizer) -> LinearModel:
    """Ordinary least squares on normalized features via the normal equations."""
    x = normalize(train.bands, nz)
    y = train.cot
    n, d = x.shape
    if n <= d:
        raise SingularSystem(f"need more samples ({n}) than features ({d})")
    a = np.hstack([x, np.ones((n, 1))])
    gram = a.T @ a + RIDGE * np.eye(d + 1)
    try:
        coef = np.linalg.solve(gram, a.T @ y)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(coef)):
        raise SingularSystem("normal equations produced non-finite coefficients")
    return LinearModel(coef[:d], float(coef[d]), nz)


# --- model bundle files -------------------------------------------------------

def _meta_text(model: Model):
    p = model.params
    meta = {
        "bands": ",".join(model.band_names),
        "input_dim": p.input_dim,
        "hidden_dim": p.hidden_dim,
        "layers": p.num_layers,
        "relu_output": int(p.relu_output),
        "noise_level": repr(float(model.normalizer.noise_level)),
    }
    for k, v in model.metadata.items():
        meta.setdefault(k, v)
    lines = []
    for k, v in meta.items():
        if isinstance(v, bool):
            v = int(v)
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def save_model(path, model: Model):
    """Write ``COTMLP01`` + length-prefixed metadata + little-endian float64 payload.

    Payload order: normalizer mean, std, mean_abs, then W1, b1, ..., W_L, b_L
    with every matrix row-major.
    """
    text = _meta_text(model).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    nz = model.normalizer
    for arr in (nz.mean, nz.std, nz.mean_abs, *model.params.arrays()):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    try:
        Path(path).write_bytes(buf.getvalue())
    except OSError as exc:
        raise IoError(f"cannot write model bundle {path}: {exc}") from exc


def _parse_value(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def load_model(path) -> Model:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model bundle {path}: {exc}") from exc
    if raw[:8] != MAGIC:
        raise VersionMismatch(f"{path}: not a {MAGIC.decode()} model bundle")
    (n_meta,) = struct.unpack("<I", raw[8:12])
    text = raw[12:12 + n_meta].decode("utf-8")
    meta = {}
    for line in text.splitlines():
        if line:
            key, _, value = line.partition("=")
            meta[key] = _parse_value(value)
    band_names = tuple(str(meta.pop("bands")).split(","))
    d, h, layers = int(meta.pop("input_dim")), int(meta.pop("hidden_dim")), int(meta.pop("layers"))
    relu_output = bool(meta.pop("relu_output"))
    noise_level = float(meta.pop("noise_level"))
    payload = np.frombuffer(raw[12 + n_meta:], dtype="<f8")
    sizes = [d] + [h] * (layers - 1) + [1]
    expected = 3 * d + sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))
    if payload.size != expected:
        raise VersionMismatch(f"{path}: payload has {payload.size} values, expected {expected}")
    pos = 0

    def take(count, shape):
        nonlocal pos
        out = payload[pos:pos + count].reshape(shape).astype(np.float64)
        pos += count
        return out

    mean, std, mean_abs = take(d, d), take(d, d), take(d, d)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(take(fan_in * fan_out, (fan_out, fan_in)))
        biases.append(take(fan_out, fan_out))
    return Model(MlpParams(weights, biases, relu_output), Normalizer(mean, std, mean_abs, noise_level), band_names, meta)


def load_ensemble(paths) -> Ensemble | Model:
    models = [load_model(p) for p in paths]
    return models[0] if len(models) == 1 else Ensemble(models)
