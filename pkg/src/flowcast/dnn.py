"""Fully-connected ReLU/softmax classifier with inverted dropout and Adam.

``layers`` counts weight layers including the output: ``layers=3`` means two
hidden layers of width ``size`` followed by the softmax layer.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .encode import DEFAULT_BOUNDARIES, ClassBoundaries

LOG_CLAMP = 1e-12

LAYER_VALUES = (3, 4, 5)
SIZE_VALUES = (200, 400, 600, 800, 1000)
LR_VALUES = (0.01, 0.001, 0.0001)
KEEP_VALUES = ((1.0, 1.0), (0.9, 0.6), (0.8, 0.5))
FEATURE_VALUES = ("FIVE_TUPLE", "ALL")
BALANCING_VALUES = ("undersample", "weight")
OUTLIER_VALUES = (0, 20, 60, 100, 500)


@dataclass(frozen=True)
class Hyperparams:
    layers: int = 3
    size: int = 200
    learning_rate: float = 0.001
    keep_input: float = 1.0
    keep_hidden: float = 1.0
    features: str = "ALL"
    boundaries: ClassBoundaries = DEFAULT_BOUNDARIES
    balancing: str = "undersample"
    outlier_centers: int = 0
    batch_size: int = 100
    epochs: int = 10
    seed: int = 0
    off_grid: bool = False

    def __post_init__(self):
        if isinstance(self.boundaries, str):
            object.__setattr__(self, "boundaries", ClassBoundaries.parse(self.boundaries))
        if self.balancing not in BALANCING_VALUES:
            raise ValueError(f"balancing must be one of {BALANCING_VALUES}")
        if self.features not in ("FIVE_TUPLE", "ALL", "ALL_WITH_FLAGS"):
            raise ValueError(f"unknown features {self.features!r}")
        if not (0 < self.keep_input <= 1 and 0 < self.keep_hidden <= 1):
            raise ValueError("keep probabilities must lie in (0, 1]")
        if self.layers < 1 or self.size < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("layers, size, batch_size and epochs must be positive")
        if self.learning_rate <= 0 or self.outlier_centers < 0:
            raise ValueError("learning_rate must be positive and outlier_centers >= 0")
        if not self.off_grid:
            checks = {
                "layers": self.layers in LAYER_VALUES,
                "size": self.size in SIZE_VALUES,
                "learning_rate": self.learning_rate in LR_VALUES,
                "keep": (self.keep_input, self.keep_hidden) in KEEP_VALUES,
                "features": self.features in FEATURE_VALUES,
                "outlier_centers": self.outlier_centers in OUTLIER_VALUES,
            }
            bad = [k for k, ok in checks.items() if not ok]
            if bad:
                raise ValueError(f"off-grid hyper-parameters {bad}; set off_grid=True to allow")

    @property
    def keep(self) -> tuple[float, float]:
        return (self.keep_input, self.keep_hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["boundaries"] = str(self.boundaries)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def tensors(self) -> list[np.ndarray]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> "AdamState":
        return cls([np.zeros_like(p) for p in params.tensors],
                   [np.zeros_like(p) for p in params.tensors])


def layer_dims(in_dim: int, n_classes: int, layers: int, size: int) -> list[tuple[int, int]]:
    widths = [in_dim] + [size] * (layers - 1) + [n_classes]
    return list(zip(widths[:-1], widths[1:]))


def init(hyper: Hyperparams, in_dim: int, n_classes: int, seed: int) -> NetworkParams:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in layer_dims(in_dim, n_classes, hyper.layers, hyper.size):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Cache:
    inputs: list[np.ndarray] = field(default_factory=list)   # input to each layer, after dropout
    pre: list[np.ndarray] = field(default_factory=list)      # pre-activations
    masks: list[np.ndarray | None] = field(default_factory=list)  # scaled keep masks per layer input
    probs: np.ndarray | None = None


def _mask(rng, shape, keep):
    if keep >= 1.0:
        return None
    return (rng.random(shape) < keep) / keep


def forward(params: NetworkParams, batch: np.ndarray, keep=(1.0, 1.0), train: bool = False,
            rng: np.random.Generator | None = None, masks: list | None = None):
    """Return ``(probabilities, cache)``.

    In train mode inverted dropout is applied to the input (``keep[0]``) and
    to every hidden activation (``keep[1]``). ``masks`` can pin the dropout
    masks (one entry per layer input, ``None`` for no dropout).
    """
    if not np.all(np.isfinite(batch)):
        raise ValueError("non-finite values in batch")
    if batch.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"batch width {batch.shape[1]} != input dim {params.weights[0].shape[0]}")
    if train and masks is None:
        rng = rng if rng is not None else np.random.default_rng()
    cache = Cache()
    a = batch
    n_layers = len(params.weights)
    for ell, (W, b) in enumerate(zip(params.weights, params.biases)):
        if train:
            if masks is not None:
                m = masks[ell]
            else:
                m = _mask(rng, a.shape, keep[0] if ell == 0 else keep[1])
            if m is not None:
                a = a * m
        else:
            m = None
        cache.inputs.append(a)
        cache.masks.append(m)
        z = a @ W + b
        cache.pre.append(z)
        a = np.maximum(z, 0.0) if ell < n_layers - 1 else z
    cache.probs = softmax(a)
    return cache.probs, cache


def loss(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None) -> float:
    p = np.maximum(probs[np.arange(len(labels)), labels], LOG_CLAMP)
    w = np.ones(len(labels)) if weights is None else np.asarray(weights)[labels]
    return float(np.mean(w * -np.log(p)))


def backward(params: NetworkParams, cache: Cache, labels: np.ndarray,
             weights: np.ndarray | None = None) -> list[np.ndarray]:
    """Gradients in ``params.tensors`` order (W0, b0, W1, b1, ...)."""
    n = len(labels)
    w = np.ones(n) if weights is None else np.asarray(weights)[labels]
    dz = cache.probs.copy()
    dz[np.arange(n), labels] -= 1.0
    dz *= (w / n)[:, None]
    grads: list[np.ndarray] = []
    for ell in range(len(params.weights) - 1, -1, -1):
        a = cache.inputs[ell]
        grads.append(dz.sum(axis=0))
        grads.append(a.T @ dz)
        if ell == 0:
            break
        da = dz @ params.weights[ell].T
        m = cache.masks[ell]
        if m is not None:
            da = da * m
        dz = da * (cache.pre[ell - 1] > 0)
    grads.reverse()
    return grads


def adam_step(params: NetworkParams, grads: list[np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params.tensors, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def predict(params: NetworkParams, batch: np.ndarray) -> np.ndarray:
    probs, _ = forward(params, batch, train=False)
    return np.argmax(probs, axis=1)  # first maximum wins ties


class Classifier:
    """Model, optimizer state and RNG bundled for block-sequential training."""

    def __init__(self, hyper: Hyperparams, in_dim: int, n_classes: int, seed: int | None = None):
        seed = hyper.seed if seed is None else seed
        self.hyper = hyper
        self.n_classes = n_classes
        self.params = init(hyper, in_dim, n_classes, seed)
        self.state = AdamState.zeros_like(self.params)
        self.rng = np.random.default_rng([seed, 1])

    def step(self, X: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> float:
        probs, cache = forward(self.params, X, self.hyper.keep, train=True, rng=self.rng)
        grads = backward(self.params, cache, y, weights)
        adam_step(self.params, grads, self.state, self.hyper.learning_rate)
        return loss(probs, y, weights)

    def predict(self, X: np.ndarray, batch: int = 4096) -> np.ndarray:
        if len(X) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([predict(self.params, X[i:i + batch]) for i in range(0, len(X), batch)])

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.params, self.hyper)


MAGIC = b"FLOWCAST-CKPT 1\n"


def save_checkpoint(path: str | Path, params: NetworkParams, hyper: Hyperparams | None = None) -> None:
    """Magic line, JSON manifest line, then row-major little-endian float64 tensors."""
    names = [f"{kind}{i}" for i in range(len(params.weights)) for kind in ("W", "b")]
    manifest = {"tensors": [{"name": n, "shape": list(t.shape)} for n, t in zip(names, params.tensors)],
                "dtype": "<f8", "hyper": hyper.to_dict() if hyper else None}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        for t in params.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[NetworkParams, dict | None]:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path} is not a flowcast checkpoint")
        manifest = json.loads(fh.readline())
        tensors = []
        for spec in manifest["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            tensors.append(np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy())
    return NetworkParams(tensors[0::2], tensors[1::2]), manifest["hyper"]
