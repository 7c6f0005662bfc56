"""Small convolutional instance-feature extractor with hand-rolled gradients.

Architecture: three 3x3 stride-2 ReLU blocks, a 1x1 channel-reduction
convolution, then a dense embedding. Parameters live in a flat name->array
dict so the same tensors flow through the optimizer, the serializer, and the
finite-difference checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .optim import AdamOptimizer, softmax
from .parallel import single_thread_blas
from .seeds import derive_seed
from .validation import as_rng, check_tile_stack

_KSIZE = 3
_STRIDE = 2
_PAD = 1

CONV_PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b")
HEAD_ADJACENT_NAMES = ("reduce_w", "embed_w", "embed_b")
EXTRACTOR_PARAM_NAMES = CONV_PARAM_NAMES + HEAD_ADJACENT_NAMES
# Block 1 stays frozen during slide-model fine-tuning; the last two blocks and
# the reduction/embedding layers follow the extractor learning rate.
FINETUNE_PARAM_NAMES = (
    "conv2_w",
    "conv2_b",
    "conv3_w",
    "conv3_b",
    "reduce_w",
    "embed_w",
    "embed_b",
)


@dataclass(frozen=True)
class ExtractorSpec:
    """Shape configuration of the extractor."""

    input_size: int = 32
    channels: tuple[int, int, int] = (8, 16, 32)
    reduce_channels: int = 8
    feature_dim: int = 64

    @property
    def map_size(self) -> int:
        s = self.input_size
        for _ in range(3):
            s = (s + 1) // 2
        return s

    @property
    def flat_dim(self) -> int:
        return self.reduce_channels * self.map_size * self.map_size


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_extractor(spec: ExtractorSpec, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights and zero biases, reproducible per seed."""
    rng = as_rng(seed)
    c1, c2, c3 = spec.channels
    params: dict[str, np.ndarray] = {}
    params["conv1_w"] = _glorot(rng, (c1, 3, _KSIZE, _KSIZE), 3 * 9, c1 * 9)
    params["conv1_b"] = np.zeros(c1)
    params["conv2_w"] = _glorot(rng, (c2, c1, _KSIZE, _KSIZE), c1 * 9, c2 * 9)
    params["conv2_b"] = np.zeros(c2)
    params["conv3_w"] = _glorot(rng, (c3, c2, _KSIZE, _KSIZE), c2 * 9, c3 * 9)
    params["conv3_b"] = np.zeros(c3)
    params["reduce_w"] = _glorot(rng, (spec.reduce_channels, c3), c3, spec.reduce_channels)
    params["embed_w"] = _glorot(rng, (spec.feature_dim, spec.flat_dim), spec.flat_dim, spec.feature_dim)
    params["embed_b"] = np.zeros(spec.feature_dim)
    return params


def _out_size(n: int) -> int:
    return (n + 2 * _PAD - _KSIZE) // _STRIDE + 1


def _conv_patches(x: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    # x: channel-major (c, n, h, w) -> columns (c*9, n*oh*ow), laid out so the
    # convolution becomes a single BLAS matmul with no transposed copies
    c, n, h, w = x.shape
    oh, ow = _out_size(h), _out_size(w)
    xp = np.zeros((c, n, h + 2 * _PAD, w + 2 * _PAD), dtype=x.dtype)
    xp[:, :, _PAD : _PAD + h, _PAD : _PAD + w] = x
    cols = np.empty((c, _KSIZE, _KSIZE, n, oh, ow), dtype=x.dtype)
    for a in range(_KSIZE):
        for b in range(_KSIZE):
            cols[:, a, b] = xp[
                :, :, a : a + _STRIDE * (oh - 1) + 1 : _STRIDE, b : b + _STRIDE * (ow - 1) + 1 : _STRIDE
            ]
    return cols.reshape(c * _KSIZE * _KSIZE, n * oh * ow), (oh, ow)


def _conv_forward(x, w, b):
    # x and the output are channel-major: (c, n, h, w)
    n = x.shape[1]
    c_out = w.shape[0]
    cols, (oh, ow) = _conv_patches(x)
    out = w.reshape(c_out, -1) @ cols + b[:, None]
    return out.reshape(c_out, n, oh, ow), cols


def _conv_backward(dpre, x_shape, cols, w, need_dx: bool = True):
    c, n, h, w_in = x_shape
    c_out = w.shape[0]
    oh, ow = _out_size(h), _out_size(w_in)
    dflat = dpre.reshape(c_out, -1)
    dw = (dflat @ cols.T).reshape(w.shape)
    db = dflat.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = (w.reshape(c_out, -1).T @ dflat).reshape(c, _KSIZE, _KSIZE, n, oh, ow)
    dxp = np.zeros((c, n, h + 2 * _PAD, w_in + 2 * _PAD))
    for a in range(_KSIZE):
        for b in range(_KSIZE):
            dxp[
                :, :, a : a + _STRIDE * (oh - 1) + 1 : _STRIDE, b : b + _STRIDE * (ow - 1) + 1 : _STRIDE
            ] += dcols[:, a, b]
    dx = dxp[:, :, _PAD : _PAD + h, _PAD : _PAD + w_in]
    return dx, dw, db


def tiles_to_inputs(tiles: np.ndarray) -> np.ndarray:
    """Byte tiles (k, s, s, 3) -> channel-major floats (3, k, s, s) in [-0.5, 0.5]."""
    arr = check_tile_stack(tiles)
    x = arr.astype(np.float64) / 255.0 - 0.5
    return np.ascontiguousarray(x.transpose(3, 0, 1, 2))


def extractor_forward(params, spec: ExtractorSpec, tiles, want_cache: bool = False):
    """Instance features for a stack of tiles; rows follow input order."""
    arr = check_tile_stack(tiles)
    if arr.shape[1] != spec.input_size or arr.shape[2] != spec.input_size:
        raise ValueError(
            f"tiles must be {spec.input_size}x{spec.input_size}, got {arr.shape[1]}x{arr.shape[2]}"
        )
    h = tiles_to_inputs(arr)
    n = arr.shape[0]
    cache: dict[str, object] = {}
    for i in (1, 2, 3):
        pre, cols = _conv_forward(h, params[f"conv{i}_w"], params[f"conv{i}_b"])
        if want_cache:
            cache[f"cols{i}"] = cols
            cache[f"mask{i}"] = pre > 0
            cache[f"shape{i}"] = h.shape
        h = np.maximum(pre, 0.0)
    c3 = h.shape[0]
    reduced = params["reduce_w"] @ h.reshape(c3, -1)  # (c_r, n*s*s)
    # per-tile flattening wants tile-major order, so one small transpose here
    s2 = spec.map_size * spec.map_size
    flat = np.ascontiguousarray(
        reduced.reshape(spec.reduce_channels, n, s2).transpose(1, 0, 2)
    ).reshape(n, -1)
    features = flat @ params["embed_w"].T + params["embed_b"]
    if want_cache:
        cache["post3"] = h
        cache["flat"] = flat
        return features, cache
    return features


def extractor_backward(params, spec: ExtractorSpec, cache, dfeatures) -> dict[str, np.ndarray]:
    """Gradients of all extractor tensors given d(loss)/d(features)."""
    n = dfeatures.shape[0]
    grads: dict[str, np.ndarray] = {}
    grads["embed_w"] = dfeatures.T @ cache["flat"]
    grads["embed_b"] = dfeatures.sum(axis=0)
    dflat = dfeatures @ params["embed_w"]
    s2 = spec.map_size * spec.map_size
    post3 = cache["post3"]
    c3 = post3.shape[0]
    dreduced = np.ascontiguousarray(
        dflat.reshape(n, spec.reduce_channels, s2).transpose(1, 0, 2)
    ).reshape(spec.reduce_channels, -1)
    grads["reduce_w"] = dreduced @ post3.reshape(c3, -1).T
    dh = (params["reduce_w"].T @ dreduced).reshape(c3, n, spec.map_size, spec.map_size)
    for i in (3, 2, 1):
        dpre = dh * cache[f"mask{i}"]
        dh, dw, db = _conv_backward(
            dpre, cache[f"shape{i}"], cache[f"cols{i}"], params[f"conv{i}_w"], need_dx=i > 1
        )
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = db
    return grads


def _head_init(rng, n_classes: int, feature_dim: int):
    w = _glorot(rng, (n_classes, feature_dim), feature_dim, n_classes)
    return w, np.zeros(n_classes)


def pretrain_extractor(
    params: dict[str, np.ndarray],
    spec: ExtractorSpec,
    tiles: np.ndarray,
    labels: np.ndarray,
    *,
    epochs: int,
    learning_rate: float,
    batch_size: int = 32,
    seed: int = 0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Supervised pretraining with a temporary linear softmax head.

    Returns (extractor params, head (w, b), per-epoch mean losses). The head is
    kept only so callers can measure tile-classification accuracy; the MIL
    model consumes the extractor weights alone.
    """
    tiles = check_tile_stack(tiles)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("degenerate labels")
    n_classes = int(classes.max()) + 1
    rng = as_rng(seed)
    head_w, head_b = _head_init(rng, n_classes, spec.feature_dim)
    params = {k: v.copy() for k, v in params.items()}
    opt = AdamOptimizer(list(EXTRACTOR_PARAM_NAMES) + ["head_w", "head_b"], beta1=beta1, beta2=beta2, eps=eps)
    history: list[float] = []
    n = len(tiles)
    with single_thread_blas():
        for _ in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch_size):
                batch = order[start : start + batch_size]
                features, cache = extractor_forward(params, spec, tiles[batch], want_cache=True)
                logits = features @ head_w.T + head_b
                probs = softmax(logits)
                picked = probs[np.arange(len(batch)), labels[batch]]
                loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
                total += loss * len(batch)
                dlogits = probs.copy()
                dlogits[np.arange(len(batch)), labels[batch]] -= 1.0
                dlogits /= len(batch)
                grads = extractor_backward(params, spec, cache, dlogits @ head_w)
                grads["head_w"] = dlogits.T @ features
                grads["head_b"] = dlogits.sum(axis=0)
                bundle = dict(params)
                bundle["head_w"] = head_w
                bundle["head_b"] = head_b
                opt.step(bundle, grads, learning_rate)
            history.append(total / n)
    return params, (head_w, head_b), history


class TileFeatureExtractor(TransformerMixin, BaseEstimator):
    """Trainable tile-to-feature map with an optional supervised warm-up.

    ``fit(X)`` initializes weights; ``fit(X, y)`` additionally pretrains on
    labeled tiles through a temporary linear head. ``transform`` returns the
    per-tile feature matrix, rows aligned to input order.
    """

    def __init__(
        self,
        input_size: int = 32,
        channels: tuple[int, int, int] = (8, 16, 32),
        reduce_channels: int = 8,
        feature_dim: int = 64,
        epochs: int = 30,
        batch_size: int = 32,
        learning_rate: float = 3e-3,
        seed: int = 0,
    ):
        self.input_size = input_size
        self.channels = channels
        self.reduce_channels = reduce_channels
        self.feature_dim = feature_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    @property
    def spec(self) -> ExtractorSpec:
        return ExtractorSpec(
            input_size=self.input_size,
            channels=tuple(self.channels),
            reduce_channels=self.reduce_channels,
            feature_dim=self.feature_dim,
        )

    def fit(self, X, y=None):
        spec = self.spec
        self.params_ = init_extractor(spec, derive_seed(self.seed, "extractor-init"))
        self.history_ = []
        self.head_ = None
        if y is not None and self.epochs > 0:
            self.params_, self.head_, self.history_ = pretrain_extractor(
                self.params_,
                spec,
                X,
                y,
                epochs=self.epochs,
                learning_rate=self.learning_rate,
                batch_size=self.batch_size,
                seed=derive_seed(self.seed, "extractor-pretrain"),
            )
        elif y is not None:
            labels = np.asarray(y)
            if np.unique(labels).size < 2:
                raise ValueError("degenerate labels")
            rng = as_rng(derive_seed(self.seed, "extractor-pretrain"))
            self.head_ = _head_init(rng, int(labels.max()) + 1, spec.feature_dim)
        return self

    def transform(self, X) -> np.ndarray:
        return extractor_forward(self.params_, self.spec, X)

    def predict(self, X) -> np.ndarray:
        """Tile-class predictions from the pretraining head."""
        if self.head_ is None:
            raise RuntimeError("extractor was fit without labels; no head available")
        head_w, head_b = self.head_
        logits = self.transform(X) @ head_w.T + head_b
        return logits.argmax(axis=1)
