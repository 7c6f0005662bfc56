"""Attention pooling head for multiple-instance bags.

Per-instance logit u . tanh(W_v v_i), softmax over the bag, attention-weighted
feature pooling, and a linear softmax classifier. Gradients are derived by
hand and validated against central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .extractor import ExtractorSpec, extractor_backward, extractor_forward
from .optim import log_softmax_pick, softmax
from .validation import as_rng, check_matrix, check_tile_stack, check_vector

ATTENTION_PARAM_NAMES = ("att_wv", "att_u")
CLASSIFIER_PARAM_NAMES = ("clf_w", "clf_b")
HEAD_PARAM_NAMES = ATTENTION_PARAM_NAMES + CLASSIFIER_PARAM_NAMES


def init_head(rng: np.random.Generator, n_classes: int, hidden_dim: int, feature_dim: int):
    """Glorot-uniform attention and classifier weights, zero biases."""
    h, d, n = hidden_dim, feature_dim, n_classes
    a_wv = np.sqrt(6.0 / (h + d))
    a_u = np.sqrt(6.0 / (h + 1))
    a_wc = np.sqrt(6.0 / (n + d))
    return {
        "att_wv": rng.uniform(-a_wv, a_wv, size=(h, d)),
        "att_u": rng.uniform(-a_u, a_u, size=h),
        "clf_w": rng.uniform(-a_wc, a_wc, size=(n, d)),
        "clf_b": np.zeros(n),
    }


def attention_weights(features, w_v, u) -> np.ndarray:
    """Softmax attention over instances: alpha_i from u . tanh(W_v v_i)."""
    V = check_matrix(features, "features")
    if V.shape[0] == 0:
        raise ValueError("empty bag")
    logits = np.tanh(V @ w_v.T) @ u
    return softmax(logits)


def bag_embedding(features, alpha) -> np.ndarray:
    """Attention-weighted instance pooling z = sum_i alpha_i v_i."""
    V = check_matrix(features, "features")
    a = check_vector(alpha, "alpha")
    if len(a) != V.shape[0]:
        raise ValueError("alpha length must match instance count")
    return a @ V


def class_probabilities(embedding, w_c, b_c) -> np.ndarray:
    """softmax(W_c z + b_c), positive and summing to one."""
    z = check_vector(embedding, "embedding")
    return softmax(w_c @ z + b_c)


def instance_dropout(tiles, rate: float, mean_rgb, rng) -> tuple[np.ndarray, np.ndarray]:
    """Replace instances with a constant mean-color tile, independently per
    instance with probability ``rate``; if every instance would be dropped one
    survivor is restored uniformly at random.

    Training-time only; evaluation paths must not call this. Returns the new
    tile stack and the boolean dropped mask.
    """
    arr = check_tile_stack(tiles)
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    rng = as_rng(rng)
    k = arr.shape[0]
    dropped = rng.random(k) < rate
    if dropped.all():
        dropped[int(rng.integers(k))] = False
    if not dropped.any():
        return arr, dropped
    out = arr.copy()
    out[dropped] = np.asarray(mean_rgb, dtype=np.uint8)[None, None, :]
    return out, dropped


def mil_forward(params, spec: ExtractorSpec, tiles):
    """Full bag forward pass: (class probabilities, attention, features)."""
    features = extractor_forward(params, spec, tiles)
    alpha = attention_weights(features, params["att_wv"], params["att_u"])
    z = bag_embedding(features, alpha)
    probs = class_probabilities(z, params["clf_w"], params["clf_b"])
    return probs, alpha, features


def mil_loss(params, spec: ExtractorSpec, tiles, label: int) -> float:
    """Cross-entropy of the bag label under the full forward pass."""
    features = extractor_forward(params, spec, tiles)
    alpha = attention_weights(features, params["att_wv"], params["att_u"])
    z = bag_embedding(features, alpha)
    logits = params["clf_w"] @ z + params["clf_b"]
    loss = -log_softmax_pick(logits, int(label))
    if not np.isfinite(loss):
        raise FloatingPointError("numerical failure")
    return loss


def mil_loss_and_grads(params, spec: ExtractorSpec, tiles, label: int):
    """Bag cross-entropy and gradients for every tensor, extractor included."""
    label = int(label)
    features, cache = extractor_forward(params, spec, tiles, want_cache=True)
    w_v, u = params["att_wv"], params["att_u"]
    w_c, b_c = params["clf_w"], params["clf_b"]

    T = np.tanh(features @ w_v.T)  # (k, h)
    att_logits = T @ u
    alpha = softmax(att_logits)
    z = alpha @ features
    logits = w_c @ z + b_c
    probs = softmax(logits)
    loss = -log_softmax_pick(logits, label)
    if not np.isfinite(loss):
        raise FloatingPointError("numerical failure")

    dlogits = probs.copy()
    dlogits[label] -= 1.0
    grads: dict[str, np.ndarray] = {
        "clf_w": np.outer(dlogits, z),
        "clf_b": dlogits,
    }
    dz = w_c.T @ dlogits
    dalpha = features @ dz
    dfeatures = np.outer(alpha, dz)
    datt = alpha * (dalpha - float(alpha @ dalpha))  # softmax Jacobian
    grads["att_u"] = T.T @ datt
    dpre = np.outer(datt, u) * (1.0 - T * T)
    grads["att_wv"] = dpre.T @ features
    dfeatures += dpre @ w_v
    grads.update(extractor_backward(params, spec, cache, dfeatures))
    return loss, grads
