"""Aggregated multi-view attention and cross-modal attention sharing at toy
tensor scale, with a finite-difference gradient checker.

Single-head only; weights are materialized explicitly so the shared-weights
contract between the image and geometry branches is checkable bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AttentionBundle:
    """Query/key/value tensors with per-view token offsets."""

    queries: np.ndarray  # tokens_q x d_k
    keys: np.ndarray  # tokens_kv x d_k
    values: np.ndarray  # tokens_kv x d_v
    view_offsets: tuple[int, ...] = (0,)

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.float64)
        self.keys = np.asarray(self.keys, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.queries.ndim != 2 or self.keys.ndim != 2 or self.values.ndim != 2:
            raise ValueError("Q, K, V must be 2D")
        if self.queries.shape[1] != self.keys.shape[1]:
            raise ValueError("query/key width mismatch")
        if self.keys.shape[0] != self.values.shape[0]:
            raise ValueError("key/value token count mismatch")
        offsets = tuple(self.view_offsets)
        if offsets[0] != 0 or list(offsets) != sorted(set(offsets)):
            raise ValueError("view offsets must be strictly increasing from 0")
        if offsets[-1] >= self.keys.shape[0]:
            raise ValueError("view offset beyond token count")
        self.view_offsets = offsets

    @property
    def d_k(self) -> int:
        return self.queries.shape[1]


def aggregate_kv(target_kv, reference_kvs):
    """Token-axis concatenation [target, ref_1, ..., ref_N], offsets recorded."""
    k_t, v_t = (np.asarray(a, dtype=np.float64) for a in target_kv)
    ks, vs = [k_t], [v_t]
    offsets = [0]
    cursor = k_t.shape[0]
    for k_n, v_n in reference_kvs:
        k_n = np.asarray(k_n, dtype=np.float64)
        v_n = np.asarray(v_n, dtype=np.float64)
        if k_n.shape[1] != k_t.shape[1] or v_n.shape[1] != v_t.shape[1]:
            raise ValueError("reference feature width mismatch")
        ks.append(k_n)
        vs.append(v_n)
        offsets.append(cursor)
        cursor += k_n.shape[0]
    return np.concatenate(ks), np.concatenate(vs), tuple(offsets)


def attention_weights(queries: np.ndarray, keys: np.ndarray, d_k: int) -> np.ndarray:
    """Row-stochastic softmax over Q K^T / sqrt(d_k), max-shifted per row."""
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if queries.shape[1] != d_k or keys.shape[1] != d_k:
        raise ValueError("Q/K width must equal d_k")
    if not (np.all(np.isfinite(queries)) and np.all(np.isfinite(keys))):
        raise ValueError("non-finite attention inputs")
    logits = queries @ keys.T / np.sqrt(d_k)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights


def apply_attention(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-stochastic mixing of value rows."""
    weights = np.asarray(weights, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if weights.shape[1] != values.shape[0]:
        raise ValueError("weight/value token count mismatch")
    return weights @ values


def attend(queries, keys, values, d_k=None):
    d_k = queries.shape[1] if d_k is None else d_k
    return apply_attention(attention_weights(queries, keys, d_k), values)


def cross_modal_attention(
    image_bundle: AttentionBundle, geometry_values: np.ndarray
) -> np.ndarray:
    """Apply the image branch's attention weights to the geometry values.

    The weight matrix is computed once from the image queries/keys and is
    bit-identical to attention_weights(Q, K, d_k).
    """
    geometry_values = np.asarray(geometry_values, dtype=np.float64)
    if geometry_values.shape[0] != image_bundle.keys.shape[0]:
        raise ValueError("geometry value token count mismatch")
    weights = attention_weights(
        image_bundle.queries, image_bundle.keys, image_bundle.d_k
    )
    return apply_attention(weights, geometry_values)


def attention_gradients(queries, keys, values, grad_output):
    """Analytic gradients of softmax attention w.r.t. Q, K, V."""
    d_k = queries.shape[1]
    weights = attention_weights(queries, keys, d_k)
    grad_v = weights.T @ grad_output
    grad_w = grad_output @ values.T
    # Softmax Jacobian applied row-wise.
    grad_s = weights * (grad_w - (grad_w * weights).sum(axis=1, keepdims=True))
    grad_q = grad_s @ keys / np.sqrt(d_k)
    grad_k = grad_s.T @ queries / np.sqrt(d_k)
    return grad_q, grad_k, grad_v


def gradient_check(loss_fn, queries, keys, values, epsilon: float = 1e-4) -> float:
    """Max relative error of analytic vs central-difference gradients.

    loss_fn maps the attention output to (scalar loss, d loss / d output).
    """
    if not (1e-5 <= epsilon <= 1e-2):
        raise ValueError("epsilon out of the supported range")
    queries = np.asarray(queries, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    output = attend(queries, keys, values)
    _, grad_output = loss_fn(output)
    analytic = attention_gradients(queries, keys, values, grad_output)

    max_err = 0.0
    for arr, grad in zip((queries, keys, values), analytic):
        flat = arr.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + epsilon
            plus, _ = loss_fn(attend(queries, keys, values))
            flat[i] = saved - epsilon
            minus, _ = loss_fn(attend(queries, keys, values))
            flat[i] = saved
            numeric = (plus - minus) / (2.0 * epsilon)
            a = grad.ravel()[i]
            denom = max(abs(a), abs(numeric), 1e-6)
            max_err = max(max_err, abs(a - numeric) / denom)
    return max_err
