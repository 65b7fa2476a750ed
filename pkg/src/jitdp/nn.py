"""Minimal self-contained neural machinery on float64 numpy arrays.

Layers: embedding lookup, textCNN (convolution over token windows with
ReLU and per-filter max-pooling), a two-logit fully connected classifier
with exponential normalization, dropout, class-weighted cross-entropy.
Training uses bias-corrected Adam. Every layer has a hand-written backward
pass; finite_diff_check verifies analytic gradients against central
differences.

Parameters live in a flat dict of name -> ndarray so the optimizer, the
checkpoint format, and the gradient checker stay generic. Inputs to the
batched layers carry a leading batch axis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

Params = dict


def glorot_uniform(rng, shape) -> np.ndarray:
    fan_out = shape[0]
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def relu(x):
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------


def embedding_forward(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if ids.min() < 0 or ids.max() >= table.shape[0]:
        raise ValueError(f"token id out of range [0, {table.shape[0]})")
    return table[ids]


def embedding_backward(d_out: np.ndarray, ids: np.ndarray, vocab_size: int) -> np.ndarray:
    grad = np.zeros((vocab_size, d_out.shape[-1]))
    np.add.at(grad, ids.reshape(-1), d_out.reshape(-1, d_out.shape[-1]))
    return grad


# ---------------------------------------------------------------------------
# textCNN: per window size k, a filter bank (n_k, k, d_in) slides over the
# sequence; each filter's ReLU response is max-pooled over positions and the
# pooled features of all banks are concatenated.
# ---------------------------------------------------------------------------


def textcnn_init(rng, prefix: str, d_in: int, windows, filters_total: int) -> Params:
    params = {}
    for i, k in enumerate(windows):
        n_k = filters_total // len(windows) + (1 if i < filters_total % len(windows) else 0)
        if n_k == 0:
            continue
        params[f"{prefix}.w{k}"] = glorot_uniform(rng, (n_k, k, d_in))
        params[f"{prefix}.b{k}"] = np.zeros(n_k)
    return params


def textcnn_output_dim(params: Params, prefix: str) -> int:
    return sum(v.shape[0] for n, v in params.items() if n.startswith(f"{prefix}.w"))


def _window_view(x: np.ndarray, k: int) -> np.ndarray:
    # (B, L, d) -> (B, L - k + 1, k * d)
    view = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # (B, P, d, k)
    b, p = view.shape[0], view.shape[1]
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(b, p, -1)


def textcnn_forward(params: Params, prefix: str, x: np.ndarray,
                    embedding: np.ndarray | None = None):
    """x is either (B, L) int token ids (embedding required) or (B, L, d_in)
    vectors. Returns (z, cache) with z of shape (B, total filters).
    Sequences shorter than the largest window are zero-extended."""
    ids = None
    if x.ndim == 2 and np.issubdtype(x.dtype, np.integer):
        if embedding is None:
            raise ValueError("token-id input needs an embedding table")
        ids = x
        x = embedding_forward(embedding, ids)
    windows = sorted(int(n.rsplit(".w", 1)[1]) for n in params if n.startswith(f"{prefix}.w"))
    orig_len = x.shape[1]
    if orig_len < max(windows):
        pad = np.zeros((x.shape[0], max(windows) - orig_len, x.shape[2]))
        x = np.concatenate([x, pad], axis=1)
    outs, caches = [], []
    for k in windows:
        w = params[f"{prefix}.w{k}"]
        b = params[f"{prefix}.b{k}"]
        win = _window_view(x, k)  # (B, P, k*d)
        pre = win @ w.reshape(w.shape[0], -1).T + b  # (B, P, n_k)
        act = relu(pre)
        arg = act.argmax(axis=1)  # (B, n_k)
        pooled = np.take_along_axis(act, arg[:, None, :], axis=1)[:, 0, :]
        pre_at_max = np.take_along_axis(pre, arg[:, None, :], axis=1)[:, 0, :]
        outs.append(pooled)
        caches.append((k, arg, pre_at_max))
    z = np.concatenate(outs, axis=1)
    cache = {"x": x, "ids": ids, "orig_len": orig_len, "banks": caches, "prefix": prefix}
    return z, cache


def textcnn_backward(params: Params, cache, d_z: np.ndarray):
    """Returns (d_x, grads) where d_x is the gradient w.r.t. the input
    vector sequence (the embedded tokens, for token-id input), trimmed to
    the original length. Callers with id input fold d_x into the embedding
    table via embedding_backward with cache['ids']."""
    x = cache["x"]
    prefix = cache["prefix"]
    batch, length, d_in = x.shape
    d_x = np.zeros_like(x)
    grads = {}
    col = 0
    rows = np.arange(batch)[:, None]
    for k, arg, pre_at_max in cache["banks"]:
        w = params[f"{prefix}.w{k}"]
        n_k = w.shape[0]
        d_pool = d_z[:, col : col + n_k]
        col += n_k
        d_pre = d_pool * (pre_at_max > 0)  # (B, n_k)
        win = _window_view(x, k)  # (B, P, k*d)
        sel = np.take_along_axis(win, arg[:, :, None], axis=1)  # (B, n_k, k*d)
        grads[f"{prefix}.w{k}"] = np.einsum("bf,bfj->fj", d_pre, sel).reshape(w.shape)
        grads[f"{prefix}.b{k}"] = d_pre.sum(axis=0)
        contrib = d_pre[:, :, None] * w.reshape(n_k, -1)[None, :, :]  # (B, n_k, k*d)
        d_win = np.zeros_like(win)
        np.add.at(d_win, (rows, arg), contrib)
        d_win = d_win.reshape(batch, win.shape[1], k, d_in)
        for j in range(k):
            d_x[:, j : j + win.shape[1], :] += d_win[:, :, j, :]
    return d_x[:, : cache["orig_len"], :], grads


# ---------------------------------------------------------------------------
# Fully connected classifier: ReLU hidden layer, two output logits
# normalized to a probability pair (prob_clean, prob_defective).
# ---------------------------------------------------------------------------


def classifier_init(rng, prefix: str, d_in: int, hidden: int) -> Params:
    return {
        f"{prefix}.wh": glorot_uniform(rng, (hidden, d_in)),
        f"{prefix}.bh": np.zeros(hidden),
        f"{prefix}.wo": glorot_uniform(rng, (2, hidden)),
        f"{prefix}.bo": np.zeros(2),
    }


def classifier_forward(params: Params, prefix: str, z: np.ndarray):
    if z.shape[1] != params[f"{prefix}.wh"].shape[1]:
        raise ValueError(
            f"classifier expects dim {params[f'{prefix}.wh'].shape[1]}, got {z.shape[1]}"
        )
    pre_h = z @ params[f"{prefix}.wh"].T + params[f"{prefix}.bh"]
    hidden = relu(pre_h)
    logits = hidden @ params[f"{prefix}.wo"].T + params[f"{prefix}.bo"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    cache = {"z": z, "pre_h": pre_h, "hidden": hidden, "prefix": prefix}
    return probs, cache


def classifier_backward(params: Params, cache, d_logits: np.ndarray):
    prefix = cache["prefix"]
    hidden = cache["hidden"]
    grads = {
        f"{prefix}.wo": d_logits.T @ hidden,
        f"{prefix}.bo": d_logits.sum(axis=0),
    }
    d_hidden = d_logits @ params[f"{prefix}.wo"]
    d_pre = d_hidden * (cache["pre_h"] > 0)
    grads[f"{prefix}.wh"] = d_pre.T @ cache["z"]
    grads[f"{prefix}.bh"] = d_pre.sum(axis=0)
    d_z = d_pre @ params[f"{prefix}.wh"]
    return d_z, grads


# ---------------------------------------------------------------------------
# Loss and regularization
# ---------------------------------------------------------------------------


def cross_entropy(probs, label: int, class_weights=(1.0, 1.0)):
    """Single example: loss = -weight(label) * log(prob_label); gradient is
    with respect to the logits feeding the normalization."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    probs = np.asarray(probs, dtype=np.float64)
    w = float(class_weights[label])
    onehot = np.zeros(2)
    onehot[label] = 1.0
    loss = -w * np.log(probs[label])
    d_logits = w * (probs - onehot)
    return float(loss), d_logits


def cross_entropy_batch(probs: np.ndarray, labels: np.ndarray, class_weights=(1.0, 1.0)):
    """Mean class-weighted cross-entropy over a batch; gradient w.r.t. logits."""
    n = len(labels)
    w = np.asarray(class_weights, dtype=np.float64)[labels]
    picked = probs[np.arange(n), labels]
    loss = float(np.mean(-w * np.log(picked)))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    d_logits = w[:, None] * (probs - onehot) / n
    return loss, d_logits


def dropout(x: np.ndarray, rate: float, training: bool, rng=None):
    """Inverted dropout; identity in evaluation mode. Returns (y, mask).
    rng is a Generator or a plain int seed."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("training-mode dropout needs an rng or seed")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: Params, grads: Params) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.t += 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for '{name}'")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for '{name}'")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1 - state.beta1) * (g - m)
        v += (1 - state.beta2) * (g * g - v)
        m_hat = m / (1 - state.beta1**state.t)
        v_hat = v / (1 - state.beta2**state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def finite_diff_check(loss_and_grads, params: Params, eps: float = 1e-5,
                      max_coords_per_param: int | None = None, seed: int = 0) -> float:
    """Compare analytic gradients against central differences.

    loss_and_grads() evaluates the model at the current params and returns
    (scalar loss, grads dict). Probes every coordinate unless a per-param
    sample cap is given. Returns the max relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    loss0, grads = loss_and_grads()
    if not np.isfinite(loss0):
        raise FloatingPointError("non-finite loss at the probe point")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in sorted(params):
        if name not in grads:
            continue
        p = params[name]
        flat = p.reshape(-1)
        size = flat.size
        if max_coords_per_param is not None and size > max_coords_per_param:
            idxs = rng.choice(size, size=max_coords_per_param, replace=False)
        else:
            idxs = range(size)
        analytic = grads[name].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            plus, _ = loss_and_grads()
            flat[i] = orig - eps
            minus, _ = loss_and_grads()
            flat[i] = orig
            numeric = (plus - minus) / (2 * eps)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint container: UTF-8 text manifest (version, one "name shape" line
# per parameter, payload checksum), a '---' separator, then the raw
# little-endian float64 arrays concatenated in manifest order.
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = "jitdp-ckpt v1"


def save_params(path, params: Params) -> None:
    names = sorted(params)
    payload = b"".join(np.ascontiguousarray(params[n], dtype="<f8").tobytes() for n in names)
    lines = [CHECKPOINT_VERSION]
    for n in names:
        dims = ",".join(str(d) for d in params[n].shape)
        lines.append(f"{n} {dims}")
    lines.append(f"checksum {hashlib.sha256(payload).hexdigest()}")
    header = ("\n".join(lines) + "\n---\n").encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(header + payload)


def load_params(path) -> Params:
    with open(path, "rb") as handle:
        blob = handle.read()
    header, _, payload = blob.partition(b"\n---\n")
    lines = header.decode("utf-8").split("\n")
    if lines[0] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {lines[0]!r}")
    stated = lines[-1].split(" ", 1)[1]
    if hashlib.sha256(payload).hexdigest() != stated:
        raise ValueError("checkpoint payload checksum mismatch")
    params = {}
    offset = 0
    for line in lines[1:-1]:
        name, dims = line.split(" ")
        shape = tuple(int(d) for d in dims.split(",") if d)
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        params[name] = arr.astype(np.float64)
        offset += count * 8
    return params
