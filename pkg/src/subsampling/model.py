"""LSTM encoder with a learned subsampler and an expectation-pooled softmax head.

    s_t = LSTM(x_t, s_{t-1})
    e_t = sigmoid(w_he . s_{t-k} + w_xe . x_{t-k} + b_e)       k = emission_index_offset
    y_m = softmax(w_y^T sum_n P[m, n] s_n + b_y)                 m = 0 .. T-1

With ``k = 1`` (the default) the emission at step ``t`` sees the previous
state and input, with zero padding at ``t = 0``. Parameters live in a plain
``dict`` of float64 arrays; gradients use the same keys. All functions take a
single sequence ``(T, 3)`` or a batch ``(B, T, 3)`` of one-hot inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import alignment_dp, alignment_dp_backward

logger = logging.getLogger(__name__)

HIDDEN = 100
N_SYMBOLS = 3
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("lstm_wx", "lstm_wh", "lstm_b", "w_he", "w_xe", "b_e", "w_y", "b_y")


def param_shapes(hidden: int = HIDDEN) -> dict[str, tuple[int, ...]]:
    # LSTM gate blocks are ordered input, forget, output, candidate
    return {
        "lstm_wx": (N_SYMBOLS, 4 * hidden),
        "lstm_wh": (hidden, 4 * hidden),
        "lstm_b": (4 * hidden,),
        "w_he": (hidden,),
        "w_xe": (N_SYMBOLS,),
        "b_e": (),
        "w_y": (hidden, N_SYMBOLS),
        "b_y": (N_SYMBOLS,),
    }


def init_params(seed, hidden: int = HIDDEN, scale: float = 0.08) -> dict[str, np.ndarray]:
    """Weights uniform on ``(-scale, scale)``; biases zero except forget gates at 1."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(hidden).items():
        if name in ("lstm_b", "b_e", "b_y"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-scale, scale, size=shape)
    params["lstm_b"][hidden : 2 * hidden] = 1.0
    return params


def check_params(params) -> int:
    """Validate names, shapes and finiteness; return the hidden size."""
    missing = set(PARAM_NAMES) - set(params)
    if missing:
        raise ValueError(f"missing parameters: {sorted(missing)}")
    hidden = np.shape(params["lstm_wh"])[0]
    for name, shape in param_shapes(hidden).items():
        if np.shape(params[name]) != shape:
            raise ValueError(f"{name} has shape {np.shape(params[name])}, expected {shape}")
        if not np.all(np.isfinite(params[name])):
            raise ValueError(f"{name} contains non-finite values")
    return hidden


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


@dataclass
class ForwardTrace:
    states: np.ndarray  # (B, T, H)
    emissions: np.ndarray  # (B, T)
    alignment: np.ndarray  # (B, T, T)
    logits: np.ndarray  # (B, T, 3)
    probs: np.ndarray  # (B, T, 3)
    batched: bool = True
    emission_index_offset: int = 1
    cache: dict = field(default_factory=dict, repr=False)

    def item(self, b: int) -> "ForwardTrace":
        """Unbatched view of one sequence (cache dropped)."""
        return ForwardTrace(
            self.states[b], self.emissions[b], self.alignment[b], self.logits[b],
            self.probs[b], batched=False, emission_index_offset=self.emission_index_offset,
        )


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 3
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != N_SYMBOLS or x.shape[1] < 1:
        raise ValueError(f"expected one-hot input of shape (T, 3) or (B, T, 3), got {x.shape}")
    if not (np.all((x == 0.0) | (x == 1.0)) and np.all(x.sum(axis=-1) == 1.0)):
        raise ValueError("input rows must be one-hot")
    return x, batched


def _shift(a):
    # a[:, t] -> a[:, t-1] with zeros at t = 0
    out = np.zeros_like(a)
    out[:, 1:] = a[:, :-1]
    return out


def forward(params, x, emission_index_offset: int = 1) -> ForwardTrace:
    if emission_index_offset not in (0, 1):
        raise ValueError("emission_index_offset must be 0 or 1")
    H = check_params(params)
    x, batched = _as_batch(x)
    B, T, _ = x.shape
    wh = params["lstm_wh"]

    xz = x @ params["lstm_wx"] + params["lstm_b"]
    gates = np.empty((B, T, 4 * H))
    cells = np.empty((B, T, H))
    states = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xz[:, t] + h @ wh
        ifo = sigmoid(z[:, : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c = ifo[:, H : 2 * H] * c + ifo[:, :H] * g
        h = ifo[:, 2 * H :] * np.tanh(c)
        gates[:, t, : 3 * H] = ifo
        gates[:, t, 3 * H :] = g
        cells[:, t] = c
        states[:, t] = h

    if emission_index_offset:
        s_src, x_src = _shift(states), _shift(x)
    else:
        s_src, x_src = states, x
    emissions = sigmoid(s_src @ params["w_he"] + x_src @ params["w_xe"] + params["b_e"])
    alignment = alignment_dp(emissions, T)
    pooled = alignment @ states
    logits = pooled @ params["w_y"] + params["b_y"]
    trace = ForwardTrace(
        states, emissions, alignment, logits, softmax(logits),
        batched=True, emission_index_offset=emission_index_offset,
        cache={"x": x, "gates": gates, "cells": cells, "pooled": pooled,
               "s_src": s_src, "x_src": x_src},
    )
    if batched:
        return trace
    out = trace.item(0)
    out.cache = trace.cache
    return out


def _target_weights(targets, t_prime: int, B: int, T: int):
    """Per-position loss weights (mean over each sequence's scored prefix) and target ids."""
    if len(targets) != B:
        raise ValueError(f"got {len(targets)} targets for a batch of {B}")
    if not 0 <= t_prime <= T:
        raise ValueError(f"t_prime={t_prime} must lie in [0, T={T}]")
    weights = np.zeros((B, T))
    ids = np.zeros((B, T), dtype=np.intp)
    for b, tgt in enumerate(targets):
        tgt = np.asarray(tgt, dtype=np.intp)
        if not 1 <= len(tgt) <= T:
            raise ValueError(f"target length {len(tgt)} outside [1, {T}]")
        n = min(t_prime, len(tgt))
        if n:
            weights[b, :n] = 1.0 / n
            ids[b, :n] = tgt[:n]
    return weights, ids


def loss(trace: ForwardTrace, target, t_prime: int) -> float:
    """Cross-entropy averaged over positions ``t < min(t_prime, len(target))``.

    For a batched trace ``target`` is a sequence of targets and the per-sequence
    losses are averaged. Positions past the target length are never scored.
    An empty scored range (``t_prime = 0``) gives 0.
    """
    probs = trace.probs if trace.batched else trace.probs[None]
    B, T, _ = probs.shape
    weights, ids = _target_weights(target if trace.batched else [target], t_prime, B, T)
    if not weights.any():
        logger.warning("empty loss range (t_prime=%d); loss is 0", t_prime)
        return 0.0
    picked = np.take_along_axis(probs, ids[..., None], axis=-1)[..., 0]
    nll = -np.log(np.where(weights > 0, picked, 1.0))
    return float((weights * nll).sum() / B)


def backward(params, x, target, t_prime: int, emission_index_offset: int = 1):
    """Loss and its exact gradient for every parameter.

    Returns ``(loss, grads)``; ``grads`` has the keys and shapes of ``params``.
    """
    trace = forward(params, x, emission_index_offset)
    batched = trace.batched
    value = loss(trace, target, t_prime)
    cache = trace.cache
    x = cache["x"]
    B, T, H = x.shape[0], x.shape[1], params["lstm_wh"].shape[0]
    weights, ids = _target_weights(target if batched else [target], t_prime, B, T)

    states = trace.states if batched else trace.states[None]
    e = trace.emissions if batched else trace.emissions[None]
    P = trace.alignment if batched else trace.alignment[None]
    probs = trace.probs if batched else trace.probs[None]

    d_logits = probs.copy()
    np.put_along_axis(d_logits, ids[..., None], np.take_along_axis(d_logits, ids[..., None], -1) - 1.0, -1)
    d_logits *= (weights / B)[..., None]

    grads = {}
    pooled = cache["pooled"]
    grads["w_y"] = pooled.reshape(-1, H).T @ d_logits.reshape(-1, N_SYMBOLS)
    grads["b_y"] = d_logits.sum(axis=(0, 1))
    d_pooled = d_logits @ params["w_y"].T
    d_states = np.swapaxes(P, 1, 2) @ d_pooled
    d_align = d_pooled @ np.swapaxes(states, 1, 2)
    d_e = alignment_dp_backward(e, d_align)

    d_pre = d_e * e * (1.0 - e)
    grads["b_e"] = np.array(d_pre.sum())
    grads["w_he"] = np.einsum("bt,bth->h", d_pre, cache["s_src"])
    grads["w_xe"] = np.einsum("bt,btk->k", d_pre, cache["x_src"])
    if emission_index_offset:
        d_states[:, :-1] += d_pre[:, 1:, None] * params["w_he"]
    else:
        d_states += d_pre[..., None] * params["w_he"]

    gates, cells = cache["gates"], cache["cells"]
    wh_t = params["lstm_wh"].T
    d_z = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, o, g = (gates[:, t, k * H : (k + 1) * H] for k in range(4))
        c_prev = cells[:, t - 1] if t else np.zeros((B, H))
        tc = np.tanh(cells[:, t])
        dh = d_states[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = d_z[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ wh_t
    h_prev = _shift(states)
    grads["lstm_wh"] = h_prev.reshape(-1, H).T @ d_z.reshape(-1, 4 * H)
    grads["lstm_wx"] = x.reshape(-1, N_SYMBOLS).T @ d_z.reshape(-1, 4 * H)
    grads["lstm_b"] = d_z.sum(axis=(0, 1))
    return value, {k: grads[k] for k in PARAM_NAMES}


def readout(trace: ForwardTrace):
    """Per-position predicted symbols and alignment row masses of one sequence.

    Row ``m`` of the alignment sums to the probability that at least ``m + 1``
    elements were kept. Training never forces that mass towards 0 or 1, so the
    symbols are reported for every position and the caller decides where the
    output ends.
    """
    if trace.batched:
        raise ValueError("readout takes an unbatched trace")
    symbols = tuple(int(v) for v in trace.probs.argmax(axis=1))
    return symbols, trace.alignment.sum(axis=1)


def save_checkpoint(path, params, meta: dict | None = None) -> None:
    """Write parameters as a versioned text checkpoint.

    Layout::

        subsampling-checkpoint <version>
        meta <key> <value>            (zero or more)
        tensor <name> <dim> <dim> ... (one per tensor, scalar has no dims)
        end_header
        <values, one per line, row-major, tensors in header order, %.17g>
    """
    check_params(params)
    lines = [f"subsampling-checkpoint {CHECKPOINT_VERSION}"]
    for key, value in (meta or {}).items():
        lines.append(f"meta {key} {value}")
    for name in PARAM_NAMES:
        lines.append(" ".join(["tensor", name, *map(str, np.shape(params[name]))]))
    lines.append("end_header")
    for name in PARAM_NAMES:
        lines.extend(format(v, ".17g") for v in np.ravel(params[name]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split()[:1] != ["subsampling-checkpoint"]:
        raise ValueError(f"{path}: not a subsampling checkpoint")
    if lines[0].split()[1:] != [str(CHECKPOINT_VERSION)]:
        raise ValueError(f"{path}: unsupported checkpoint version {lines[0]!r}")
    meta, specs = {}, []
    pos = 1
    while pos < len(lines) and lines[pos] != "end_header":
        parts = lines[pos].split()
        if parts[0] == "meta" and len(parts) == 3:
            meta[parts[1]] = parts[2]
        elif parts[0] == "tensor" and len(parts) >= 2:
            specs.append((parts[1], tuple(int(d) for d in parts[2:])))
        else:
            raise ValueError(f"{path}:{pos + 1}: bad header line {lines[pos]!r}")
        pos += 1
    if pos == len(lines):
        raise ValueError(f"{path}: missing end_header")
    values = np.array([float(v) for v in lines[pos + 1 :] if v.strip()])
    need = sum(int(np.prod(shape)) for _, shape in specs)
    if values.size != need:
        raise ValueError(f"{path}: expected {need} values, found {values.size}")
    params, offset = {}, 0
    for name, shape in specs:
        size = int(np.prod(shape))
        params[name] = values[offset : offset + size].reshape(shape)
        offset += size
    check_params(params)
    return params, meta
