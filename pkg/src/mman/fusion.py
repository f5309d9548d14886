"""Per-modality attention pooling and the linear fusion layer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

MODALITIES = ("tok", "ast", "cfg")
DEFAULT_SCORE_KIND = {"tok": "softmax", "ast": "softmax", "cfg": "sigmoid"}


class AllMasked(ValueError):
    pass


class NoModalityEnabled(ValueError):
    pass


def init_attention(params, modality, hidden, rng):
    s = 1.0 / np.sqrt(hidden)
    params.add(f"attn.{modality}.f.W", rng.uniform(-s, s, size=(hidden, hidden)))
    params.add(f"attn.{modality}.f.b", np.zeros(hidden))
    params.add(f"attn.{modality}.u", rng.uniform(-0.1, 0.1, size=(hidden,)))


def init_fusion(params, hidden, out_dim, rng):
    s = 1.0 / np.sqrt(3 * hidden)
    params.add("fusion.W", rng.uniform(-s, s, size=(3 * hidden, out_dim)))


def attention_scores(states, params, modality):
    """``<f(h_i), u>`` for every element: ``[B, n]``."""
    H = states.shape[-1]
    proj = T.add(T.matmul(states, params[f"attn.{modality}.f.W"]), params[f"attn.{modality}.f.b"])
    u = T.reshape(params[f"attn.{modality}.u"], (H, 1))
    return T.reshape(T.matmul(proj, u), states.shape[:-1])


def attend_softmax(enc, params, modality):
    mask = np.asarray(enc.mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise AllMasked(f"{modality}: every element is masked")
    return T.masked_softmax(attention_scores(enc.states, params, modality), mask)


def attend_sigmoid(enc, params, modality):
    mask = np.asarray(enc.mask, dtype=bool)
    if mask.shape[-1] == 0:
        raise AllMasked(f"{modality}: no elements")
    alpha = T.sigmoid(attention_scores(enc.states, params, modality))
    return T.mul(alpha, mask.astype(enc.states.dtype))


def attend(enc, params, modality, score_kind=None):
    kind = score_kind or DEFAULT_SCORE_KIND[modality]
    if kind == "softmax":
        return attend_softmax(enc, params, modality)
    if kind == "sigmoid":
        return attend_sigmoid(enc, params, modality)
    raise ValueError(f"unknown score kind {kind!r}")


def pool(enc, alpha):
    """``sum_i alpha_i h_i`` -> ``[B, H]``."""
    B, n, _ = enc.states.shape
    return T.sum_axis(T.mul(T.reshape(alpha, (B, n, 1)), enc.states), axis=1)


@dataclass
class FusionResult:
    code: T.Tensor
    pooled: dict
    weights: dict = field(default_factory=dict)


def fuse(outputs, params, enabled=MODALITIES, attention=True, score_kinds=None):
    """Code vector ``W [v_tok; v_ast; v_cfg]`` for a batch.

    With attention each ``v`` is the attention-pooled state; without it the
    encoder summary is used.  Disabled modalities contribute a zero block.
    """
    enabled = [m for m in MODALITIES if m in enabled]
    if not enabled:
        raise NoModalityEnabled("at least one modality must be enabled")
    W = params["fusion.W"]
    H = W.shape[0] // 3
    B = outputs[enabled[0]].summary.shape[0]
    score_kinds = score_kinds or DEFAULT_SCORE_KIND
    blocks, pooled, weights = [], {}, {}
    for m in MODALITIES:
        if m not in enabled:
            blocks.append(T.Tensor(np.zeros((B, H), dtype=W.dtype)))
            continue
        enc = outputs[m]
        if attention:
            alpha = attend(enc, params, m, score_kinds.get(m))
            weights[m] = alpha
            v = pool(enc, alpha)
        else:
            v = enc.summary
        pooled[m] = v
        blocks.append(v)
    return FusionResult(T.matmul(T.concat(blocks, axis=-1), W), pooled, weights)
