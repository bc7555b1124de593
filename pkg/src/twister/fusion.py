"""Alternative text-conditioning layers sharing the Twisting layer's interface.

Every layer is called as ``layer(x, f_t, trace=None)`` with an ``(h, w, C)``
image grid and an ``(L, C_t)`` token sequence and returns an ``(h, w, C)`` grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import ScanDirection, fold, unfold
from .ssm import SelectiveSSM
from .tensor import as_tensor, layer_norm, matmul, softmax
from .twisting import TwistingLayer, _uniform, pool_text


class FusionVariant(str, Enum):
    TWISTER = "twister"
    IN_CONTEXT = "in_context"
    ATTENTION = "attention"
    NORM_ADAPT = "norm_adapt"


def in_context(f_i: np.ndarray, f_t_projected: np.ndarray, ssm: SelectiveSSM, parallel: bool = True) -> np.ndarray:
    """Scan ``[text tokens | row-major image tokens]``; read back the image positions.

    ``f_t_projected`` must already share the image channel dimension.
    """
    f_i = as_tensor(f_i)
    h, w, c = f_i.shape
    text = as_tensor(f_t_projected).reshape(-1, c)
    seq = np.concatenate([text, unfold(f_i, ScanDirection.ROW_FORWARD)], axis=0)
    out = ssm(seq, parallel=parallel)
    return fold(out[text.shape[0] :], ScanDirection.ROW_FORWARD, h, w)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-head scaled dot-product attention; returns ``(values, weights)``."""
    scores = matmul(q, np.ascontiguousarray(as_tensor(k).T)) / np.sqrt(q.shape[-1])
    weights = softmax(scores)
    return matmul(weights, v), weights


def cross_attention(
    f_i: np.ndarray, f_t: np.ndarray, w_q: np.ndarray, w_k: np.ndarray, w_v: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Image queries attend over text keys/values; result is added to the image.

    Returns the updated grid and the ``(h, w, L)`` attention weights.
    """
    f_i = as_tensor(f_i)
    f_t = as_tensor(f_t)
    h, w, _ = f_i.shape
    q = matmul(f_i.reshape(h * w, -1), w_q)
    vals, weights = attention(q, matmul(f_t, w_k), matmul(f_t, w_v))
    return f_i + vals.reshape(h, w, -1), weights.reshape(h, w, -1)


def norm_adapt(f_i: np.ndarray, f_t: np.ndarray, w_film: np.ndarray, b_film: np.ndarray) -> np.ndarray:
    """FiLM on normalized features: ``(1 + dgamma) * LN(f_i) + beta``.

    ``w_film`` maps the pooled text vector to ``[dgamma | beta]`` (2C values).
    """
    f_i = as_tensor(f_i)
    c = f_i.shape[-1]
    film = matmul(pool_text(f_t)[None, :], w_film)[0] + b_film
    dgamma, beta = film[:c], film[c:]
    return (1.0 + dgamma) * layer_norm(f_i) + beta


@dataclass(frozen=True)
class InContextLayer:
    text_proj: np.ndarray  # (C_t, C)
    ssm: SelectiveSSM

    @classmethod
    def init(cls, c: int, c_t: int, state_dim: int, rng: np.random.Generator) -> InContextLayer:
        return cls(_uniform(rng, c_t, (c_t, c)), SelectiveSSM.init(c, state_dim, rng))

    def __call__(self, x, f_t, trace=None):
        return in_context(x, matmul(as_tensor(f_t), self.text_proj), self.ssm)


@dataclass(frozen=True)
class AttentionLayer:
    w_q: np.ndarray  # (C, d_k)
    w_k: np.ndarray  # (C_t, d_k)
    w_v: np.ndarray  # (C_t, C)

    @classmethod
    def init(cls, c: int, c_t: int, rng: np.random.Generator, d_k: int | None = None) -> AttentionLayer:
        d_k = d_k or c
        return cls(_uniform(rng, c, (c, d_k)), _uniform(rng, c_t, (c_t, d_k)), _uniform(rng, c_t, (c_t, c)))

    def __call__(self, x, f_t, trace=None):
        out, weights = cross_attention(x, f_t, self.w_q, self.w_k, self.w_v)
        if trace is not None:
            trace["attention"] = weights
        return out


@dataclass(frozen=True)
class NormAdaptLayer:
    w_film: np.ndarray  # (C_t, 2C)
    b_film: np.ndarray  # (2C,)

    @classmethod
    def init(cls, c: int, c_t: int, rng: np.random.Generator, zero: bool = False) -> NormAdaptLayer:
        if zero:
            return cls(np.zeros((c_t, 2 * c)), np.zeros(2 * c))
        return cls(_uniform(rng, c_t, (c_t, 2 * c)), np.zeros(2 * c))

    def __call__(self, x, f_t, trace=None):
        return norm_adapt(x, f_t, self.w_film, self.b_film)


FusionLayer = TwistingLayer | InContextLayer | AttentionLayer | NormAdaptLayer
