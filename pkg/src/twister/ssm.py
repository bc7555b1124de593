"""Diagonal state-space kernels.

Conventions: a sequence input ``x`` has shape ``(L, *batch)``; discrete
parameters ``a_bar`` / ``b_bar`` and read-out ``c`` are either static vectors
of shape ``(N,)`` or per-step arrays of shape ``(L, *batch, N)`` (any axis may
be 1 and is broadcast). The hidden state has shape ``(*batch, N)``.

Recurrence::

    h_t = a_bar_t * h_{t-1} + b_bar_t * x_t
    y_t = <c_t, h_t>
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .tensor import DTYPE, ShapeError, as_tensor, matmul, softplus


@dataclass(frozen=True)
class SsmParams:
    """Continuous diagonal SSM: ``h' = diag(a_diag) h + b x``, ``y = c . h``.

    ``delta`` is a positive scalar or a per-step vector of length L.
    """

    a_diag: np.ndarray
    b: np.ndarray
    c: np.ndarray
    delta: float | np.ndarray


@dataclass(frozen=True)
class DiscreteSsm:
    a_bar: np.ndarray
    b_bar: np.ndarray

    @property
    def is_static(self) -> bool:
        return np.ndim(self.a_bar) <= 1 and np.ndim(self.b_bar) <= 1


class ScanGrads(NamedTuple):
    x: np.ndarray
    b_bar: np.ndarray
    a_bar: np.ndarray
    c: np.ndarray
    h0: np.ndarray


def zoh_input_factor(delta, a) -> np.ndarray:
    """``(exp(delta*a) - 1) / a`` evaluated without the ``a -> 0`` singularity.

    Written as ``delta * expm1(z) / z`` with ``z = delta*a``; the ratio is
    exactly 1 when ``z == 0``, so ``a == 0`` gives ``delta`` and ``delta == 0``
    gives 0.
    """
    delta = as_tensor(delta)
    a = as_tensor(a)
    z = delta * a
    zero = z == 0.0
    safe = np.where(zero, 1.0, z)
    ratio = np.where(zero, 1.0, np.expm1(safe) / safe)
    return delta * ratio


def discretize(a, b, delta) -> DiscreteSsm:
    """Zero-order-hold discretization with broadcasting over all arguments."""
    delta = as_tensor(delta)
    if np.any(delta < 0):
        raise ValueError("delta must be non-negative")
    a = as_tensor(a)
    b = as_tensor(b)
    a_bar = np.exp(delta * a)
    b_bar = zoh_input_factor(delta, a) * b
    return DiscreteSsm(a_bar, b_bar)


def discretize_zoh(params: SsmParams) -> DiscreteSsm:
    """Discretize ``params``; a per-step ``delta`` of length L yields ``(L, N)`` arrays."""
    delta = as_tensor(params.delta)
    if delta.ndim > 1:
        raise ShapeError(f"delta must be a scalar or a length-L vector, got shape {delta.shape}")
    if delta.ndim == 1:
        delta = delta[:, None]
    return discretize(params.a_diag, params.b, delta)


def _threads() -> int:
    env = os.environ.get("TWISTER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _per_step(p, x: np.ndarray, name: str) -> np.ndarray:
    """Broadcast a static ``(N,)`` or per-step ``(L, *batch, N)`` array to full shape."""
    p = as_tensor(p)
    if p.ndim == 0:
        raise ShapeError(f"{name} must have a trailing state axis")
    if p.ndim == 1:
        p = p.reshape((1,) * x.ndim + p.shape)
    if p.ndim != x.ndim + 1:
        raise ShapeError(f"{name} has shape {p.shape}; expected (N,) or (L, *batch, N) for x of shape {x.shape}")
    if p.shape[0] not in (1, x.shape[0]):
        raise ShapeError(f"length mismatch: {name} has {p.shape[0]} steps, x has {x.shape[0]}")
    target = x.shape + (p.shape[-1],)
    try:
        return np.broadcast_to(p, target)
    except ValueError as exc:
        raise ShapeError(f"{name} with shape {p.shape} does not broadcast to {target}") from exc


def _prepare(d: DiscreteSsm, c, x, h0):
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[0] == 0:
        raise ShapeError("x must be a non-empty sequence")
    a = _per_step(d.a_bar, x, "a_bar")
    b = _per_step(d.b_bar, x, "b_bar")
    n = a.shape[-1]
    if b.shape[-1] != n:
        raise ShapeError(f"state size mismatch: a_bar has {n}, b_bar has {b.shape[-1]}")
    cc = _per_step(c, x, "c")
    if cc.shape[-1] != n:
        raise ShapeError(f"state size mismatch: c has {cc.shape[-1]}, expected {n}")
    state_shape = x.shape[1:] + (n,)
    if h0 is None:
        h0 = np.zeros(state_shape, dtype=DTYPE)
    else:
        h0 = np.broadcast_to(as_tensor(h0), state_shape)
    return a, b, cc, x, h0


def scan_states(d: DiscreteSsm, x, h0=None) -> np.ndarray:
    """Hidden states ``h_1..h_L`` from the exact left-to-right recurrence."""
    x = as_tensor(x)
    a = _per_step(d.a_bar, x, "a_bar")
    b = _per_step(d.b_bar, x, "b_bar")
    state_shape = x.shape[1:] + (a.shape[-1],)
    h = np.zeros(state_shape, dtype=DTYPE) if h0 is None else np.array(np.broadcast_to(h0, state_shape), dtype=DTYPE)
    states = np.empty(x.shape + (a.shape[-1],), dtype=DTYPE)
    for t in range(x.shape[0]):
        h = a[t] * h + b[t] * x[t][..., None]
        states[t] = h
    return states


def scan_sequential(d: DiscreteSsm, c, x, h0=None) -> np.ndarray:
    """Reference scan: the exact recurrence, one step at a time."""
    a, b, cc, x, h0 = _prepare(d, c, x, h0)
    h = np.array(h0, dtype=DTYPE)
    y = np.empty(x.shape, dtype=DTYPE)
    for t in range(x.shape[0]):
        h = a[t] * h + b[t] * x[t][..., None]
        y[t] = np.sum(cc[t] * h, axis=-1)
    return y


def _affine_prefix(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive prefix of affine maps ``h -> a_t h + b_t`` along axis 0.

    Odd/even pairwise reduction: combine neighbours, recurse on the half-length
    sequence, then fill in the even positions. O(L) work, O(log L) depth.
    Composition of (a1, b1) then (a2, b2) is (a2*a1, a2*b1 + b2).
    """
    n = a.shape[0]
    if n == 1:
        return a.copy(), b.copy()
    m = n // 2
    a_lo, a_hi = a[0 : 2 * m : 2], a[1 : 2 * m : 2]
    b_lo, b_hi = b[0 : 2 * m : 2], b[1 : 2 * m : 2]
    pa, pb = _affine_prefix(a_hi * a_lo, a_hi * b_lo + b_hi)
    out_a = np.empty_like(a)
    out_b = np.empty_like(b)
    out_a[1 : 2 * m : 2] = pa
    out_b[1 : 2 * m : 2] = pb
    out_a[0] = a[0]
    out_b[0] = b[0]
    # position 2k (k >= 1) = prefix at 2k-1 followed by element 2k
    k = (n - 1) // 2
    if k:
        a_even = a[2 : 2 * k + 1 : 2]
        out_a[2 : 2 * k + 1 : 2] = a_even * pa[:k]
        out_b[2 : 2 * k + 1 : 2] = a_even * pb[:k] + b[2 : 2 * k + 1 : 2]
    return out_a, out_b


def scan_parallel(d: DiscreteSsm, c, x, h0=None, chunk: int | None = None) -> np.ndarray:
    """Scan via an associative prefix over ``(a_bar_t, b_bar_t * x_t)`` pairs.

    With ``chunk`` set, the sequence is split into blocks that are prefixed
    independently (concurrently, up to ``TWISTER_THREADS`` workers) and then
    stitched left to right with the carried state.
    """
    a, b, cc, x, h0 = _prepare(d, c, x, h0)
    bx = b * x[..., None]
    L = x.shape[0]
    if chunk is None or chunk >= L:
        bounds = [(0, L)]
    else:
        if chunk < 1:
            raise ValueError("chunk must be >= 1")
        bounds = [(s, min(s + chunk, L)) for s in range(0, L, chunk)]

    def run(bound):
        s, e = bound
        return _affine_prefix(np.array(a[s:e]), bx[s:e])

    if len(bounds) > 1 and _threads() > 1:
        with ThreadPoolExecutor(max_workers=min(_threads(), len(bounds))) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bd) for bd in bounds]

    states = np.empty(bx.shape, dtype=DTYPE)
    carry = h0
    for (s, e), (pa, pb) in zip(bounds, parts):
        states[s:e] = pa * carry + pb
        carry = states[e - 1]
    return np.sum(cc * states, axis=-1)


def lti_kernel(d: DiscreteSsm, c, L: int) -> np.ndarray:
    """Convolution kernel ``K_j = sum_n c_n a_bar_n^j b_bar_n`` for j < L."""
    if not d.is_static or np.ndim(c) > 1:
        raise ValueError("lti_kernel requires static (time-invariant) parameters")
    a = as_tensor(d.a_bar)
    powers = np.power(a[None, :], np.arange(L, dtype=DTYPE)[:, None])
    return powers @ (as_tensor(c) * as_tensor(d.b_bar))


def causal_conv(x, kernel) -> np.ndarray:
    x = as_tensor(x)
    return np.convolve(x, as_tensor(kernel))[: x.shape[0]]


def _reduce_to(grad: np.ndarray, original) -> np.ndarray:
    shape = np.shape(original)
    if len(shape) == 1:
        return grad.reshape(-1, shape[0]).sum(axis=0)
    # sum over axes that were broadcast from extent 1
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True) if axes else grad


def scan_adjoint(d: DiscreteSsm, c, x, h0=None, dy=None) -> ScanGrads:
    """Reverse-mode gradients of ``sum_t dy_t * y_t``.

    The adjoint state ``g_t = dL/dh_t`` obeys the reverse recurrence
    ``g_t = c_t dy_t + a_bar_{t+1} g_{t+1}``. Gradients are returned in the
    shapes of the corresponding inputs (static parameters are summed over
    steps).
    """
    a, b, cc, x, h0 = _prepare(d, c, x, h0)
    dy = np.broadcast_to(as_tensor(dy), x.shape)
    states = scan_states(DiscreteSsm(a, b), x, h0)
    L = x.shape[0]
    g = np.zeros(states.shape[1:], dtype=DTYPE)
    gx = np.empty(x.shape, dtype=DTYPE)
    ga = np.empty(states.shape, dtype=DTYPE)
    gb = np.empty(states.shape, dtype=DTYPE)
    for t in range(L - 1, -1, -1):
        g = cc[t] * dy[t][..., None] + (a[t + 1] * g if t + 1 < L else 0.0)
        gx[t] = np.sum(g * b[t], axis=-1)
        gb[t] = g * x[t][..., None]
        prev = states[t - 1] if t > 0 else h0
        ga[t] = g * prev
    gc = states * dy[..., None]
    gh0 = a[0] * g
    return ScanGrads(
        x=gx,
        b_bar=_reduce_to(gb, d.b_bar),
        a_bar=_reduce_to(ga, d.a_bar),
        c=_reduce_to(gc, c),
        h0=gh0,
    )


@dataclass(frozen=True)
class SelectiveProjection:
    """Input-dependent timescale and projections.

    For a token ``u`` of dimension d: ``delta = softplus(u @ w_delta + b_delta)``
    (one value per scanned channel), ``B = u @ w_b`` and ``C = u @ w_c`` (length N).
    """

    w_delta: np.ndarray  # (d, D)
    b_delta: np.ndarray  # (D,)
    w_b: np.ndarray  # (d, N)
    w_c: np.ndarray  # (d, N)


def selective_params(tokens, proj: SelectiveProjection):
    """Per-step ``(delta, B, C)`` for tokens of shape ``(L, *batch, d)``."""
    tokens = as_tensor(tokens)
    delta = softplus(matmul(tokens, proj.w_delta) + proj.b_delta)
    return delta, matmul(tokens, proj.w_b), matmul(tokens, proj.w_c)


def _inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class SelectiveSSM:
    """Multi-channel selective scan in the Mamba style.

    Each of the D token channels is an independent diagonal SSM with its own
    row of ``a_diag`` (shape ``(D, N)``); ``delta`` is per channel, while B and
    C are shared across channels. A skip term ``d_skip * u`` is added.
    """

    proj: SelectiveProjection
    a_diag: np.ndarray  # (D, N), negative
    d_skip: np.ndarray  # (D,)

    @property
    def dim(self) -> int:
        return self.a_diag.shape[0]

    @property
    def state_dim(self) -> int:
        return self.a_diag.shape[1]

    @classmethod
    def init(cls, dim: int, state_dim: int, rng: np.random.Generator) -> SelectiveSSM:
        bound = 1.0 / np.sqrt(dim)
        dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=dim))
        proj = SelectiveProjection(
            w_delta=rng.uniform(-bound, bound, size=(dim, dim)),
            b_delta=_inverse_softplus(dt),
            w_b=rng.uniform(-bound, bound, size=(dim, state_dim)),
            w_c=rng.uniform(-bound, bound, size=(dim, state_dim)),
        )
        a_diag = -rng.uniform(0.5, 1.0 + state_dim, size=(dim, state_dim))
        return cls(proj=proj, a_diag=a_diag, d_skip=np.ones(dim))

    def discretize(self, tokens) -> tuple[DiscreteSsm, np.ndarray]:
        """Per-step discrete parameters and read-out, shaped ``(L, *batch, D, N)``."""
        delta, B, C = selective_params(tokens, self.proj)
        disc = discretize(self.a_diag, B[..., None, :], delta[..., None])
        return disc, C[..., None, :]

    def __call__(self, tokens, h0=None, parallel: bool = True) -> np.ndarray:
        tokens = as_tensor(tokens)
        if tokens.shape[-1] != self.dim:
            raise ShapeError(f"token dim {tokens.shape[-1]} != SSM dim {self.dim}")
        disc, c = self.discretize(tokens)
        scan = scan_parallel if parallel else scan_sequential
        return scan(disc, c, tokens, h0) + self.d_skip * tokens

    def params(self) -> dict[str, np.ndarray]:
        return {
            "w_delta": self.proj.w_delta,
            "b_delta": self.proj.b_delta,
            "w_b": self.proj.w_b,
            "w_c": self.proj.w_c,
            "a_diag": self.a_diag,
            "d_skip": self.d_skip,
        }

    @classmethod
    def from_params(cls, p: dict[str, np.ndarray]) -> SelectiveSSM:
        proj = SelectiveProjection(p["w_delta"], p["b_delta"], p["w_b"], p["w_c"])
        return cls(proj=proj, a_diag=p["a_diag"], d_skip=p["d_skip"])
