"""Vision-language interaction, hybrid feature cube, and the channel/spatial twist."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ScanOrder, channel_scan, cross_scan
from .ssm import SelectiveSSM
from .tensor import ShapeError, as_tensor, conv2d, layer_norm, matmul


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass(frozen=True)
class InteractionWeights:
    w_i: np.ndarray  # (C_i, C_c)
    w_t: np.ndarray  # (C_t, C_c)
    conv: np.ndarray  # (1, 1, L_max, C_c)
    conv_bias: np.ndarray | None = None

    @property
    def max_tokens(self) -> int:
        return self.conv.shape[2]


def pool_text(f_t: np.ndarray) -> np.ndarray:
    f_t = as_tensor(f_t)
    if f_t.ndim != 2 or f_t.shape[0] == 0:
        raise ShapeError(f"need a non-empty (L, C_t) token sequence, got {f_t.shape}")
    return f_t.mean(axis=0)


def global_interaction(f_t: np.ndarray, h: int, w: int) -> np.ndarray:
    """Mean-pooled sentence vector broadcast to every pixel: ``(h, w, C_t)``."""
    pooled = pool_text(f_t)
    return np.ascontiguousarray(np.broadcast_to(pooled, (h, w, pooled.shape[0])))


def local_interaction(f_i: np.ndarray, f_t: np.ndarray, weights: InteractionWeights) -> np.ndarray:
    """Per-pixel, per-token similarity ``<f_i[p] W_i, f_t[l] W_t>``, shape ``(h, w, L)``."""
    f_i = as_tensor(f_i)
    f_t = as_tensor(f_t)
    img = matmul(f_i, weights.w_i)
    txt = matmul(f_t, weights.w_t)
    return matmul(img, np.ascontiguousarray(txt.T))


def interaction_transform(
    f_c: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None
) -> np.ndarray:
    """1x1 convolution from the interaction map to C_c channels.

    The kernel is sized for a maximum token count; shorter maps are
    zero-padded on the token axis.
    """
    f_c = as_tensor(f_c)
    kernel = as_tensor(kernel)
    if kernel.shape[:2] != (1, 1):
        raise ShapeError(f"interaction transform kernel must be 1x1, got {kernel.shape[:2]}")
    n_tok, l_max = f_c.shape[2], kernel.shape[2]
    if n_tok > l_max:
        raise ShapeError(f"interaction map has {n_tok} token channels, kernel accepts at most {l_max}")
    if n_tok < l_max:
        f_c = np.pad(f_c, ((0, 0), (0, 0), (0, l_max - n_tok)))
    return conv2d(f_c, kernel, bias)


@dataclass(frozen=True)
class HybridCube:
    grid: np.ndarray
    segments: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.grid.shape[2]

    def segment(self, name: str) -> np.ndarray:
        lo, hi = self.segments[name]
        return self.grid[:, :, lo:hi]


def form_cube(
    f_i: np.ndarray,
    f_t_expanded: np.ndarray | None = None,
    f_c_tilde: np.ndarray | None = None,
) -> HybridCube:
    """Concatenate ``[image | expanded text | interaction]`` along channels.

    Either text segment may be omitted (global/local ablations).
    """
    parts = [("image", as_tensor(f_i))]
    if f_t_expanded is not None:
        parts.append(("text", as_tensor(f_t_expanded)))
    if f_c_tilde is not None:
        parts.append(("interaction", as_tensor(f_c_tilde)))
    hw = parts[0][1].shape[:2]
    segments = {}
    offset = 0
    for name, arr in parts:
        if arr.ndim != 3 or arr.shape[:2] != hw:
            raise ShapeError(f"segment {name!r} has shape {arr.shape}, expected spatial extent {hw}")
        segments[name] = (offset, offset + arr.shape[2])
        offset += arr.shape[2]
    grid = np.concatenate([arr for _, arr in parts], axis=2)
    return HybridCube(grid=grid, segments=segments)


@dataclass(frozen=True)
class TwistParams:
    channel_ssm: SelectiveSSM  # dim == channel_block
    spatial_ssms: tuple[SelectiveSSM, ...]  # 4 directions, dim == cube channels
    out_proj: np.ndarray  # (C_cube, C_o)
    out_bias: np.ndarray | None = None
    channel_block: int = 1
    bidirectional: bool = False

    @classmethod
    def init(
        cls,
        cube_channels: int,
        out_channels: int,
        state_dim: int,
        rng: np.random.Generator,
        channel_block: int = 1,
        bidirectional: bool = False,
        share_directions: bool = False,
    ) -> TwistParams:
        channel_ssm = SelectiveSSM.init(channel_block, state_dim, rng)
        if share_directions:
            spatial = (SelectiveSSM.init(cube_channels, state_dim, rng),) * 4
        else:
            spatial = tuple(SelectiveSSM.init(cube_channels, state_dim, rng) for _ in range(4))
        return cls(
            channel_ssm=channel_ssm,
            spatial_ssms=spatial,
            out_proj=_uniform(rng, cube_channels, (cube_channels, out_channels)),
            out_bias=np.zeros(out_channels),
            channel_block=channel_block,
            bidirectional=bidirectional,
        )


def twist(
    cube: HybridCube | np.ndarray,
    order: ScanOrder,
    params: TwistParams,
    trace: dict | None = None,
    parallel: bool = True,
) -> np.ndarray:
    """Run channel and/or spatial scans over the cube, then project to C_o.

    ``trace`` (if given) receives ``after_channel_scan`` / ``after_spatial_scan``
    for whichever stages ran.
    """
    grid = cube.grid if isinstance(cube, HybridCube) else as_tensor(cube)
    order = ScanOrder(order)

    def chan(g):
        out = channel_scan(g, params.channel_ssm, params.channel_block, params.bidirectional, parallel)
        if trace is not None:
            trace["after_channel_scan"] = out
        return out

    def spat(g):
        out = cross_scan(g, params.spatial_ssms, parallel)
        if trace is not None:
            trace["after_spatial_scan"] = out
        return out

    if order is ScanOrder.CHANNEL_THEN_SPATIAL:
        mixed = spat(chan(grid))
    elif order is ScanOrder.SPATIAL_THEN_CHANNEL:
        mixed = chan(spat(grid))
    elif order is ScanOrder.PARALLEL:
        mixed = chan(grid) + spat(grid)
    elif order is ScanOrder.CHANNEL_ONLY:
        mixed = chan(grid)
    elif order is ScanOrder.SPATIAL_ONLY:
        mixed = spat(grid)
    else:  # pragma: no cover - ScanOrder() already rejects unknown values
        raise ValueError(f"unknown scan order {order!r}")
    out = matmul(mixed, params.out_proj)
    if params.out_bias is not None:
        out = out + params.out_bias
    return out


@dataclass(frozen=True)
class TwistingLayer:
    """Text-conditioned fusion: build the hybrid cube and twist it.

    The image feature is layer-normalized before entering the cube and the
    layer input is added back to the projected output when ``residual`` is on.
    """

    weights: InteractionWeights
    params: TwistParams
    order: ScanOrder = ScanOrder.CHANNEL_THEN_SPATIAL
    use_global: bool = True
    use_local: bool = True
    residual: bool = True

    @classmethod
    def init(
        cls,
        c_i: int,
        c_t: int,
        c_c: int,
        max_tokens: int,
        state_dim: int,
        rng: np.random.Generator,
        order: ScanOrder = ScanOrder.CHANNEL_THEN_SPATIAL,
        use_global: bool = True,
        use_local: bool = True,
        residual: bool = True,
        channel_block: int = 1,
        bidirectional: bool = False,
        share_directions: bool = False,
    ) -> TwistingLayer:
        if not (use_global or use_local):
            raise ValueError("at least one of use_global / use_local must be enabled")
        weights = InteractionWeights(
            w_i=_uniform(rng, c_i, (c_i, c_c)),
            w_t=_uniform(rng, c_t, (c_t, c_c)),
            conv=_uniform(rng, max_tokens, (1, 1, max_tokens, c_c)),
            conv_bias=np.zeros(c_c),
        )
        cube_channels = c_i + (c_t if use_global else 0) + (c_c if use_local else 0)
        params = TwistParams.init(
            cube_channels, c_i, state_dim, rng, channel_block, bidirectional, share_directions
        )
        return cls(weights, params, ScanOrder(order), use_global, use_local, residual)

    def build_cube(self, x: np.ndarray, f_t: np.ndarray, trace: dict | None = None) -> HybridCube:
        h, w, _ = x.shape
        f_i = layer_norm(x)
        expanded = global_interaction(f_t, h, w) if self.use_global else None
        transformed = None
        if self.use_local:
            f_c = local_interaction(f_i, f_t, self.weights)
            if trace is not None:
                trace["local_map"] = f_c
            transformed = interaction_transform(f_c, self.weights.conv, self.weights.conv_bias)
        cube = form_cube(f_i, expanded, transformed)
        if trace is not None:
            trace["cube"] = cube
        return cube

    def __call__(self, x: np.ndarray, f_t: np.ndarray, trace: dict | None = None) -> np.ndarray:
        x = as_tensor(x)
        cube = self.build_cube(x, f_t, trace)
        out = twist(cube, self.order, self.params, trace)
        return out + x if self.residual else out
