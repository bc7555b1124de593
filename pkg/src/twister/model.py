"""Staged backbone of text-conditioned blocks, convolutional decoder, and config."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fusion import AttentionLayer, FusionVariant, InContextLayer, NormAdaptLayer
from .geometry import ScanOrder, cross_scan
from .params import collect, load_weights, restore, save_weights
from .ssm import SelectiveSSM
from .tensor import ShapeError, as_tensor, conv2d, layer_norm, matmul, silu, upsample2x
from .twisting import TwistingLayer, _uniform


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StageConfig:
    blocks: int
    dim: int
    downsample: bool = True


def _default_stages() -> tuple[StageConfig, ...]:
    return (StageConfig(2, 32, False), StageConfig(2, 64, True), StageConfig(2, 128, True))


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple[StageConfig, ...] = field(default_factory=_default_stages)
    patch_size: int = 4
    vss_layers_per_block: int = 2
    state_dim: int = 8
    expand: int = 2
    fusion: FusionVariant = FusionVariant.TWISTER
    scan_order: ScanOrder = ScanOrder.CHANNEL_THEN_SPATIAL
    use_global: bool = True
    use_local: bool = True
    twist_residual: bool = True
    interaction_dim: int | None = None  # default: C_i // 4 per block
    channel_block: int = 1
    channel_bidirectional: bool = False
    share_directions: bool = False
    vocab_size: int = 64
    text_dim: int = 32
    max_tokens: int = 16
    decoder_dim: int = 32
    parallel_scan: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fusion", FusionVariant(self.fusion))
        object.__setattr__(self, "scan_order", ScanOrder(self.scan_order))
        object.__setattr__(self, "stages", tuple(self.stages))
        self.validate()

    def validate(self) -> None:
        if not self.stages:
            raise ConfigError("stages: at least one stage is required")
        prev = None
        for i, st in enumerate(self.stages):
            if st.blocks < 1 or st.dim < 1:
                raise ConfigError(f"stages[{i}]: blocks and dim must be >= 1")
            if i == 0 and st.downsample:
                raise ConfigError("stages[0]: the first stage cannot downsample")
            if prev is not None and st.downsample and st.dim <= prev:
                raise ConfigError(f"stages[{i}]: channel dims must increase across downsampling stages")
            prev = st.dim
        if self.vss_layers_per_block < 1:
            raise ConfigError("vss_layers_per_block: must be >= 1")
        for key in ("patch_size", "state_dim", "expand", "vocab_size", "text_dim", "max_tokens", "decoder_dim", "channel_block"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1")
        if self.interaction_dim is not None and self.interaction_dim < 1:
            raise ConfigError("interaction_dim: must be >= 1")
        if self.fusion is FusionVariant.TWISTER and not (self.use_global or self.use_local):
            raise ConfigError("use_global/use_local: at least one interaction path is required")

    @property
    def downsample_factor(self) -> int:
        return self.patch_size * 2 ** sum(st.downsample for st in self.stages)

    @property
    def block_count(self) -> int:
        return sum(st.blocks for st in self.stages)

    def interaction_channels(self, c_i: int) -> int:
        return self.interaction_dim or max(1, c_i // 4)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stages"] = [dataclasses.asdict(s) for s in self.stages]
        d["fusion"] = self.fusion.value
        d["scan_order"] = self.scan_order.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]!r}")
        data = dict(data)
        if "stages" in data:
            stages = []
            for i, st in enumerate(data["stages"]):
                try:
                    if not isinstance(st, dict):
                        st = dict(zip(("blocks", "dim", "downsample"), st))
                    # stages after the first downsample unless told otherwise
                    st = {"downsample": i > 0, **st}
                    stages.append(StageConfig(**st))
                except TypeError as exc:
                    raise ConfigError(f"stages[{i}]: {exc}") from None
            data["stages"] = stages
        for key in ("fusion", "scan_order"):
            if key in data:
                enum = FusionVariant if key == "fusion" else ScanOrder
                try:
                    data[key] = enum(data[key])
                except ValueError:
                    choices = ", ".join(m.value for m in enum)
                    raise ConfigError(f"{key}: {data[key]!r} is not one of {choices}") from None
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> ModelConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> ModelConfig:
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class VSSLayer:
    """Pre-norm, expand, four-direction selective scan, gated contraction, residual."""

    ln_weight: np.ndarray
    ln_bias: np.ndarray
    w_in: np.ndarray  # (C, 2E): scan branch | gate branch
    ssms: tuple[SelectiveSSM, ...]
    w_out: np.ndarray  # (E, C)

    @classmethod
    def init(cls, c: int, expand: int, state_dim: int, rng, share_directions: bool = False) -> VSSLayer:
        e = c * expand
        w_in = _uniform(rng, c, (c, 2 * e))
        if share_directions:
            ssms = (SelectiveSSM.init(e, state_dim, rng),) * 4
        else:
            ssms = tuple(SelectiveSSM.init(e, state_dim, rng) for _ in range(4))
        return cls(np.ones(c), np.zeros(c), w_in, ssms, _uniform(rng, e, (e, c)))

    def __call__(self, x: np.ndarray, residual: bool = True, parallel: bool = True) -> np.ndarray:
        x = as_tensor(x)
        y = matmul(layer_norm(x, weight=self.ln_weight, bias=self.ln_bias), self.w_in)
        e = self.w_out.shape[0]
        u, z = silu(y[..., :e]), y[..., e:]
        s = cross_scan(u, self.ssms, parallel)
        out = matmul(s * silu(z), self.w_out)
        return out + x if residual else out


@dataclass(frozen=True)
class TwisterBlock:
    vss: tuple[VSSLayer, ...]
    fusion: TwistingLayer | InContextLayer | AttentionLayer | NormAdaptLayer

    def __call__(self, x, f_t, trace: dict | None = None, parallel: bool = True):
        for layer in self.vss:
            x = layer(x, parallel=parallel)
        if trace is not None:
            trace["fusion_input"] = x
        return self.fusion(x, f_t, trace)


def make_fusion(cfg: ModelConfig, c: int, rng):
    if cfg.fusion is FusionVariant.TWISTER:
        return TwistingLayer.init(
            c,
            cfg.text_dim,
            cfg.interaction_channels(c),
            cfg.max_tokens,
            cfg.state_dim,
            rng,
            order=cfg.scan_order,
            use_global=cfg.use_global,
            use_local=cfg.use_local,
            residual=cfg.twist_residual,
            channel_block=cfg.channel_block,
            bidirectional=cfg.channel_bidirectional,
            share_directions=cfg.share_directions,
        )
    if cfg.fusion is FusionVariant.IN_CONTEXT:
        return InContextLayer.init(c, cfg.text_dim, cfg.state_dim, rng)
    if cfg.fusion is FusionVariant.ATTENTION:
        return AttentionLayer.init(c, cfg.text_dim, rng)
    return NormAdaptLayer.init(c, cfg.text_dim, rng)


class TwisterModel:
    """Random-init (or loaded) segmentation model; immutable after construction."""

    def __init__(self, config: ModelConfig, weights: dict[str, np.ndarray] | None = None):
        self.config = config
        rng = np.random.default_rng(config.seed)
        cfg = config
        p = cfg.patch_size
        dims = [st.dim for st in cfg.stages]
        comps: dict = {
            "embed": rng.uniform(-1.0, 1.0, size=(cfg.vocab_size, cfg.text_dim)),
            "patch_w": _uniform(rng, p * p * 3, (p * p * 3, dims[0])),
            "patch_b": np.zeros(dims[0]),
            "stages": [],
        }
        prev = dims[0]
        for st in cfg.stages:
            stage: dict = {}
            if st.downsample:
                stage["merge"] = _uniform(rng, 4 * prev, (4 * prev, st.dim))
            elif st.dim != prev:
                stage["proj"] = _uniform(rng, prev, (prev, st.dim))
            stage["blocks"] = [
                TwisterBlock(
                    tuple(
                        VSSLayer.init(st.dim, cfg.expand, cfg.state_dim, rng, cfg.share_directions)
                        for _ in range(cfg.vss_layers_per_block)
                    ),
                    make_fusion(cfg, st.dim, rng),
                )
                for _ in range(st.blocks)
            ]
            comps["stages"].append(stage)
            prev = st.dim

        tap_dims = [st.dim for st in cfg.stages for _ in range(st.blocks)]
        decoder = []
        c_in = tap_dims[-1]
        for tap_dim in reversed(tap_dims[:-1]):
            decoder.append(
                {"w": _uniform(rng, 9 * c_in, (3, 3, c_in, cfg.decoder_dim)), "b": np.zeros(cfg.decoder_dim)}
            )
            c_in = cfg.decoder_dim + tap_dim
        comps["decoder"] = decoder
        comps["head_w"] = _uniform(rng, c_in, (1, 1, c_in, 1))
        comps["head_b"] = np.zeros(1)
        if weights is not None:
            comps = restore(comps, weights)
        self.components = comps

    # -- parameters -------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return collect(self.components)

    def save(self, path: str | Path) -> None:
        save_weights(self.state_dict(), path)

    @classmethod
    def from_file(cls, config: ModelConfig, path: str | Path) -> TwisterModel:
        return cls(config, load_weights(path))

    @property
    def blocks(self) -> list[TwisterBlock]:
        return [b for st in self.components["stages"] for b in st["blocks"]]

    # -- forward ----------------------------------------------------------
    def text_encode(self, token_ids) -> np.ndarray:
        ids = np.asarray(token_ids)
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("token_ids must be a non-empty 1-D sequence")
        if ids.size > self.config.max_tokens:
            raise ValueError(f"{ids.size} tokens exceeds max_tokens = {self.config.max_tokens}")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValueError("token ids must be integers")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ValueError(f"token id out of range [0, {self.config.vocab_size})")
        return self.components["embed"][ids].copy()

    def check_image(self, image: np.ndarray) -> None:
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
        m = self.config.downsample_factor
        if image.shape[0] % m or image.shape[1] % m:
            raise ShapeError(f"image size {image.shape[0]}x{image.shape[1]} must be a multiple of {m}")

    def backbone_forward(self, image: np.ndarray, f_t: np.ndarray, traces: list | None = None) -> list[np.ndarray]:
        """Feature taps after every block, shallowest first."""
        image = as_tensor(image)
        self.check_image(image)
        p = self.config.patch_size
        H, W, _ = image.shape
        patches = image.reshape(H // p, p, W // p, p, 3).swapaxes(1, 2).reshape(H // p, W // p, p * p * 3)
        x = matmul(patches, self.components["patch_w"]) + self.components["patch_b"]
        taps = []
        parallel = self.config.parallel_scan
        for stage in self.components["stages"]:
            if "merge" in stage:
                h, w, c = x.shape
                x = x.reshape(h // 2, 2, w // 2, 2, c).swapaxes(1, 2).reshape(h // 2, w // 2, 4 * c)
                x = matmul(x, stage["merge"])
            elif "proj" in stage:
                x = matmul(x, stage["proj"])
            for block in stage["blocks"]:
                trace = {} if traces is not None else None
                x = block(x, f_t, trace, parallel)
                if traces is not None:
                    traces.append(trace)
                taps.append(x)
        return taps

    def decode(self, taps: list[np.ndarray], out_hw: tuple[int, int] | None = None) -> np.ndarray:
        if not taps:
            raise ValueError("decode needs at least one feature tap")
        x = taps[-1]
        for layer, tap in zip(self.components["decoder"], reversed(taps[:-1])):
            x = np.maximum(conv2d(x, layer["w"], layer["b"]), 0.0)
            while x.shape[0] < tap.shape[0]:
                x = upsample2x(x)
            x = np.concatenate([x, tap], axis=2)
        x = conv2d(x, self.components["head_w"], self.components["head_b"])
        if out_hw is None:
            out_hw = (taps[0].shape[0] * self.config.patch_size, taps[0].shape[1] * self.config.patch_size)
        while x.shape[0] < out_hw[0]:
            x = upsample2x(x)
        if x.shape[:2] != tuple(out_hw):
            raise ShapeError(f"cannot upsample {x.shape[:2]} to {tuple(out_hw)} by powers of two")
        return x

    def segment(self, image: np.ndarray, token_ids, traces: list | None = None) -> np.ndarray:
        """Mask logits of shape ``(H, W, 1)``."""
        image = as_tensor(image)
        f_t = self.text_encode(token_ids)
        taps = self.backbone_forward(image, f_t, traces)
        return self.decode(taps, image.shape[:2])


def segment(image, token_ids, cfg: ModelConfig, weights=None) -> np.ndarray:
    return TwisterModel(cfg, weights).segment(image, token_ids)


def binarize(logits: np.ndarray) -> np.ndarray:
    return np.asarray(logits)[..., 0] > 0.0
