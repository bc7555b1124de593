"""Randomized invariant suites behind the ``check`` command."""

from __future__ import annotations

import dataclasses
import json
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ssm as S
from ..fusion import FusionVariant, cross_attention, in_context, norm_adapt
from ..geometry import DIRECTIONS, ScanDirection, ScanOrder, channel_scan, cross_scan, fold, unfold
from ..model import ConfigError, ModelConfig, TwisterModel
from ..tensor import conv2d, layer_norm, matmul, softmax, upsample2x
from ..twisting import (
    InteractionWeights,
    TwistParams,
    form_cube,
    global_interaction,
    interaction_transform,
    local_interaction,
    twist,
)


@dataclass(frozen=True)
class CheckSettings:
    seed: int = 0
    instances: int = 200
    delta: float | None = None  # fixed timescale for the discretization suite


@dataclass
class SuiteResult:
    suite: str
    cases: int = 0
    max_error: float = 0.0
    passed: bool = True
    failures: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def record(self, error: float, tol: float, what: str) -> None:
        self.cases += 1
        error = float(error)
        if not np.isfinite(error):
            error = float("inf")
        self.max_error = max(self.max_error, error)
        if not error <= tol:
            self.passed = False
            if len(self.failures) < 5:
                self.failures.append(f"{what}: error {error:.3e} > {tol:.1e}")

    def require(self, ok: bool, what: str) -> None:
        self.cases += 1
        if not ok:
            self.passed = False
            if len(self.failures) < 5:
                self.failures.append(what)


def load_check_config(path: str | Path) -> tuple[ModelConfig, CheckSettings]:
    """Model config JSON with an optional ``"check"`` object of suite settings."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    raw = data.pop("check", {}) or {}
    known = {f.name for f in dataclasses.fields(CheckSettings)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config key 'check.{unknown[0]}'")
    return ModelConfig.from_dict(data), CheckSettings(**raw)


def rel_err(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.abs(b).max(initial=0.0), 1e-300)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def random_discrete(rng, n, L, per_step=True, a_range=(-1.0, 1.0)):
    shape = (L, n) if per_step else (n,)
    a = rng.uniform(*a_range, size=shape)
    b = rng.standard_normal(shape)
    c = rng.standard_normal(shape)
    return S.DiscreteSsm(a, b), c


def suite_tensor(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("tensor-core")
    for _ in range(20):
        m, k, n = rng.integers(1, 9, size=3)
        A = rng.standard_normal((m, k))
        B = rng.standard_normal((k, n))
        r.record(np.abs(matmul(matmul(A, np.eye(k)), B) - matmul(A, B)).max(), 0.0, "matmul identity")
        x = rng.standard_normal((m, n, k))
        W = rng.standard_normal((k, 3))
        r.record(np.abs(conv2d(x, W[None, None]) - matmul(x, W)).max(), 1e-14, "conv2d k=1")
        s = softmax(rng.standard_normal((4, n)) * 1e3)
        r.record(np.abs(s.sum(-1) - 1).max(), 1e-12, "softmax row sums")
        r.record(np.abs(layer_norm(x).mean(-1)).max(), 1e-12, "layer_norm mean")
        r.record(abs(upsample2x(x).mean() - x.mean()), 1e-12, "upsample2x mean")
    return r


def suite_discretization(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("ssm-discretization")
    a = -np.exp(rng.uniform(-4, 3, size=10_000))
    delta = np.exp(rng.uniform(-4, 2, size=10_000))
    d = S.discretize(a, 1.0, delta)
    r.require(bool(np.all(np.abs(d.a_bar) < 1)), "|a_bar| < 1 for a < 0")
    b = rng.standard_normal(100)
    dt = rng.uniform(0.01, 1, size=100)
    r.record(np.abs(S.discretize(0.0, b, dt).b_bar - dt * b).max(), 0.0, "a = 0 limit")
    tiny = S.discretize(np.array([1e-300, -1e-300, 1e-200]), 1.0, 1.0)
    r.require(bool(np.all(np.isfinite(tiny.b_bar)) and np.all(np.isfinite(tiny.a_bar))), "finite for tiny |delta*a|")
    if st.delta is not None:
        try:
            S.discretize_zoh(S.SsmParams(np.array([-1.0]), np.array([1.0]), np.array([1.0]), st.delta))
            r.require(True, "configured delta")
        except ValueError as exc:
            r.require(False, f"configured delta {st.delta}: {exc}")
    return r


def suite_scan(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("ssm-scan")
    for _ in range(st.instances):
        n = int(rng.integers(1, 9))
        L = int(rng.integers(1, 257))
        d, c = random_discrete(rng, n, L)
        x = rng.standard_normal(L)
        h0 = rng.standard_normal(n)
        seq = S.scan_sequential(d, c, x, h0)
        r.record(rel_err(S.scan_parallel(d, c, x, h0), seq), 1e-10, "parallel vs sequential")
        r.record(rel_err(S.scan_parallel(d, c, x, h0, chunk=int(rng.integers(1, 64))), seq), 1e-10, "chunked")
        x2 = rng.standard_normal(L)
        lhs = S.scan_sequential(d, c, 2.0 * x - 3.0 * x2)
        rhs = 2.0 * S.scan_sequential(d, c, x) - 3.0 * S.scan_sequential(d, c, x2)
        r.record(rel_err(lhs, rhs), 1e-12, "linearity in x")
    return r


def suite_lti(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("ssm-lti")
    for _ in range(st.instances):
        n = int(rng.integers(1, 9))
        L = int(rng.integers(1, 129))
        d = S.discretize_zoh(S.SsmParams(-np.exp(rng.uniform(-2, 1, n)), rng.standard_normal(n), None, rng.uniform(0.05, 1)))
        c = rng.standard_normal(n)
        x = rng.standard_normal(L)
        K = S.lti_kernel(d, c, L)
        r.record(rel_err(S.causal_conv(x, K), S.scan_sequential(d, c, x)), 1e-8, "conv vs scan")
    return r


def central_difference(f, arr, eps=1e-6):
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return grad


def adjoint_errors(rng, n, L, per_step=True) -> dict[str, float]:
    # ZOH transitions lie in (0, 1)
    d, c = random_discrete(rng, n, L, per_step, a_range=(0.05, 1.0))
    a, b = np.array(d.a_bar), np.array(d.b_bar)
    x = rng.standard_normal(L)
    h0 = rng.standard_normal(n)
    dy = rng.standard_normal(L)
    grads = S.scan_adjoint(S.DiscreteSsm(a, b), c, x, h0, dy)

    def loss():
        return float(np.dot(dy, S.scan_sequential(S.DiscreteSsm(a, b), c, x, h0)))

    return {
        name: rel_err(getattr(grads, name), central_difference(loss, arr))
        for name, arr in (("x", x), ("b_bar", b), ("a_bar", a), ("c", c), ("h0", h0))
    }


def suite_adjoint(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("ssm-adjoint")
    for i in range(min(st.instances, 50)):
        n = int(rng.integers(1, 5))
        L = int(rng.integers(1, 17))
        for name, err in adjoint_errors(rng, n, L, per_step=bool(i % 2)).items():
            r.record(err, 1e-6, f"grad {name}")
    return r


def suite_geometry(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("scan-geometry")
    for h in range(1, 8):
        for w in range(1, 8):
            x = rng.standard_normal((h, w, 2))
            for d in DIRECTIONS:
                r.require(np.array_equal(fold(unfold(x, d), d, h, w), x), f"fold(unfold) {h}x{w} {d.value}")
            rot = x[::-1, ::-1]
            for fwd in (ScanDirection.ROW_FORWARD, ScanDirection.COL_FORWARD):
                r.require(np.array_equal(unfold(rot, fwd), unfold(x, fwd)[::-1]), "rot180 reversal")
    ssms = [S.SelectiveSSM.init(3, 4, rng) for _ in range(4)]
    x = rng.standard_normal((2, 3, 3))
    oracle = sum(fold(m(unfold(x, d), parallel=False), d, 2, 3) for d, m in zip(DIRECTIONS, ssms))
    r.record(rel_err(cross_scan(x, ssms), oracle), 1e-12, "cross_scan composition")
    shared = [ssms[0]] * 4
    const = np.broadcast_to(rng.standard_normal(3), (3, 4, 3))
    y = cross_scan(const, shared)
    r.record(np.abs(y - y[::-1, ::-1]).max(), 1e-12, "rot180 symmetry")
    return r


def _weights(rng, c_i, c_t, c_c, l_max):
    return InteractionWeights(
        rng.standard_normal((c_i, c_c)), rng.standard_normal((c_t, c_c)), rng.standard_normal((1, 1, l_max, c_c))
    )


def suite_twister(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("twister")
    c_i, c_t, c_c = 6, 5, 3
    wts = _weights(rng, c_i, c_t, c_c, 32)
    f_i = rng.standard_normal((3, 4, c_i))
    for L in range(1, 33):
        f_t = rng.standard_normal((L, c_t))
        fc = local_interaction(f_i, f_t, wts)
        r.require(fc.shape == (3, 4, L), f"local map has L={L} channels")
        r.record(rel_err(local_interaction(2.5 * f_i, f_t, wts), 2.5 * fc), 1e-12, "bilinear in image")
        r.record(rel_err(local_interaction(f_i, -1.5 * f_t, wts), -1.5 * fc), 1e-12, "bilinear in text")
    f_t = rng.standard_normal((7, c_t))
    g = global_interaction(f_t, 3, 4)
    fct = interaction_transform(local_interaction(f_i, f_t, wts), wts.conv)
    cube = form_cube(f_i, g, fct)
    r.require(cube.channels == c_i + c_t + c_c, "cube channel count")
    for name, part in (("image", f_i), ("text", g), ("interaction", fct)):
        r.require(np.array_equal(cube.segment(name), part), f"cube segment {name}")
    params = TwistParams.init(cube.channels, c_i, 4, rng)
    composed = matmul(cross_scan(channel_scan(cube.grid, params.channel_ssm), params.spatial_ssms), params.out_proj)
    r.record(rel_err(twist(cube, ScanOrder.CHANNEL_THEN_SPATIAL, params), composed), 1e-12, "twist composition")
    outs = [twist(cube, o, params) for o in ScanOrder]
    r.require(all(o.shape == outs[0].shape and np.all(np.isfinite(o)) for o in outs), "all scan orders run")
    return r


def suite_fusion(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("fusion-variants")
    f_i = rng.standard_normal((4, 5, 6))
    f_t = rng.standard_normal((3, 7))
    _, att = cross_attention(f_i, f_t, *(rng.standard_normal(s) for s in ((6, 4), (7, 4), (7, 6))))
    r.record(np.abs(att.sum(-1) - 1).max(), 1e-12, "attention rows sum to 1")
    r.require(bool(np.all(att >= 0)), "attention weights nonnegative")
    out = norm_adapt(f_i, f_t, np.zeros((7, 12)), np.zeros(12))
    r.record(np.abs(out - layer_norm(f_i)).max(), 0.0, "zero-init FiLM identity")
    ssm = S.SelectiveSSM.init(6, 4, rng)
    plain = fold(ssm(unfold(f_i, ScanDirection.ROW_FORWARD)), ScanDirection.ROW_FORWARD, 4, 5)
    r.require(np.array_equal(in_context(f_i, np.zeros((0, 6)), ssm), plain), "empty text prefix")
    return r


def suite_model(cfg, st, rng) -> SuiteResult:
    r = SuiteResult("model")
    size = cfg.downsample_factor * 2
    image = rng.uniform(size=(size, size, 3))
    ids = rng.integers(0, cfg.vocab_size, size=min(8, cfg.max_tokens))
    model = TwisterModel(cfg)
    a = model.segment(image, ids)
    b = TwisterModel(cfg).segment(image, ids)
    r.require(a.shape == (size, size, 1), "logit shape")
    r.require(bool(np.all(np.isfinite(a))), "finite logits")
    r.require(a.tobytes() == b.tobytes(), "seeded determinism")
    r.require(len(model.backbone_forward(image, model.text_encode(ids))) == cfg.block_count, "tap count")
    if cfg.fusion is FusionVariant.TWISTER:
        outs = []
        for g, l in ((True, False), (False, True), (True, True)):
            outs.append(TwisterModel(dataclasses.replace(cfg, use_global=g, use_local=l)).segment(image, ids))
        for i in range(3):
            for j in range(i + 1, 3):
                r.require(np.abs(outs[i] - outs[j]).max() > 1e-9, "interaction ablations distinct")
    return r


def suite_complexity(cfg, st, rng) -> SuiteResult:
    from .bench import run_bench

    r = SuiteResult("complexity")
    report = run_bench([256, 512, 1024, 2048, 4096], seed=st.seed)
    r.require(not report.violations, "; ".join(report.violations) or "ratios")
    return r


SUITES = (
    suite_tensor,
    suite_discretization,
    suite_scan,
    suite_lti,
    suite_adjoint,
    suite_geometry,
    suite_twister,
    suite_fusion,
    suite_model,
)


def run_checks(cfg: ModelConfig, settings: CheckSettings, strict: bool = False) -> list[SuiteResult]:
    suites = SUITES + ((suite_complexity,) if strict else ())
    results = []
    for i, suite in enumerate(suites):
        rng = np.random.default_rng([settings.seed, i])
        t0 = time.perf_counter()
        try:
            res = suite(cfg, settings, rng)
        except Exception as exc:  # a crashing suite is a failing suite
            res = SuiteResult(suite.__name__.removeprefix("suite_"), passed=False)
            res.failures.append(f"{type(exc).__name__}: {exc}")
            res.failures.append(traceback.format_exc(limit=2).strip().splitlines()[-1])
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return results
