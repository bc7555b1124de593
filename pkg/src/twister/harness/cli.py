"""Command-line harness.

Exit codes: 0 success, 1 check/assertion failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..fusion import FusionVariant
from ..model import ConfigError, ModelConfig, TwisterModel, binarize
from ..tensor import ShapeError
from .bench import MECHANISMS, run_bench
from .checks import load_check_config, run_checks, CheckSettings
from .imageio import ImageFormatError, normalize_gray, read_ppm, write_pgm
from .pca import pca_project
from .synth import encode_phrase, generate

log = logging.getLogger("twister")

PCA_STAGES = {"input": "cube", "after_channel_scan": "after_channel_scan", "after_spatial_scan": "after_spatial_scan"}


class UsageError(Exception):
    pass


def load_config(path: str | None) -> ModelConfig:
    if path is None:
        return ModelConfig()
    try:
        return ModelConfig.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None


def read_tokens(path: str) -> list[int]:
    words = Path(path).read_text().split()
    if not words:
        raise UsageError(f"{path}: no tokens")
    if all(w.isdigit() for w in words):
        return [int(w) for w in words]
    try:
        return encode_phrase(words)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None


def load_inputs(args) -> tuple[TwisterModel, np.ndarray, list[int]]:
    cfg = load_config(args.config)
    model = TwisterModel.from_file(cfg, args.weights) if args.weights else TwisterModel(cfg)
    image = read_ppm(args.image).astype(np.float64) / 255.0
    model.check_image(image)
    return model, image, read_tokens(args.tokens)


def write_grid_csv(path: Path, grid: np.ndarray) -> None:
    np.savetxt(path, grid, delimiter=",", fmt="%.17g")


def cmd_check(args) -> int:
    if args.config:
        try:
            cfg, settings = load_check_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    else:
        cfg, settings = ModelConfig(), CheckSettings()
    results = run_checks(cfg, settings, strict=args.strict)
    summary = {
        "passed": all(r.passed for r in results),
        "suites": [
            {
                "suite": r.suite,
                "cases": r.cases,
                "max_error": r.max_error,
                "passed": r.passed,
                "failures": r.failures,
                "seconds": round(r.seconds, 3),
            }
            for r in results
        ],
    }
    text = json.dumps(summary, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0 if summary["passed"] else 1


def cmd_bench(args) -> int:
    try:
        lengths = [int(v) for v in args.lengths.split(",")]
    except ValueError:
        raise UsageError(f"--lengths must be comma-separated integers, got {args.lengths!r}") from None
    mechanisms = [m.strip() for m in args.mechanisms.split(",") if m.strip()]
    try:
        report = run_bench(lengths, mechanisms, repeats=args.repeats, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    csv = report.to_csv()
    if args.out:
        Path(args.out).write_text(csv)
    sys.stdout.write(csv)
    for v in report.violations:
        log.warning("complexity check: %s", v)
    return 1 if (args.strict and report.violations) else 0


def cmd_forward(args) -> int:
    model, image, ids = load_inputs(args)
    logits = model.segment(image, ids)
    out = Path(args.out)
    write_pgm(out, binarize(logits).astype(np.uint8) * 255)
    write_grid_csv(Path(args.logits) if args.logits else out.with_suffix(".csv"), logits[..., 0])
    return 0


def cmd_interaction_map(args) -> int:
    model, image, ids = load_inputs(args)
    fusion = model.config.fusion
    if fusion not in (FusionVariant.TWISTER, FusionVariant.ATTENTION):
        raise UsageError(f"fusion {fusion.value!r} has no per-pixel interaction map")
    if fusion is FusionVariant.TWISTER and not model.config.use_local:
        raise UsageError("use_local is off: no local interaction map is computed")
    key = "local_map" if fusion is FusionVariant.TWISTER else "attention"
    traces: list[dict] = []
    model.segment(image, ids, traces)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    count = 0
    for b, trace in enumerate(traces):
        maps = trace[key]
        for t in range(maps.shape[2]):
            stem = out / f"block{b:02d}_token{t:02d}"
            write_pgm(stem.with_suffix(".pgm"), normalize_gray(maps[:, :, t]))
            write_grid_csv(stem.with_suffix(".csv"), maps[:, :, t])
            count += 1
    print(json.dumps({"maps": count, "blocks": len(traces), "tokens": len(ids), "kind": key}))
    return 0


def cmd_pca(args) -> int:
    model, image, ids = load_inputs(args)
    if model.config.fusion is not FusionVariant.TWISTER:
        raise UsageError("pca needs fusion = twister (the hybrid cube only exists there)")
    traces: list[dict] = []
    model.segment(image, ids, traces)
    if not 0 <= args.block < len(traces):
        raise UsageError(f"--block must be in [0, {len(traces)})")
    trace = traces[args.block]
    key = PCA_STAGES[args.stage]
    if key not in trace:
        raise UsageError(f"stage {args.stage!r} is not produced by scan order {model.config.scan_order.value!r}")
    cube = trace["cube"]
    grid = cube.grid if key == "cube" else trace[key]
    h, w, c = grid.shape
    # one sample per channel; its feature vector is the spatial map
    rows = grid.reshape(h * w, c).T
    proj, frac = pca_project(rows)
    labels = ["image"] * c
    for name, (lo, hi) in cube.segments.items():
        for ch in range(lo, hi):
            labels[ch] = name
    lines = ["block,stage,channel,modality,pc1,pc2,pc3"]
    for ch in range(c):
        p = ",".join(f"{v:.17g}" for v in proj[ch])
        lines.append(f"{args.block},{args.stage},{ch},{labels[ch]},{p}")
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(json.dumps({"explained_variance": frac.tolist(), "samples": c}))
    return 0


def cmd_synth(args) -> int:
    try:
        paths = generate(args.n, args.seed, args.out, args.size)
    except OSError as exc:
        raise UsageError(f"cannot write to {args.out}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps({"samples": len(paths), "out": str(args.out)}))
    return 0


def cmd_init_weights(args) -> int:
    TwisterModel(load_config(args.config)).save(args.out)
    return 0


def _model_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", required=True, help="input image (binary PPM)")
    p.add_argument("--tokens", required=True, help="text file of words or integer token ids")
    p.add_argument("--config", help="model config JSON (defaults if omitted)")
    p.add_argument("--weights", help="weights blob; its manifest is the same path with .json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twister", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="run every invariant suite")
    p.add_argument("--config")
    p.add_argument("--strict", action="store_true", help="also gate on the complexity benchmark")
    p.add_argument("--report", help="write the JSON summary here as well")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="scan vs attention scaling")
    p.add_argument("--lengths", default="256,512,1024,2048,4096,8192")
    p.add_argument("--mechanisms", default=",".join(MECHANISMS))
    p.add_argument("--out")
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="exit 1 when a ratio threshold is violated")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("forward", help="segment one image")
    _model_inputs(p)
    p.add_argument("--out", required=True, help="binary mask PGM")
    p.add_argument("--logits", help="logits CSV (default: --out with .csv)")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("interaction-map", help="export per-block interaction / attention maps")
    _model_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_interaction_map)

    p = sub.add_parser("pca", help="3-D PCA of hybrid-cube channels")
    _model_inputs(p)
    p.add_argument("--stage", required=True, choices=sorted(PCA_STAGES))
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("synth", help="generate synthetic samples")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("init-weights", help="write random-init weights for a config")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_weights)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ImageFormatError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
