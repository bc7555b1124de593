"""Synthetic referring-segmentation samples: two shapes, a phrase naming one."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import write_pgm, write_ppm

COLORS = {
    "red": (230, 40, 40),
    "green": (40, 200, 60),
    "blue": (50, 80, 230),
    "yellow": (235, 220, 40),
    "cyan": (40, 220, 220),
    "magenta": (220, 50, 210),
    "orange": (245, 150, 30),
    "white": (245, 245, 245),
}
SHAPES = ("square", "circle", "triangle", "diamond")
SIZES = {"small": 6, "large": 11}
POSITIONS = ("left", "right")
FILLER = ("<pad>", "the", "on", "side")

VOCAB: tuple[str, ...] = FILLER + tuple(SIZES) + tuple(COLORS) + SHAPES + POSITIONS
WORD_ID = {w: i for i, w in enumerate(VOCAB)}


def encode_phrase(words) -> list[int]:
    try:
        return [WORD_ID[w] for w in words]
    except KeyError as exc:
        raise ValueError(f"word {exc.args[0]!r} is not in the vocabulary") from None


def phrase(size: str, color: str, shape: str, position: str) -> list[str]:
    return ["the", size, color, shape, "on", "the", position, "side"]


def rasterize(shape: str, cy: int, cx: int, r: int, h: int, w: int) -> np.ndarray:
    """Boolean mask of a shape centred at pixel (cy, cx) with half-extent r."""
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    if shape == "square":
        return (np.abs(dy) <= r) & (np.abs(dx) <= r)
    if shape == "circle":
        return dy * dy + dx * dx <= r * r
    if shape == "diamond":
        return np.abs(dy) + np.abs(dx) <= r
    if shape == "triangle":
        # apex at the top, base at cy + r
        return (dy >= -r) & (dy <= r) & (2 * np.abs(dx) <= dy + r)
    raise ValueError(f"unknown shape {shape!r}")


@dataclass(frozen=True)
class SynthSample:
    image: np.ndarray  # (H, W, 3) uint8
    words: list[str]
    token_ids: list[int]
    mask: np.ndarray  # (H, W) bool
    color: str


def make_sample(rng: np.random.Generator, size: int = 64) -> SynthSample:
    image = np.zeros((size, size, 3), dtype=np.uint8)
    half = size // 2
    objects = []
    for position in POSITIONS:
        size_word = str(rng.choice(list(SIZES)))
        r = SIZES[size_word]
        color = str(rng.choice(list(COLORS)))
        shape = str(rng.choice(SHAPES))
        x0 = 0 if position == "left" else half
        cx = int(rng.integers(x0 + r, x0 + half - r))
        cy = int(rng.integers(r, size - r))
        mask = rasterize(shape, cy, cx, r, size, size)
        image[mask] = COLORS[color]
        objects.append((size_word, color, shape, position, mask))
    size_word, color, shape, position, mask = objects[int(rng.integers(len(objects)))]
    words = phrase(size_word, color, shape, position)
    return SynthSample(image, words, encode_phrase(words), mask, color)


def generate(n: int, seed: int, out_dir: str | Path, size: int = 64) -> list[Path]:
    """Write ``n`` samples as ``sample_XXX.{ppm,pgm,txt}``; returns the image paths."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        s = make_sample(rng, size)
        stem = out / f"sample_{i:03d}"
        write_ppm(stem.with_suffix(".ppm"), s.image)
        write_pgm(stem.with_suffix(".pgm"), s.mask.astype(np.uint8) * 255)
        stem.with_suffix(".txt").write_text(" ".join(s.words) + "\n")
        paths.append(stem.with_suffix(".ppm"))
    return paths
