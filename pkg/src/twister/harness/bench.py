"""Wall-clock scaling of the selective scan versus attention."""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass

import numpy as np

from ..fusion import attention
from ..ssm import SelectiveSSM

log = logging.getLogger(__name__)

MECHANISMS = ("selective_scan", "cross_attention")
SCAN_MAX_RATIO = 2.6
ATTENTION_MIN_RATIO = 3.2


@dataclass(frozen=True)
class BenchRow:
    mechanism: str
    length: int
    median_ns: int
    ratio: float | None


@dataclass
class BenchReport:
    rows: list[BenchRow]
    violations: list[str]

    def to_csv(self) -> str:
        lines = ["mechanism,L,median_ns,ratio"]
        for r in self.rows:
            ratio = "" if r.ratio is None else f"{r.ratio:.4f}"
            lines.append(f"{r.mechanism},{r.length},{r.median_ns},{ratio}")
        return "\n".join(lines) + "\n"

    def ratios(self, mechanism: str) -> list[float]:
        return [r.ratio for r in self.rows if r.mechanism == mechanism and r.ratio is not None]


def validate_lengths(lengths: list[int]) -> None:
    if len(lengths) < 4:
        raise ValueError(f"need at least 4 lengths, got {len(lengths)}")
    if any(b <= a for a, b in zip(lengths, lengths[1:])) or lengths[0] < 1:
        raise ValueError("lengths must be positive and strictly ascending")
    if lengths[-1] < 16 * lengths[0]:
        raise ValueError("lengths must span at least a factor of 16")


def median_ns(fn, repeats: int = 9, warmup: int = 1) -> int:
    if repeats < 9:
        raise ValueError("at least 9 repetitions are required")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return max(1, int(statistics.median(samples)))


def _scan_case(length: int, rng: np.random.Generator, dim: int = 16, state_dim: int = 8):
    ssm = SelectiveSSM.init(dim, state_dim, rng)
    tokens = rng.standard_normal((length, dim))
    return lambda: ssm(tokens, parallel=False)


def _attention_case(length: int, rng: np.random.Generator, dim: int = 16, rows: int = 512):
    q, k, v = (rng.standard_normal((length, dim)) for _ in range(3))

    def run():
        # row blocks bound memory; the work is still L x L
        for s in range(0, length, rows):
            attention(q[s : s + rows], k, v)

    return run


CASES = {"selective_scan": _scan_case, "cross_attention": _attention_case}


def run_bench(lengths: list[int], mechanisms=MECHANISMS, repeats: int = 9, seed: int = 0) -> BenchReport:
    """Median timings per (mechanism, L) and the soft complexity check.

    The check looks at the last three growth ratios of each mechanism, which
    are doublings for the usual power-of-two length lists.
    """
    validate_lengths(lengths)
    rows: list[BenchRow] = []
    violations: list[str] = []
    for mech in mechanisms:
        if mech not in CASES:
            raise ValueError(f"unknown mechanism {mech!r}; choose from {', '.join(CASES)}")
        rng = np.random.default_rng(seed)
        prev = None
        for length in lengths:
            t = median_ns(CASES[mech](length, rng), repeats)
            ratio = None
            if prev is not None and length == 2 * prev[0]:
                ratio = t / prev[1]
            rows.append(BenchRow(mech, length, t, ratio))
            log.info("%s L=%d median=%dns ratio=%s", mech, length, t, ratio)
            prev = (length, t)
        tail = [r for r in rows if r.mechanism == mech and r.ratio is not None][-3:]
        for r in tail:
            if mech == "selective_scan" and r.ratio > SCAN_MAX_RATIO:
                violations.append(f"selective_scan ratio {r.ratio:.2f} > {SCAN_MAX_RATIO} at L={r.length}")
            if mech == "cross_attention" and r.ratio < ATTENTION_MIN_RATIO:
                violations.append(f"cross_attention ratio {r.ratio:.2f} < {ATTENTION_MIN_RATIO} at L={r.length}")
    return BenchReport(rows, violations)
