"""Replicated thinning experiments with CSV output.

Every replicate ``r`` of a configuration with master seed ``s`` draws its
candidates and decisions from streams derived from ``(s, r)``, so results do
not depend on how replicates are scheduled across threads.  Rows are written
in canonical order (strategy, run, n, metric).
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .discrepancy import bias_curve, default_lattice_order, interval_disc_1d, lattice_disc
from .dyadic import RectSpec
from .strategies import (
    CandidateSource,
    CandidatesExhausted,
    StrategyConfig,
    ThinningEngine,
    make_streams,
)

ROW_HEADER = ("strategy", "d", "beta", "seed", "run", "n", "metric", "value", "seconds")
SUMMARY_HEADER = ("strategy", "d", "n", "metric", "mean", "std", "stderr", "reps")

THREADS_ENV = "HAARTHIN_THREADS"


def fmt(x: float) -> str:
    return f"{x:.6g}"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


class PointParseError(ValueError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line.rstrip()!r}")
        self.lineno = lineno


def parse_points(lines: Iterable[str], d: int):
    """Yield points from comma-separated lines, skipping blanks and ``#`` comments."""
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise PointParseError(lineno, line, "not a list of decimals") from None
        if len(vals) != d:
            raise PointParseError(lineno, line, f"expected {d} coordinates, got {len(vals)}")
        if not all(0.0 <= v < 1.0 for v in vals):
            raise PointParseError(lineno, line, "coordinate outside [0,1)")
        yield vals


def load_points(path, d: int) -> np.ndarray:
    with open(path) as fh:
        pts = list(parse_points(fh, d))
    return np.asarray(pts, dtype=np.float64).reshape(-1, d)


@dataclass(frozen=True)
class Metric:
    """``disc`` (exact in 1-D, lattice otherwise) or the bias of a fixed rectangle."""

    kind: str
    rect: RectSpec | None = None

    @classmethod
    def parse(cls, text: str) -> "Metric":
        text = text.strip()
        if text == "disc":
            return cls("disc")
        if text.startswith("bias:"):
            return cls("bias", RectSpec.parse(text[5:]))
        raise ValueError(f"unknown metric {text!r}; use 'disc' or 'bias:<rect>'")

    @property
    def name(self) -> str:
        return "disc" if self.kind == "disc" else f"bias:{self.rect.format()}"


@dataclass
class ExperimentConfig:
    strategies: Sequence[str]
    d: int = 1
    beta: float = 1.0
    master_seed: int = 0
    reps: int = 20
    checkpoints: Sequence[int] = (1 << 13,)
    metrics: Sequence[Metric] = (Metric("disc"),)
    lattice_order: int | None = None
    candidates: np.ndarray | None = None
    timing: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        cps = list(self.checkpoints)
        if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError(f"checkpoints must be positive and strictly increasing: {cps}")
        for s in self.strategies:
            StrategyConfig(s, self.beta, self.d)
        for m in self.metrics:
            if m.rect is not None and m.rect.d != self.d:
                raise ValueError(f"rectangle {m.rect} does not have dimension {self.d}")


@dataclass(frozen=True)
class ResultRow:
    strategy: str
    d: int
    beta: float
    seed: int
    run: int
    n: int
    metric: str
    value: float
    seconds: float

    def csv_row(self) -> list[str]:
        return [self.strategy, str(self.d), fmt(self.beta), str(self.seed), str(self.run),
                str(self.n), self.metric, fmt(self.value), fmt(self.seconds)]


@dataclass(frozen=True)
class SummaryRow:
    strategy: str
    d: int
    n: int
    metric: str
    mean: float
    std: float
    stderr: float
    reps: int

    def csv_row(self) -> list[str]:
        return [self.strategy, str(self.d), str(self.n), self.metric, fmt(self.mean),
                fmt(self.std), fmt(self.stderr), str(self.reps)]


@dataclass
class Replicate:
    rows: list[ResultRow]
    error: CandidatesExhausted | None = None


def _measure(points: np.ndarray, metric: Metric, ns: list[int], lattice_order: int | None):
    if metric.kind == "bias":
        return list(bias_curve(points, metric.rect, ns))
    if points.shape[1] == 1:
        return [interval_disc_1d(points[:n]).value for n in ns]
    return [lattice_disc(points[:n], lattice_order or default_lattice_order(n)).value
            for n in ns]


def run_replicate(config: ExperimentConfig, strategy: str, run_index: int) -> Replicate:
    """One seeded run up to the last checkpoint, measured at every checkpoint."""
    start = time.perf_counter()
    sc = StrategyConfig(strategy, config.beta, config.d)
    cand_rng, dec_rng = make_streams(config.master_seed, run_index)
    engine = ThinningEngine(sc, dec_rng, record=False)
    source = CandidateSource(config.candidates, config.d, cand_rng)
    error = None
    try:
        engine.advance(source, config.checkpoints[-1])
    except CandidatesExhausted as exc:
        error = exc
    points = engine.outputs
    ns = [n for n in config.checkpoints if n <= points.shape[0]]
    values = {m.name: _measure(points, m, ns, config.lattice_order) for m in config.metrics}
    seconds = time.perf_counter() - start if config.timing else 0.0
    rows = [
        ResultRow(strategy, config.d, config.beta, config.master_seed, run_index, n,
                  m.name, float(values[m.name][i]), seconds)
        for i, n in enumerate(ns)
        for m in config.metrics
    ]
    return Replicate(rows, error)


def iter_replicates(config: ExperimentConfig):
    """Yield replicates in canonical order, computing them on a thread pool."""
    jobs = [(s, r) for s in config.strategies for r in range(config.reps)]
    workers = config.threads or thread_count()
    if workers == 1:
        for s, r in jobs:
            yield run_replicate(config, s, r)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda job: run_replicate(config, *job), jobs)


def summarize(rows: Iterable[ResultRow]) -> list[SummaryRow]:
    """Mean, sample standard deviation and standard error per (strategy, d, n, metric).

    With a single replicate the spread columns are NaN.
    """
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault((row.strategy, row.d, row.n, row.metric), []).append(row.value)
    out = []
    for key, vals in groups.items():
        if not vals:
            raise ValueError(f"empty group {key}")
        arr = np.asarray(vals, dtype=np.float64)
        k = arr.shape[0]
        std = float(arr.std(ddof=1)) if k > 1 else math.nan
        out.append(SummaryRow(*key, float(arr.mean()), std, std / math.sqrt(k), k))
    return out


def simulate(config: ExperimentConfig, stream: IO[str]) -> tuple[list[ResultRow], list[CandidatesExhausted]]:
    """Write result rows as they complete, then a blank line and the summary block."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(ROW_HEADER)
    rows: list[ResultRow] = []
    errors = []
    for rep in iter_replicates(config):
        for row in rep.rows:
            writer.writerow(row.csv_row())
        stream.flush()
        rows.extend(rep.rows)
        if rep.error is not None:
            errors.append(rep.error)
    stream.write("\n")
    writer.writerow(SUMMARY_HEADER)
    for s in summarize(rows):
        writer.writerow(s.csv_row())
    stream.flush()
    return rows, errors


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cell(s: SummaryRow) -> str:
    return f"{s.mean:.1f} ({s.std:.1f})"


# -- presets ---------------------------------------------------------------

TABLE1_STRATEGIES = ("monte_carlo", "haar", "greedy")
TABLE1_COLUMNS = tuple(1 << k for k in (7, 9, 11, 13, 15, 17, 19))
TABLE2_RECTS = {
    "[0,1/2)": (0.0, 0.5),
    "[1/3,5/6)": (1 / 3, 5 / 6),
}
TABLE2_COLUMNS = (10, 100, 1000, 10_000, 100_000)


@dataclass
class PresetResult:
    rows: list[ResultRow] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


def table1(out_dir=None, reps: int = 20, seed: int = 0, n_max: int = 1 << 19,
           threads: int | None = None) -> PresetResult:
    """Discrepancy of the three strategies in 1-D, beta = 1.

    Measures every power of two up to ``n_max`` (curve data); the laid-out
    table shows ``2^7, 2^9, ..., 2^19``.
    """
    checkpoints = [1 << k for k in range(1, n_max.bit_length()) if 1 << k <= n_max]
    config = ExperimentConfig(TABLE1_STRATEGIES, 1, 1.0, seed, reps, checkpoints,
                              threads=threads)
    result = PresetResult()
    for rep in iter_replicates(config):
        result.rows.extend(rep.rows)
    result.summary = summarize(result.rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = [n for n in TABLE1_COLUMNS if n <= n_max]
        by_key = {(s.strategy, s.n): s for s in result.summary}
        write_csv(out / "table1_rows.csv", ROW_HEADER, (r.csv_row() for r in result.rows))
        write_csv(out / "table1_summary.csv", SUMMARY_HEADER, (s.csv_row() for s in result.summary))
        write_csv(out / "table1.csv", ["strategy"] + [str(n) for n in cols],
                  ([st] + [_cell(by_key[st, n]) for n in cols] for st in TABLE1_STRATEGIES))
        meta = {
            "preset": "table1", "d": 1, "beta": 1.0, "reps": reps, "master_seed": seed,
            "metric": "exact 1-D interval discrepancy",
            "cell": "mean (sample standard deviation)",
            "note": "columns are 2^7, 2^9, ..., 2^19; rows cover every power of two",
        }
        (out / "table1_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        result.files = [out / f for f in ("table1_rows.csv", "table1_summary.csv",
                                          "table1.csv", "table1_meta.json")]
    return result


def table2_checkpoints(n_max: int) -> list[int]:
    ns = sorted({math.ceil(10 ** (j / 4)) for j in range(4, 21)})
    return [n for n in ns if n <= n_max]


def table2(out_dir=None, reps: int = 20, seed: int = 0, n_max: int = 100_000,
           threads: int | None = None) -> PresetResult:
    """Bias of ``[0,1/2)^d`` and ``[1/3,5/6)^d`` for d = 1, 2 and the three strategies."""
    result = PresetResult()
    checkpoints = table2_checkpoints(n_max)
    for d in (1, 2):
        metrics = [Metric("bias", RectSpec((lo,) * d, (hi,) * d))
                   for lo, hi in TABLE2_RECTS.values()]
        config = ExperimentConfig(TABLE1_STRATEGIES, d, 1.0, seed, reps, checkpoints,
                                  metrics, threads=threads)
        for rep in iter_replicates(config):
            result.rows.extend(rep.rows)
    result.summary = summarize(result.rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        by_key = {(s.strategy, s.d, s.n, s.metric): s for s in result.summary}
        header = ["rect", "n"] + [f"d{d}_{st}" for d in (1, 2) for st in TABLE1_STRATEGIES]
        layout = []
        for label, (lo, hi) in TABLE2_RECTS.items():
            for n in (c for c in TABLE2_COLUMNS if c <= n_max):
                cells = []
                for d in (1, 2):
                    name = Metric("bias", RectSpec((lo,) * d, (hi,) * d)).name
                    cells += [_cell(by_key[st, d, n, name]) for st in TABLE1_STRATEGIES]
                layout.append([label, str(n)] + cells)
        write_csv(out / "table2_rows.csv", ROW_HEADER, (r.csv_row() for r in result.rows))
        write_csv(out / "table2_summary.csv", SUMMARY_HEADER, (s.csv_row() for s in result.summary))
        write_csv(out / "table2.csv", header, layout)
        meta = {
            "preset": "table2", "beta": 1.0, "reps": reps, "master_seed": seed,
            "metric": "bias |#(Z in R) - n |R||", "cell": "mean (sample standard deviation)",
            "rects": {k: f"[{lo:.6g},{hi:.6g})^d" for k, (lo, hi) in TABLE2_RECTS.items()},
        }
        (out / "table2_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
        result.files = [out / f for f in ("table2_rows.csv", "table2_summary.csv",
                                          "table2.csv", "table2_meta.json")]
    return result
