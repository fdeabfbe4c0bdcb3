"""Thinning functions and the two-thinning engine.

The engine turns a stream of candidates ``X_1, X_2, ...`` into an output
sequence ``Z_1, Z_2, ...``.  To place output ``n`` it looks at the next
candidate, computes a keep probability from the points kept so far and draws
one uniform ``U``; the candidate is kept when ``U <= keep_prob``.  After a
rejection the following candidate is kept unconditionally, so no two
consecutive candidates are ever rejected.

Strategies:

* ``monte_carlo`` keeps everything.
* ``haar`` keeps with probability ``lambda(x) - beta/2`` where
  ``lambda(x) = 1 + beta / (2 W(h)) * S(x)`` and ``S(x)`` is the signed sum
  of :meth:`CoefficientTable.signed_sum`.  This realizes ``lambda`` as the
  density of the next output point.
* ``greedy`` keeps with probability 1, ``1 - beta/2`` or ``1 - beta`` as
  ``S(x)`` is positive, zero or negative.
* ``greedy_paper_sign`` is ``greedy`` with the sign test inverted.

For output ``n`` the Haar orders used are ``1 .. floor(log2 n)``; the table
grows when ``n`` reaches a power of two.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import islice
from typing import Iterator

import numpy as np
from numba import njit

from .dyadic import DomainError, check_point, shape_count
from .table import CoefficientTable, _insert, _signed_sum


class Kind(enum.IntEnum):
    MONTE_CARLO = 0
    HAAR = 1
    GREEDY = 2
    GREEDY_PAPER_SIGN = 3


STRATEGY_NAMES = {
    "monte_carlo": Kind.MONTE_CARLO,
    "haar": Kind.HAAR,
    "greedy": Kind.GREEDY,
    "greedy_paper_sign": Kind.GREEDY_PAPER_SIGN,
}


class CandidatesExhausted(RuntimeError):
    """The candidate source ran dry before the requested number of outputs."""

    def __init__(self, produced: int, requested: int):
        super().__init__(
            f"candidate source exhausted after {produced} of {requested} outputs"
        )
        self.produced = produced
        self.requested = requested


@dataclass(frozen=True)
class StrategyConfig:
    kind: Kind
    beta: float = 1.0
    d: int = 1

    def __post_init__(self):
        kind = self.kind
        if isinstance(kind, str):
            try:
                kind = STRATEGY_NAMES[kind]
            except KeyError:
                raise ValueError(
                    f"unknown strategy {kind!r}; choose from {sorted(STRATEGY_NAMES)}"
                ) from None
        object.__setattr__(self, "kind", Kind(kind))
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.d < 1:
            raise ValueError(f"dimension must be positive, got {self.d}")

    @property
    def name(self) -> str:
        return self.kind.name.lower()


@dataclass(frozen=True)
class DensityValue:
    lam: float
    f: float


@dataclass(frozen=True)
class DecisionRecord:
    output_index: int
    candidate: tuple[float, ...]
    keep_prob: float
    kept: bool
    forced: bool


def monte_carlo_keep_prob(x=None) -> float:
    return 1.0


def haar_keep_prob(table: CoefficientTable, beta: float, x) -> DensityValue:
    """Density of the Haar strategy at ``x`` and the matching keep probability."""
    s = table.signed_sum(x)
    if table.h == 0:
        lam = 1.0
    else:
        lam = 1.0 + beta / (2 * table.W) * s
    return DensityValue(lam, _clamp(lam - beta / 2, 1.0 - beta))


def greedy_keep_prob(table: CoefficientTable, beta: float, x, convention: str = "balance") -> float:
    s = table.signed_sum(x)
    if convention == "paper_sign":
        s = -s
    elif convention != "balance":
        raise ValueError(f"unknown greedy convention {convention!r}")
    if s > 0:
        return 1.0
    if s == 0:
        return 1.0 - beta / 2
    return 1.0 - beta


@njit(cache=True, nogil=True)
def _clamp(f, lo):
    # lam - beta/2 can land one ulp outside [1 - beta, 1] when |S| = W
    return min(max(f, lo), 1.0)


@njit(cache=True, nogil=True)
def _keep_prob(kind, beta, w, s):
    if kind == 1:
        if w == 0:
            lam = 1.0
        else:
            lam = 1.0 + beta / (2 * w) * s
        return _clamp(lam - beta / 2, 1.0 - beta)
    if kind == 3:
        s = -s
    if s > 0:
        return 1.0
    if s == 0:
        return 1.0 - beta / 2
    return 1.0 - beta


@njit(cache=True, nogil=True)
def _advance(kind, beta, w, shapes, offsets, nshapes, coef, points, n_kept,
             cands, cpos, uniforms, u0, n_next, n_stop, pending,
             record, rec_index, rec_cand, rec_prob, rec_kept, rec_forced, rpos):
    while n_next <= n_stop and cpos < cands.shape[0]:
        x = cands[cpos]
        if pending:
            prob = 1.0
            kept = True
        else:
            if kind == 0:
                prob = 1.0
            else:
                s = _signed_sum(shapes, offsets, nshapes, coef, x)
                prob = _keep_prob(kind, beta, w, s)
            kept = uniforms[n_next - u0] <= prob
        if record:
            rec_index[rpos] = n_next
            rec_cand[rpos] = cpos
            rec_prob[rpos] = prob
            rec_kept[rpos] = kept
            rec_forced[rpos] = pending
            rpos += 1
        cpos += 1
        if kept:
            if kind != 0:
                _insert(shapes, offsets, nshapes, coef, x)
            points[n_kept] = x
            n_kept += 1
            n_next += 1
            pending = False
        else:
            pending = True
    return cpos, n_next, pending, n_kept, rpos


@dataclass
class Trace:
    """Per-candidate decision log of an engine, stored column-wise."""

    output_index: np.ndarray
    candidates: np.ndarray
    keep_prob: np.ndarray
    kept: np.ndarray
    forced: np.ndarray

    def __len__(self) -> int:
        return self.output_index.shape[0]

    def records(self) -> Iterator[DecisionRecord]:
        for i in range(len(self)):
            yield DecisionRecord(
                int(self.output_index[i]),
                tuple(float(v) for v in self.candidates[i]),
                float(self.keep_prob[i]),
                bool(self.kept[i]),
                bool(self.forced[i]),
            )


class CandidateSource:
    """Candidate points drawn from a generator, an array or an iterable of points.

    Blocks handed out but not consumed are returned with :meth:`give_back`, so
    the order in which candidates are seen never depends on block sizes.
    """

    def __init__(self, source, d: int, rng: np.random.Generator | None = None):
        self.d = d
        self._rng = None
        self._iter = None
        self._array = None
        self._held = np.zeros((0, d))
        if source is None:
            if rng is None:
                raise ValueError("a synthetic candidate source needs a generator")
            self._rng = rng
        elif isinstance(source, np.ndarray):
            self._array = np.ascontiguousarray(source, dtype=np.float64).reshape(-1, d)
            self._apos = 0
        else:
            self._iter = iter(source)

    def take(self, k: int) -> np.ndarray:
        if self._held.shape[0]:
            block, self._held = self._held[:k], self._held[k:]
            return block
        if self._rng is not None:
            return self._rng.random((k, self.d))
        if self._array is not None:
            block = self._array[self._apos : self._apos + k]
            self._apos += block.shape[0]
        else:
            rows = list(islice(self._iter, k))
            block = np.asarray(rows, dtype=np.float64).reshape(len(rows), self.d)
        inside = np.all((block >= 0.0) & (block < 1.0), axis=1)
        if not inside.all():
            bad = block[int(np.argmin(inside))]
            raise DomainError(f"candidate {bad.tolist()} is outside [0,1)^{self.d}")
        return np.ascontiguousarray(block)

    def give_back(self, block: np.ndarray) -> None:
        self._held = np.concatenate([block, self._held])


def make_streams(seed: int, run_index: int | None = None) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (candidate, decision) generators for one run."""
    entropy = [seed] if run_index is None else [seed, run_index]
    cand_ss, dec_ss = np.random.SeedSequence(entropy).spawn(2)
    return np.random.default_rng(cand_ss), np.random.default_rng(dec_ss)


class ThinningEngine:
    """Online (1+beta)-thinning of a candidate stream.

    Args:
        config: strategy, beta and dimension.
        rng: generator for the per-step uniforms (one per output index).
        record: keep a per-candidate :class:`Trace` during :meth:`advance`.
    """

    def __init__(self, config: StrategyConfig, rng: np.random.Generator | int,
                 record: bool = True):
        self.config = config
        self.table = CoefficientTable(config.d)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.record = record
        self.n_next = 1
        self.rejected_previous = False
        self.candidates_consumed = 0
        self._chunks: list[tuple] = []

    @property
    def outputs(self) -> np.ndarray:
        """``Z_1 .. Z_{n_next - 1}``."""
        return self.table.kept_points

    def prepare(self) -> None:
        """Grow the table to the Haar order used for output ``n_next``."""
        h_need = self.n_next.bit_length() - 1
        if h_need > self.table.h and self.config.kind != Kind.MONTE_CARLO:
            self.table.grow(h_need)

    def _w(self) -> int:
        return shape_count(self.table.h, self.config.d) if self.table.h else 0

    def keep_prob(self, x) -> float:
        """Keep probability for ``x`` as the next non-forced candidate."""
        self.prepare()
        kind = self.config.kind
        if kind == Kind.MONTE_CARLO:
            return monte_carlo_keep_prob(x)
        if kind == Kind.HAAR:
            return haar_keep_prob(self.table, self.config.beta, x).f
        convention = "paper_sign" if kind == Kind.GREEDY_PAPER_SIGN else "balance"
        return greedy_keep_prob(self.table, self.config.beta, x, convention)

    def _run_kernel(self, cands, uniforms, u0, n_stop, rec):
        t = self.table
        t._reserve(n_stop)
        cpos, n_next, pending, n_kept, rpos = _advance(
            int(self.config.kind), float(self.config.beta), self._w(),
            t._shape_arr, t._offsets, t.n_shapes, t._coef, t._points, t.n_kept,
            cands, 0, uniforms, u0, self.n_next, n_stop, self.rejected_previous,
            rec is not None, *(rec if rec is not None else _EMPTY_REC), 0,
        )
        self.n_next = n_next
        self.rejected_previous = bool(pending)
        t.n_kept = n_kept
        self.candidates_consumed += cpos
        return cpos, rpos

    def offer(self, x) -> DecisionRecord:
        """Process one candidate: keep it, reject it, or force-keep it after a rejection."""
        x = check_point(x, self.config.d)
        self.prepare()
        n = self.n_next
        forced = self.rejected_previous
        if forced:
            uniforms, u0 = _NO_UNIFORMS, n + 1
        else:
            uniforms, u0 = np.array([self.rng.random()]), n
        rec = _alloc_rec(1)
        self._run_kernel(x.reshape(1, -1), uniforms, u0, n, rec)
        return DecisionRecord(n, tuple(float(v) for v in x), float(rec[2][0]),
                              bool(rec[3][0]), forced)

    def advance(self, source: CandidateSource, n_target: int, chunk: int = 1 << 16) -> None:
        """Place outputs until ``n_next > n_target``."""
        while self.n_next <= n_target:
            self.prepare()
            h_need = self.n_next.bit_length() - 1
            seg_end = min(n_target, (1 << (h_need + 1)) - 1)
            first = self.n_next + int(self.rejected_previous)
            uniforms = self.rng.random(seg_end - first + 1)
            while self.n_next <= seg_end:
                need = 2 * (seg_end - self.n_next + 1) - int(self.rejected_previous)
                cands = source.take(min(need, chunk))
                if cands.shape[0] == 0:
                    raise CandidatesExhausted(self.n_next - 1, n_target)
                rec = _alloc_rec(cands.shape[0]) if self.record else None
                used, rpos = self._run_kernel(cands, uniforms, first, seg_end, rec)
                if rec is not None:
                    index, cpos, prob, kept, forced = rec
                    self._chunks.append((index[:rpos], cands[cpos[:rpos]], prob[:rpos],
                                         kept[:rpos], forced[:rpos]))
                if used < cands.shape[0]:
                    source.give_back(cands[used:])

    def trace(self) -> Trace:
        if not self._chunks:
            d = self.config.d
            return Trace(np.zeros(0, np.int64), np.zeros((0, d)), np.zeros(0),
                         np.zeros(0, bool), np.zeros(0, bool))
        cols = list(zip(*self._chunks))
        return Trace(*(np.concatenate(c) for c in cols))


_NO_UNIFORMS = np.zeros(0, dtype=np.float64)
_EMPTY_REC = (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0),
              np.zeros(0, np.bool_), np.zeros(0, np.bool_))


def _alloc_rec(k: int):
    return (np.zeros(k, np.int64), np.zeros(k, np.int64), np.zeros(k),
            np.zeros(k, np.bool_), np.zeros(k, np.bool_))


@dataclass
class RunResult:
    config: StrategyConfig
    points: np.ndarray
    candidates_consumed: int
    trace: Trace | None

    @property
    def decisions(self) -> Iterator[DecisionRecord]:
        return self.trace.records() if self.trace is not None else iter(())


def run(config: StrategyConfig, seed: int, n_max: int, candidate_source=None,
        run_index: int | None = None, record: bool = True) -> RunResult:
    """Produce ``Z_1 .. Z_{n_max}`` for one seeded run.

    ``candidate_source`` is ``None`` for uniform candidates drawn from the
    seed, or an array / iterable of points.  The decision uniforms always come
    from the seed, on a stream separate from the synthetic candidates.
    """
    cand_rng, dec_rng = make_streams(seed, run_index)
    source = CandidateSource(candidate_source, config.d, cand_rng)
    engine = ThinningEngine(config, dec_rng, record=record)
    engine.advance(source, n_max)
    return RunResult(config, engine.outputs.copy(), engine.candidates_consumed,
                     engine.trace() if record else None)
