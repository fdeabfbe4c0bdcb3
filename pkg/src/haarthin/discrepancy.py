"""Rectangle discrepancy and bias of finite point sets in [0,1)^d.

Suprema over half-open boxes are usually approached only in a limit, with a
box edge sliding up to a point coordinate from one side.  Both one-sided
limits are evaluated by counting with ``<`` versus ``<=``; the box reported
in :attr:`DiscReport.argmax_rect` realizes the limit by moving the edge to the
next representable double.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from numba import njit

from .dyadic import MAX_LEVEL, RectSpec

BRUTE_MAX_CELLS = 50_000_000


@dataclass(frozen=True)
class DiscReport:
    value: float
    argmax_rect: RectSpec
    method: str
    n: int
    lattice_order: int | None = None
    additive_error_bound: float = 0.0

    CSV_FIELDS = ("method", "lattice_order", "value", "error_bound", "argmax")

    def csv_row(self) -> list[str]:
        return [
            self.method,
            "" if self.lattice_order is None else str(self.lattice_order),
            f"{self.value:.6g}",
            f"{self.additive_error_bound:.6g}",
            self.argmax_rect.format(17),
        ]


def _as_points(points, d: int | None = None) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if d in (None, 1) else pts.reshape(-1, d)
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"expected {d}-dimensional points, got {pts.shape[1]}")
    if pts.size and not np.all((pts >= 0.0) & (pts < 1.0)):
        raise ValueError("points must lie in [0,1)^d")
    return pts


def _above(t: float) -> float:
    return min(math.nextafter(t, math.inf), 1.0)


def deviation(points, rect: RectSpec) -> float:
    """``#{points in rect} - n * vol(rect)``."""
    pts = _as_points(points, rect.d)
    return rect.count(pts) - pts.shape[0] * rect.volume


def rect_bias(points, rect: RectSpec) -> float:
    """``|#{points in rect} - n * vol(rect)|``."""
    return abs(deviation(points, rect))


def bias_curve(points, rect: RectSpec, ns) -> np.ndarray:
    """Bias of ``rect`` for each prefix ``points[:n]``, ``n`` in ``ns``."""
    pts = _as_points(points, rect.d)
    hits = np.concatenate([[0], np.cumsum(rect.contains(pts))])
    ns = np.asarray(ns, dtype=np.int64)
    return np.abs(hits[ns] - ns * rect.volume)


def interval_disc_1d(points) -> DiscReport:
    """Exact discrepancy over half-open intervals of a 1-D point set, in O(n log n).

    With ``G(t) = #{x_i < t} - n t`` the deviation of ``[a, b)`` is
    ``G(b) - G(a)``, so the supremum is ``sup G - inf G``.  ``G`` decreases
    between points, hence its supremum is a right limit at a point (or 0 at
    the ends) and its infimum a left limit at a point.
    """
    x = np.sort(_as_points(points, 1)[:, 0])
    n = x.shape[0]
    if n == 0:
        return DiscReport(0.0, RectSpec.unit(1), "exact_1d", 0)
    upper = np.searchsorted(x, x, side="right") - n * x
    lower = np.searchsorted(x, x, side="left") - n * x
    k = int(np.argmax(upper))
    j = int(np.argmin(lower))
    sup_pt = upper[k] > 0
    inf_pt = lower[j] < 0
    value = (upper[k] if sup_pt else 0.0) - (lower[j] if inf_pt else 0.0)
    if sup_pt and inf_pt:
        if x[j] <= x[k]:
            lo, hi = x[j], _above(x[k])
        else:
            lo, hi = _above(x[k]), x[j]
    elif sup_pt:
        lo, hi = 0.0, _above(x[k])
    elif inf_pt:
        lo, hi = x[j], 1.0
    else:
        lo, hi = 0.0, 1.0
    return DiscReport(float(value), RectSpec((lo,), (hi,)), "exact_1d", n)


def _grid_counts(pts: np.ndarray, level: int) -> np.ndarray:
    n, d = pts.shape
    m = 1 << level
    cells = np.floor(pts * m).astype(np.int64)
    flat = np.ravel_multi_index(tuple(cells.T), (m,) * d) if n else np.zeros(0, np.int64)
    return np.bincount(flat, minlength=m**d).reshape((m,) * d)


def _prefix(counts: np.ndarray) -> np.ndarray:
    p = np.zeros(tuple(s + 1 for s in counts.shape), dtype=np.int64)
    inner = counts.astype(np.int64)
    for ax in range(counts.ndim):
        inner = np.cumsum(inner, axis=ax)
    p[(slice(1, None),) * counts.ndim] = inner
    return p


def _lattice_1d(p: np.ndarray, n: int, m: int):
    dev = p - n * np.arange(m + 1) / m
    a, b = int(np.argmin(dev)), int(np.argmax(dev))
    return dev[b] - dev[a], [(min(a, b), max(a, b))]


@njit(cache=True, nogil=True)
def _scan_2d(p, n, m):
    # for every pair of row boundaries the column deviations form a sequence
    # whose largest rise and largest fall give the extreme boxes in that strip
    best = 0.0
    arg = np.zeros(4, dtype=np.int64)
    for i1 in range(m):
        for i2 in range(i1 + 1, m + 1):
            h = (i2 - i1) / m
            lo_val, lo_idx, hi_val, hi_idx = 0.0, 0, 0.0, 0
            for j in range(1, m + 1):
                q = (p[i2, j] - p[i1, j]) - n * h * (j / m)
                if q - lo_val > best:
                    best = q - lo_val
                    arg[0], arg[1], arg[2], arg[3] = i1, i2, lo_idx, j
                if hi_val - q > best:
                    best = hi_val - q
                    arg[0], arg[1], arg[2], arg[3] = i1, i2, hi_idx, j
                if q < lo_val:
                    lo_val, lo_idx = q, j
                if q > hi_val:
                    hi_val, hi_idx = q, j
    return best, arg


def _lattice_2d(p: np.ndarray, n: int, m: int):
    best, arg = _scan_2d(p, n, m)
    if best == 0:
        return 0.0, None
    return float(best), [(int(arg[0]), int(arg[1])), (int(arg[2]), int(arg[3]))]


def _lattice_full(p: np.ndarray, n: int, m: int):
    d = p.ndim
    pairs = np.array(list(combinations_with_replacement(range(m + 1), 2)))
    pairs = pairs[pairs[:, 0] < pairs[:, 1]]
    if pairs.shape[0] ** d > BRUTE_MAX_CELLS:
        raise MemoryError(f"full lattice enumeration of {pairs.shape[0]}^{d} boxes is too large")
    counts = p
    for ax in range(d):
        counts = np.take(counts, pairs[:, 1], axis=ax) - np.take(counts, pairs[:, 0], axis=ax)
    widths = (pairs[:, 1] - pairs[:, 0]) / m
    vol = widths
    for _ in range(d - 1):
        vol = np.multiply.outer(vol, widths)
    dev = np.abs(counts - n * vol)
    idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
    return float(dev[idx]), [tuple(pairs[i]) for i in idx]


def lattice_disc(points, level: int, method: str = "auto") -> DiscReport:
    """Largest deviation over lattice rectangles with corners on the ``2**-level`` grid.

    The true rectangle discrepancy lies in
    ``[value, value + additive_error_bound]``.

    Args:
        points: array of shape ``(n, d)``.
        level: grid resolution per axis.
        method: ``"auto"`` (1-D prefix extremes, 2-D row-pair scan, full
            enumeration otherwise) or ``"full"`` to force full enumeration.
    """
    pts = _as_points(points)
    n, d = pts.shape
    if not 1 <= level <= MAX_LEVEL:
        raise ValueError(f"lattice order must lie in [1, {MAX_LEVEL}], got {level}")
    if (1 << level) ** d > BRUTE_MAX_CELLS:
        raise MemoryError(f"a 2^{level} grid in dimension {d} is too large")
    m = 1 << level
    p = _prefix(_grid_counts(pts, level))
    if method == "full":
        value, arg = _lattice_full(p, n, m)
    elif d == 1:
        value, arg = _lattice_1d(p, n, m)
    elif d == 2:
        value, arg = _lattice_2d(p, n, m)
    else:
        value, arg = _lattice_full(p, n, m)
    if arg is None or value == 0:
        rect = RectSpec.unit(d)
    else:
        rect = RectSpec(tuple(a / m for a, _ in arg), tuple(b / m for _, b in arg))
    return DiscReport(float(value), rect, "lattice", n, level,
                      n * 2 * d * 2.0 ** (1 - level))


def brute_disc_oracle(points, d: int | None = None) -> DiscReport:
    """Exact rectangle discrepancy by enumerating every candidate box.

    Per axis the candidate edges are the point coordinates and 0, 1, each
    taken as a limit from below and from above.  Exponential in ``d``; meant
    for small test instances.
    """
    pts = _as_points(points, d)
    n, d = pts.shape
    if n == 0:
        return DiscReport(0.0, RectSpec.unit(d), "brute", 0)
    axes = []
    total = 1
    for ax in range(d):
        vals = np.unique(np.concatenate([pts[:, ax], [0.0, 1.0]]))
        t = np.repeat(vals, 2)
        side = np.tile([0, 1], vals.shape[0])  # 0: limit from below, 1: from above
        a_idx, b_idx = np.triu_indices(t.shape[0])
        lo_t, lo_s, hi_t, hi_s = t[a_idx], side[a_idx], t[b_idx], side[b_idx]
        c = pts[:, ax][None, :]
        inside_lo = np.where(lo_s[:, None] == 0, c >= lo_t[:, None], c > lo_t[:, None])
        inside_hi = np.where(hi_s[:, None] == 0, c < hi_t[:, None], c <= hi_t[:, None])
        axes.append((inside_lo & inside_hi, hi_t - lo_t, lo_t, lo_s, hi_t, hi_s))
        total *= lo_t.shape[0]
    if total > BRUTE_MAX_CELLS:
        raise MemoryError(f"brute-force search over {total} boxes is too large")
    letters = "abcdefgh"[:d]
    member = [a[0].astype(np.int64) for a in axes]
    counts = np.einsum(",".join(f"{l}z" for l in letters) + "->" + letters, *member)
    vol = axes[0][1]
    for a in axes[1:]:
        vol = np.multiply.outer(vol, a[1])
    dev = np.abs(counts - n * vol)
    idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
    value = float(dev[idx])
    if value == 0:
        return DiscReport(0.0, RectSpec.unit(d), "brute", n)
    lo, hi = [], []
    for ax, i in enumerate(idx):
        _, _, lo_t, lo_s, hi_t, hi_s = axes[ax]
        lo.append(_above(lo_t[i]) if lo_s[i] else float(lo_t[i]))
        hi.append(_above(hi_t[i]) if hi_s[i] else float(hi_t[i]))
    return DiscReport(value, RectSpec(tuple(lo), tuple(hi)), "brute", n)


def disc_curve_1d(points, ns) -> np.ndarray:
    """Exact 1-D discrepancy of each prefix ``points[:n]``."""
    pts = _as_points(points, 1)
    return np.array([interval_disc_1d(pts[:n]).value for n in ns])


def default_lattice_order(n: int) -> int:
    return max(1, min(int(n).bit_length() - 1, 10))
