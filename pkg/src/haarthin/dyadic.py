"""Dyadic geometry and the (unnormalized) tensor Haar basis on [0,1)^d.

A Haar function is identified by a *shape* ``s`` (one nonnegative order per
axis) and a position vector.  Axis ``i`` contributes the constant 1 when
``s[i] == 0`` and a 1-D Haar factor of order ``s[i]`` otherwise; the 1-D
factor of order ``k`` lives on a dyadic interval of level ``k - 1`` and is
+1 on its left (even) half and -1 on its right (odd) half.  The order of the
function is ``sum(s)``.

All intervals are half-open and cell membership is ``floor(x * 2**level)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Sequence

import numpy as np

#: Deepest dyadic level handled anywhere in the package.  Every endpoint of a
#: level <= 40 grid is exactly representable as a double.
MAX_LEVEL = 40

_INT64_MAX = 2**63 - 1

Shape = tuple[int, ...]


class DomainError(ValueError):
    """A coordinate fell outside [0, 1)."""


def check_point(x: Sequence[float], d: int | None = None) -> np.ndarray:
    """Return ``x`` as a float64 vector after checking it lies in [0,1)^d."""
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if d is not None and arr.shape[0] != d:
        raise DomainError(f"expected a point of dimension {d}, got {arr.shape[0]}")
    if not np.all((arr >= 0.0) & (arr < 1.0)):
        raise DomainError(f"point {arr.tolist()} is outside [0,1)^{arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class DyadicInterval:
    """``[index * 2**-level, (index + 1) * 2**-level)``."""

    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or self.level > MAX_LEVEL:
            raise ValueError(f"level {self.level} outside [0, {MAX_LEVEL}]")
        if not 0 <= self.index < (1 << self.level):
            raise ValueError(f"index {self.index} outside [0, 2^{self.level})")

    @property
    def order(self) -> int:
        return self.level

    @property
    def lo(self) -> float:
        return math.ldexp(self.index, -self.level)

    @property
    def hi(self) -> float:
        return math.ldexp(self.index + 1, -self.level)

    @property
    def even(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index)

    @property
    def odd(self) -> "DyadicInterval":
        return DyadicInterval(self.level + 1, 2 * self.index + 1)


@dataclass(frozen=True)
class RectSpec:
    """Axis-parallel half-open box ``prod [lo_i, hi_i)`` inside [0,1)^d."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be nonempty and of equal length")
        for a, b in zip(lo, hi):
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"invalid side [{a}, {b}) for a rectangle in [0,1)")

    @classmethod
    def unit(cls, d: int) -> "RectSpec":
        return cls((0.0,) * d, (1.0,) * d)

    @classmethod
    def parse(cls, text: str) -> "RectSpec":
        """Parse the ``"lo1,hi1;lo2,hi2;..."`` text form."""
        lo, hi = [], []
        for side in text.strip().split(";"):
            parts = side.split(",")
            if len(parts) != 2:
                raise ValueError(f"cannot parse rectangle side {side!r} in {text!r}")
            lo.append(float(parts[0]))
            hi.append(float(parts[1]))
        return cls(tuple(lo), tuple(hi))

    def format(self, digits: int = 6) -> str:
        return ";".join(f"{a:.{digits}g},{b:.{digits}g}" for a, b in zip(self.lo, self.hi))

    def __str__(self) -> str:
        return self.format()

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    def contains(self, points) -> np.ndarray:
        """Boolean mask of the rows of ``points`` lying in the box."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, self.d)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts >= lo) & (pts < hi), axis=1)

    def count(self, points) -> int:
        return int(np.count_nonzero(self.contains(points)))

    def is_lattice(self, level: int) -> bool:
        scale = 2.0**level
        return all(
            float(v * scale).is_integer() for v in self.lo + self.hi
        )

    def dyadic_levels(self) -> tuple[int, ...] | None:
        """Per-axis levels if the box is a dyadic rectangle, else ``None``."""
        levels = []
        for a, b in zip(self.lo, self.hi):
            mant, exp = math.frexp(b - a)
            if mant != 0.5:
                return None
            level = 1 - exp
            if level > MAX_LEVEL or not math.ldexp(a, level).is_integer():
                return None
            levels.append(level)
        return tuple(levels)


@dataclass(frozen=True)
class HaarId:
    """One tensor Haar function: a shape plus per-axis positions.

    ``pos[i]`` indexes the dyadic interval of level ``shape[i] - 1`` carrying
    the axis factor; it is 0 on constant axes.
    """

    shape: Shape
    pos: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "pos", tuple(int(p) for p in self.pos))
        if len(self.shape) != len(self.pos) or not self.shape:
            raise ValueError("shape and pos must be nonempty and of equal length")
        if sum(self.shape) < 1 or min(self.shape) < 0:
            raise ValueError(f"invalid shape {self.shape}")
        if max(self.shape) > MAX_LEVEL:
            raise ValueError(f"shape {self.shape} exceeds level cap {MAX_LEVEL}")
        for s, p in zip(self.shape, self.pos):
            if not 0 <= p < axis_cells(s):
                raise ValueError(f"position {self.pos} out of range for shape {self.shape}")

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def order(self) -> int:
        return sum(self.shape)

    @property
    def support_volume(self) -> float:
        """``<H, H>``, the volume where ``H != 0``."""
        return math.ldexp(1.0, -sum(max(s - 1, 0) for s in self.shape))

    @property
    def kappa(self) -> float:
        """Volume of ``H^+`` (equal to that of ``H^-``)."""
        return self.support_volume / 2

    def support(self) -> RectSpec:
        lo, hi = [], []
        for s, p in zip(self.shape, self.pos):
            if s == 0:
                lo.append(0.0)
                hi.append(1.0)
            else:
                iv = DyadicInterval(s - 1, p)
                lo.append(iv.lo)
                hi.append(iv.hi)
        return RectSpec(tuple(lo), tuple(hi))

    def __call__(self, x) -> int:
        return haar_eval(self, x)


def axis_cells(s: int) -> int:
    """Number of positions for an axis factor of order ``s``."""
    return 1 << max(s - 1, 0)


def shape_size(shape: Shape) -> int:
    """Number of Haar functions sharing ``shape``."""
    return 1 << sum(max(s - 1, 0) for s in shape)


def shape_count(h: int, d: int) -> int:
    """``W(h) = sum_{i=1}^{h} C(i + d - 1, d - 1)``, the number of shapes of order 1..h."""
    if h < 0 or d < 1:
        raise ValueError(f"need h >= 0 and d >= 1, got h={h}, d={d}")
    total = sum(math.comb(i + d - 1, d - 1) for i in range(1, h + 1))
    if total > _INT64_MAX:
        raise OverflowError(f"W({h}) in dimension {d} does not fit in 64 bits")
    return total


def _compositions(k: int, d: int) -> Iterator[Shape]:
    # descending lexicographic order: (k,0,..), ..., (0,..,k)
    if d == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _compositions(k - first, d - 1):
            yield (first,) + rest


def enumerate_shapes(h: int, d: int) -> list[Shape]:
    """All shapes of order 1..h, ordered by order and then descending lexicographically."""
    shape_count(h, d)
    return [s for k in range(1, h + 1) for s in _compositions(k, d)]


def locate_nonzero(shape: Shape, x) -> tuple[tuple[int, ...], int]:
    """Position of the unique Haar function of ``shape`` that is nonzero at ``x``, and its sign."""
    x = check_point(x, len(shape))
    pos = []
    sign = 1
    for s, xi in zip(shape, x):
        if s == 0:
            pos.append(0)
            continue
        cell = int(math.ldexp(xi, s))
        pos.append(cell >> 1)
        if cell & 1:
            sign = -sign
    return tuple(pos), sign


def haar_eval(hid: HaarId, x) -> int:
    """Value of the Haar function ``hid`` at ``x``, one of -1, 0, +1."""
    pos, sign = locate_nonzero(hid.shape, x)
    return sign if pos == hid.pos else 0


def _axis_expansion(level: int, index: int) -> list[tuple[int, int, float]]:
    """1-D Haar expansion of the indicator of a dyadic interval.

    Returns ``(order, position, coefficient)`` triples; order 0 is the constant.
    """
    terms = [(0, 0, math.ldexp(1.0, -level))]
    for j in range(level):
        ancestor = index >> (level - j)
        # which half of the level-j ancestor holds the interval
        bit = (index >> (level - j - 1)) & 1
        coef = math.ldexp(1.0, j - level)
        terms.append((j + 1, ancestor, -coef if bit else coef))
    return terms


def decompose_dyadic(rect: RectSpec) -> list[tuple[HaarId | None, float]]:
    """Exact Haar expansion of the indicator of a dyadic rectangle.

    The constant term is reported with ``None`` in place of a ``HaarId``.
    Only Haar functions of order at most the rectangle's order appear and the
    absolute coefficients sum to 1.
    """
    levels = rect.dyadic_levels()
    if levels is None:
        raise ValueError(f"{rect} is not a dyadic rectangle")
    per_axis = [
        _axis_expansion(level, int(math.ldexp(lo, level)))
        for level, lo in zip(levels, rect.lo)
    ]
    out: list[tuple[HaarId | None, float]] = []
    for combo in product(*per_axis):
        shape = tuple(t[0] for t in combo)
        coef = math.prod(t[2] for t in combo)
        if sum(shape) == 0:
            out.append((None, coef))
        else:
            out.append((HaarId(shape, tuple(t[1] for t in combo)), coef))
    return out


def _peel(a: int, b: int, level: int) -> list[DyadicInterval]:
    # [a, b) on the 2^-level grid as disjoint dyadic intervals, left to right
    if a >= b:
        return []
    left = [DyadicInterval(level, a)] if a & 1 else []
    right = [DyadicInterval(level, b - 1)] if b & 1 else []
    a2 = a + (a & 1)
    b2 = b - (b & 1)
    return left + _peel(a2 >> 1, b2 >> 1, level - 1) + right


def decompose_lattice(rect: RectSpec, level: int) -> list[RectSpec]:
    """Split a lattice rectangle of order ``level`` into at most ``(2 level)^d`` disjoint dyadic boxes."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level {level} outside [0, {MAX_LEVEL}]")
    if not rect.is_lattice(level):
        raise ValueError(f"{rect} is not a lattice rectangle of order {level}")
    per_axis = [
        _peel(int(math.ldexp(a, level)), int(math.ldexp(b, level)), level)
        for a, b in zip(rect.lo, rect.hi)
    ]
    return [
        RectSpec(tuple(iv.lo for iv in combo), tuple(iv.hi for iv in combo))
        for combo in product(*per_axis)
    ]


def lattice_sandwich(rect: RectSpec, level: int) -> tuple[RectSpec | None, RectSpec]:
    """Inner and outer lattice rectangles of order ``level`` around ``rect``.

    The inner box is ``None`` when rounding inward leaves nothing.
    """
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level {level} outside [0, {MAX_LEVEL}]")
    m = 2.0**level
    in_lo = [math.ceil(a * m) / m for a in rect.lo]
    in_hi = [math.floor(b * m) / m for b in rect.hi]
    out_lo = tuple(math.floor(a * m) / m for a in rect.lo)
    out_hi = tuple(math.ceil(b * m) / m for b in rect.hi)
    outer = RectSpec(out_lo, out_hi)
    if any(a >= b for a, b in zip(in_lo, in_hi)):
        return None, outer
    return RectSpec(tuple(in_lo), tuple(in_hi)), outer
