"""Incrementally maintained Haar coefficients of a growing point set.

For every Haar function of order 1..h the table stores ``<nu, H>``, the
number of kept points in ``H^+`` minus the number in ``H^-``.  Entries are
grouped per shape in flat row-major blocks, shapes ordered as in
:func:`haarthin.dyadic.enumerate_shapes`.  An insert touches exactly one
entry per shape; raising ``h`` allocates the new shapes and replays all kept
points into them.
"""

from __future__ import annotations

import struct
from typing import Iterable

import numpy as np
from numba import njit

from .dyadic import (
    MAX_LEVEL,
    HaarId,
    check_point,
    enumerate_shapes,
    haar_eval,
    shape_count,
    shape_size,
)

DEFAULT_MAX_ENTRIES = 1 << 28

_MAGIC = b"HTAB"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIq")


@njit(cache=True, nogil=True)
def _locate(shape, x):
    # flat offset inside the shape's block and the Haar value at x
    idx = 0
    sign = 1
    for i in range(shape.shape[0]):
        s = shape[i]
        if s == 0:
            continue
        cell = np.int64(x[i] * float(np.int64(1) << s))
        idx = idx * (np.int64(1) << (s - 1)) + (cell >> 1)
        if cell & 1:
            sign = -sign
    return idx, sign


@njit(cache=True, nogil=True)
def _insert(shapes, offsets, nshapes, coef, x):
    for k in range(nshapes):
        idx, sign = _locate(shapes[k], x)
        coef[offsets[k] + idx] += sign


@njit(cache=True, nogil=True)
def _signed_sum(shapes, offsets, nshapes, coef, x):
    total = 0
    for k in range(nshapes):
        idx, sign = _locate(shapes[k], x)
        c = coef[offsets[k] + idx]
        if c > 0:
            total -= sign
        elif c < 0:
            total += sign
    return total


@njit(cache=True, nogil=True)
def _replay(shapes, offsets, k0, k1, coef, points, n):
    for j in range(n):
        x = points[j]
        for k in range(k0, k1):
            idx, sign = _locate(shapes[k], x)
            coef[offsets[k] + idx] += sign


class CoefficientTable:
    """All ``<nu, H>`` for Haar functions of order 1..h over the kept points.

    Args:
        d: dimension of the points.
        max_entries: refuse to grow past this many stored coefficients.
    """

    def __init__(self, d: int, max_entries: int = DEFAULT_MAX_ENTRIES):
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        self.d = d
        self.h = 0
        self.max_entries = max_entries
        self.shapes: list[tuple[int, ...]] = []
        self._shape_arr = np.zeros((0, d), dtype=np.int64)
        self._offsets = np.zeros(1, dtype=np.int64)
        self._coef = np.zeros(0, dtype=np.int64)
        self._index = {}
        self._points = np.zeros((16, d), dtype=np.float64)
        self.n_kept = 0

    # -- layout -----------------------------------------------------------

    @property
    def n_shapes(self) -> int:
        return len(self.shapes)

    @property
    def n_entries(self) -> int:
        return int(self._offsets[-1])

    @property
    def entries(self) -> np.ndarray:
        """Read-only view of the flat coefficient array."""
        view = self._coef.view()
        view.flags.writeable = False
        return view

    @property
    def kept_points(self) -> np.ndarray:
        view = self._points[: self.n_kept]
        view.flags.writeable = False
        return view

    def shape_block(self, shape: tuple[int, ...]) -> np.ndarray:
        """Coefficients of one shape, reshaped to its per-axis position grid."""
        k = self._index[tuple(shape)]
        block = self._coef[self._offsets[k] : self._offsets[k + 1]]
        dims = [1 << max(s - 1, 0) for s in shape]
        return block.reshape(dims)

    def ids(self) -> Iterable[HaarId]:
        """Every stored Haar function, in storage order."""
        for shape in self.shapes:
            dims = [1 << max(s - 1, 0) for s in shape]
            for pos in np.ndindex(*dims):
                yield HaarId(shape, pos)

    # -- mutation ---------------------------------------------------------

    def grow(self, h_new: int) -> None:
        """Add the shapes of order ``h + 1 .. h_new`` and replay every kept point into them."""
        if h_new <= self.h:
            raise ValueError(f"grow needs h_new > {self.h}, got {h_new}")
        if h_new > MAX_LEVEL:
            raise ValueError(f"h={h_new} exceeds the level cap {MAX_LEVEL}")
        new_shapes = enumerate_shapes(h_new, self.d)[self.n_shapes :]
        sizes = [shape_size(s) for s in new_shapes]
        total = self.n_entries + sum(sizes)
        if total > self.max_entries:
            raise MemoryError(
                f"growing to h={h_new} needs {total} entries, cap is {self.max_entries}"
            )
        k0 = self.n_shapes
        offsets = np.concatenate(
            [self._offsets, self.n_entries + np.cumsum(sizes, dtype=np.int64)]
        )
        coef = np.zeros(total, dtype=np.int64)
        coef[: self.n_entries] = self._coef
        self.shapes.extend(new_shapes)
        for k, s in enumerate(new_shapes, start=k0):
            self._index[s] = k
        self._shape_arr = np.array(self.shapes, dtype=np.int64).reshape(-1, self.d)
        self._offsets = offsets
        self._coef = coef
        self.h = h_new
        _replay(self._shape_arr, self._offsets, k0, self.n_shapes, self._coef,
                self._points, self.n_kept)

    def _reserve(self, n: int) -> None:
        if n > self._points.shape[0]:
            cap = max(n, 2 * self._points.shape[0])
            grown = np.zeros((cap, self.d), dtype=np.float64)
            grown[: self.n_kept] = self._points[: self.n_kept]
            self._points = grown

    def insert(self, x) -> None:
        x = check_point(x, self.d)
        self._reserve(self.n_kept + 1)
        self._points[self.n_kept] = x
        self.n_kept += 1
        _insert(self._shape_arr, self._offsets, self.n_shapes, self._coef, x)

    # -- queries ----------------------------------------------------------

    def signed_sum(self, x) -> int:
        """``sum_H sgn<nu, -H> H(x)`` over all stored Haar functions (``sgn 0 = 0``)."""
        x = check_point(x, self.d)
        return int(_signed_sum(self._shape_arr, self._offsets, self.n_shapes, self._coef, x))

    def coefficient(self, hid: HaarId) -> int:
        if hid.d != self.d or hid.order > self.h or hid.order < 1:
            raise KeyError(f"{hid} is not stored in a table with d={self.d}, h={self.h}")
        k = self._index[hid.shape]
        idx = 0
        for s, p in zip(hid.shape, hid.pos):
            idx = idx * (1 << max(s - 1, 0)) + p
        return int(self._coef[self._offsets[k] + idx])

    @property
    def W(self) -> int:
        return shape_count(self.h, self.d)

    # -- snapshot ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, _VERSION, self.d, self.h, self.n_kept)
        pts = np.ascontiguousarray(self._points[: self.n_kept], dtype="<f8")
        return header + pts.tobytes() + self._coef.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, max_entries: int = DEFAULT_MAX_ENTRIES) -> "CoefficientTable":
        magic, version, d, h, n_kept = _HEADER.unpack_from(data)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a coefficient table snapshot (bad magic or version)")
        table = cls(d, max_entries=max_entries)
        pos = _HEADER.size
        pts = np.frombuffer(data, dtype="<f8", count=n_kept * d, offset=pos)
        pos += pts.nbytes
        table._points = pts.reshape(n_kept, d).astype(np.float64)
        table.n_kept = n_kept
        if h:
            shapes = enumerate_shapes(h, d)
            sizes = [shape_size(s) for s in shapes]
            table.shapes = shapes
            table._index = {s: k for k, s in enumerate(shapes)}
            table._shape_arr = np.array(shapes, dtype=np.int64).reshape(-1, d)
            table._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
            table.h = h
        n_entries = int(table._offsets[-1])
        if len(data) != pos + 8 * n_entries:
            raise ValueError("snapshot length does not match its header")
        table._coef = np.frombuffer(data, dtype="<i8", count=n_entries, offset=pos).astype(np.int64)
        return table

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CoefficientTable":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def new_state(d: int) -> CoefficientTable:
    return CoefficientTable(d)


def recompute_oracle(points, hid: HaarId) -> int:
    """Brute-force ``<nu, H>``: sum of ``H(p)`` over the points, from scratch."""
    return sum(haar_eval(hid, p) for p in np.asarray(points, dtype=float).reshape(-1, hid.d))
