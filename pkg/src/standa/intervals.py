"""Closed intervals on the real line and sorted disjoint unions of them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; empty when lo > hi."""

    lo: float
    hi: float

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    @property
    def width(self) -> float:
        return max(0.0, self.hi - self.lo)

    def contains(self, z: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= z <= self.hi + tol

    def intersect(self, other: "Interval") -> "Interval":
        return Interval(max(self.lo, other.lo), min(self.hi, other.hi))


class IntervalSet:
    """Union of disjoint closed intervals kept sorted by left endpoint.

    ``merge_tol`` controls when two abutting intervals fuse: gaps at or below
    the tolerance are closed. Callers scale it to the problem (we use 1e-9
    times the statistic's standard deviation).
    """

    def __init__(self, intervals: list[Interval] | None = None, merge_tol: float = 0.0):
        self.merge_tol = float(merge_tol)
        self._ivals: list[Interval] = []
        for iv in intervals or []:
            self.add(iv)

    def add(self, iv: Interval) -> None:
        if iv.empty:
            return
        lo, hi = iv.lo, iv.hi
        keep: list[Interval] = []
        for cur in self._ivals:
            if cur.hi < lo - self.merge_tol or cur.lo > hi + self.merge_tol:
                keep.append(cur)
            else:
                lo = min(lo, cur.lo)
                hi = max(hi, cur.hi)
        keep.append(Interval(lo, hi))
        keep.sort(key=lambda b: b.lo)
        self._ivals = keep

    @property
    def intervals(self) -> list[Interval]:
        return list(self._ivals)

    def __len__(self) -> int:
        return len(self._ivals)

    def __iter__(self):
        return iter(self._ivals)

    def total_width(self) -> float:
        return float(sum(iv.width for iv in self._ivals))

    def contains(self, z: float, tol: float = 0.0) -> bool:
        return any(iv.contains(z, tol) for iv in self._ivals)

    def covering(self, z: float, tol: float = 0.0) -> Interval | None:
        """The member interval containing ``z``, or None."""
        for iv in self._ivals:
            if iv.contains(z, tol):
                return iv
        return None

    def intersect_interval(self, other: Interval) -> "IntervalSet":
        out = IntervalSet(merge_tol=self.merge_tol)
        for iv in self._ivals:
            out.add(iv.intersect(other))
        return out

    def as_array(self) -> np.ndarray:
        """(k, 2) array of [lo, hi] rows; empty set gives shape (0, 2)."""
        if not self._ivals:
            return np.empty((0, 2))
        return np.array([[iv.lo, iv.hi] for iv in self._ivals])
