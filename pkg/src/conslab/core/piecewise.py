"""Compactly supported step functions with exact L1/TV algebra."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

GL_ORDER = 5
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)

# relative width under which a cell is merged into its neighbour
TINY_CELL = 1e-14


def gauss_nodes(edges: np.ndarray, order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on every interval of a partition.

    Returns arrays of shape (len(edges) - 1, order).
    """
    if order == GL_ORDER:
        nodes, weights = _GL_NODES, _GL_WEIGHTS
    else:
        nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * nodes, half * weights


def _merge_tiny_cells(bp: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diam = bp[-1] - bp[0]
    tiny = np.diff(bp) < TINY_CELL * diam
    if not tiny.any():
        return bp, vals
    bp, vals = list(bp), list(vals)
    k = 0
    while k < len(vals) and len(vals) > 1:
        if bp[k + 1] - bp[k] < TINY_CELL * diam:
            if k < len(vals) - 1:
                del bp[k + 1]  # right neighbour absorbs the cell
            else:
                del bp[k]
            del vals[k]
        else:
            k += 1
    return np.array(bp), np.array(vals)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """Step function ``values[k]`` on ``[breakpoints[k], breakpoints[k+1])``, zero outside."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).ravel()
        vals = np.array(self.values, dtype=float).ravel()
        if len(bp) != len(vals) + 1 or len(vals) < 1:
            raise ValueError("need len(breakpoints) == len(values) + 1 >= 2")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(vals))):
            raise ValueError("breakpoints and values must be finite")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        bp, vals = _merge_tiny_cells(bp, vals)
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls) -> "PiecewiseConstantFn":
        return cls([0.0, 1.0], [0.0])

    @classmethod
    def indicator(cls, a: float, b: float, value: float = 1.0) -> "PiecewiseConstantFn":
        return cls([a, b], [value])

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                      cells: int) -> "PiecewiseConstantFn":
        """Cell averages of ``fn`` on a uniform partition (Gauss-Legendre per cell)."""
        edges = np.linspace(a, b, cells + 1)
        x, w = gauss_nodes(edges)
        avg = (fn(x) * w).sum(axis=1) / np.diff(edges)
        return cls(edges, avg)

    @property
    def n_cells(self) -> int:
        return len(self.values)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.n_cells)
        out = np.zeros_like(x)
        out[inside] = self.values[idx[inside]]
        return out

    def mass(self) -> float:
        total = 0.0
        for v, w in zip(self.values.tolist(), self.widths.tolist()):
            total += v * w
        return total

    def total_variation(self) -> float:
        v = self.values
        return float(abs(v[0]) + np.abs(np.diff(v)).sum() + abs(v[-1]))

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def support(self) -> tuple[float, float]:
        """Convex hull of the cells carrying a non-zero value."""
        nz = np.flatnonzero(self.values != 0.0)
        if len(nz) == 0:
            return (float(self.breakpoints[0]), float(self.breakpoints[0]))
        return float(self.breakpoints[nz[0]]), float(self.breakpoints[nz[-1] + 1])

    def cumulative(self, x) -> np.ndarray:
        """Exact ``int_{-inf}^x u``."""
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.values * self.widths)])
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, self.n_cells - 1)
        partial = cum[idx] + self.values[idx] * (x - self.breakpoints[idx])
        return np.where(x <= self.breakpoints[0], 0.0,
                        np.where(x >= self.breakpoints[-1], cum[-1], partial))

    def cell_averages(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        return np.diff(self.cumulative(edges)) / np.diff(edges)

    def restrict(self, a: float, b: float) -> "PiecewiseConstantFn":
        """The function multiplied by the indicator of [a, b]."""
        if b <= a:
            raise ValueError("empty restriction interval")
        pts = np.unique(np.concatenate([[a, b], self.breakpoints[(self.breakpoints > a) & (self.breakpoints < b)]]))
        mids = 0.5 * (pts[:-1] + pts[1:])
        return PiecewiseConstantFn(pts, self(mids))

    def shift(self, dx: float) -> "PiecewiseConstantFn":
        return PiecewiseConstantFn(self.breakpoints + dx, self.values)

    def scale(self, factor: float) -> "PiecewiseConstantFn":
        return PiecewiseConstantFn(self.breakpoints, factor * self.values)

    def map_values(self, fn: Callable[[np.ndarray], np.ndarray]) -> "PiecewiseConstantFn":
        return PiecewiseConstantFn(self.breakpoints, fn(self.values))

    def refine(self, points: Sequence[float]) -> "PiecewiseConstantFn":
        """Same function on a partition with extra breakpoints."""
        pts = np.asarray(points, dtype=float)
        pts = pts[(pts > self.breakpoints[0]) & (pts < self.breakpoints[-1])]
        bp = np.unique(np.concatenate([self.breakpoints, pts]))
        return PiecewiseConstantFn(bp, self(0.5 * (bp[:-1] + bp[1:])))

    def simplify(self) -> "PiecewiseConstantFn":
        """Merge neighbouring cells with equal values."""
        keep = np.concatenate([[True], np.diff(self.values) != 0.0])
        bp = np.concatenate([self.breakpoints[:-1][keep], self.breakpoints[-1:]])
        return PiecewiseConstantFn(bp, self.values[keep])

    def __add__(self, other: "PiecewiseConstantFn") -> "PiecewiseConstantFn":
        pts = merged_partition(self, other)
        mids = 0.5 * (pts[:-1] + pts[1:])
        return PiecewiseConstantFn(pts, self(mids) + other(mids))

    def __sub__(self, other: "PiecewiseConstantFn") -> "PiecewiseConstantFn":
        return self + other.scale(-1.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["breakpoint", "value"])
        for b, v in zip(self.breakpoints[:-1], self.values):
            w.writerow([repr(float(b)), repr(float(v))])
        w.writerow([repr(float(self.breakpoints[-1])), ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PiecewiseConstantFn":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if rows and rows[0][0].strip() == "breakpoint":
            rows = rows[1:]
        if len(rows) < 2:
            raise ValueError("need at least two rows")
        if len(rows[-1]) > 1 and rows[-1][1].strip():
            raise ValueError("final row must have an empty value")
        bp = [float(r[0]) for r in rows]
        vals = [float(r[1]) for r in rows[:-1]]
        return cls(bp, vals)


def merged_partition(*fns: PiecewiseConstantFn) -> np.ndarray:
    return np.unique(np.concatenate([f.breakpoints for f in fns]))


def l1_distance(u: PiecewiseConstantFn, w: PiecewiseConstantFn) -> float:
    pts = merged_partition(u, w)
    mids = 0.5 * (pts[:-1] + pts[1:])
    return float(np.sum(np.abs(u(mids) - w(mids)) * np.diff(pts)))


def weighted_l1_distance(u: PiecewiseConstantFn, w: PiecewiseConstantFn, theta, t: float) -> float:
    """``int |u - w| theta(t, .) dx`` by Gauss-Legendre per cell of the merged partition.

    ``theta`` must expose ``support(t) -> (a, b)``; optional ``kinks(t)`` adds breakpoints
    where the weight is only piecewise smooth.
    """
    support = getattr(theta, "support", None)
    if support is None:
        raise ValueError("weight function lacks compact support metadata")
    a, b = support(t)
    pts = merged_partition(u, w)
    extra = [a, b]
    kinks = getattr(theta, "kinks", None)
    if kinks is not None:
        extra.extend(kinks(t))
    pts = np.unique(np.concatenate([pts, np.asarray(extra, dtype=float)]))
    pts = pts[(pts >= a) & (pts <= b)]
    if len(pts) < 2:
        return 0.0
    x, wq = gauss_nodes(pts)
    mids = 0.5 * (pts[:-1] + pts[1:])
    diff = np.abs(u(mids) - w(mids))[:, None]
    return float(np.sum(diff * theta(t, x) * wq))


def total_variation(u: PiecewiseConstantFn) -> float:
    return u.total_variation()
