"""Exact wavefront tracking for a piecewise-linear interpolant of a scalar flux.

States live on the lattice 2^-nu Z and are stored as integers k (u = k * 2^-nu).
Fronts move at chord speeds of the interpolated flux; collisions are processed
in time order from a heap with lazy invalidation.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..core.piecewise import PiecewiseConstantFn
from ..core.presets import ScalarFlux


class FrontTrackingError(RuntimeError):
    pass


class EventBudgetExceeded(FrontTrackingError):
    pass


class OffGridState(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FluxTable:
    """Values of ``flux`` at u = k * 2^-nu for k = -K..K."""

    flux: ScalarFlux
    nu: int
    K: int
    values: np.ndarray

    @property
    def h(self) -> float:
        return 2.0 ** -self.nu

    @property
    def R0(self) -> float:
        return self.K * self.h

    def f(self, k):
        return self.values[np.asarray(k) + self.K]

    def contains(self, k) -> bool:
        k = np.asarray(k)
        return bool(np.all((k >= -self.K) & (k <= self.K)))

    def chord(self, k1: int, k2: int) -> float:
        return float((self.f(k2) - self.f(k1)) / ((k2 - k1) * self.h))

    def __call__(self, u):
        """The interpolant f_nu(u)."""
        u = np.asarray(u, dtype=float)
        if np.any(np.abs(u) > self.R0 * (1 + 1e-12)):
            raise ValueError("state outside the table range")
        grid = np.arange(-self.K, self.K + 1) * self.h
        return np.interp(u, grid, self.values)

    def derivative(self, u):
        """Right derivative of f_nu."""
        u = np.asarray(u, dtype=float)
        k = np.clip(np.floor(u / self.h + 1e-12).astype(int), -self.K, self.K - 1)
        return (self.f(k + 1) - self.f(k)) / self.h

    def d(self, u):
        return self.derivative(u)

    def dd(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))

    @property
    def name(self) -> str:
        return f"{self.flux.name}[nu={self.nu}]"

    def c2_norm(self) -> float:
        return self.flux.c2_norm(-self.R0, self.R0)


def piecewise_linear_interpolant(f: ScalarFlux, nu: int, R0: float) -> FluxTable:
    """Table of ``f`` on the lattice 2^-nu Z intersected with [-R0, R0]."""
    if nu < 0:
        raise ValueError("nu must be non-negative")
    if R0 <= 0:
        raise ValueError("range must be positive")
    K = int(math.floor(R0 * 2 ** nu + 1e-9))
    if K < 1:
        raise ValueError("range contains no non-zero lattice point")
    u = np.arange(-K, K + 1) * 2.0 ** -nu
    vals = np.asarray(f(u), dtype=float)
    vals.setflags(write=False)
    return FluxTable(f, nu, K, vals)


def to_lattice(u, nu: int) -> np.ndarray:
    """Integer lattice indices of states that must already lie on 2^-nu Z."""
    u = np.asarray(u, dtype=float)
    k = np.rint(u * 2 ** nu)
    if np.any(np.abs(k * 2.0 ** -nu - u) > 1e-12 * np.maximum(1.0, np.abs(u))):
        raise OffGridState(f"states not on the lattice 2^-{nu} Z")
    return k.astype(np.int64)


def quantize(u0: PiecewiseConstantFn, nu: int) -> PiecewiseConstantFn:
    """Round every cell value to the nearest lattice value (ties away from zero)."""
    h = 2.0 ** -nu
    k = np.sign(u0.values) * np.floor(np.abs(u0.values) / h + 0.5)
    return PiecewiseConstantFn(u0.breakpoints, k * h)


# --------------------------------------------------------------------------- Riemann problems

def _hull_indices(ks: np.ndarray, fs: np.ndarray, lower: bool) -> list[int]:
    """Vertices of the lower (or upper) hull of points sorted by k, monotone stack."""
    sgn = 1.0 if lower else -1.0
    scale = 1e-12 * (1.0 + float(np.abs(fs).max()))
    n = len(ks)
    if n <= 2:
        return list(range(n))
    # fast paths: a single chord, or every point strictly on the hull
    dk = (ks - ks[0]).astype(float)
    span = float(ks[-1] - ks[0])
    cross_chord = (fs[-1] - fs[0]) * dk - (fs - fs[0]) * span
    if np.all(sgn * cross_chord[1:-1] <= scale * span):
        return [0, n - 1]
    second = fs[2:] - 2.0 * fs[1:-1] + fs[:-2]
    if np.all(sgn * second > scale * 2.0) and np.all(np.diff(ks) == 1):
        return list(range(n))
    hull: list[int] = []
    for j in range(len(ks)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (ks[a] - ks[o]) * (fs[j] - fs[o]) - (fs[a] - fs[o]) * (ks[j] - ks[o])
            # pop unless a is a strict turn; near-collinear vertices are dropped
            if sgn * cross <= scale * (ks[j] - ks[o]):
                hull.pop()
            else:
                break
        hull.append(j)
    return hull


def riemann_pwl(table: FluxTable, kL: int, kR: int) -> list[tuple[float, int, int]]:
    """Entropy fan for the interpolated flux: (speed, left state, right state) per front.

    The lower convex envelope is used when kL < kR and the upper concave one when
    kL > kR; speeds come out strictly increasing from left to right.
    """
    kL, kR = int(kL), int(kR)
    if not table.contains([kL, kR]):
        raise OffGridState("Riemann states outside the flux table")
    if kL == kR:
        return []
    lo, hi = min(kL, kR), max(kL, kR)
    ks = np.arange(lo, hi + 1)
    fs = table.f(ks)
    verts = [int(ks[i]) for i in _hull_indices(ks, fs, lower=kL < kR)]
    if kL > kR:
        verts = verts[::-1]
    return [(table.chord(a, b), a, b) for a, b in zip(verts[:-1], verts[1:])]


def brute_force_envelope(table: FluxTable, kL: int, kR: int) -> list[tuple[float, int, int]]:
    """Reference fan from an O(n^3) envelope: min (or max) over all chords spanning each point."""
    if kL == kR:
        return []
    lo, hi = min(kL, kR), max(kL, kR)
    ks = np.arange(lo, hi + 1)
    fs = table.f(ks)
    lower = kL < kR
    env = fs.copy()
    n = len(ks)
    for i in range(n):
        for j in range(i + 1, n):
            for m in range(i, j + 1):
                lam = (ks[m] - ks[i]) / (ks[j] - ks[i])
                val = (1 - lam) * fs[i] + lam * fs[j]
                env[m] = min(env[m], val) if lower else max(env[m], val)
    tol = 1e-12 * (1.0 + np.abs(fs).max())
    contact = [int(ks[m]) for m in range(n) if abs(env[m] - fs[m]) <= tol]
    if not lower:
        contact = contact[::-1]
    fronts = [(table.chord(a, b), a, b) for a, b in zip(contact[:-1], contact[1:])]
    merged: list[tuple[float, int, int]] = []
    for s, a, b in fronts:
        if merged and abs(merged[-1][0] - s) <= 1e-9 * (1 + abs(s)):
            merged[-1] = (table.chord(merged[-1][1], b), merged[-1][1], b)
        else:
            merged.append((s, a, b))
    return merged


# --------------------------------------------------------------------------- event-driven tracking

@dataclass
class Front:
    x_ref: float
    t_ref: float
    speed: float
    kL: int
    kR: int
    birth: float
    death: float = math.inf

    def position(self, t):
        return self.x_ref + self.speed * (t - self.t_ref)


@dataclass
class FrontEvent:
    t: float
    x: float
    n_incoming: int
    n_outgoing: int


@dataclass
class FrontTrajectory:
    table: FluxTable
    fronts: list[Front]
    events: list[FrontEvent]
    T: float
    initial: PiecewiseConstantFn

    @property
    def nu(self) -> int:
        return self.table.nu

    @property
    def h(self) -> float:
        return self.table.h

    def alive(self, t: float) -> list[Front]:
        return [f for f in self.fronts if f.birth <= t < f.death]

    def total_variation(self, t: float) -> float:
        return sum(abs(f.kR - f.kL) for f in self.alive(t)) * self.h

    def sample(self, t: float) -> PiecewiseConstantFn:
        """Step function at time ``t``, right-continuous at event times."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside computed horizon [0, {self.T}]")
        if t == 0:
            return self.initial
        live = self.alive(t)
        if not live:
            return PiecewiseConstantFn.zero()
        pos = np.array([f.position(t) for f in live])
        order = np.lexsort((np.array([f.speed for f in live]), pos))
        live = [live[i] for i in order]
        pos = pos[order]
        bps, vals = [pos[0]], []
        for i in range(1, len(live)):
            if pos[i] > bps[-1]:
                vals.append(live[i - 1].kR)
                bps.append(pos[i])
        vals.append(live[-1].kR)
        # last value is the exterior (zero); drop it to close the support
        vals = vals[:-1]
        if not vals:
            return PiecewiseConstantFn.zero()
        return PiecewiseConstantFn(bps, np.array(vals, dtype=float) * self.h)

    def __call__(self, t: float) -> PiecewiseConstantFn:
        return self.sample(t)

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_event", "x_event", "n_incoming", "n_outgoing"])
        for e in self.events:
            w.writerow([repr(e.t), repr(e.x), e.n_incoming, e.n_outgoing])
        return buf.getvalue()


def _collision_time(a: Front, b: Front) -> float:
    if a.speed <= b.speed:
        return math.inf
    num = (b.x_ref - b.speed * b.t_ref) - (a.x_ref - a.speed * a.t_ref)
    return num / (a.speed - b.speed)


def front_track(f: ScalarFlux | FluxTable, nu: int, u0: PiecewiseConstantFn, T: float,
                R0: float | None = None, event_budget: int = 1_000_000) -> FrontTrajectory:
    """Evolve lattice-valued ``u0`` exactly under the interpolated flux up to time ``T``."""
    if T <= 0:
        raise ValueError("horizon must be positive")
    k0 = to_lattice(u0.values, nu)
    if isinstance(f, FluxTable):
        table = f
        if table.nu != nu:
            raise ValueError("flux table resolution does not match nu")
    else:
        table = piecewise_linear_interpolant(f, nu, R0 if R0 is not None else max(u0.sup_norm(), 2.0 ** -nu))
    if not table.contains(k0):
        raise ValueError("data range exceeds the flux table range")

    fronts: list[Front] = []
    ext = np.concatenate([[0], k0, [0]])
    for b, kl, kr in zip(u0.breakpoints, ext[:-1], ext[1:]):
        for s, a, c in riemann_pwl(table, kl, kr):
            fronts.append(Front(float(b), 0.0, s, a, c, 0.0))

    n = len(fronts)
    prev = {i: i - 1 for i in range(n)}
    nxt = {i: i + 1 for i in range(n)}
    if n:
        prev[0] = nxt[n - 1] = -1
    alive = set(range(n))
    heap: list[tuple[float, int, int, int]] = []
    counter = itertools.count()
    tol_t = 1e-12 * T

    def schedule(i: int):
        j = nxt.get(i, -1)
        if i < 0 or j is None or j < 0:
            return
        tc = _collision_time(fronts[i], fronts[j])
        if tc <= T + tol_t:
            heapq.heappush(heap, (tc, next(counter), i, j))

    for i in range(n - 1):
        schedule(i)

    events: list[FrontEvent] = []
    t_now = 0.0
    while heap:
        tc, _, i, j = heapq.heappop(heap)
        if i not in alive or j not in alive or nxt[i] != j:
            continue
        if tc < t_now - tol_t:
            raise FrontTrackingError(f"collision scheduled in the past at t={tc}")
        tc = max(tc, t_now)
        if len(events) >= event_budget:
            raise EventBudgetExceeded(f"event budget {event_budget} exhausted at t={tc:.6g}")
        # gather every adjacent front meeting at this point and time
        chain = [i, j]
        while True:
            p = prev[chain[0]]
            if p < 0 or abs(_collision_time(fronts[p], fronts[chain[0]]) - tc) > tol_t:
                break
            chain.insert(0, p)
        while True:
            q = nxt[chain[-1]]
            if q < 0 or abs(_collision_time(fronts[chain[-1]], fronts[q]) - tc) > tol_t:
                break
            chain.append(q)
        x = fronts[i].position(tc)
        left, right = prev[chain[0]], nxt[chain[-1]]
        for c in chain:
            fronts[c].death = tc
            alive.discard(c)
        kL, kR = fronts[chain[0]].kL, fronts[chain[-1]].kR
        fan = riemann_pwl(table, kL, kR)
        ids = []
        for s, a, b in fan:
            fronts.append(Front(x, tc, s, a, b, tc))
            ids.append(len(fronts) - 1)
            alive.add(ids[-1])
        seq = ([left] if left >= 0 else []) + ids + ([right] if right >= 0 else [])
        if left < 0 and ids:
            prev[ids[0]] = -1
        if right < 0 and ids:
            nxt[ids[-1]] = -1
        if not ids:
            if left >= 0:
                nxt[left] = right
            if right >= 0:
                prev[right] = left
        for a, b in zip(seq[:-1], seq[1:]):
            nxt[a], prev[b] = b, a
        # ordering sanity: neighbours must not have passed the event point
        scale = 1e-9 * (1.0 + abs(x))
        if left >= 0 and fronts[left].position(tc) > x + scale:
            raise FrontTrackingError(f"non-adjacent crossing detected at t={tc:.6g}")
        if right >= 0 and fronts[right].position(tc) < x - scale:
            raise FrontTrackingError(f"non-adjacent crossing detected at t={tc:.6g}")
        events.append(FrontEvent(tc, x, len(chain), len(ids)))
        t_now = tc
        if ids:
            schedule(left)
            schedule(ids[-1])
        elif left >= 0:
            schedule(left)

    return FrontTrajectory(table, fronts, events, T, PiecewiseConstantFn(u0.breakpoints, k0 * table.h))
