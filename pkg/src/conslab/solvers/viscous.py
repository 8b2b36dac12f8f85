"""Explicit conservative solver for u_t + P(t, x, u)_x = eps u_xx.

Engquist-Osher interface fluxes, centred diffusion, forward Euler, zero flux
through the ends of a padded domain.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..core.piecewise import PiecewiseConstantFn
from ..core.presets import ProductFlux

log = logging.getLogger(__name__)

CFL_HYPERBOLIC = 0.4
CFL_PARABOLIC = 0.4


class ViscousSolverError(RuntimeError):
    pass


@dataclass
class GridSolution:
    edges: np.ndarray
    times: np.ndarray
    values: list[np.ndarray]
    epsilon: float
    h: float
    dt_min: float
    dt_max: float
    steps: int
    max_speed: float
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def _index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a stored output time")
        return idx

    def sample(self, t: float) -> PiecewiseConstantFn:
        """Grid staircase at a stored output time."""
        if t > self.times[-1] * (1 + 1e-12) or t < 0:
            raise ValueError(f"t={t} outside computed horizon")
        return PiecewiseConstantFn(self.edges, self.values[self._index(t)])

    def __call__(self, t: float) -> PiecewiseConstantFn:
        return self.sample(t)

    def gradient_budget(self, t: float) -> PiecewiseConstantFn:
        """eps |u_x| as a staircase: on cell k, eps (|u_k - u_{k-1}| + |u_{k+1} - u_k|) / (2h)."""
        u = np.concatenate([[0.0], self.values[self._index(t)], [0.0]])
        d = np.abs(np.diff(u))
        return PiecewiseConstantFn(self.edges, self.epsilon * (d[:-1] + d[1:]) / (2.0 * self.h))

    def mass(self, t: float) -> float:
        return float(self.values[self._index(t)].sum() * self.h)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "u"])
        xc = self.centers
        for t, u in zip(self.times, self.values):
            for x, v in zip(xc, u):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(v))])
        return buf.getvalue()


def _autonomous(a) -> bool:
    return getattr(a, "autonomous", True)


def viscous_solve(P: ProductFlux, eps: float, u0: PiecewiseConstantFn, T: float, output_times=None,
                  h: float | None = None, cells: int | None = None, max_steps: int = 50_000_000) -> GridSolution:
    """March u0 to time T; either the spacing ``h`` or a cell count over the support is required."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if T <= 0:
        raise ValueError("horizon must be positive")
    outs = sorted({0.0, float(T), *map(float, [] if output_times is None else output_times)})
    if outs[0] < 0 or outs[-1] > T:
        raise ValueError("output times must lie in [0, T]")
    a0, b0 = u0.support()
    if b0 <= a0:
        a0, b0 = u0.breakpoints[0], u0.breakpoints[-1]
    if h is None:
        h = (b0 - a0) / (cells or 1000)
    lo, hi = min(0.0, float(u0.values.min())), max(0.0, float(u0.values.max()))
    probe = np.linspace(a0 - 1.0, b0 + 1.0, 257)
    speed = max(P.max_speed(t, probe, lo, hi) for t in np.linspace(0.0, T, 5))
    pad = speed * T + 6.0 * math.sqrt(eps * T)
    n_left = math.ceil(pad / h) + 1
    width = b0 - a0
    n_mid = math.ceil(width / h - 1e-9)
    n = n_left + n_mid + n_left
    edges = a0 - n_left * h + h * np.arange(n + 1)
    u = u0.cell_averages(edges)
    x_int = edges[1:-1]

    def interface_flux(t, v):
        return P.engquist_osher_cells(t, x_int, v) - eps * np.diff(v) / h

    a_cache = None
    if _autonomous(P.a):
        a_cache = np.abs(P.a(0.0, x_int)).max() if len(x_int) else 0.0
    g = P.g
    snaps = [u.copy()]
    t = 0.0
    steps = 0
    dt_min, dt_max = math.inf, 0.0
    k_out = 1
    dt_par = CFL_PARABOLIC * h * h / (2.0 * eps)
    while k_out < len(outs):
        amax = a_cache if a_cache is not None else float(np.abs(P.a(t, x_int)).max())
        s = amax * g.max_speed(float(u.min()), float(u.max()), samples=65) if u.size else 0.0
        dt = min(CFL_HYPERBOLIC * h / s if s > 0 else math.inf, dt_par)
        if dt < 1e-14 * T:
            raise ViscousSolverError(f"time step underflow dt={dt:.3g}")
        target = outs[k_out]
        if t + dt >= target - 1e-14 * T:
            dt = target - t
        F = interface_flux(t, u)
        upd = np.empty_like(u)
        upd[0] = F[0]
        upd[-1] = -F[-1]
        upd[1:-1] = F[1:] - F[:-1]
        u = u - dt / h * upd
        t = target if dt == target - t else t + dt
        steps += 1
        dt_min, dt_max = min(dt_min, dt), max(dt_max, dt)
        if steps % 256 == 0 and not np.all(np.isfinite(u)):
            bad = int(np.flatnonzero(~np.isfinite(u))[0])
            raise ViscousSolverError(f"non-finite value in cell {bad} at t={t:.6g}")
        if steps > max_steps:
            raise ViscousSolverError("maximum number of steps exceeded")
        if t == target:
            if not np.all(np.isfinite(u)):
                bad = int(np.flatnonzero(~np.isfinite(u))[0])
                raise ViscousSolverError(f"non-finite value in cell {bad} at t={t:.6g}")
            snaps.append(u.copy())
            k_out += 1
    return GridSolution(edges=edges, times=np.array(outs), values=snaps, epsilon=eps, h=h,
                        dt_min=dt_min, dt_max=dt_max, steps=steps, max_speed=speed,
                        meta={"cfl_hyperbolic": CFL_HYPERBOLIC, "cfl_parabolic": CFL_PARABOLIC, "pad": pad})
