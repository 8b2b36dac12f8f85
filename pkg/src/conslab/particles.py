"""Deterministic follow-the-leader particle scheme for the non-local traffic equation

    rho_t + (rho v(rho) (V - W_x * rho))_x = 0.

N + 1 sorted particles carry mass 1/N between neighbours; the cell densities are
reciprocal gaps and each particle moves with an upwind mobility times the sampled
velocity field.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .core.convolution import jump_sum
from .core.piecewise import PiecewiseConstantFn, gauss_nodes
from .core.presets import ModelSpec, OutsideValidityBox, ProductFlux

log = logging.getLogger(__name__)


class ParticleCollision(RuntimeError):
    """Step size underflow: two neighbouring particles are about to meet."""

    def __init__(self, t: float, pair: tuple[int, int], gap: float):
        super().__init__(f"step size underflow at t={t:.6g}: particles {pair} nearly collide (gap {gap:.3g})")
        self.t, self.pair, self.gap = t, pair, gap


class ValidityBoxEscape(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ParticleState:
    positions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = np.array(self.positions, dtype=float).ravel()
        if len(x) < 2:
            raise ValueError("need at least two particles")
        if not np.all(np.isfinite(x)) or np.any(np.diff(x) <= 0):
            raise ValueError("particle positions must be finite and strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)

    @property
    def N(self) -> int:
        return len(self.positions) - 1

    @property
    def densities(self) -> np.ndarray:
        return 1.0 / (self.N * np.diff(self.positions))

    @property
    def min_gap(self) -> float:
        return float(np.diff(self.positions).min())


def init_particles(rho0: PiecewiseConstantFn, N: int) -> ParticleState:
    """Quantile placement: every cell between consecutive particles carries mass 1/N.

    Where a quantile falls on a zero-density gap the particle sits at the gap's left end.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if np.any(rho0.values < 0):
        raise ValueError("initial density must be non-negative")
    mass = rho0.mass()
    if mass <= 0:
        raise ValueError("initial density has zero mass")
    if abs(mass - 1.0) > 1e-12:
        raise ValueError(f"initial density must have unit mass, got {mass!r}")
    a, b = rho0.support()
    bp, vals = rho0.breakpoints, rho0.values
    cum = np.concatenate([[0.0], np.cumsum(vals * np.diff(bp))])
    q = np.arange(1, N) / N
    # cumulative sums carry rounding: quantiles within tol of a breakpoint value snap to it
    tol = 1e-13
    j = np.minimum(np.searchsorted(cum, q - tol, side="left"), len(cum) - 1)
    on_bp = np.abs(cum[j] - q) <= tol
    k = np.maximum(j - 1, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = bp[k] + (q - cum[k]) / vals[k]
    inner = np.clip(np.nan_to_num(inner, nan=0.0), bp[k], bp[j])
    x_mid = np.where(on_bp, bp[j], inner)
    x = np.concatenate([[a], x_mid, [b]])
    return ParticleState(x, 0.0)


def density_from_particles(state: ParticleState) -> PiecewiseConstantFn:
    return PiecewiseConstantFn(state.positions, state.densities)


def _check_box(model: ModelSpec, x: np.ndarray):
    try:
        model.velocity.check_x(x)
        diam = x[-1] - x[0]
        model.kernel.check_x(np.array([-diam, diam]))
    except OutsideValidityBox as exc:
        raise ValidityBoxEscape(str(exc)) from exc


def _velocity_terms(model: ModelSpec, t: float, x: np.ndarray):
    N = len(x) - 1
    rho_ext = np.concatenate([[0.0], 1.0 / (N * np.diff(x)), [0.0]])
    jumps = np.diff(rho_ext)
    U = model.velocity(t, x) - jump_sum(model.kernel, t, x, x, jumps)
    vmob = np.where(U < 0, model.mobility(rho_ext[:-1]), model.mobility(rho_ext[1:]))
    return U, vmob, vmob * U


def discrete_velocities(state: ParticleState, model: ModelSpec):
    """(U_bar, upwind mobility, right-hand side) for every particle.

    U_bar_i = V(t, x_i) - sum_j (rho_{j+1} - rho_j) W(t, x_i - x_j) with rho_0 = rho_{N+1} = 0;
    the mobility is v(rho_i) where U_bar_i < 0 and v(rho_{i+1}) otherwise.
    """
    _check_box(model, state.positions)
    return _velocity_terms(model, state.time, state.positions)


def _rhs(model: ModelSpec, t: float, x: np.ndarray) -> np.ndarray:
    return _velocity_terms(model, t, x)[2]


def _rk4(model, t, x, h, k1=None):
    if k1 is None:
        k1 = _rhs(model, t, x)
    k2 = _rhs(model, t + 0.5 * h, x + 0.5 * h * k1)
    k3 = _rhs(model, t + 0.5 * h, x + 0.5 * h * k2)
    k4 = _rhs(model, t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class StepControl:
    tol: float = 1e-8          # local error per unit time
    gamma: float = 0.5         # accepted min gap >= gamma * current min gap
    h0: float | None = None
    min_step_factor: float = 1e-13
    max_steps: int = 1_000_000


@dataclass
class ParticleTrajectory:
    model: ModelSpec
    snapshots: list[ParticleState]
    derivatives: list[np.ndarray]
    step_sizes: np.ndarray
    min_gaps: np.ndarray
    max_densities: np.ndarray
    accepted_times: np.ndarray
    accepted_positions: list[np.ndarray] = field(repr=False)
    rejected_steps: int = 0
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    @property
    def N(self) -> int:
        return self.snapshots[0].N

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def horizon(self) -> float:
        return float(self.accepted_times[-1])

    def snapshot_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.snapshots[idx].time - t) > 1e-12 * max(1.0, abs(t)):
            raise KeyError(f"no stored snapshot at t={t}")
        return idx

    def state_at(self, t: float) -> ParticleState:
        """Dense re-integration: one RK4 step from the last accepted step at or before ``t``."""
        key = float(t)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        T0, T1 = self.accepted_times[0], self.accepted_times[-1]
        if t < T0 - 1e-14 or t > T1 + 1e-12 * max(1.0, T1):
            raise ValueError(f"t={t} outside computed horizon [{T0}, {T1}]")
        k = int(np.searchsorted(self.accepted_times, t, side="right") - 1)
        k = min(max(k, 0), len(self.accepted_times) - 1)
        tk = self.accepted_times[k]
        xk = self.accepted_positions[k]
        x = xk if t == tk else _rk4(self.model, tk, xk, t - tk)
        state = ParticleState(x, float(t))
        self._cache[key] = state
        if len(self._cache) > 4096:
            self._cache.popitem(last=False)
        return state

    def density_at(self, t: float) -> PiecewiseConstantFn:
        return density_from_particles(self.state_at(t))

    def __call__(self, t: float) -> PiecewiseConstantFn:
        return self.density_at(t)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "i", "x_i", "xdot_i"])
        for s, d in zip(self.snapshots, self.derivatives):
            for i, (xi, di) in enumerate(zip(s.positions, d)):
                w.writerow([repr(s.time), i, repr(float(xi)), repr(float(di))])
        return buf.getvalue()


def evolve(state0: ParticleState, model: ModelSpec, T: float, output_times=None,
           control: StepControl | None = None) -> ParticleTrajectory:
    """Integrate the particle ODE up to time ``T`` with step-doubling RK4.

    A step is accepted when the doubling error is below ``tol * h`` and the minimal gap
    stays above ``gamma`` times the current one. Snapshots at ``output_times`` are
    re-integrated from the last accepted step before them.
    """
    control = control or StepControl()
    t0 = state0.time
    if T <= t0:
        raise ValueError("horizon must exceed the initial time")
    outs = sorted({float(t0), float(T), *map(float, [] if output_times is None else output_times)})
    if outs[0] < t0 or outs[-1] > T:
        raise ValueError("output times must lie in [t0, T]")
    _check_box(model, state0.positions)

    t, x = t0, state0.positions.copy()
    times, states, hs, gaps, dens = [t], [x], [], [], []
    k1 = _rhs(model, t, x)
    speed = float(np.abs(k1).max())
    gap = float(np.diff(x).min())
    h = control.h0 or (min(T - t0, 0.05 * gap / speed) if speed > 0 else T - t0)
    h_min = control.min_step_factor * (T - t0)
    rejected = 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        while t < T:
            if len(hs) >= control.max_steps:
                raise RuntimeError("maximum number of steps exceeded")
            h = min(h, T - t)
            last = h >= T - t
            full = _rk4(model, t, x, h, k1)
            half = _rk4(model, t, x, 0.5 * h, k1)
            half2 = _rk4(model, t + 0.5 * h, half, 0.5 * h)
            ok_order = True
            for y in (full, half, half2):
                if not np.all(np.isfinite(y)):
                    ok_order = False
                    break
                g = np.diff(y)
                if g.min() < control.gamma * gap:
                    ok_order = False
                    break
            if ok_order:
                err = float(np.abs(half2 - full).max()) / 15.0
                if err <= control.tol * h:
                    t = T if last else t + h
                    x = half2
                    try:
                        _check_box(model, x)
                    except ValidityBoxEscape:
                        raise
                    gap = float(np.diff(x).min())
                    times.append(t)
                    states.append(x)
                    hs.append(h)
                    gaps.append(gap)
                    dens.append(1.0 / (len(x) - 1) / gap)
                    k1 = _rhs(model, t, x)
                    fac = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (control.tol * h / err) ** 0.25))
                    h *= fac
                    continue
                rejected += 1
                h *= min(0.9, max(0.2, 0.9 * (control.tol * h / err) ** 0.25))
            else:
                rejected += 1
                h *= 0.25
            if h < h_min:
                i = int(np.argmin(np.diff(x)))
                raise ParticleCollision(t, (i, i + 1), float(np.diff(x)[i]))

    traj = ParticleTrajectory(
        model=model, snapshots=[], derivatives=[], step_sizes=np.array(hs), min_gaps=np.array(gaps),
        max_densities=np.array(dens), accepted_times=np.array(times), accepted_positions=states,
        rejected_steps=rejected,
    )
    for s in outs:
        st = traj.state_at(s)
        traj.snapshots.append(st)
        traj.derivatives.append(_rhs(model, s, st.positions))
    log.debug("evolve N=%d: %d steps, %d rejected", state0.N, len(hs), rejected)
    return traj


# --------------------------------------------------------------------------- continuous velocity field

def ubar(model: ModelSpec, state: ParticleState, x, deriv: int = 0) -> np.ndarray:
    """U(t, x) = V(t, x) - (W_x * rho_bar)(t, x) and its first two x-derivatives."""
    t = state.time
    pos = state.positions
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    rho_ext = np.concatenate([[0.0], state.densities, [0.0]])
    V = (model.velocity, model.velocity.dx, model.velocity.dxx)[deriv]
    out = V(t, flat) - jump_sum(model.kernel, t, flat, pos, np.diff(rho_ext), deriv=deriv)
    return out.reshape(x.shape)


class ParticleVelocityField:
    """U^N(t, x) of a trajectory, usable as the space factor of the frozen flux m(s) U^N(t, x)."""

    autonomous = False

    def __init__(self, traj: ParticleTrajectory):
        self.traj = traj
        self.model = traj.model

    def __call__(self, t, x):
        return ubar(self.model, self.traj.state_at(t), np.asarray(x, dtype=float))

    def dx(self, t, x):
        return ubar(self.model, self.traj.state_at(t), np.asarray(x, dtype=float), deriv=1)

    def dxx(self, t, x):
        return ubar(self.model, self.traj.state_at(t), np.asarray(x, dtype=float), deriv=2)


def particle_flux(traj: ParticleTrajectory) -> ProductFlux:
    """J^N(t, x, s) = m(s) U^N(t, x): the local flux for which rho_bar^N is a quasi-entropy solution."""
    return ProductFlux(ParticleVelocityField(traj), traj.model.m)


# --------------------------------------------------------------------------- quasi-entropy error measure

@dataclass
class Mu1Measure:
    """Density of the error measure mu_1 at one instant.

    On cell i, m(rho_i) |U(x) - U(x_{i-1})| + const_i.
    """

    state: ParticleState
    model: ModelSpec
    const: np.ndarray
    first_masses: np.ndarray

    @property
    def const_part(self) -> PiecewiseConstantFn:
        return PiecewiseConstantFn(self.state.positions, self.const)

    @property
    def total_mass(self) -> float:
        return float(self.first_masses.sum() + (self.const * np.diff(self.state.positions)).sum())

    @property
    def breakpoints(self) -> np.ndarray:
        return self.state.positions

    def __call__(self, x) -> np.ndarray:
        return self.density(x)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pos = self.state.positions
        idx = np.searchsorted(pos, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.state.N)
        out = np.zeros_like(x)
        if not inside.any():
            return out
        i = idx[inside]
        rho = self.state.densities
        U_left = ubar(self.model, self.state, pos[:-1])
        U = ubar(self.model, self.state, x[inside])
        out[inside] = self.model.m(rho[i]) * np.abs(U - U_left[i]) + self.const[i]
        return out


def mu1_from_state(state: ParticleState, model: ModelSpec) -> Mu1Measure:
    pos = state.positions
    rho = state.densities
    U_disc, _, xdot = _velocity_terms(model, state.time, pos)
    U_left = ubar(model, state, pos[:-1])
    const = rho * (np.abs(np.diff(xdot)) + np.abs(xdot[:-1] - model.mobility(rho) * U_left))
    if model.kernel.is_zero and model.velocity.bounds()["dF"] == 0.0:
        first = np.zeros(state.N)
    else:
        xq, wq = gauss_nodes(pos)
        U = ubar(model, state, xq.ravel()).reshape(xq.shape)
        first = model.m(rho) * (np.abs(U - U_left[:, None]) * wq).sum(axis=1)
    return Mu1Measure(state, model, const, first)


def quasi_entropy_measure(traj: ParticleTrajectory, model: ModelSpec, t: float):
    """(mu_1 density, total mass) at a stored snapshot; mu_0 vanishes identically."""
    idx = traj.snapshot_index(t)
    if idx >= len(traj.derivatives) or traj.derivatives[idx] is None:
        raise ValueError("snapshot has no stored derivatives")
    mu = mu1_from_state(traj.snapshots[idx], model)
    return mu, mu.total_mass


def mu1_mass_series(traj: ParticleTrajectory, times=None) -> tuple[np.ndarray, np.ndarray]:
    """Total mass of mu_1 at ``times`` (default: the stored snapshots)."""
    if times is None:
        states = traj.snapshots
    else:
        states = [traj.state_at(s) for s in times]
    ts = np.array([s.time for s in states])
    return ts, np.array([mu1_from_state(s, traj.model).total_mass for s in states])


def budget_csv(times, masses) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mu1_mass"])
    for t, m in zip(times, masses):
        w.writerow([repr(float(t)), repr(float(m))])
    return buf.getvalue()
