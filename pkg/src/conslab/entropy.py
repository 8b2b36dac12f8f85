"""Kruzkov entropy residuals, quasi-entropy budgets and the weighted L1 stability estimate.

Solutions are samplers ``t -> PiecewiseConstantFn``. Fluxes are objects exposing
``value(t, x, u)``, ``dx(t, x, u)`` and ``du(t, x, u)`` that broadcast over arrays
(``ProductFlux`` qualifies).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core.lipschitz import DEFAULT_GRID, estimate_lip, lip_profile, sample_grid
from .core.piecewise import PiecewiseConstantFn, gauss_nodes, weighted_l1_distance

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
# dimensional constant of the min/max correction: ||omega'||_1 = 15/8 for the quartic
# mollifier (15/16)(1 - s^2)^2, rounded up
C1_DEFAULT = 2.0


class SamplerGap(ValueError):
    pass


# --------------------------------------------------------------------------- bump profile

def bump(s):
    """(1 - s^2)^3 on |s| <= 1, zero outside."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 3, 0.0)


def bump_d(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, -6.0 * s * (1.0 - s * s) ** 2, 0.0)


BUMP_INTEGRAL_HALF = 16.0 / 35.0            # int_0^1 (1 - s^2)^3 ds
BUMP_D_MAX = 96.0 / (25.0 * math.sqrt(5.0))  # max |psi'|, attained at s = 1/sqrt(5)


@dataclass(frozen=True)
class TestFunction:
    """phi(t, x) = psi((t - t0) / tau) psi((x - x0) / hx) with the C^2 bump psi."""

    __test__ = False  # not a pytest class

    t0: float
    x0: float
    tau: float
    hx: float

    def __post_init__(self):
        if self.tau <= 0 or self.hx <= 0:
            raise ValueError("test function widths must be positive")

    @property
    def t_window(self) -> tuple[float, float]:
        return self.t0 - self.tau, self.t0 + self.tau

    @property
    def x_window(self) -> tuple[float, float]:
        return self.x0 - self.hx, self.x0 + self.hx

    def __call__(self, t, x):
        return bump((t - self.t0) / self.tau) * bump((np.asarray(x) - self.x0) / self.hx)

    def dt(self, t, x):
        return bump_d((t - self.t0) / self.tau) / self.tau * bump((np.asarray(x) - self.x0) / self.hx)

    def dx(self, t, x):
        return bump((t - self.t0) / self.tau) * bump_d((np.asarray(x) - self.x0) / self.hx) / self.hx

    def scaled(self, factor: float) -> "ScaledTestFunction":
        return ScaledTestFunction(self, factor)


@dataclass(frozen=True)
class ScaledTestFunction:
    base: TestFunction
    factor: float

    t_window = property(lambda self: self.base.t_window)
    x_window = property(lambda self: self.base.x_window)

    def __call__(self, t, x):
        return self.factor * self.base(t, x)

    def dt(self, t, x):
        return self.factor * self.base.dt(t, x)

    def dx(self, t, x):
        return self.factor * self.base.dx(t, x)


def test_function_grid(centers: Sequence[tuple[float, float]], scales: Sequence[tuple[float, float]]) -> list[TestFunction]:
    return [TestFunction(t0, x0, tau, hx) for tau, hx in scales for t0, x0 in centers]


# --------------------------------------------------------------------------- quadrature helpers

def _window_partition(breakpoints, a: float, b: float, pieces: int = 8) -> np.ndarray:
    bp = np.asarray(breakpoints, dtype=float)
    inner = bp[(bp > a) & (bp < b)]
    return np.unique(np.concatenate([np.linspace(a, b, pieces + 1), inner]))


def time_nodes(a: float, b: float, levels: Sequence[int]) -> np.ndarray:
    """All Gauss nodes used by the adaptive time integration at the given tile counts."""
    out = [gauss_nodes(np.linspace(a, b, n + 1))[0].ravel() for n in levels]
    return np.unique(np.concatenate(out))


DEFAULT_LEVELS = (4, 8, 16, 32, 64, 128)


@dataclass
class TimeIntegral:
    value: np.ndarray
    scale: np.ndarray
    tiles: int
    converged: bool
    change: np.ndarray


def adaptive_time_integral(fn: Callable[[float], tuple[np.ndarray, np.ndarray]], a: float, b: float,
                           rel_tol: float = DEFAULT_TOL, levels: Sequence[int] = DEFAULT_LEVELS) -> TimeIntegral:
    """Composite Gauss-Legendre in time, doubling tiles until two levels agree to rel_tol * scale.

    ``fn(t)`` returns (integrand, |integrand|) vectors; the scale is the integral of the latter.
    """
    prev = None
    for n in levels:
        t, w = gauss_nodes(np.linspace(a, b, n + 1))
        vals, absv = zip(*(fn(float(ti)) for ti in t.ravel()))
        w = w.ravel()
        I = w @ np.array(vals)
        S = w @ np.array(absv)
        if prev is not None:
            change = np.abs(I - prev)
            if np.all(change <= rel_tol * np.maximum(S, 1e-300)):
                return TimeIntegral(I, S, n, True, change)
        prev = I
    change = np.abs(I - prev) if len(levels) > 1 else np.zeros_like(I)
    return TimeIntegral(I, S, levels[-1], False, change)


def _sample(solution, t):
    try:
        return solution(t)
    except (ValueError, KeyError) as exc:
        raise SamplerGap(f"solution unavailable at t={t}: {exc}") from exc


def _sign(d):
    return np.sign(d)  # sign(0) = 0


# --------------------------------------------------------------------------- residuals

def _space_integrand(u: PiecewiseConstantFn, flux, t: float, phi, cs: np.ndarray):
    a, b = phi.x_window
    pts = _window_partition(u.breakpoints, a, b)
    xq, wq = gauss_nodes(pts)
    uv = np.repeat(u(0.5 * (pts[:-1] + pts[1:])), xq.shape[1])
    x, w = xq.ravel(), wq.ravel()
    ph, pt, px = phi(t, x), phi.dt(t, x), phi.dx(t, x)
    Pu = np.broadcast_to(flux.value(t, x, uv), x.shape)[:, None]
    Pc = np.broadcast_to(flux.value(t, x[:, None], cs[None, :]), (len(x), len(cs)))
    Pxc = np.broadcast_to(flux.dx(t, x[:, None], cs[None, :]), (len(x), len(cs)))
    d = uv[:, None] - cs[None, :]
    s = _sign(d)
    term = np.abs(d) * pt[:, None] + s * ((Pu - Pc) * px[:, None] - Pxc * ph[:, None])
    absterm = np.abs(d) * np.abs(pt)[:, None] + np.abs(s) * (np.abs(Pu - Pc) * np.abs(px)[:, None]
                                                             + np.abs(Pxc) * ph[:, None])
    return w @ term, w @ absterm


def entropy_residual(solution, flux, c, phi, rel_tol: float = DEFAULT_TOL, levels=DEFAULT_LEVELS,
                     return_info: bool = False):
    """int int |u-c| phi_t + sign(u-c) [(P(u) - P(c)) phi_x - P_x(c) phi] dx dt.

    ``c`` may be a scalar or an array (vectorised); sign(0) = 0.
    """
    cs = np.atleast_1d(np.asarray(c, dtype=float))
    a, b = phi.t_window
    res = adaptive_time_integral(lambda t: _space_integrand(_sample(solution, t), flux, t, phi, cs), a, b,
                                 rel_tol, levels)
    if not res.converged:
        log.debug("entropy residual: time quadrature not converged (change %s)", res.change)
    value = res.value if np.ndim(c) else float(res.value[0])
    return (value, res) if return_info else value


def weak_form_residual(solution, flux, phi, tiles: int = 64, order: int = 7) -> float:
    """int int u phi_t + P(t, x, u) phi_x, by a fixed tensor Gauss rule on the cells of u."""
    a, b = phi.t_window
    ts, wt = gauss_nodes(np.linspace(a, b, tiles + 1), order)
    total = 0.0
    xa, xb = phi.x_window
    for t, wti in zip(ts.ravel(), wt.ravel()):
        u = _sample(solution, float(t))
        bp = u.breakpoints
        pts = np.unique(np.concatenate([[xa, xb], bp[(bp > xa) & (bp < xb)]]))
        xq, wq = gauss_nodes(pts, order)
        uv = np.repeat(u(0.5 * (pts[:-1] + pts[1:])), order)
        x = xq.ravel()
        integrand = uv * phi.dt(t, x) + np.broadcast_to(flux.value(t, x, uv), x.shape) * phi.dx(t, x)
        total += wti * float(wq.ravel() @ integrand)
    return total


# --------------------------------------------------------------------------- budgets

def _measure_breakpoints(m):
    return getattr(m, "breakpoints", np.array([]))


def measure_mass_in(m, a: float, b: float) -> float:
    """Mass of a density (callable with breakpoints) on [a, b]."""
    if m is None:
        return 0.0
    bp = _measure_breakpoints(m)
    if hasattr(m, "total_mass") and len(bp) and bp[0] >= a and bp[-1] <= b:
        return float(m.total_mass)
    if isinstance(m, PiecewiseConstantFn):
        return float(m.cumulative(b) - m.cumulative(a))
    lo, hi = (max(a, bp[0]), min(b, bp[-1])) if len(bp) else (a, b)
    if hi <= lo:
        return 0.0
    pts = np.unique(np.concatenate([[lo, hi], bp[(bp > lo) & (bp < hi)]]))
    xq, wq = gauss_nodes(pts)
    return float((m(xq.ravel()) * wq.ravel()).sum())


@dataclass
class QuasiEntropyBudget:
    """Error measures mu_0,t (paired with |phi|) and mu_1,t (paired with |phi_x|).

    Each is a callable ``t -> density`` where the density is callable in x and exposes
    ``breakpoints``; None means the measure vanishes.
    """

    mu0: Callable | None = None
    mu1: Callable | None = None
    scale: float = 1.0

    @classmethod
    def zero(cls) -> "QuasiEntropyBudget":
        return cls()

    def scaled(self, lam: float) -> "QuasiEntropyBudget":
        return QuasiEntropyBudget(self.mu0, self.mu1, self.scale * lam)

    def mass0(self, t: float, a: float = -math.inf, b: float = math.inf) -> float:
        return self.scale * measure_mass_in(self.mu0(t), a, b) if self.mu0 else 0.0

    def mass1(self, t: float, a: float = -math.inf, b: float = math.inf) -> float:
        return self.scale * measure_mass_in(self.mu1(t), a, b) if self.mu1 else 0.0

    def mass_table(self, times) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        return (np.array([self.mass0(t) for t in times]), np.array([self.mass1(t) for t in times]))

    def _pair(self, t: float, phi) -> tuple[np.ndarray, np.ndarray]:
        total = 0.0
        a, b = phi.x_window
        for dens, weight in ((self.mu0, lambda x: np.abs(phi(t, x))), (self.mu1, lambda x: np.abs(phi.dx(t, x)))):
            if dens is None:
                continue
            m = dens(t)
            pts = _window_partition(_measure_breakpoints(m), a, b)
            xq, wq = gauss_nodes(pts)
            x = xq.ravel()
            total += float((m(x) * weight(x) * wq.ravel()).sum())
        v = np.array([self.scale * total])
        return v, np.abs(v)

    def allowance(self, phi, rel_tol: float = DEFAULT_TOL, levels=DEFAULT_LEVELS) -> float:
        """int int |phi| d mu_0 + int int |phi_x| d mu_1."""
        if self.mu0 is None and self.mu1 is None:
            return 0.0
        a, b = phi.t_window
        return float(adaptive_time_integral(lambda t: self._pair(t, phi), a, b, rel_tol, levels).value[0])


# --------------------------------------------------------------------------- verification grid

@dataclass
class VerificationRow:
    t0: float
    x0: float
    tau: float
    hx: float
    c: float
    residual: float
    allowance: float
    margin: float
    converged: bool = True


@dataclass
class VerificationReport:
    rows: list[VerificationRow]
    tolerance: float

    @property
    def worst(self) -> VerificationRow:
        return min(self.rows, key=lambda r: r.margin)

    @property
    def worst_margin(self) -> float:
        return self.worst.margin

    @property
    def passed(self) -> bool:
        return all(r.margin >= -self.tolerance for r in self.rows)

    @property
    def failures(self) -> list[VerificationRow]:
        return [r for r in self.rows if r.margin < -self.tolerance]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t0", "x0", "tau", "hx", "c", "residual", "budgetAllowance", "margin"])
        for r in self.rows:
            w.writerow([repr(r.t0), repr(r.x0), repr(r.tau), repr(r.hx), repr(r.c),
                        repr(r.residual), repr(r.allowance), repr(r.margin)])
        return buf.getvalue()


def quasi_entropy_verify(solution, flux, budget: QuasiEntropyBudget | None, phis: Sequence[TestFunction],
                         cs: Sequence[float], tol: float = DEFAULT_TOL, levels=DEFAULT_LEVELS) -> VerificationReport:
    """Check residual + allowance >= -tol for every (phi, c) pair; rows keep the input order."""
    if not phis or not len(cs):
        raise ValueError("test-function and constant grids must be non-empty")
    budget = budget or QuasiEntropyBudget.zero()
    cs = np.asarray(cs, dtype=float)
    rows = []
    for phi in phis:
        res, info = entropy_residual(solution, flux, cs, phi, tol, levels, return_info=True)
        allow = budget.allowance(phi, tol, levels)
        for c, r in zip(cs, np.atleast_1d(res)):
            rows.append(VerificationRow(phi.t0, phi.x0, phi.tau, phi.hx, float(c), float(r), allow,
                                        float(r) + allow, info.converged))
    return VerificationReport(rows, tol)


# --------------------------------------------------------------------------- weights

class CollarWeight:
    """Time-independent weight: 1 on [lo, hi], decaying to 0 over ``width`` with the bump profile."""

    def __init__(self, lo: float, hi: float, width: float = 1.0):
        if hi < lo or width <= 0:
            raise ValueError("invalid collar")
        self.lo, self.hi, self.width = float(lo), float(hi), float(width)

    @classmethod
    def around(cls, hull: tuple[float, float], enlarge: float = 1.0, width: float = 1.0) -> "CollarWeight":
        return cls(hull[0] - enlarge, hull[1] + enlarge, width)

    def _dist(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0) / self.width

    def __call__(self, t, x):
        return bump(self._dist(x))

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        side = np.where(x > self.hi, 1.0, np.where(x < self.lo, -1.0, 0.0))
        return side * bump_d(self._dist(x)) / self.width

    def dt(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def support(self, t):
        return self.lo - self.width, self.hi + self.width

    def kinks(self, t):
        return [self.lo, self.hi]

    def flat(self, t):
        return self.lo, self.hi

    sup = 1.0

    @property
    def lip_x(self) -> float:
        return BUMP_D_MAX / self.width

    def l1_x(self, t1: float, t2: float) -> float:
        return (self.hi - self.lo) + 2.0 * self.width * BUMP_INTEGRAL_HALF


def smoothstep(s):
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def smoothstep_d(s):
    s = np.asarray(s, dtype=float)
    return np.where((s > 0) & (s < 1), 6.0 * s * (1.0 - s), 0.0)


class SlopeWeight:
    """theta(c (t2 - t) - |x - xc| + 1 + r) with the C^1 smoothstep theta.

    Satisfies d_t Theta <= -L |d_x Theta| whenever c >= L.
    """

    def __init__(self, speed: float, t2: float, center: float = 0.0, r: float = 1.0):
        self.c, self.t2, self.xc, self.r = float(speed), float(t2), float(center), float(r)

    def _arg(self, t, x):
        return self.c * (self.t2 - t) - np.abs(np.asarray(x, dtype=float) - self.xc) + 1.0 + self.r

    def __call__(self, t, x):
        return smoothstep(self._arg(t, x))

    def dx(self, t, x):
        x = np.asarray(x, dtype=float)
        return -np.sign(x - self.xc) * smoothstep_d(self._arg(t, x))

    def dt(self, t, x):
        return -self.c * smoothstep_d(self._arg(t, x))

    def support(self, t):
        half = self.c * (self.t2 - t) + 1.0 + self.r
        return self.xc - half, self.xc + half

    def kinks(self, t):
        half = self.c * (self.t2 - t) + self.r
        return [self.xc - half, self.xc, self.xc + half]

    def flat(self, t):
        half = self.c * (self.t2 - t) + self.r
        return self.xc - half, self.xc + half

    sup = 1.0
    lip_x = 1.5

    def l1_x(self, t1: float, t2: float) -> float:
        return 2.0 * (self.c * (self.t2 - t1) + self.r) + 1.0

    def slope_violation(self, lip_q: float, t: float, samples: int = 401) -> float:
        """max over sampled x of d_t Theta + lip_q |d_x Theta| (<= 0 when the condition holds)."""
        a, b = self.support(t)
        x = np.linspace(a, b, samples)
        return float(np.max(self.dt(t, x) + lip_q * np.abs(self.dx(t, x))))


# --------------------------------------------------------------------------- stability estimate

TERM_NAMES = (
    "lip_weighted_integral",
    "div_difference",
    "lip_difference",
    "mu0_mass",
    "mu1_mass",
    "C_min_correction",
    "cn_max_correction",
)


@dataclass
class StabilityReport:
    t1: float
    t2: float
    lhs: float
    terms: dict[str, float]
    M: float
    C: float
    c1: float
    preconditions: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    tolerance: float = 0.0

    @property
    def rhs(self) -> float:
        total = 0.0
        for k in TERM_NAMES:
            total += self.terms[k]
        return total

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs + self.tolerance

    @property
    def correction_terms(self) -> float:
        return self.terms["C_min_correction"] + self.terms["cn_max_correction"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "value"])
        for k, v in [("t1", self.t1), ("t2", self.t2), ("lhs", self.lhs)] + [(k, self.terms[k]) for k in TERM_NAMES] + \
                [("M", self.M), ("C", self.C), ("c1", self.c1), ("rhs", self.rhs), ("margin", self.margin),
                 ("satisfied", int(self.satisfied))]:
            w.writerow([k, repr(float(v))])
        return buf.getvalue()


def _sup_tv_on(u: PiecewiseConstantFn, a: float, b: float) -> tuple[float, float]:
    bp = u.breakpoints
    pts = np.unique(np.concatenate([[a, b], bp[(bp > a) & (bp < b)]]))
    vals = u(0.5 * (pts[:-1] + pts[1:]))
    return float(np.abs(vals).max()), float(np.abs(np.diff(vals)).sum())


def _running_max(a):
    return np.maximum.accumulate(np.asarray(a, dtype=float))


def _trapz(y, x) -> float:
    y, x = np.asarray(y, dtype=float), np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def stability_bound(u, v, P, Q, mu: QuasiEntropyBudget | None, nu: QuasiEntropyBudget | None, theta,
                    t1: float, t2: float, R: Callable | None = None, B: Callable | None = None,
                    n_time: int = 21, grid: int = DEFAULT_GRID, c1: float = C1_DEFAULT,
                    tolerance: float = 0.0) -> StabilityReport:
    """Evaluate both sides of the weighted L1 stability estimate between quasi-entropy solutions.

    ``u``/``v`` are samplers of non-negative solutions with fluxes ``P``/``Q`` and budgets
    ``mu``/``nu``. Lipschitz constants are sampled on Omega_t x [0, R(t)] with ``grid`` nodes
    per axis, where Omega_t is supp(theta(t)) enlarged by one. Time integrals use the
    trapezoid rule on ``n_time`` nodes. Precondition failures are listed, not raised.
    """
    if not t2 > t1:
        raise ValueError("need t1 < t2")
    mu = mu or QuasiEntropyBudget.zero()
    nu = nu or QuasiEntropyBudget.zero()
    ts = np.linspace(t1, t2, n_time)
    pre: list[str] = []

    # pass 1: samples, weighted distances, sup norms and variations on Omega_t
    us, vs, omegas, wl1, sups, tvs = [], [], [], [], [], []
    for t in ts:
        U, V = _sample(u, t), _sample(v, t)
        a, b = theta.support(t)
        om = (a - 1.0, b + 1.0)
        su, tu = _sup_tv_on(U, *om)
        sv, tv = _sup_tv_on(V, *om)
        us.append(U)
        vs.append(V)
        omegas.append(om)
        wl1.append(weighted_l1_distance(U, V, theta, t))
        sups.append(max(su, sv))
        tvs.append(max(tu, tv))
        if hasattr(theta, "flat") and not isinstance(theta, SlopeWeight):
            lo, hi = theta.flat(t)
            hull = [f.support() for f in (U, V) if f.mass() != 0 or f.sup_norm() > 0]
            if hull and (min(h[0] for h in hull) - 1.0 < lo - 1e-12 or max(h[1] for h in hull) + 1.0 > hi + 1e-12):
                pre.append(f"weight is not 1 on the enlarged supports at t={t:.6g}")
    sups, tvs = np.array(sups), np.array(tvs)
    if R is None:
        Rv = _running_max(sups)
    else:
        Rv = np.array([R(t) for t in ts])
        if np.any(Rv < sups - 1e-12):
            pre.append("R envelope does not dominate the sampled sup norms")
    if B is None:
        Bv = _running_max(tvs)
    else:
        Bv = np.array([B(t) for t in ts])
        if np.any(Bv < tvs - 1e-12):
            pre.append("B envelope does not dominate the sampled total variations")
    if np.any(np.diff(Rv) < 0) or np.any(np.diff(Bv) < 0):
        pre.append("R or B envelope is not increasing")

    # pass 2: localized Lipschitz constants and P - Q norms
    L3divP, L3divQ, L2d3Q, L2divP, L3PmQ = [], [], [], [], []
    lipdiff_theta, divdiff_theta, divdiff_omega, mu0m, mu1m = [], [], [], [], []
    for t, om, Rt in zip(ts, omegas, Rv):
        box = (om, (0.0, float(Rt)))
        def pdx(x, s, t=t): return P.dx(t, x, s)
        def qdx(x, s, t=t): return Q.dx(t, x, s)
        def qdu(x, s, t=t): return Q.du(t, x, s)
        L3divP.append(estimate_lip(pdx, "density", box, grid).value)
        L3divQ.append(estimate_lip(qdx, "density", box, grid).value)
        L2d3Q.append(estimate_lip(qdu, "space", box, grid).value)
        L2divP.append(estimate_lip(pdx, "space", box, grid).value)
        x, s, diff = sample_grid(lambda x, s: P.value(t, x, s) - Q.value(t, x, s), box, grid)
        if Rt > 0:
            prof = lip_profile(x, s, diff, "density")
        else:
            prof = np.zeros(len(x))
        L3PmQ.append(float(prof.max()))
        th = theta(t, x)
        lipdiff_theta.append(float(np.max(prof * th)))
        _, _, ddiff = sample_grid(lambda x, s: P.dx(t, x, s) - Q.dx(t, x, s), box, grid)
        dd = np.abs(ddiff).max(axis=1)
        divdiff_theta.append(_trapz(dd * th, x))
        divdiff_omega.append(_trapz(dd, x))
        mu0m.append(mu.mass0(t, *om) + nu.mass0(t, *om))
        mu1m.append(mu.mass1(t, *om) + nu.mass1(t, *om))
        if isinstance(theta, SlopeWeight):
            lq = estimate_lip(lambda x, s: Q.value(t, x, s), "density", box, grid).value
            if theta.slope_violation(lq, t) > 1e-12:
                pre.append(f"slope condition violated at t={t:.6g} (Lip3(Q) = {lq:.4g} > {theta.c:.4g})")

    L3divP, L3divQ, L2d3Q, L2divP, L3PmQ = map(np.array, (L3divP, L3divQ, L2d3Q, L2divP, L3PmQ))
    wl1 = np.array(wl1)
    B2 = float(Bv[-1])
    th_sup, th_lip, th_l1 = theta.sup, theta.lip_x, theta.l1_x(t1, t2)

    M = _trapz(mu1m, ts)
    terms = {
        "lip_weighted_integral": _trapz((3.0 * L3divP + L3divQ) * wl1, ts),
        "div_difference": _trapz(divdiff_theta, ts),
        "lip_difference": 2.0 * B2 * _trapz(lipdiff_theta, ts),
        "mu0_mass": th_sup * _trapz(mu0m, ts),
        "mu1_mass": 0.5 * th_lip * M,
    }
    C = (th_sup * B2 * (2.0 + _trapz(3.0 * L3divP + L3divQ + 2.0 * L2d3Q, ts))
         + th_l1 * _trapz(L2divP, ts)
         + th_lip * B2 * _trapz(L3PmQ, ts)
         + 0.5 * th_lip * _trapz(divdiff_omega, ts))
    terms["C_min_correction"] = C * min(math.sqrt(M), 1.0)
    terms["cn_max_correction"] = c1 * th_sup * max(math.sqrt(M), M)
    lhs = float(wl1[-1] - wl1[0])
    diag = {
        "times": ts, "weighted_l1": wl1, "R": Rv, "B": Bv,
        "lip3_divP": L3divP, "lip3_divQ": L3divQ, "lip2_d3Q": L2d3Q, "lip2_divP": L2divP, "lip3_PmQ": L3PmQ,
        "mu0_mass": np.array(mu0m), "mu1_mass": np.array(mu1m), "grid": grid,
    }
    return StabilityReport(t1, t2, lhs, terms, M, C, c1, sorted(set(pre)), diag, tolerance)


# --------------------------------------------------------------------------- Gronwall envelope

def gronwall_envelope(initial_gap: float, times, f_values, Phi: Callable | np.ndarray | None = None) -> np.ndarray:
    """(gap + Phi(t1, t)) exp(int_{t1}^t f) at every tabulated t, by cumulative trapezoid."""
    ts = np.asarray(times, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if np.any(f < 0):
        raise ValueError("rate must be non-negative")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(ts))])
    if Phi is None:
        phi = np.zeros_like(ts)
    elif callable(Phi):
        phi = np.array([Phi(ts[0], t) for t in ts])
    else:
        phi = np.asarray(Phi, dtype=float)
    return (initial_gap + phi) * np.exp(cum)
