"""Convergence-rate studies, rate fits and the sharpness construction for the particle scheme."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .core.piecewise import PiecewiseConstantFn, l1_distance, merged_partition
from .core.presets import ModelSpec, ScalarFlux
from .particles import StepControl, density_from_particles, evolve, init_particles

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- rate fits

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: tuple[tuple[float, float], ...]

    def predict(self, resolution: float) -> float:
        return math.exp(self.intercept) * resolution ** self.slope


def rate_fit(resolutions, errors) -> RateFit:
    """Ordinary least squares of log(error) on log(resolution)."""
    r = np.asarray(resolutions, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(r) != len(e) or len(r) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if np.any(r <= 0) or np.any(e <= 0):
        raise ValueError("rate fit needs positive resolutions and errors")
    X, Y = np.log(r), np.log(e)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(((Y - Y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot)
    return RateFit(float(slope), float(intercept), min(r2, 1.0), tuple(zip(r.tolist(), e.tolist())))


# --------------------------------------------------------------------------- study tables

@dataclass
class StudyTable:
    rows: list[tuple[float, float, float, float, float]] = field(default_factory=list)

    def add(self, resolution, t, error, bound=math.nan, margin=math.nan):
        self.rows.append((float(resolution), float(t), float(error), float(bound), float(margin)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["resolution", "t", "error", "bound", "margin"])
        for row in self.rows:
            w.writerow(["" if math.isnan(v) else repr(v) for v in row])
        return buf.getvalue()

    def errors_by_resolution(self, reduce=max) -> tuple[np.ndarray, np.ndarray]:
        res = sorted({r[0] for r in self.rows})
        return np.array(res), np.array([reduce(r[2] for r in self.rows if r[0] == x) for x in res])


@dataclass
class StudyResult:
    table: StudyTable
    fit: RateFit | None
    checks: dict[str, bool]
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        out = {"checks": self.checks, "passed": self.passed}
        if self.fit is not None:
            out["slope"] = self.fit.slope
            out["intercept"] = self.fit.intercept
            out["r2"] = self.fit.r2
        for k, v in self.extra.items():
            if isinstance(v, (int, float, str, bool, list, dict)) or v is None:
                out[k] = v
        return out

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, default=float)


def monotone_inversions(resolutions, errors, increasing_resolution_decreases=True, slack: float = 0.05):
    """Pairs of consecutive rungs where the error grows beyond ``slack`` relative."""
    bad = []
    for i in range(len(errors) - 1):
        if errors[i + 1] > errors[i] * (1.0 + slack):
            bad.append((resolutions[i], resolutions[i + 1]))
    return bad


# --------------------------------------------------------------------------- piecewise-linear targets

@dataclass(frozen=True)
class PiecewiseLinearFn:
    """Linear on every cell [b_k, b_{k+1}] from ``left[k]`` to ``right[k]``; zero outside."""

    breakpoints: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        bp = self.breakpoints
        idx = np.searchsorted(bp, x, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.left))
        out = np.zeros_like(x)
        i = idx[inside]
        lam = (x[inside] - bp[i]) / (bp[i + 1] - bp[i])
        out[inside] = (1 - lam) * self.left[i] + lam * self.right[i]
        return out

    def total_variation(self) -> float:
        ext_l = np.concatenate([[0.0], self.right])
        ext_r = np.concatenate([self.left, [0.0]])
        return float(np.abs(ext_r - ext_l).sum() + np.abs(self.right - self.left).sum())

    def sup_norm(self) -> float:
        return float(max(np.abs(self.left).max(), np.abs(self.right).max()))


def l1_step_vs_linear(u: PiecewiseConstantFn, w: PiecewiseLinearFn) -> float:
    """Exact int |u - w| for a step function u and a piecewise-linear w."""
    pts = np.unique(np.concatenate([u.breakpoints, w.breakpoints]))
    p, q = pts[:-1], pts[1:]
    mid = 0.5 * (p + q)
    c = u(mid)
    # values of w at cell ends taken from inside the cell (w may jump at breakpoints)
    eps_in = 1e-300
    wl = _linear_inside(w, p, mid)
    wr = _linear_inside(w, q, mid)
    gl, gr = c - wl, c - wr
    width = q - p
    same = gl * gr >= 0
    out = np.where(same, 0.5 * np.abs(gl + gr) * width, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.abs(gl) / (np.abs(gl) + np.abs(gr) + eps_in)
    out = np.where(same, out, 0.5 * width * (np.abs(gl) * r + np.abs(gr) * (1 - r)))
    return float(out.sum())


def _linear_inside(w: PiecewiseLinearFn, x, ref):
    """Evaluate the linear piece containing ``ref`` at ``x``."""
    bp = w.breakpoints
    idx = np.searchsorted(bp, ref, side="right") - 1
    inside = (idx >= 0) & (idx < len(w.left))
    out = np.zeros_like(np.asarray(x, dtype=float))
    i = idx[inside]
    lam = (x[inside] - bp[i]) / (bp[i + 1] - bp[i])
    out[inside] = (1 - lam) * w.left[i] + lam * w.right[i]
    return out


def nwave_datum() -> PiecewiseLinearFn:
    """u0(x) = x on [-1, 1]."""
    return PiecewiseLinearFn(np.array([-1.0, 1.0]), np.array([-1.0]), np.array([1.0]))


def nwave_exact(t: float) -> PiecewiseLinearFn:
    """Burgers entropy solution from u0 = x on [-1, 1]: x / (1 + t) on |x| < sqrt(1 + t)."""
    L = math.sqrt(1.0 + t)
    return PiecewiseLinearFn(np.array([-L, L]), np.array([-L / (1 + t)]), np.array([L / (1 + t)]))


def nwave_quantized(nu: int) -> PiecewiseConstantFn:
    """Exact nearest-lattice rounding of x on [-1, 1]: value k 2^-nu on |x - k 2^-nu| < 2^-nu / 2."""
    h = 2.0 ** -nu
    K = 2 ** nu
    bp = np.concatenate([[-1.0], (np.arange(-K, K) + 0.5) * h, [1.0]])
    return PiecewiseConstantFn(bp, np.arange(-K, K + 1) * h)


# --------------------------------------------------------------------------- sharpness construction

def default_block_count(N: int) -> int:
    """C_N = ceil(a_N^(1/2) N^(3/4)) with a_N = 1 / (sqrt(N) log N)."""
    a = 1.0 / (math.sqrt(N) * math.log(N))
    return int(math.ceil(math.sqrt(a) * N ** 0.75 - 1e-12))


def beta_block(N: int, C: int, offset: float = 0.0, max_width: float | None = 1.0) -> PiecewiseConstantFn:
    """C + 1 teeth of height and width 1/sqrt(N), separated by equal gaps.

    The block must fit in ``max_width`` (None disables the check).
    """
    if N < 1 or C < 1:
        raise ValueError("need N >= 1 and C >= 1")
    s = 1.0 / math.sqrt(N)
    if max_width is not None and (2 * C + 1) * s > max_width + 1e-12:
        raise ValueError(f"block of {C + 1} teeth does not fit in width {max_width:g} at N={N}")
    bp = offset + s * np.arange(2 * C + 2)
    vals = np.where(np.arange(2 * C + 1) % 2 == 0, s, 0.0)
    u = PiecewiseConstantFn(bp, vals)
    if abs(u.mass() - (C + 1) / N) > 1e-12 or abs(u.total_variation() - 2 * (C + 1) * s) > 1e-12:
        raise AssertionError("building block failed its mass/variation identities")
    return u


def block_lower_bound(N: int, C: int) -> float:
    return C / (4.0 * N)


@dataclass
class CounterexampleDatum:
    blocks: list[tuple[int, int, float]]
    base_height: float
    assembled: PiecewiseConstantFn

    def block_window(self, j: int) -> tuple[float, float]:
        N, C, b = self.blocks[j]
        return b, b + (2 * C + 1) / math.sqrt(N)


def counterexample_datum(Ns: Sequence[int], Cs: Sequence[int] | None = None, gap: float = 0.0) -> CounterexampleDatum:
    """Blocks placed left to right from x = 0, plus a mass-completion cell on [-1, 0]."""
    Cs = list(Cs) if Cs is not None else [default_block_count(N) for N in Ns]
    offsets, b = [], 0.0
    for N, C in zip(Ns, Cs):
        offsets.append(b)
        b += (2 * C + 1) / math.sqrt(N) + gap
    if b - gap > 1.0 + 1e-12:
        raise ValueError("blocks do not fit in [0, 1]")
    mass_blocks = sum((C + 1) / N for N, C in zip(Ns, Cs))
    base = 1.0 - mass_blocks
    if base < 0:
        raise ValueError("blocks carry more than unit mass")
    pts = [-1.0, 0.0]
    vals = [base]
    for (N, C), off in zip(zip(Ns, Cs), offsets):
        blk = beta_block(N, C, off)
        if off > pts[-1]:
            vals.append(0.0)
            pts.append(off)
        pts.extend(blk.breakpoints[1:].tolist())
        vals.extend(blk.values.tolist())
    u = PiecewiseConstantFn(pts, vals)
    u = u.scale(1.0 / u.mass()) if abs(u.mass() - 1.0) > 1e-15 else u
    if u.sup_norm() > 1.0 + 1e-12 or u.support()[0] < -1 - 1e-12 or u.support()[1] > 1 + 1e-12:
        raise ValueError("assembled datum violates the bound or support constraints")
    if u.total_variation() > 3.0 + 1e-12:
        raise ValueError(f"assembled datum has variation {u.total_variation():.4f} > 3")
    return CounterexampleDatum(list(zip(Ns, Cs, offsets)), base, u)


def sharpness_check(N: int, C: int | None = None) -> dict:
    """Quantile-particle error of a single-block datum against the floor C/(4N)."""
    C = C if C is not None else default_block_count(N)
    datum = counterexample_datum([N], [C])
    rho = density_from_particles(init_particles(datum.assembled, N))
    a, b = datum.block_window(0)
    local = l1_distance(rho.restrict(a, b), datum.assembled.restrict(a, b))
    floor = block_lower_bound(N, C)
    return {"N": N, "C": C, "error_on_block": local, "error": l1_distance(rho, datum.assembled),
            "floor": floor, "passed": local >= floor}


# --------------------------------------------------------------------------- preset data

def uniform_datum(S0: float = 1.0) -> PiecewiseConstantFn:
    return PiecewiseConstantFn.indicator(-S0, S0, 1.0 / (2 * S0))


def two_block_datum() -> PiecewiseConstantFn:
    return PiecewiseConstantFn([0.0, 1.0, 2.0, 3.0], [0.5, 0.0, 0.5])


def parabola_datum(cells: int = 2048) -> PiecewiseConstantFn:
    u = PiecewiseConstantFn.from_function(lambda x: 0.75 * (1 - x * x), -1.0, 1.0, cells)
    return u.scale(1.0 / u.mass())


def random_staircase_datum(seed: int = 7, cells: int = 40, a: float = -1.0, b: float = 1.0) -> PiecewiseConstantFn:
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.2, 1.0, cells)
    u = PiecewiseConstantFn(np.linspace(a, b, cells + 1), vals)
    return u.scale(1.0 / u.mass())


def beta_block_datum(N: int = 256) -> PiecewiseConstantFn:
    return counterexample_datum([N]).assembled


def multi_block_datum(Ns: Sequence[int] = (200, 400, 800), C: int = 1) -> PiecewiseConstantFn:
    return counterexample_datum(list(Ns), [C] * len(Ns)).assembled


PRESET_DATA: dict[str, Callable[[], PiecewiseConstantFn]] = {
    "uniform": uniform_datum,
    "two-block": two_block_datum,
    "parabola": parabola_datum,
    "beta-block": beta_block_datum,
    "random-staircase": random_staircase_datum,
    "multi-block": multi_block_datum,
}


def preset_datum(name: str) -> PiecewiseConstantFn:
    if name not in PRESET_DATA:
        raise KeyError(f"unknown datum preset '{name}'")
    return PRESET_DATA[name]()


# --------------------------------------------------------------------------- initialization bound

def initialization_bound(rho0: PiecewiseConstantFn, N: int) -> dict:
    """||rho_bar_0^N - rho0||_1 against (2 S0 + B0) / sqrt(2N)."""
    a, b = rho0.support()
    S0 = max(abs(a), abs(b))
    B0 = rho0.total_variation()
    err = l1_distance(density_from_particles(init_particles(rho0, N)), rho0)
    bound = (2 * S0 + B0) / math.sqrt(2 * N)
    return {"N": N, "error": err, "bound": bound, "margin": bound - err, "passed": err <= bound}


# --------------------------------------------------------------------------- particle studies

def _run(args):
    rho0, N, model, T, output_times, control = args
    return N, evolve(init_particles(rho0, N), model, T, output_times, control)


def run_particles(model: ModelSpec, rho0: PiecewiseConstantFn, Ns, T: float, output_times,
                  control: StepControl | None = None, jobs: int = 1, cache: dict | None = None) -> dict:
    """Trajectories per N, reusing ``cache`` entries keyed by N."""
    cache = cache if cache is not None else {}
    todo = [N for N in Ns if N not in cache]
    args = [(rho0, N, model, T, list(output_times), control) for N in todo]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for N, tr in ex.map(_run, args):
                cache[N] = tr
    else:
        for a in args:
            N, tr = _run(a)
            cache[N] = tr
    return {N: cache[N] for N in Ns}


def particle_convergence_study(model: ModelSpec, rho0: PiecewiseConstantFn, Ns: Sequence[int], T: float,
                               output_times: Sequence[float], control: StepControl | None = None, jobs: int = 1,
                               cache: dict | None = None, max_slope: float = -0.5) -> StudyResult:
    """L1 distance of every rung to the finest one at each output time; slope of the max-over-time error."""
    Ns = sorted(Ns)
    if len(Ns) < 4:
        raise ValueError("need at least three rungs below the reference")
    trajs = run_particles(model, rho0, Ns, T, output_times, control, jobs, cache)
    ref = trajs[Ns[-1]]
    table = StudyTable()
    for N in Ns[:-1]:
        for t in output_times:
            table.add(N, t, l1_distance(trajs[N].density_at(t), ref.density_at(t)))
    res, errs = table.errors_by_resolution()
    fit = rate_fit(res, errs)
    inv = monotone_inversions(res.tolist(), errs.tolist())
    checks = {"slope": fit.slope <= max_slope, "monotone": len(inv) == 0}
    return StudyResult(table, fit, checks, {"reference_N": Ns[-1], "inversions": [list(p) for p in inv]})


def fit_upper_envelope(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Non-negative coefficients c minimizing sum(X c - y) subject to X c >= y."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    res = linprog(X.sum(axis=0), A_ub=-X, b_ub=-y, bounds=[(0, None)] * X.shape[1], method="highs")
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    c = np.maximum(res.x, 0.0)
    # absorb solver round-off into the last coefficient so the envelope dominates exactly
    deficit = y - X @ c
    if np.any(deficit > 0):
        col = X[:, -1]
        c[-1] += float(np.max(np.where(col > 0, deficit / np.where(col > 0, col, 1.0), 0.0))) * (1 + 1e-12)
    return c


@dataclass
class CauchyResult:
    rows: list[dict]
    K: dict[float, float]
    L: dict[float, float]
    K_monotone: bool
    L_monotone: bool

    @property
    def min_margin(self) -> float:
        return min(r["margin"] for r in self.rows)

    @property
    def passed(self) -> bool:
        return self.min_margin >= 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["resolution", "t", "error", "bound", "margin"])
        for r in self.rows:
            w.writerow([f"{r['M']}-{r['N']}", repr(r["t"]), repr(r["gap"]), repr(r["bound"]), repr(r["margin"])])
        return buf.getvalue()


def cauchy_study(model: ModelSpec, rho0: PiecewiseConstantFn, pairs: Sequence[tuple[int, int]], T: float,
                 output_times: Sequence[float], control: StepControl | None = None, jobs: int = 1,
                 cache: dict | None = None) -> CauchyResult:
    """Gaps between paired runs against K ||initial gap||_1 + L (1/M + 1/N)^(1/2), fitted per output time."""
    for M, N in pairs:
        if M == N:
            raise ValueError("pairs need distinct resolutions")
    Ns = sorted({n for p in pairs for n in p})
    trajs = run_particles(model, rho0, Ns, T, output_times, control, jobs, cache)
    rows = []
    for t in output_times:
        for M, N in pairs:
            rows.append({"M": M, "N": N, "t": float(t),
                         "gap": l1_distance(trajs[M].density_at(t), trajs[N].density_at(t)),
                         "init_gap": l1_distance(trajs[M].density_at(0.0), trajs[N].density_at(0.0)),
                         "sqrt_term": math.sqrt(1.0 / M + 1.0 / N)})
    K, L = {}, {}
    for t in output_times:
        sel = [r for r in rows if r["t"] == float(t)]
        X = np.array([[r["init_gap"], r["sqrt_term"]] for r in sel])
        y = np.array([r["gap"] for r in sel])
        k, l = fit_upper_envelope(X, y)
        K[float(t)], L[float(t)] = float(k), float(l)
        for r in sel:
            r["bound"] = k * r["init_gap"] + l * r["sqrt_term"]
            r["margin"] = r["bound"] - r["gap"]
    ts = sorted(K)
    Km = all(K[b] >= K[a] - 1e-12 for a, b in zip(ts[:-1], ts[1:]))
    Lm = all(L[b] >= L[a] - 1e-12 for a, b in zip(ts[:-1], ts[1:]))
    return CauchyResult(rows, K, L, Km, Lm)


# --------------------------------------------------------------------------- reference-solver studies

def viscosity_rate_study(P, u0: PiecewiseConstantFn, eps_list: Sequence[float], T: float, reference,
                         output_times: Sequence[float], h_ratio: float = 4.0, min_slope: float = 0.4) -> StudyResult:
    """L1 error of the viscous solution at h = eps / h_ratio against ``reference`` (a sampler)."""
    from .solvers.viscous import viscous_solve

    if reference is None:
        raise ValueError("a reference solution is required")
    table = StudyTable()
    for eps in sorted(eps_list, reverse=True):
        sol = viscous_solve(P, eps, u0, T, output_times, h=eps / h_ratio)
        for t in output_times:
            table.add(eps, t, l1_distance(sol.sample(t), reference(t)))
    res, errs = table.errors_by_resolution()
    fit = rate_fit(res, errs)
    return StudyResult(table, fit, {"slope": fit.slope >= min_slope}, {"h_ratio": h_ratio})


def front_tracking_rate_study(f: ScalarFlux, nus: Sequence[int], T: float, output_times: Sequence[float],
                              quantized: Callable[[int], PiecewiseConstantFn] = nwave_quantized,
                              datum: PiecewiseLinearFn | PiecewiseConstantFn | None = None,
                              exact: Callable[[float], PiecewiseLinearFn] | None = nwave_exact,
                              min_slope: float = 0.85) -> StudyResult:
    """Front-tracking error per nu with the termwise bound ||u0^nu - u0||_1 + 2^-nu B0 ||f||_C2 t.

    Errors are measured against ``exact`` when given, else against the finest nu.
    """
    from .solvers.fronts import front_track

    datum = datum if datum is not None else nwave_datum()
    nus = sorted(nus)
    runs = {nu: front_track(f, nu, quantized(nu), T) for nu in nus}

    def dist(u, w):
        return l1_step_vs_linear(u, w) if isinstance(w, PiecewiseLinearFn) else l1_distance(u, w)

    R0 = max(datum.sup_norm(), max(quantized(nu).sup_norm() for nu in nus))
    c2 = f.c2_norm(-R0, R0)
    table = StudyTable()
    self_table = StudyTable()
    bounds_ok = True
    for nu in nus:
        u0n = quantized(nu)
        init = dist(u0n, datum)
        B0 = max(datum.total_variation(), u0n.total_variation())
        for t in output_times:
            ut = runs[nu].sample(t)
            if exact is not None:
                err = dist(ut, exact(t))
                bound = init + 2.0 ** -nu * B0 * c2 * t
                table.add(2.0 ** -nu, t, err, bound, bound - err)
                bounds_ok &= err <= bound
            if nu != nus[-1]:
                self_table.add(2.0 ** -nu, t, l1_distance(ut, runs[nus[-1]].sample(t)))
    main = table if exact is not None else self_table
    res, errs = main.errors_by_resolution()
    fit = rate_fit(res, errs)
    extra = {"R0": R0, "c2_norm": c2, "events": {str(nu): len(runs[nu].events) for nu in nus}}
    if exact is not None and len(self_table.rows) >= 3:
        sres, serrs = self_table.errors_by_resolution()
        if len(sres) >= 3:
            extra["self_convergence_slope"] = rate_fit(sres, serrs).slope
    return StudyResult(main, fit, {"bound": bool(bounds_ok), "slope": fit.slope >= min_slope}, extra)


# --------------------------------------------------------------------------- stability scenarios

def support_hull(samplers, times) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    for s in samplers:
        for t in times:
            a, b = s(t).support()
            lo, hi = min(lo, a), max(hi, b)
    return lo, hi


def particle_stability_reports(model: ModelSpec, rho0: PiecewiseConstantFn, M: int, N: int, t1: float,
                               t2_list: Sequence[float], control: StepControl | None = None,
                               cache: dict | None = None, n_time: int = 21, grid: int = 512,
                               hull_samples: int = 201, safety: float = 0.05):
    """Weighted stability estimate between two particle runs with their own frozen fluxes and budgets.

    The weight is 1 on the space-time hull of both supports enlarged by 1 + ``safety``.
    """
    from .entropy import CollarWeight, QuasiEntropyBudget, stability_bound
    from .particles import mu1_from_state, particle_flux

    T = max(t2_list)
    trajs = run_particles(model, rho0, [M, N], T, sorted({*t2_list, t1}), control, 1, cache)
    u, v = trajs[M], trajs[N]
    hull = support_hull([u.density_at, v.density_at], np.linspace(t1, T, hull_samples))
    theta = CollarWeight.around(hull, enlarge=1.0 + safety)
    mu = QuasiEntropyBudget(mu1=lambda t: mu1_from_state(u.state_at(t), model))
    nu = QuasiEntropyBudget(mu1=lambda t: mu1_from_state(v.state_at(t), model))
    P, Q = particle_flux(u), particle_flux(v)
    return [stability_bound(u.density_at, v.density_at, P, Q, mu, nu, theta, t1, t2, n_time=n_time, grid=grid)
            for t2 in t2_list]


def front_stability_reports(f: ScalarFlux, nu: int, u0: PiecewiseConstantFn, v0: PiecewiseConstantFn, t1: float,
                            t2_list: Sequence[float], n_time: int = 21, grid: int = 512, tolerance: float = 1e-12):
    """Weighted stability estimate between two exact front-tracking solutions of the same flux f_nu."""
    from .core.presets import ConstField, ProductFlux
    from .entropy import CollarWeight, stability_bound
    from .solvers.fronts import front_track, piecewise_linear_interpolant, quantize

    T = max(t2_list)
    uq, vq = quantize(u0, nu), quantize(v0, nu)
    R0 = max(uq.sup_norm(), vq.sup_norm())
    table = piecewise_linear_interpolant(f, nu, R0)
    ut = front_track(table, nu, uq, T)
    vt = front_track(table, nu, vq, T)
    hull = support_hull([ut.sample, vt.sample], np.linspace(0.0, T, 201))
    theta = CollarWeight.around(hull, enlarge=1.05)
    P = ProductFlux(ConstField(1.0), table)
    return [stability_bound(ut.sample, vt.sample, P, P, None, None, theta, t1, t2, n_time=n_time, grid=grid,
                            tolerance=tolerance) for t2 in t2_list]
