"""Batch experiment runner.

Exit codes: 0 when every check passes, 2 when a check fails (``failures.json`` lists them),
1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, svgplot
from .config import STUDIES, ConfigError, ExperimentConfig, parse_config
from .core.piecewise import PiecewiseConstantFn
from .core.presets import PRESET_MODELS, ConstField, ProductFlux, local_flux, make_model, make_preset, preset_names

log = logging.getLogger("conslab")

VISCOUS_LEVELS = (4, 8, 16, 32)


# --------------------------------------------------------------------------- config -> objects

def build_model(cfg: ExperimentConfig):
    m = cfg["model"]
    parts = dict(PRESET_MODELS.get(m["preset"], {}))
    for key in ("mobility", "velocity", "kernel"):
        if m[key]:
            parts[key] = m[key]
    return make_model(**parts, name=m["preset"])


def build_flux(cfg: ExperimentConfig):
    return make_preset(cfg["model"]["flux"], "flux")


def build_datum(cfg: ExperimentConfig):
    """The initial datum: a step function, or the linear N-wave profile."""
    d = cfg["datum"]
    if d["file"]:
        return PiecewiseConstantFn.from_csv(Path(d["file"]).read_text())
    name = d["preset"]
    if name == "nwave":
        return harness.nwave_datum()
    if name == "riemann-shock":
        return PiecewiseConstantFn.indicator(-1.0, 0.0, 1.0)
    if name == "random-staircase":
        return harness.random_staircase_datum(seed=cfg["study"]["seed"])
    return harness.preset_datum(name)


def step_datum(u0, cells: int = 4096) -> PiecewiseConstantFn:
    if isinstance(u0, harness.PiecewiseLinearFn):
        a, b = u0.breakpoints[0], u0.breakpoints[-1]
        return PiecewiseConstantFn.from_function(u0, a, b, cells)
    return u0


def quantizer(u0):
    from .solvers.fronts import quantize

    if isinstance(u0, harness.PiecewiseLinearFn):
        return harness.nwave_quantized
    return lambda nu: quantize(u0, nu)


def step_control(cfg: ExperimentConfig):
    from .particles import StepControl

    tol = cfg["tolerances"]
    return StepControl(tol=tol["integrator"], gamma=tol["gamma"])


def output_times(cfg: ExperimentConfig) -> list[float]:
    st = cfg["study"]
    return sorted({*st["output_times"], st["T"]})


def scale_pairs(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    s = cfg["study"]["entropy_scales"]
    return list(zip(s[0::2], s[1::2]))


def slope_tol(cfg: ExperimentConfig, default: float) -> float:
    v = cfg["tolerances"]["slope"]
    return default if math.isnan(v) else v


# --------------------------------------------------------------------------- output helpers

class Outputs:
    def __init__(self, root: Path, svg: bool):
        self.root = root
        self.svg = svg
        root.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str):
        (self.root / name).write_text(content)

    def plot(self, name: str, content_fn):
        if self.svg:
            self.text(name, content_fn())


def _study_plot(table, title: str, xlabel: str):
    series = {}
    for r in table.rows:
        xs, ys = series.setdefault(f"t={r[1]:g}", ([], []))
        xs.append(r[0])
        ys.append(r[2])
    return svgplot.line_plot(series, title, xlabel, "L1 error", logx=True, logy=True)


def _density_plot(snaps: dict[float, PiecewiseConstantFn], title: str):
    series = {f"t={t:g}": svgplot.staircase_series(u) for t, u in snaps.items()}
    return svgplot.line_plot(series, title, "x", "density", step=True)


# --------------------------------------------------------------------------- studies

def run_simulate(cfg: ExperimentConfig, out: Outputs, jobs: int) -> dict:
    scheme = cfg["scheme"]["name"]
    T = cfg["study"]["T"]
    times = output_times(cfg)
    u0 = build_datum(cfg)
    checks: dict[str, bool] = {}
    snaps: dict[float, PiecewiseConstantFn] = {}
    summary: dict = {"scheme": scheme}
    if scheme == "particles":
        from .particles import evolve, init_particles

        model = build_model(cfg)
        traj = evolve(init_particles(step_datum(u0), cfg["scheme"]["N"]), model, T, times, step_control(cfg))
        out.text("trajectory.csv", traj.to_csv())
        for t in times:
            snaps[t] = traj.density_at(t)
        checks["mass"] = all(abs(u.mass() - 1.0) <= 1e-12 for u in snaps.values())
        checks["ordering"] = bool(np.min(traj.min_gaps) > 0)
        summary.update(N=traj.N, accepted_steps=len(traj.accepted_times) - 1, rejected_steps=traj.rejected_steps,
                       min_gap=float(np.min(traj.min_gaps)))
    elif scheme == "viscous":
        from .solvers.viscous import viscous_solve

        eps = cfg["scheme"]["epsilon"]
        u0s = step_datum(u0)
        sol = viscous_solve(local_flux(build_flux(cfg)), eps, u0s, T, times, h=eps / cfg["scheme"]["h_ratio"])
        out.text("grid.csv", sol.to_csv())
        m0 = sol.mass(0.0)
        lo, hi = min(0.0, float(u0s.values.min())), max(0.0, float(u0s.values.max()))
        for t in times:
            snaps[t] = sol.sample(t)
        checks["mass"] = all(abs(sol.mass(t) - m0) <= 1e-10 * max(1.0, abs(m0)) for t in times)
        checks["max_principle"] = all(lo - 1e-12 <= float(v.min()) and float(v.max()) <= hi + 1e-12
                                      for v in sol.values)
        summary.update(epsilon=eps, h=sol.h, steps=sol.steps, dt_min=sol.dt_min, dt_max=sol.dt_max)
    else:
        from .solvers.fronts import front_track

        nu = cfg["scheme"]["nu"]
        u0n = quantizer(u0)(nu)
        tr = front_track(build_flux(cfg), nu, u0n, T)
        out.text("events.csv", tr.events_csv())
        for t in times:
            snaps[t] = tr.sample(t)
        m0 = u0n.mass()
        checks["mass"] = all(abs(u.mass() - m0) <= 1e-12 * max(1.0, abs(m0)) for u in snaps.values())
        tvs = [tr.total_variation(t) for t in times]
        checks["tvd"] = all(b <= a + 1e-12 for a, b in zip(tvs[:-1], tvs[1:]))
        summary.update(nu=nu, events=len(tr.events))
    for i, (t, u) in enumerate(snaps.items()):
        out.text(f"snapshot_{i:02d}.csv", f"# t={t!r}\n" + u.to_csv())
    out.plot("snapshots.svg", lambda: _density_plot(snaps, f"{scheme} solution"))
    summary["times"] = times
    summary["checks"] = checks
    return summary


def run_convergence(cfg: ExperimentConfig, out: Outputs, jobs: int) -> dict:
    scheme = cfg["scheme"]["name"]
    st = cfg["study"]
    T = st["T"]
    times = output_times(cfg)
    u0 = build_datum(cfg)
    if scheme == "particles":
        Ns = [int(n) for n in st["resolutions"]] or [50, 100, 200, 400, 800]
        result = harness.particle_convergence_study(build_model(cfg), step_datum(u0), Ns, T, times,
                                                    step_control(cfg), jobs, max_slope=slope_tol(cfg, -0.5))
        xlabel = "N"
    elif scheme == "viscous":
        from .solvers.fronts import front_track

        eps_list = list(st["resolutions"]) or [10.0 ** -k for k in (1.0, 1.5, 2.0)]
        f = build_flux(cfg)
        ref = front_track(f, cfg["scheme"]["reference_nu"], quantizer(u0)(cfg["scheme"]["reference_nu"]), T)
        result = harness.viscosity_rate_study(local_flux(f), step_datum(u0), eps_list, T, ref.sample, times,
                                              cfg["scheme"]["h_ratio"], slope_tol(cfg, 0.4))
        xlabel = "epsilon"
    else:
        nus = [int(n) for n in st["resolutions"]] or list(range(4, 11))
        exact = harness.nwave_exact if isinstance(u0, harness.PiecewiseLinearFn) and \
            cfg["model"]["flux"] == "burgers" else None
        result = harness.front_tracking_rate_study(build_flux(cfg), nus, T, times, quantizer(u0), u0, exact,
                                                   slope_tol(cfg, 0.85))
        xlabel = "2^-nu"
    out.text("study.csv", result.table.to_csv())
    out.plot("study.svg", lambda: _study_plot(result.table, f"{scheme} convergence", xlabel))
    return result.summary()


def run_cauchy(cfg: ExperimentConfig, out: Outputs, jobs: int) -> dict:
    if cfg["scheme"]["name"] != "particles":
        raise ConfigError("the cauchy study needs scheme.name = particles")
    st = cfg["study"]
    pairs = st["pairs"] or [(100, 200), (200, 400), (400, 800)]
    res = harness.cauchy_study(build_model(cfg), step_datum(build_datum(cfg)), pairs, st["T"], output_times(cfg),
                               step_control(cfg), jobs)
    out.text("cauchy.csv", res.to_csv())
    return {"checks": {"envelope": res.passed}, "min_margin": res.min_margin,
            "K": {repr(t): v for t, v in res.K.items()}, "L": {repr(t): v for t, v in res.L.items()},
            "K_monotone": res.K_monotone, "L_monotone": res.L_monotone}


def entropy_grid(u_t0: PiecewiseConstantFn, cfg: ExperimentConfig):
    """Test functions centred inside the essential support at t0 and constants spanning [0, sup u]."""
    from .entropy import test_function_grid

    st = cfg["study"]
    big = np.abs(u_t0.values) > 1e-6 * u_t0.sup_norm()
    a, b = (float(u_t0.breakpoints[:-1][big].min()), float(u_t0.breakpoints[1:][big].max())) if big.any() \
        else u_t0.support()
    xs = np.linspace(a, b, st["entropy_centers"] + 2)[1:-1]
    phis = test_function_grid([(st["entropy_t0"], float(x)) for x in xs], scale_pairs(cfg))
    cs = np.linspace(0.0, u_t0.sup_norm(), st["entropy_constants"])
    return phis, cs


def run_entropy_check(cfg: ExperimentConfig, out: Outputs, jobs: int) -> dict:
    from .entropy import DEFAULT_LEVELS, QuasiEntropyBudget, quasi_entropy_verify, time_nodes

    scheme = cfg["scheme"]["name"]
    st = cfg["study"]
    T, t0 = st["T"], st["entropy_t0"]
    if any(t0 - tau < 0 or t0 + tau > T for tau, _ in scale_pairs(cfg)):
        raise ConfigError("entropy test windows must fit inside [0, T]")
    u0 = build_datum(cfg)
    levels = DEFAULT_LEVELS
    if scheme == "particles":
        from .particles import evolve, init_particles, mu1_from_state, particle_flux

        model = build_model(cfg)
        traj = evolve(init_particles(step_datum(u0), cfg["scheme"]["N"]), model, T, output_times(cfg),
                      step_control(cfg))
        solution, flux = traj.density_at, particle_flux(traj)
        budget = QuasiEntropyBudget(mu1=lambda t: mu1_from_state(traj.state_at(t), model))
        phis, cs = entropy_grid(solution(t0), cfg)
    elif scheme == "viscous":
        from .solvers.viscous import viscous_solve

        eps = cfg["scheme"]["epsilon"]
        u0s = step_datum(u0)
        P = local_flux(build_flux(cfg))
        levels = VISCOUS_LEVELS
        windows = {(t0 - tau, t0 + tau) for tau, _ in scale_pairs(cfg)}
        nodes = sorted({t0, *np.concatenate([time_nodes(a, b, levels) for a, b in windows]).tolist()})
        sol = viscous_solve(P, eps, u0s, T, nodes, h=eps / cfg["scheme"]["h_ratio"])
        solution, flux = sol.sample, P
        # the upwind part of the scheme adds h * speed / 2 to the physical viscosity
        effective = eps + 0.5 * sol.h * sol.max_speed
        budget = QuasiEntropyBudget(mu1=sol.gradient_budget, scale=effective / eps)
        phis, cs = entropy_grid(solution(t0), cfg)
    else:
        from .solvers.fronts import front_track, piecewise_linear_interpolant

        nu = cfg["scheme"]["nu"]
        u0n = quantizer(u0)(nu)
        table = piecewise_linear_interpolant(build_flux(cfg), nu, u0n.sup_norm())
        tr = front_track(table, nu, u0n, T)
        solution, flux, budget = tr.sample, ProductFlux(ConstField(1.0), table), None
        phis, cs = entropy_grid(solution(t0), cfg)
    report = quasi_entropy_verify(solution, flux, budget, phis, cs, cfg["tolerances"]["entropy"], levels)
    out.text("verification.csv", report.to_csv())
    w = report.worst
    return {"checks": {"quasi_entropy": report.passed}, "worst_margin": report.worst_margin,
            "worst": {"t0": w.t0, "x0": w.x0, "tau": w.tau, "hx": w.hx, "c": w.c}, "rows": len(report.rows)}


def run_stability(cfg: ExperimentConfig, out: Outputs, jobs: int) -> dict:
    scheme = cfg["scheme"]["name"]
    st = cfg["study"]
    t1 = st["t1"]
    t2s = [t for t in output_times(cfg) if t > t1]
    tol = cfg["tolerances"]["stability"]
    u0 = build_datum(cfg)
    if scheme == "particles":
        M, N = (st["pairs"] or [(100, 400)])[0]
        reports = harness.particle_stability_reports(build_model(cfg), step_datum(u0), M, N, t1, t2s,
                                                     step_control(cfg), n_time=st["time_nodes"])
    elif scheme == "fronttracking":
        nu = cfg["scheme"]["nu"]
        v0 = u0.shift(st["shift"]) if isinstance(u0, PiecewiseConstantFn) else None
        if v0 is None:
            raise ConfigError("the front-tracking stability study needs a step-function datum")
        reports = harness.front_stability_reports(build_flux(cfg), nu, u0, v0, t1, t2s, n_time=st["time_nodes"],
                                                  tolerance=tol)
    else:
        raise ConfigError("the stability-bound study supports particles and fronttracking")
    rows = []
    for i, r in enumerate(reports):
        r.tolerance = max(r.tolerance, tol)
        out.text(f"stability_{i:02d}.csv", r.to_csv())
        rows.append({"t2": r.t2, "lhs": r.lhs, "rhs": r.rhs, "margin": r.margin, "satisfied": r.satisfied,
                     "preconditions": r.preconditions})
    checks = {f"t2={r.t2:g}": r.satisfied and not r.preconditions for r in reports}
    return {"checks": checks, "reports": rows}


RUNNERS = {
    "simulate": run_simulate,
    "convergence": run_convergence,
    "cauchy": run_cauchy,
    "entropy-check": run_entropy_check,
    "stability-bound": run_stability,
}


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conslab", description="Run conservation-law experiments from a config file.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STUDIES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI experiment file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--seed", type=int)
    sub.add_parser("presets", help="list model, flux and datum presets")
    return p


def print_presets(stream=None):
    stream = stream or sys.stdout
    print("model presets:", file=stream)
    for name, parts in PRESET_MODELS.items():
        print(f"  {name}: " + ", ".join(f"{k}={v}" for k, v in parts.items()), file=stream)
    print("components:", file=stream)
    for name, role in preset_names().items():
        print(f"  {name} ({role})", file=stream)
    print("data:", file=stream)
    for name in (*harness.PRESET_DATA, "nwave", "riemann-shock"):
        print(f"  {name}", file=stream)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        print_presets()
        return 0
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
        overrides = list(args.set) + [f"study.kind={args.command}"]
        if args.out:
            overrides.append(f"output.dir={args.out}")
        if args.seed is not None:
            overrides.append(f"study.seed={args.seed}")
        cfg = parse_config(text, overrides)
        out = Outputs(Path(cfg["output"]["dir"]), cfg["output"]["svg"])
        out.text("config.ini", cfg.to_text())
        summary = RUNNERS[args.command](cfg, out, max(1, args.jobs))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary["passed"] = all(summary["checks"].values())
    out.text("summary.json", json.dumps(summary, indent=2, sort_keys=True, default=_jsonable) + "\n")
    failures = [k for k, ok in summary["checks"].items() if not ok]
    if failures:
        out.text("failures.json", json.dumps({"failed": failures}, indent=2) + "\n")
        print(f"FAIL: {', '.join(failures)}")
        return 2
    print(f"PASS: {args.command} ({len(summary['checks'])} checks)")
    return 0


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


if __name__ == "__main__":
    sys.exit(main())
