import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conslab.core import Burgers, LinearFlux, PiecewiseConstantFn, l1_distance, local_flux, preset_model
from conslab.entropy import bump
from conslab.harness import (
    PRESET_DATA,
    PiecewiseLinearFn,
    StudyTable,
    beta_block,
    block_lower_bound,
    cauchy_study,
    counterexample_datum,
    default_block_count,
    fit_upper_envelope,
    front_tracking_rate_study,
    initialization_bound,
    l1_step_vs_linear,
    monotone_inversions,
    nwave_datum,
    nwave_exact,
    nwave_quantized,
    particle_convergence_study,
    preset_datum,
    rate_fit,
    sharpness_check,
    viscosity_rate_study,
)


# --------------------------------------------------------------------------- rate fits


def test_rate_fit_examples():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    fit = rate_fit(h, h)
    assert fit.slope == pytest.approx(1.0, abs=1e-12) and fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert rate_fit(h, np.full(4, 0.3)).slope == pytest.approx(0.0, abs=1e-12)
    noise = np.random.default_rng(2024).standard_normal(4)
    noisy = rate_fit(h, h ** 0.5 * (1 + 0.01 * noise))
    assert 0.45 <= noisy.slope <= 0.55 and 0 <= noisy.r2 <= 1
    assert rate_fit(h, h ** 0.5 * (1 + 0.01 * noise)) == noisy
    assert fit.predict(0.2) == pytest.approx(0.2)


@pytest.mark.parametrize("res,err", [([1, 2], [1, 2]), ([1, 2, 3], [1, 0, 2]), ([1, 2, 3], [1, 2])])
def test_rate_fit_rejects_bad_input(res, err):
    with pytest.raises(ValueError):
        rate_fit(res, err)


def test_study_table_and_inversions():
    tab = StudyTable()
    tab.add(100, 0.5, 0.2)
    tab.add(100, 1.0, 0.3, 0.4, 0.1)
    tab.add(200, 0.5, 0.1)
    lines = tab.to_csv().splitlines()
    assert lines[0] == "resolution,t,error,bound,margin"
    assert lines[1] == "100.0,0.5,0.2,,"
    res, errs = tab.errors_by_resolution()
    assert res.tolist() == [100, 200] and errs.tolist() == [0.3, 0.1]
    assert monotone_inversions([1, 2, 3], [1.0, 1.04, 1.2]) == [(2, 3)]


def test_upper_envelope_dominates_and_is_tight():
    X = np.array([[0.1, 1.0], [0.2, 0.5], [0.05, 0.3], [0.0, 0.2]])
    y = X @ np.array([2.0, 0.5])
    c = fit_upper_envelope(X, y)
    assert np.all(X @ c >= y)
    np.testing.assert_allclose(c, [2.0, 0.5], atol=1e-9)
    y2 = y + np.array([0.01, -0.02, 0.0, 0.005])
    assert np.all(X @ fit_upper_envelope(X, y2) >= y2)


# --------------------------------------------------------------------------- piecewise-linear targets

@settings(max_examples=40)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=6), st.integers(1, 40))
def test_step_vs_linear_distance_matches_quadrature(vals, cells):
    u = PiecewiseConstantFn(np.linspace(-1.3, 0.9, cells + 1), np.resize(np.array(vals), cells))
    w = PiecewiseLinearFn(np.linspace(-1, 1, len(vals)), np.array(vals[:-1]), np.array(vals[1:]) * 0.5)
    pts = np.unique(np.concatenate([[-2.0, 2.0], u.breakpoints, w.breakpoints]))
    oracle = sum(quad(lambda x: abs(float(u(np.array([x]))[0] - w(np.array([x]))[0])), a, b, limit=200)[0]
                 for a, b in zip(pts[:-1], pts[1:]))
    assert l1_step_vs_linear(u, w) == pytest.approx(oracle, abs=1e-8)


def test_nwave_pieces():
    w = nwave_exact(3.0)
    assert w(np.array([-1.9, 0.0, 1.0, 2.1])).tolist() == pytest.approx([-1.9 / 4, 0.0, 0.25, 0.0])
    assert w.total_variation() == pytest.approx(4 * 0.5)
    assert nwave_datum().total_variation() == 4.0
    for nu in (2, 5):
        q = nwave_quantized(nu)
        # nearest-lattice rounding of x: 2K - 1 interior cells cost h^2/4, the two end half cells h^2/8
        h, K = 2.0 ** -nu, 2 ** nu
        assert l1_step_vs_linear(q, nwave_datum()) == pytest.approx((2 * K - 1) * h * h / 4 + 2 * h * h / 8)


# --------------------------------------------------------------------------- sharpness construction

def test_beta_block_examples():
    b = beta_block(4, 1, max_width=None)
    assert b.breakpoints.tolist() == [0.0, 0.5, 1.0, 1.5]
    assert b.values.tolist() == [0.5, 0.0, 0.5]
    assert b.mass() == 0.5
    assert beta_block(100, 5, max_width=None).mass() == pytest.approx(0.06, abs=1e-15)
    with pytest.raises(ValueError):
        beta_block(16, 2)
    assert beta_block(16, 2, max_width=None).total_variation() == 1.5


def test_default_block_count():
    for N in (100, 256, 4096):
        a = 1 / (math.sqrt(N) * math.log(N))
        assert default_block_count(N) == math.ceil(math.sqrt(a) * N ** 0.75)


@settings(max_examples=30)
@given(st.lists(st.sampled_from([64, 128, 256, 512, 1024, 4096]), min_size=1, max_size=3))
def test_counterexample_datum_constraints(Ns):
    try:
        d = counterexample_datum(sorted(Ns))
    except ValueError:
        return  # blocks that do not fit are rejected, never silently clipped
    u = d.assembled
    assert u.values.min() >= 0 and u.sup_norm() <= 1
    a, b = u.support()
    assert a >= -1 and b <= 1
    assert u.total_variation() <= 3
    assert u.mass() == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("N", [256, 1024])
def test_sharpness_floor(N):
    r = sharpness_check(N)
    assert r["floor"] == block_lower_bound(N, r["C"]) == r["C"] / (4 * N)
    assert r["passed"] and r["error_on_block"] >= r["floor"]


# --------------------------------------------------------------------------- preset data and the initialization bound

@pytest.mark.parametrize("name", sorted(PRESET_DATA))
def test_preset_data_are_probability_densities(name):
    u = preset_datum(name)
    assert u.values.min() >= 0
    assert u.mass() == pytest.approx(1.0, abs=1e-12)


def test_unknown_preset_datum():
    with pytest.raises(KeyError):
        preset_datum("zigzag")


@settings(max_examples=40)
@given(st.sampled_from(sorted(PRESET_DATA)), st.integers(1, 3000))
def test_initialization_bound_property(name, N):
    r = initialization_bound(preset_datum(name), N)
    assert r["error"] <= r["bound"]
    assert r["margin"] == r["bound"] - r["error"]


# --------------------------------------------------------------------------- particle studies

def test_static_model_keeps_initial_distances():
    rho0 = preset_datum("parabola")
    res = particle_convergence_study(preset_model("static"), rho0, [20, 40, 80, 160], 1.0, [0.0, 0.5, 1.0])
    by_n = {}
    for N, t, err, _, _ in res.table.rows:
        by_n.setdefault(N, []).append(err)
    for errs in by_n.values():
        assert max(errs) - min(errs) <= 1e-14
    cs = cauchy_study(preset_model("static"), rho0, [(20, 40), (40, 80)], 1.0, [0.5, 1.0])
    for M, N in [(20, 40), (40, 80)]:
        gaps = [r["gap"] for r in cs.rows if (r["M"], r["N"]) == (M, N)]
        assert max(gaps) - min(gaps) <= 1e-14
        assert gaps[0] == pytest.approx(next(r["init_gap"] for r in cs.rows if (r["M"], r["N"]) == (M, N)))
    assert cs.passed


def test_study_input_errors():
    rho0 = preset_datum("uniform")
    with pytest.raises(ValueError):
        particle_convergence_study(preset_model("static"), rho0, [10, 20, 40], 1.0, [1.0])
    with pytest.raises(ValueError):
        cauchy_study(preset_model("static"), rho0, [(10, 10)], 1.0, [1.0])


def test_lwr_convergence_slope(particle_runs):
    res = particle_convergence_study(preset_model("lwr-gauss"), preset_datum("parabola"), [50, 100, 200, 400],
                                     1.0, [0.25, 0.5, 1.0], cache=particle_runs.cache_for("parabola"))
    assert res.fit.slope <= -0.5
    assert res.summary()["slope"] == res.fit.slope
    assert '"passed"' in res.summary_json()


# --------------------------------------------------------------------------- reference-solver studies

def _smooth_burgers_reference(t):
    """Inviscid Burgers solution from the bump datum, before shock formation, by characteristics."""
    def u(x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.full_like(x, -1.0), np.ones_like(x)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            left = mid + bump(mid) * t < x
            lo, hi = np.where(left, mid, lo), np.where(left, hi, mid)
        return np.where(np.abs(x) < 1, bump(0.5 * (lo + hi)), 0.0)

    return PiecewiseConstantFn.from_function(u, -1.0, 1.0, 4096)


def test_viscosity_rate_smooth_regime_and_grid_independence():
    T = 0.25
    ref = _smooth_burgers_reference(T)
    u0 = PiecewiseConstantFn.from_function(bump, -1.0, 1.0, 4096)
    eps = [0.04, 0.02, 0.01, 0.005]
    coarse = viscosity_rate_study(local_flux(Burgers()), u0, eps, T, lambda t: ref, [T], h_ratio=4)
    fine = viscosity_rate_study(local_flux(Burgers()), u0, eps, T, lambda t: ref, [T], h_ratio=8)
    assert 0.85 <= coarse.fit.slope <= 1.15
    _, e4 = coarse.table.errors_by_resolution()
    _, e8 = fine.table.errors_by_resolution()
    assert np.all(np.abs(e8 - e4) <= 0.05 * e4)
    with pytest.raises(ValueError):
        viscosity_rate_study(local_flux(Burgers()), u0, eps, T, None, [T])


def test_front_tracking_linear_flux_keeps_initial_error():
    def shifted(t):
        w = nwave_datum()
        return PiecewiseLinearFn(w.breakpoints + 0.5 * t, w.left, w.right)

    res = front_tracking_rate_study(LinearFlux(0.5), [3, 4, 5, 6], 1.0, [0.0, 0.5, 1.0], exact=shifted)
    for nu in (3, 4, 5, 6):
        errs = [r[2] for r in res.table.rows if r[0] == 2.0 ** -nu]
        assert max(errs) - min(errs) <= 1e-12
    assert res.checks["bound"]
    assert res.fit.slope == pytest.approx(1.0, abs=1e-6)  # rounding error of x is exactly h / 2


def test_front_tracking_self_convergence_mode():
    res = front_tracking_rate_study(Burgers(), [4, 5, 6, 7, 8], 1.0, [0.5, 1.0], exact=None)
    assert res.table.rows and all(r[0] != 2.0 ** -8 for r in res.table.rows)
    assert res.fit.slope > 0.5
