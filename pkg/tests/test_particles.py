import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conslab.core import (
    LWRFlux,
    PiecewiseConstantFn,
    QuadraticKernel,
    kernel_convolution_derivative,
    l1_distance,
    make_model,
    preset_model,
)
from conslab.harness import initialization_bound, preset_datum, random_staircase_datum, rate_fit
from conslab.particles import (
    ParticleCollision,
    ParticleState,
    StepControl,
    ValidityBoxEscape,
    budget_csv,
    density_from_particles,
    discrete_velocities,
    evolve,
    init_particles,
    mu1_from_state,
    mu1_mass_series,
    particle_flux,
    quasi_entropy_measure,
    ubar,
)
from conslab.solvers.fronts import front_track, quantize

from .conftest import midpoint_integral


# --------------------------------------------------------------------------- initialization

@pytest.mark.parametrize("N", [1, 3, 10, 64])
def test_uniform_density_gives_equal_spacing(N):
    S0 = 1.5
    state = init_particles(PiecewiseConstantFn.indicator(-S0, S0, 1 / (2 * S0)), N)
    np.testing.assert_allclose(np.diff(state.positions), 2 * S0 / N, rtol=1e-12)
    np.testing.assert_allclose(state.densities, 1 / (2 * S0), rtol=1e-12)


def test_quantile_on_zero_gap_sits_at_left_end():
    rho0 = PiecewiseConstantFn([0.0, 1.0, 2.0, 3.0], [0.5, 0.0, 0.5])
    np.testing.assert_array_equal(init_particles(rho0, 2).positions, [0.0, 1.0, 3.0])


def test_interior_cells_carry_equal_mass():
    rho0 = random_staircase_datum(seed=3)
    state = init_particles(rho0, 37)
    masses = np.diff(rho0.cumulative(state.positions))
    np.testing.assert_allclose(masses, 1 / 37, rtol=0, atol=1e-13)
    assert state.positions[0] == rho0.support()[0] and state.positions[-1] == rho0.support()[1]


def test_initialization_bound_example():
    rho0 = PiecewiseConstantFn.indicator(-1.0, 0.0, 1.0)  # S0 = 1, B0 = 2
    res = initialization_bound(rho0, 100)
    assert res["bound"] == pytest.approx(4 / math.sqrt(200))
    assert res["error"] <= res["bound"]


@pytest.mark.parametrize("bad", [PiecewiseConstantFn.indicator(0, 1, 0.0), PiecewiseConstantFn.indicator(0, 1, 0.5),
                                 PiecewiseConstantFn([0, 1, 2], [-0.5, 1.5])])
def test_initialization_rejects_invalid_data(bad):
    with pytest.raises(ValueError):
        init_particles(bad, 4)


def test_initialization_rejects_zero_particles():
    with pytest.raises(ValueError):
        init_particles(preset_datum("uniform"), 0)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 300))
def test_initialization_properties(seed, N):
    rho0 = random_staircase_datum(seed=seed, cells=7)
    rho = density_from_particles(init_particles(rho0, N))
    assert rho.mass() == pytest.approx(1.0, abs=1e-12)
    # reciprocal gaps reproduce cell values only up to round-off
    assert rho.sup_norm() <= rho0.sup_norm() * (1 + 1e-9)
    assert rho.total_variation() <= rho0.total_variation() * (1 + 1e-9)
    assert initialization_bound(rho0, N)["passed"]


# --------------------------------------------------------------------------- reconstruction

def test_density_equal_spacing():
    rho = density_from_particles(ParticleState(np.linspace(0, 1, 5)))
    np.testing.assert_allclose(rho.values, 1.0)


def test_density_two_cells():
    np.testing.assert_allclose(density_from_particles(ParticleState([0.0, 0.5, 1.5])).values, [1.0, 0.5])


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30))
def test_density_mass_and_unimodal_variation(gaps):
    gaps = sorted(gaps, reverse=True)  # increasing densities: unimodal
    x = np.concatenate([[0.0], np.cumsum(gaps)])
    rho = density_from_particles(ParticleState(x))
    assert rho.mass() == pytest.approx(1.0, abs=1e-12)
    assert rho.total_variation() == pytest.approx(2 * rho.values.max(), rel=1e-12)


def test_state_rejects_unsorted_positions():
    with pytest.raises(ValueError):
        ParticleState([0.0, 0.0, 1.0])


# --------------------------------------------------------------------------- velocities

def test_zero_kernel_velocity_is_external_field():
    m = make_model(velocity="sin-V(1,2)", kernel="zero")
    s = ParticleState(np.linspace(-1, 1, 9), 0.3)
    U, _, _ = discrete_velocities(s, m)
    np.testing.assert_allclose(U, np.sin(2 * s.positions))


def test_uniform_translation_velocities():
    c, rho_star = 1.5, 0.25
    m = make_model(velocity=f"const-V({c})", kernel="zero")
    s = init_particles(PiecewiseConstantFn.indicator(0, 4, rho_star), 8)
    _, _, rhs = discrete_velocities(s, m)
    np.testing.assert_allclose(rhs[:-1], (1 - rho_star) * c)
    assert rhs[-1] == pytest.approx(c)


def test_interaction_sum_matches_convolution():
    W = QuadraticKernel(1.0)
    m = make_model(velocity="zero", kernel="quadratic-kernel(1)")
    s = ParticleState([0.0, 1.0, 2.0])
    U, _, _ = discrete_velocities(s, m)
    rho = density_from_particles(s)
    direct = -kernel_convolution_derivative(rho, W, 0.0, s.positions, method="quadrature")
    np.testing.assert_allclose(U, direct, atol=1e-8)
    # hand evaluation: (W' * rho)(x) = int 2 (x - y) / 2 dy over [0, 2] = 2 x - 2
    np.testing.assert_allclose(U, -(2 * s.positions - 2.0), atol=1e-12)


def test_negative_velocity_takes_own_cell_mobility():
    m = make_model(velocity="const-V(-1)", kernel="zero")
    s = init_particles(PiecewiseConstantFn.indicator(0, 2, 0.5), 4)
    _, vmob, rhs = discrete_velocities(s, m)
    assert vmob[0] == 1.0  # exterior density 0 behind the tail
    np.testing.assert_allclose(vmob[1:], 0.5)
    np.testing.assert_allclose(rhs, -vmob)


def test_validity_box_escape():
    m = make_model(kernel="quadratic-kernel(1,1)")
    with pytest.raises(ValidityBoxEscape):
        discrete_velocities(ParticleState([0.0, 1.0, 3.0]), m)


def test_ubar_derivatives_match_finite_differences():
    m = preset_model("lwr-gauss")
    s = init_particles(preset_datum("parabola"), 40)
    x = np.linspace(-1.5, 1.5, 31)
    h = 1e-5
    fd = (ubar(m, s, x + h) - ubar(m, s, x - h)) / (2 * h)
    np.testing.assert_allclose(fd, ubar(m, s, x, 1), atol=1e-7)
    fd2 = (ubar(m, s, x + h, 1) - ubar(m, s, x - h, 1)) / (2 * h)
    np.testing.assert_allclose(fd2, ubar(m, s, x, 2), atol=1e-6)


# --------------------------------------------------------------------------- time integration

def test_static_model_keeps_positions():
    s = init_particles(preset_datum("parabola"), 30)
    tr = evolve(s, preset_model("static"), 1.0, [0.5])
    for st_ in tr.snapshots:
        np.testing.assert_array_equal(st_.positions, s.positions)


def test_free_flow_translation():
    rho_star, c, T = 0.25, 1.0, 0.5
    s = init_particles(PiecewiseConstantFn.indicator(0, 4, rho_star), 8)
    tr = evolve(s, make_model(velocity="const-V(1)"), T)
    x = tr.snapshots[-1].positions
    # the leader moves at c; the head rarefaction reaches particle N - k only at order t^(k+1),
    # so the two trailing particles still translate at (1 - rho*) c to integrator accuracy
    assert x[-1] - s.positions[-1] == pytest.approx(c * T, rel=1e-9)
    np.testing.assert_allclose(x[:2] - s.positions[:2], (1 - rho_star) * c * T, rtol=1e-9)
    assert np.all(np.diff(x) >= np.diff(s.positions) - 1e-12)


def test_lwr_rarefaction_against_front_tracking():
    rho0 = PiecewiseConstantFn.indicator(-2.0, 0.0, 0.5)
    ref = front_track(LWRFlux(), 12, quantize(rho0, 12), 0.5)
    Ns = (50, 100, 200, 400)
    errs = [l1_distance(evolve(init_particles(rho0, N), preset_model("lwr"), 0.5).density_at(0.5), ref.sample(0.5))
            for N in Ns]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert rate_fit(Ns, errs).slope <= -0.5
    assert errs[-1] <= 0.01


def test_trajectory_invariants():
    m = preset_model("lwr-gauss")
    tr = evolve(init_particles(preset_datum("two-block"), 60), m, 1.0, [0.1, 0.3, 0.7])
    assert np.all(np.diff(tr.times) > 0)
    assert np.all(tr.min_gaps > 0)
    assert all(np.all(np.diff(p) > 0) for p in tr.accepted_positions)
    for s, d in zip(tr.snapshots, tr.derivatives):
        assert density_from_particles(s).mass() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_array_equal(d, discrete_velocities(s, m)[2])
    assert len(tr.step_sizes) == len(tr.accepted_times) - 1


def test_dense_output_reintegrates_from_accepted_step():
    m = preset_model("lwr-gauss")
    tr = evolve(init_particles(preset_datum("parabola"), 40), m, 1.0)
    k = len(tr.accepted_times) // 2
    np.testing.assert_array_equal(tr.state_at(tr.accepted_times[k]).positions, tr.accepted_positions[k])
    with pytest.raises(ValueError):
        tr.state_at(1.5)
    with pytest.raises(KeyError):
        tr.snapshot_index(0.123)


def test_step_underflow_reports_collision():
    s = init_particles(preset_datum("parabola"), 20)
    with pytest.raises(ParticleCollision) as exc:
        evolve(s, preset_model("lwr-gauss"), 1.0, control=StepControl(tol=1e-30, h0=1e-3))
    assert exc.value.pair[1] == exc.value.pair[0] + 1


def test_halving_tolerance_barely_changes_distances():
    m = preset_model("lwr-gauss")
    rho0 = preset_datum("parabola")
    d = []
    for tol in (1e-8, 5e-9):
        c = StepControl(tol=tol)
        a = evolve(init_particles(rho0, 50), m, 1.0, control=c).density_at(1.0)
        b = evolve(init_particles(rho0, 100), m, 1.0, control=c).density_at(1.0)
        d.append(l1_distance(a, b))
    assert abs(d[1] - d[0]) <= 0.01 * d[0]


def test_trajectory_csv_columns():
    tr = evolve(init_particles(preset_datum("uniform"), 4), preset_model("lwr"), 0.5, [0.25])
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,i,x_i,xdot_i"
    assert len(lines) == 1 + 3 * 5
    assert budget_csv([0.0, 1.0], [0.5, 0.25]).splitlines() == ["t,mu1_mass", "0.0,0.5", "1.0,0.25"]


def test_n_uniform_bounds(particle_runs):
    runs = particle_runs.get("parabola", (50, 100, 200, 400, 800))
    sups = [max(tr.density_at(t).sup_norm() for t in tr.times) for tr in runs.values()]
    tvs = [max(tr.density_at(t).total_variation() for t in tr.times) for tr in runs.values()]
    assert max(sups) / min(sups) < 2
    assert max(tvs) / min(tvs) < 2


# --------------------------------------------------------------------------- quasi-entropy measure

def test_mu1_vanishes_in_the_interior_for_uniform_translation():
    rho_star, c, N = 0.25, 2.0, 8
    m = make_model(velocity=f"const-V({c})")
    tr = evolve(init_particles(PiecewiseConstantFn.indicator(0, 4, rho_star), N), m, 0.01)
    mu = mu1_from_state(tr.snapshots[0], m)
    assert np.all(mu.first_masses == 0)
    np.testing.assert_allclose(mu.const[:-1], 0.0, atol=1e-15)
    # only the head cell sees the free-flow leader: rho* |c - (1 - rho*) c| / N in mass
    assert mu.total_mass == pytest.approx(rho_star * rho_star * c / (N * rho_star), rel=1e-12)


def test_mu1_first_sum_for_sine_field():
    m = make_model(velocity="sin-V(1,1)")
    s = init_particles(preset_datum("parabola"), 12)
    mu = mu1_from_state(s, m)
    x, rho = s.positions, s.densities
    mob = rho * (1 - rho)
    for i in range(s.N):
        a, b = x[i], x[i + 1]
        direct = mob[i] * midpoint_integral(lambda y: np.abs(np.sin(y) - np.sin(a)), a, b, 20_000)
        assert mu.first_masses[i] == pytest.approx(direct, rel=1e-6)
        assert mu.first_masses[i] <= mob[i] * (b - a) ** 2 / 2 * (1 + 1e-12)


def test_mu1_density_integrates_to_total_mass():
    m = preset_model("lwr-gauss")
    s = init_particles(preset_datum("parabola"), 20)
    mu = mu1_from_state(s, m)
    a, b = s.positions[0], s.positions[-1]
    assert midpoint_integral(mu, a, b, 200_000) == pytest.approx(mu.total_mass, rel=1e-5)


def test_quasi_entropy_measure_at_snapshot():
    m = preset_model("lwr-gauss")
    tr = evolve(init_particles(preset_datum("parabola"), 30), m, 0.5, [0.25])
    mu, mass = quasi_entropy_measure(tr, m, 0.25)
    assert mass == pytest.approx(mu1_from_state(tr.state_at(0.25), m).total_mass)
    with pytest.raises(KeyError):
        quasi_entropy_measure(tr, m, 0.3)
    ts, masses = mu1_mass_series(tr)
    np.testing.assert_array_equal(ts, tr.times)
    assert np.all(masses >= 0)


def test_scaled_mu1_mass_is_bounded_on_short_ladder(particle_runs):
    runs = particle_runs.get("parabola", (50, 100, 200))
    ts = np.linspace(0, 1, 21)
    scaled = []
    for N, tr in runs.items():
        _, masses = mu1_mass_series(tr, ts)
        scaled.append(N * float(np.sum(0.5 * (masses[1:] + masses[:-1]) * np.diff(ts))))
    assert max(scaled) / min(scaled) < 2


def test_particle_flux_partials():
    tr = evolve(init_particles(preset_datum("parabola"), 20), preset_model("lwr-gauss"), 0.5, [0.25])
    P = particle_flux(tr)
    x, u = np.linspace(-1.2, 1.2, 9)[:, None], np.linspace(0.1, 0.9, 5)[None, :]
    h = 1e-6
    np.testing.assert_allclose((P.value(0.25, x + h, u) - P.value(0.25, x - h, u)) / (2 * h), P.dx(0.25, x, u),
                               atol=1e-6)
    np.testing.assert_allclose((P.value(0.25, x, u + h) - P.value(0.25, x, u - h)) / (2 * h), P.du(0.25, x, u),
                               atol=1e-6)
