from attrs import evolve
import numpy as np
import pytest

from tamed import _integrators
from tamed._initial import random_field, single_mode, taylor_green
from tamed._integrators import (
    CSV_COLUMNS,
    SERIES_RADIUS,
    SolverConfig,
    Trajectory,
    etd_step,
    phi1,
    phi2,
    picard_pass,
    run,
    run_many,
)
from tamed._oracle import reference_integrate
from tamed._rhs import TamingParams, tamed_rhs
from tamed._spectral import (
    SpectralField,
    apply_semigroup,
    eigenfield,
    norm,
    translate,
)
from tamed.exceptions import (
    BlowUp,
    BoundViolation,
    ConfigError,
    DomainError,
    NonConvergence,
    StructuralError,
)

LINEAR = TamingParams(nu=0.5, advection="none", tamed=False)


def test_phi_functions_at_zero():
    assert phi1(0.0) == 1
    assert phi2(0.0) == 0.5


@pytest.mark.parametrize("z", [-1.0, -30.0, 0.5, -1e-3])
def test_phi_functions_away_from_zero(z):
    assert phi1(z) == pytest.approx(np.expm1(z) / z)
    assert phi2(z) == pytest.approx((np.expm1(z) - z) / z**2)


def test_phi_functions_are_continuous_at_the_series_cutoff():
    below, above = SERIES_RADIUS * (1 - 1e-9), SERIES_RADIUS * (1 + 1e-9)
    for phi in phi1, phi2:
        assert phi(-below) == pytest.approx(phi(-above), rel=1e-10)


def test_phi_functions_on_complex_arguments():
    z = np.array([-1 + 2j, -1e-6j])
    assert np.allclose(phi1(z), [np.expm1(z[0]) / z[0], 1 + z[1] / 2])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(dt=0, T=1),
        dict(dt=0.1, T=-1),
        dict(dt=0.1, T=1, mode="RK4"),
        dict(dt=0.1, T=1, cadence=0),
        dict(dt=0.1, T=1, picard_max_iter=0),
        dict(dt=0.1, T=1, picard_window=0),
        dict(dt=0.1, T=1, snapshots=[0.15]),
        dict(dt=0.1, T=1, snapshots=[2.0]),
        dict(dt=0.1, T=1, cfl=0.5, snapshots=[0.5]),
        dict(dt=0.1, T=1, lq_exponents=[0.5]),
    ],
)
def test_invalid_solver_config(kwargs):
    with pytest.raises(DomainError):
        SolverConfig(**kwargs)


def test_step_count():
    assert SolverConfig(dt=0.1, T=1).steps == 10


def test_zero_stays_zero(torus):
    cfg = SolverConfig(dt=0.01, T=0.1)
    trajectory = run(SpectralField.zeros(torus), TamingParams(nu=0.1), cfg)
    assert np.all(trajectory.l2 == 0)
    assert np.all(trajectory.g_value == 0)
    assert trajectory.horizon == pytest.approx(0.1)


@pytest.mark.parametrize("mode", ["ETD1", "ETD2", "PICARD"])
def test_stokes_flow_is_exact(manufactured, mode):
    u0 = eigenfield(manufactured, 3, amplitude=2.0)
    cfg = SolverConfig(dt=0.05, T=1, mode=mode)
    trajectory = run(u0, LINEAR, cfg)
    expected = np.exp(-LINEAR.nu * manufactured.eigenvalues[3]) * 2.0
    assert trajectory.l2[-1] == pytest.approx(expected, rel=1e-12)


def test_stokes_flow_on_the_torus(torus, smooth):
    cfg = SolverConfig(dt=0.05, T=1)
    trajectory = run(smooth, LINEAR, cfg)
    expected = apply_semigroup(LINEAR.nu, smooth)
    assert norm(trajectory.final - expected, "L2") <= 1e-13


def test_runs_are_deterministic(smooth):
    p = TamingParams(nu=0.1, kappa=2, N=1)
    cfg = SolverConfig(dt=0.01, T=0.1)
    u0 = (2.0 / norm(smooth, "sup")) * smooth
    assert run(u0, p, cfg).to_csv() == run(u0, p, cfg).to_csv()


def test_subcritical_runs_ignore_taming(smooth):
    cfg = SolverConfig(dt=0.01, T=0.2)
    tamed = run(smooth, TamingParams(nu=0.1, N=1e6), cfg)
    untamed = run(smooth, TamingParams(nu=0.1, N=1e6, tamed=False), cfg)
    assert tamed.to_csv() == untamed.to_csv()
    assert tamed.final == untamed.final


def test_taming_engages_above_the_threshold(smooth):
    u0 = (3.0 / norm(smooth, "sup")) * smooth
    cfg = SolverConfig(dt=0.01, T=0.05)
    trajectory = run(u0, TamingParams(nu=0.1, N=4), cfg)
    assert trajectory.g_value[0] > 0
    assert trajectory.tame_arg[0] == pytest.approx(9.0)


def test_energy_never_grows(torus):
    u0 = taylor_green(torus)
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=10)
    trajectory = run(u0, TamingParams(nu=0.1), cfg)
    budget = trajectory.energy + 2 * 0.1 * trajectory.cum_diss_h1
    assert np.all(np.diff(trajectory.energy) <= 0)
    assert np.all(budget <= trajectory.energy[0] * (1 + 1e-4))


def test_cadence(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1, cadence=3)
    trajectory = run(smooth, TamingParams(nu=0.1), cfg)
    assert np.allclose(trajectory.times, [0, 0.03, 0.06, 0.09, 0.1])
    assert len(trajectory.states) == 5


def test_state_cadence_zero_keeps_no_states(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1, state_cadence=0)
    trajectory = run(smooth, TamingParams(nu=0.1), cfg)
    assert trajectory.states == ()
    assert trajectory.times.size == 11


def test_snapshots(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1, snapshots=[0.0, 0.05], cadence=5)
    trajectory = run(smooth, TamingParams(nu=0.1), cfg)
    assert set(trajectory.snapshots) == {0.0, 0.05}
    assert trajectory.snapshots[0.0] == smooth
    assert trajectory.snapshots[0.05] == trajectory.states[1]


def test_cfl_limited_steps_reach_the_horizon(smooth):
    u0 = (5.0 / norm(smooth, "sup")) * smooth
    cfg = SolverConfig(dt=0.1, T=0.3, cfl=0.1)
    trajectory = run(u0, TamingParams(nu=0.1, N=100), cfg)
    assert trajectory.horizon == pytest.approx(0.3)
    assert trajectory.meta["steps"] > 3


def test_csv(smooth):
    cfg = SolverConfig(dt=0.01, T=0.02, lq_exponents=[4])
    csv = run(smooth, TamingParams(nu=0.1), cfg).to_csv()
    header, *rows = csv.splitlines()
    assert header.split(",") == [*CSV_COLUMNS, "lq_4"]
    assert len(rows) == 3
    assert rows[0].split(",")[0] == "0.0"


def test_write_csv(tmp_path, smooth):
    trajectory = run(smooth, TamingParams(nu=0.1), SolverConfig(dt=0.1, T=0.1))
    path = tmp_path / "nested" / "trajectory.csv"
    trajectory.write_csv(path)
    assert path.read_text() == trajectory.to_csv()


def test_nonfinite_start(torus):
    coefficients = np.full(torus.coefficient_shape, np.nan, dtype=complex)
    u0 = SpectralField(basis=torus, coefficients=coefficients)
    with pytest.raises(BlowUp) as caught:
        run(u0, TamingParams(nu=0.1), SolverConfig(dt=0.1, T=1))
    assert caught.value.time == 0


def test_etd_step_needs_a_positive_step(smooth):
    with pytest.raises(DomainError):
        etd_step(smooth, TamingParams(nu=0.1), 0)


def test_etd_orders(torus):
    # halving dt shrinks the ETD2 error about four times, ETD1 about twice
    p = TamingParams(nu=0.05)
    u0 = taylor_green(torus)
    reference = run(u0, p, SolverConfig(dt=1e-4, T=0.2)).final

    def error(scheme, dt):
        final = run(u0, p, SolverConfig(dt=dt, T=0.2, mode=scheme)).final
        return norm(final - reference, "H1")

    assert 3 < error("ETD2", 0.02) / error("ETD2", 0.01) < 5
    assert 1.6 < error("ETD1", 0.02) / error("ETD1", 0.01) < 2.4


def test_run_many_keeps_order(torus, rng):
    starts = [random_field(torus, rng, h1=h1) for h1 in (0.5, 1.0, 1.5)]
    p, cfg = TamingParams(nu=0.1), SolverConfig(dt=0.01, T=0.05)
    serial = run_many(starts, p, cfg)
    parallel = run_many(starts, p, cfg, jobs=3)
    assert [each.to_csv() for each in serial] == [
        each.to_csv() for each in parallel
    ]


def test_picard_matches_etd2(smooth):
    p = TamingParams(nu=0.1)
    etd = run(smooth, p, SolverConfig(dt=1e-3, T=0.05))
    picard = run(
        smooth,
        p,
        SolverConfig(dt=1e-3, T=0.05, mode="PICARD", picard_tol=1e-12),
    )
    assert norm(picard.final - etd.final, "H1") <= 1e-9
    assert picard.meta["iterations"] >= 2


def test_picard_windows(smooth):
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(
        dt=1e-3,
        T=0.05,
        mode="PICARD",
        picard_window=0.02,
        picard_tol=1e-12,
    )
    picard = run(smooth, p, cfg)
    assert [each["t0"] for each in picard.meta["picard"]] == pytest.approx(
        [0, 0.02, 0.04],
    )
    etd = run(smooth, p, SolverConfig(dt=1e-3, T=0.05))
    assert norm(picard.final - etd.final, "H1") <= 1e-9


def test_picard_gives_up(smooth):
    cfg = SolverConfig(dt=1e-3, T=0.05, mode="PICARD", picard_max_iter=1)
    with pytest.raises(NonConvergence):
        run(smooth, TamingParams(nu=0.1), cfg)


def test_second_picard_iterate_is_heat_flow(smooth):
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(dt=1e-2, T=0.1)
    states = picard_pass(smooth, p, cfg)
    assert len(states) == 11
    expected = apply_semigroup(p.nu * cfg.T, smooth)
    assert norm(states[-1] - expected, "L2") <= 1e-12 * norm(smooth, "L2")


def test_picard_pass_with_a_frozen_iterate(torus):
    u0 = single_mode(torus, (1, 1, 0))
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(dt=1e-2, T=0.1)
    second = picard_pass(u0, p, cfg)
    third = picard_pass(u0, p, cfg, frozen=second)
    assert len(third) == len(second)


def test_picard_pass_frozen_length(smooth):
    cfg = SolverConfig(dt=1e-2, T=0.1)
    with pytest.raises(StructuralError):
        picard_pass(smooth, TamingParams(nu=0.1), cfg, frozen=[smooth])


def test_trajectory_from_states_needs_one_state_per_time(smooth):
    with pytest.raises(StructuralError):
        Trajectory.from_states([0, 1], [smooth], TamingParams(nu=0.1))


def test_trajectory_times_increase(smooth):
    with pytest.raises(StructuralError):
        Trajectory.from_states(
            [0, 0],
            [smooth, smooth],
            TamingParams(nu=0.1),
        )


def test_phi_functions_match_their_series_around_the_cutoff():
    moduli = SERIES_RADIUS * np.array([0.25, 0.5, 0.999, 1.001, 2.0, 8.0])
    angles = np.exp(1j * np.linspace(0, np.pi, 5))
    z = np.outer(moduli, angles).ravel()
    terms = [z**k for k in range(12)]
    factorials = np.cumprod([1.0, *range(1, 14)])
    series1 = sum(t / factorials[k + 1] for k, t in enumerate(terms))
    series2 = sum(t / factorials[k + 2] for k, t in enumerate(terms))
    assert np.allclose(phi1(z), series1, rtol=1e-11, atol=0)
    assert np.allclose(phi2(z), series2, rtol=1e-10, atol=0)


def test_etd1_local_error_is_second_order(torus):
    p = TamingParams(nu=0.05, N=4)
    u0 = taylor_green(torus)

    def local_error(dt):
        exact = reference_integrate(u0, p, T=dt, rtol=1e-12).final
        return norm(etd_step(u0, p, dt, "ETD1") - exact, "L2")

    assert 3 < local_error(0.02) / local_error(0.01) < 5


def test_integral_form_residual_shrinks_with_the_step(torus):
    # u(T) = u₀ + ∫(-νAu + B(u, u) - g u), with the integral by trapezoid
    p = TamingParams(nu=0.1, N=1)
    u0 = np.sqrt(2) * taylor_green(torus)

    def residual(dt):
        cfg = SolverConfig(dt=dt, T=0.04, cadence=1)
        trajectory = run(u0, p, cfg)
        rates = [tamed_rhs(u, p).total for u in trajectory.states]
        integral = SpectralField.zeros(torus)
        for left, right in zip(rates, rates[1:]):
            integral = integral + (dt / 2) * (left + right)
        assert trajectory.g_value[0] > 0
        return norm(trajectory.final - u0 - integral, "L2")

    coarse, fine = residual(0.004), residual(0.002)
    assert fine < coarse / 2.5


def test_frame_velocity_translates_the_solution(smooth):
    p = TamingParams(nu=0.1, N=1e6)
    cfg = SolverConfig(dt=1e-2, T=0.2)
    velocity = np.array([0.3, -0.7, 1.1])
    rest = run(smooth, p, cfg).final
    moving = run(smooth, evolve(p, mean_flow=velocity), cfg).final
    expected = translate(rest, velocity * cfg.T)
    assert norm(moving - expected, "L2") <= 1e-12 * norm(rest, "L2")


def test_taming_needs_a_torus(manufactured):
    u0 = eigenfield(manufactured, 1)
    p = TamingParams(nu=0.5, advection="none")
    cfg = SolverConfig(dt=0.1, T=0.2)
    with pytest.raises(ConfigError):
        run(u0, p, cfg)
    with pytest.raises(ConfigError):
        picard_pass(u0, p, cfg)


def test_picard_history_records_the_bounds(smooth):
    cfg = SolverConfig(dt=1e-3, T=0.02, mode="PICARD")
    picard = run(smooth, TamingParams(nu=0.1), cfg)
    (window,) = picard.meta["picard"]
    for entry in window["history"]:
        assert set(entry) == {
            "iterate",
            "increment",
            "energy_margin",
            "gradient_margin",
        }


def test_picard_iterates_must_keep_the_energy_bound(monkeypatch, smooth):
    linearized = _integrators._linearized_pass

    def inflated(*args, **kwargs):
        states, stages = linearized(*args, **kwargs)
        return [states[0], *(2 * each for each in states[1:])], stages

    monkeypatch.setattr(_integrators, "_linearized_pass", inflated)
    cfg = SolverConfig(dt=1e-3, T=0.01, mode="PICARD")
    with pytest.raises(BoundViolation) as caught:
        run(smooth, TamingParams(nu=0.1), cfg)
    assert caught.value.bound == "energy"
    assert caught.value.iterate == 2
    assert caught.value.margin < 0


def test_picard_iterates_must_keep_the_gradient_bound(monkeypatch, torus):
    # half the energy moved into a mode with four times the eigenvalue
    rough = single_mode(torus, (2, 0, 0), amplitude=np.sqrt(0.5))
    linearized = _integrators._linearized_pass

    def roughened(*args, **kwargs):
        states, stages = linearized(*args, **kwargs)
        return [states[0], *(rough for _ in states[1:])], stages

    monkeypatch.setattr(_integrators, "_linearized_pass", roughened)
    cfg = SolverConfig(dt=1e-3, T=2e-3, mode="PICARD")
    with pytest.raises(BoundViolation) as caught:
        run(single_mode(torus), TamingParams(nu=10, N=1), cfg)
    assert caught.value.bound == "gradient"


def test_untamed_picard_iterates_have_no_gradient_bound(monkeypatch, torus):
    rough = single_mode(torus, (2, 0, 0), amplitude=np.sqrt(0.5))
    linearized = _integrators._linearized_pass

    def roughened(*args, **kwargs):
        states, stages = linearized(*args, **kwargs)
        return [states[0], *(rough for _ in states[1:])], stages

    monkeypatch.setattr(_integrators, "_linearized_pass", roughened)
    cfg = SolverConfig(dt=1e-3, T=2e-3, mode="PICARD")
    p = TamingParams(nu=10, N=1, tamed=False)
    trajectory = run(single_mode(torus), p, cfg)
    assert trajectory.final == rough
    assert trajectory.meta["iterations"] == 3


def test_picard_blows_up_past_the_threshold(smooth):
    u0 = (2e3 / norm(smooth, "sup")) * smooth
    cfg = SolverConfig(dt=1e-3, T=0.01, mode="PICARD")
    with pytest.raises(BlowUp) as caught:
        run(u0, TamingParams(nu=0.1, N=1), cfg)
    assert "exceeds" in caught.value.reason
