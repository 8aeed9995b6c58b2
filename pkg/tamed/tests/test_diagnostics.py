from attrs import evolve
from hypothesis import given
from hypothesis.strategies import floats, lists
import numpy as np
import pytest

from tamed._diagnostics import (
    check_continuous_dependence,
    check_decay,
    check_energy,
    check_gradient_bound,
    check_symmetries,
    check_valve,
    continuous_dependence_sweep,
    convergence_order,
    corrupt_energy,
    difference_functional,
    kappa_sweep,
    lq_moment_report,
    refinement_runs,
    tame_measure,
    tame_time_measure,
    tame_time_sweep,
    threshold_fixed_point,
    trajectory_checks,
    vorticity_residual,
)
from tamed._initial import random_field, taylor_green
from tamed._integrators import SolverConfig, run
from tamed._report import Status
from tamed._rhs import TamingParams
from tamed._spectral import SpectralField, eigenfield, norm
from tamed.exceptions import ConfigError, DomainError

TAYLOR_GREEN = TamingParams(nu=0.1)
TAMED = TamingParams(nu=0.1, kappa=1, N=4)


@pytest.fixture(scope="module")
def taylor_green_run(torus):
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=10, lq_exponents=[2, 4])
    return run(taylor_green(torus), TAYLOR_GREEN, cfg)


@pytest.fixture
def supercritical(smooth):
    """
    A start whose ‖u‖²_∞ is four times the threshold of ``TAMED``.
    """
    return (4.0 / norm(smooth, "sup")) * smooth


def test_energy_inequality_holds(taylor_green_run):
    record = check_energy(taylor_green_run)
    assert record.status is Status.PASS
    assert record.details["initial_energy"] > 0


def test_energy_inequality_catches_corruption(taylor_green_run):
    record = check_energy(corrupt_energy(taylor_green_run))
    assert record.status is Status.FAIL
    assert record.margin < 0


def test_energy_of_the_zero_flow(torus):
    traj = run(SpectralField.zeros(torus), TAMED, SolverConfig(dt=0.1, T=1))
    record = check_energy(traj)
    assert record.status is Status.PASS
    assert record.margin == 0


def test_energy_inequality_with_taming(supercritical):
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=10)
    assert check_energy(run(supercritical, TAMED, cfg)).status is Status.PASS


def test_gradient_bound_holds(supercritical):
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=10)
    record = check_gradient_bound(run(supercritical, TAMED, cfg))
    assert record.status is Status.PASS
    assert record.margin > 0


def test_gradient_bound_is_not_claimed_untamed(smooth):
    p = TamingParams(nu=0.1, tamed=False)
    traj = run(smooth, p, SolverConfig(dt=0.01, T=0.05))
    assert check_gradient_bound(traj).status is Status.SKIPPED


def test_decay_of_a_stokes_mode(manufactured):
    p = TamingParams(nu=0.5, advection="none", tamed=False)
    cfg = SolverConfig(dt=0.05, T=10, cadence=10)
    record = check_decay(run(eigenfield(manufactured, 0), p, cfg))
    assert record.status is Status.PASS
    assert record.details["exponential"]
    assert record.details["exponential_rate"] == pytest.approx(0.5)


def test_decay_needs_enough_points(smooth):
    traj = run(smooth, TAMED, SolverConfig(dt=0.05, T=0.1))
    assert check_decay(traj).status is Status.INCONCLUSIVE


def test_decay_of_nothing(torus):
    traj = run(SpectralField.zeros(torus), TAMED, SolverConfig(dt=0.1, T=1))
    assert check_decay(traj).status is Status.PASS


@pytest.mark.parametrize("tail", [0, 1.5])
def test_decay_tail_fraction(taylor_green_run, tail):
    with pytest.raises(DomainError):
        check_decay(taylor_green_run, tail=tail)


def test_tame_measure():
    measure, bound = tame_measure([0, 1, 2, 3], [5, 0, 5, 0], N=4)
    assert measure == 2
    assert bound == pytest.approx(2.5)


@given(
    lists(
        floats(min_value=0, max_value=1e6, allow_subnormal=False),
        min_size=2,
        max_size=50,
    ),
    floats(min_value=1, max_value=1e3),
)
def test_tame_measure_never_exceeds_its_bound(tame_arg, N):
    times = np.arange(len(tame_arg)) * 0.1
    measure, bound = tame_measure(times, tame_arg, N)
    assert measure <= bound


def test_tame_time_record(supercritical):
    traj = run(supercritical, TAMED, SolverConfig(dt=5e-3, T=0.5))
    record = tame_time_measure(traj)
    assert record.status is Status.PASS
    assert record.details["measure"] > 0


def test_tame_time_sweep_is_monotone(supercritical):
    traj = run(supercritical, TAMED, SolverConfig(dt=5e-3, T=0.5))
    record = tame_time_sweep(traj, shrink=None)
    assert record.status is Status.PASS
    measures = record.details["measures"]
    assert list(measures) == sorted(measures, reverse=True)


def test_difference_of_a_run_with_itself(taylor_green_run):
    assert difference_functional(taylor_green_run, taylor_green_run) == 0


def test_identical_runs_depend_continuously(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1, state_cadence=0)
    record = check_continuous_dependence(smooth, smooth, 4, 4, TAMED, cfg)
    assert record.status is Status.PASS
    assert record.details["identical"]


def test_perturbed_runs_report_their_ratio(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1)
    other = smooth + 1e-3 * eigenfield(smooth.basis, 0)
    record = check_continuous_dependence(smooth, other, 4, 5, TAMED, cfg)
    assert record.status is Status.INFO
    assert record.details["ratio"] > 0


def test_quadratic_dependence_on_the_initial_state(smooth):
    cfg = SolverConfig(dt=5e-3, T=0.2, cadence=10)
    record = continuous_dependence_sweep(smooth, TAMED, cfg)
    assert record.status is Status.PASS
    assert record.details["slope"] == pytest.approx(2, abs=0.2)


def test_dependence_sweep_needs_two_sizes(smooth):
    cfg = SolverConfig(dt=0.01, T=0.1)
    with pytest.raises(DomainError):
        continuous_dependence_sweep(smooth, TAMED, cfg, sizes=[1e-2])


def test_symmetries(torus):
    rng = np.random.default_rng(0)
    u0 = random_field(torus, rng, h1=1.0)
    u0 = (np.sqrt(2) / norm(u0, "sup")) * u0
    records = check_symmetries(
        u0,
        TamingParams(nu=0.1, kappa=1, N=4),
        SolverConfig(dt=1e-3, T=0.1),
        shift=(0.05, 0.1, 0.15),
    )
    assert [each.name for each in records] == [
        "symmetry-galilean",
        "symmetry-rotation",
        "symmetry-scaling",
    ]
    assert all(each.status is Status.PASS for each in records)
    galilean, _, _ = records
    assert galilean.details["error"] <= 1e-8


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(scale=1),
        dict(rotation=[[1, 1, 0], [0, 1, 0], [0, 0, 1]]),
    ],
)
def test_invalid_symmetry_checks(smooth, kwargs):
    cfg = SolverConfig(dt=1e-3, T=0.01)
    with pytest.raises(ConfigError):
        check_symmetries(smooth, TAMED, cfg, **kwargs)


def test_scaling_needs_room_below_the_threshold(smooth):
    p = TamingParams(nu=0.1, N=2)
    with pytest.raises(ConfigError):
        check_symmetries(smooth, p, SolverConfig(dt=1e-3, T=0.01))


def test_symmetries_need_a_torus(manufactured):
    p = TamingParams(nu=0.1, N=4, advection="none")
    u0 = eigenfield(manufactured, 0)
    with pytest.raises(ConfigError):
        check_symmetries(u0, p, SolverConfig(dt=1e-3, T=0.01))


def test_lq_moments_are_informational(taylor_green_run):
    record = lq_moment_report(taylor_green_run, 4)
    assert record.status is Status.INFO
    assert record.name == "lq-moments-4"
    assert record.details["gronwall_margin"] >= record.details[
        "integral_margin"
    ] - 1e-9


def test_lq_moments_not_recorded(taylor_green_run):
    assert lq_moment_report(taylor_green_run, 6).status is Status.SKIPPED


def test_kappa_sweep(smooth):
    cfg = SolverConfig(dt=5e-3, T=0.05, cadence=5)
    record = kappa_sweep(smooth, TAMED, cfg, qs=(2, 4), iterations=2)
    assert record.status is Status.INFO
    assert set(record.details["thresholds"]) == {"2", "4"}


def test_trajectory_checks(taylor_green_run):
    records = trajectory_checks(taylor_green_run, ["energy", "lq-moments"])
    assert [each.name for each in records] == [
        "energy",
        "lq-moments-2",
        "lq-moments-4",
    ]


def test_trajectory_checks_without_lq_norms(smooth):
    traj = run(smooth, TAMED, SolverConfig(dt=0.01, T=0.05))
    (record,) = trajectory_checks(traj, ["lq-moments"])
    assert record.status is Status.SKIPPED


def test_threshold_fixed_point(supercritical):
    cfg = SolverConfig(dt=5e-3, T=0.2, cadence=10)
    record = threshold_fixed_point(supercritical, TAMED, cfg, iterations=3)
    assert record.status is Status.INFO
    assert record.details["thresholds"][0] == TAMED.N


def test_convergence_order_of_etd2(torus):
    u0 = taylor_green(torus)
    cfg = SolverConfig(dt=0.02, T=0.5)
    record = convergence_order(refinement_runs(u0, TAYLOR_GREEN, cfg))
    assert record.status is Status.PASS
    assert record.details["order"] == pytest.approx(2, abs=0.3)


def test_convergence_order_of_etd1(torus):
    u0 = taylor_green(torus)
    cfg = SolverConfig(dt=0.02, T=0.5, mode="ETD1")
    record = convergence_order(refinement_runs(u0, TAYLOR_GREEN, cfg))
    assert record.status is Status.PASS
    assert record.details["nominal"] == 1


def test_convergence_of_an_exact_integration(manufactured):
    p = TamingParams(nu=0.5, advection="none", tamed=False)
    cfg = SolverConfig(dt=0.1, T=1)
    runs = refinement_runs(eigenfield(manufactured, 2), p, cfg)
    record = convergence_order(runs)
    assert record.status is Status.PASS
    assert record.details["exact"]


def test_convergence_order_needs_three_runs(taylor_green_run):
    with pytest.raises(DomainError):
        convergence_order([taylor_green_run, taylor_green_run])


def test_valve(supercritical):
    record = check_valve(supercritical, TAMED, SolverConfig(dt=0.01, T=0.1))
    assert record.status is Status.PASS


def test_vorticity_residual_alone(smooth):
    traj = run(smooth, TAMED, SolverConfig(dt=1e-3, T=0.02))
    record = vorticity_residual(traj)
    assert record.status is Status.INFO
    assert record.details["residual"] > 0


def test_vorticity_residual_shrinks_with_the_step(smooth):
    cfg = SolverConfig(dt=1e-3, T=0.02)
    coarse = run(smooth, TAMED, cfg)
    fine = run(smooth, TAMED, evolve(cfg, dt=5e-4))
    record = vorticity_residual(coarse, fine)
    assert record.status is Status.PASS
    assert record.details["order"] >= 1.5


def test_vorticity_residual_needs_every_step(smooth):
    traj = run(smooth, TAMED, SolverConfig(dt=1e-3, T=0.02, cadence=5))
    assert vorticity_residual(traj).status is Status.INCONCLUSIVE
