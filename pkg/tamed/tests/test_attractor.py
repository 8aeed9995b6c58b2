import numpy as np
import pytest

from tamed._attractor import (
    EnsembleSpec,
    absorbing_record,
    attractor_sample,
    check_absorbing,
    check_tail_compactness,
    first_eigenvalue,
    sample_attractor,
    tail_record,
    tail_sizes,
)
from tamed._integrators import SolverConfig
from tamed._report import Status
from tamed._rhs import TamingParams
from tamed._spectral import norm
from tamed.exceptions import ConfigError, DomainError

STOKES = TamingParams(nu=0.5, advection="none", tamed=False)


@pytest.fixture
def ensemble():
    return EnsembleSpec(radius=5, count=4, seed=7, n_list=(1, 2, 4))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(radius=0),
        dict(count=0),
        dict(times=()),
        dict(times=(-1,)),
        dict(n_list=(4, 2)),
        dict(n_list=(2, 2, 4)),
    ],
)
def test_invalid_ensemble(kwargs):
    with pytest.raises(DomainError):
        EnsembleSpec(**kwargs)


def test_members_have_the_ensemble_radius(torus, ensemble):
    members = ensemble.members(torus)
    assert len(members) == 4
    for member in members:
        assert norm(member, "H1") == pytest.approx(5)


def test_members_are_reproducible(torus, ensemble):
    assert ensemble.members(torus) == ensemble.members(torus)


def test_members_differ(torus, ensemble):
    first, second, *_ = ensemble.members(torus)
    assert first != second


def test_observation_past_the_horizon(manufactured, ensemble):
    cfg = SolverConfig(dt=0.1, T=0.5)
    with pytest.raises(ConfigError):
        ensemble.run(manufactured, STOKES, cfg)


def test_stokes_ensembles_are_absorbed(manufactured, ensemble):
    cfg = SolverConfig(dt=0.1, T=20, cadence=5)
    record = check_absorbing(ensemble, manufactured, STOKES, cfg)
    assert record.status is Status.PASS
    assert all(entry is not None for entry in record.details["entry_times"])
    assert record.details["re_exits"] == 0


def test_short_runs_are_not_absorbed(manufactured, ensemble):
    cfg = SolverConfig(dt=0.1, T=1)
    record = check_absorbing(ensemble, manufactured, STOKES, cfg)
    assert record.status is Status.INCONCLUSIVE


def test_energy_growth_fails_absorption(manufactured, ensemble):
    trajectories = ensemble.run(
        manufactured,
        STOKES,
        SolverConfig(dt=0.1, T=1),
    )
    # an eigenvalue larger than the smallest one claims a faster decay
    record = absorbing_record(trajectories, lam1=10.0)
    assert record.status is Status.FAIL
    assert record.margin < 0


def test_first_eigenvalue(torus, manufactured):
    assert first_eigenvalue(torus) == 1
    assert first_eigenvalue(manufactured) == 1


def test_tail_sizes_are_nonincreasing(torus, ensemble):
    sizes = tail_sizes(ensemble.members(torus), (1, 10, 50, 100))
    assert np.all(np.diff(sizes) <= 0)
    assert sizes[0] <= 5 * (1 + 1e-12)


def test_tail_sizes_past_the_resolution(manufactured, ensemble):
    with pytest.raises(ConfigError):
        tail_sizes(ensemble.members(manufactured), (1, 6))


def test_tails_contract(manufactured, ensemble):
    cfg = SolverConfig(dt=0.1, T=5)
    record = check_tail_compactness(
        ensemble,
        manufactured,
        STOKES,
        cfg,
        t=5.0,
    )
    assert record.status is Status.PASS
    assert record.details["ratio"] < 0.1
    assert record.details["linear_envelope_margin"] >= 0


def test_tails_need_two_mode_counts(manufactured, ensemble):
    trajectories = ensemble.run(manufactured, STOKES, SolverConfig(0.1, 1))
    with pytest.raises(ConfigError):
        tail_record(trajectories, (2,), t=1.0)


def test_tails_at_time_zero_are_skipped(manufactured, ensemble):
    trajectories = ensemble.run(manufactured, STOKES, SolverConfig(0.1, 1))
    record = tail_record(trajectories, (1, 2), t=0.0)
    assert record.status is Status.SKIPPED


def test_attractor_sample(manufactured):
    ensemble = EnsembleSpec(count=3, times=(1.0, 2.0, 3.0))
    cfg = SolverConfig(dt=0.1, T=3)
    sample = sample_attractor(
        ensemble,
        manufactured,
        STOKES,
        cfg,
        burn_in=2.0,
        coordinates=20,
    )
    assert len(sample) == 6
    assert list(sample.members) == [0, 0, 1, 1, 2, 2]
    assert list(sample.times) == [2.0, 3.0] * 3
    assert sample.coordinates.shape == (6, manufactured.mode_count)


def test_attractor_sample_csv(manufactured):
    ensemble = EnsembleSpec(count=2, times=(1.0,))
    trajectories = ensemble.run(manufactured, STOKES, SolverConfig(0.1, 1))
    sample = attractor_sample(trajectories, [1.0], STOKES, 0, coordinates=2)
    header, *rows = sample.to_csv().splitlines()
    assert header == "member,time,l2,h1,h2_proxy,sup,re_0,im_0,re_1,im_1"
    assert [row.split(",")[0] for row in rows] == ["0", "1"]


def test_attractor_sample_within(manufactured):
    ensemble = EnsembleSpec(radius=1, count=2, times=(20.0,))
    cfg = SolverConfig(dt=0.1, T=20)
    sample = sample_attractor(ensemble, manufactured, STOKES, cfg, 10)
    assert sample.within(1e-3)
    assert not sample.within(0)


def test_burn_in_past_the_horizon(manufactured):
    ensemble = EnsembleSpec(times=(1.0,))
    with pytest.raises(ConfigError):
        sample_attractor(
            ensemble,
            manufactured,
            STOKES,
            SolverConfig(0.1, 1),
            burn_in=1,
        )


def test_burn_in_past_every_observation(manufactured):
    ensemble = EnsembleSpec(times=(1.0,))
    with pytest.raises(ConfigError):
        sample_attractor(
            ensemble,
            manufactured,
            STOKES,
            SolverConfig(0.1, 3),
            burn_in=2,
        )
