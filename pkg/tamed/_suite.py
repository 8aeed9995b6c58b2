"""
The acceptance suite run by ``tamed verify``.

Every case is small enough to run on a laptop in a few minutes, and each
produces one or more `CheckRecord`\\ s. A case which raises is recorded as a
failure under its own name rather than aborting the rest of the suite.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Any

from attrs import evolve, frozen
import numpy as np
import structlog

from tamed._attractor import (
    EnsembleSpec,
    absorbing_record,
    first_eigenvalue,
    tail_record,
)
from tamed._diagnostics import (
    check_decay,
    check_energy,
    check_gradient_bound,
    check_symmetries,
    check_valve,
    continuous_dependence_sweep,
    convergence_order,
    corrupt_energy,
    kappa_sweep,
    lq_moment_report,
    refinement_runs,
    tame_time_measure,
    tame_time_sweep,
    threshold_fixed_point,
    vorticity_residual,
)
from tamed._initial import random_field, single_mode, taylor_green
from tamed._integrators import SolverConfig, picard_pass, run
from tamed._oracle import dense_B, reference_integrate
from tamed._report import CheckRecord, DiagnosticsReport, Status
from tamed._rhs import TamingParams, bilinear_B
from tamed._spectral import (
    SpectralField,
    TorusBasis,
    apply_semigroup,
    norm,
)
from tamed.exceptions import ConfigError, TamedError

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable

    from tamed._integrators import Trajectory
    from tamed._spectral import NormKind

log = structlog.stdlib.get_logger()

#: Largest allowed L² gap between the solver and the reference path.
ORACLE_TOLERANCE = 1e-6

#: Largest allowed H¹ gap between Picard and direct ETD2 runs.
PICARD_TOLERANCE = 1e-6


@frozen
class SuiteSettings:
    """
    What varies between verification runs.
    """

    seed: int = 0
    jobs: int = 1
    inject_fault: bool = False

    def rng(self, salt: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, salt]))

    def describe(self) -> dict[str, Any]:
        return dict(seed=self.seed, inject_fault=self.inject_fault)


CASES: dict[str, Callable[[SuiteSettings], list[CheckRecord]]] = {}


def _case(name: str):
    def register(fn: Callable[[SuiteSettings], list[CheckRecord]]):
        CASES[name] = fn
        return fn

    return register


def _renamed(record: CheckRecord, name: str) -> CheckRecord:
    return evolve(record, name=name)


def _subcritical(
    basis: TorusBasis,
    settings: SuiteSettings,
    salt: int,
    h1: float = 1.0,
) -> SpectralField:
    return random_field(basis, settings.rng(salt), h1=h1)


def _supercritical(
    basis: TorusBasis,
    settings: SuiteSettings,
    salt: int,
    sup_sq: float,
) -> SpectralField:
    """
    A random field rescaled so that ``‖u‖²_∞`` is exactly ``sup_sq``.
    """
    u = random_field(basis, settings.rng(salt))
    return u * float(np.sqrt(sup_sq) / norm(u, "sup"))


def _gap(
    first: Iterable[SpectralField],
    second: Iterable[SpectralField],
    kind: NormKind,
) -> float:
    pairs = zip(first, second, strict=True)
    return max(norm(u - v, kind) for u, v in pairs)


@_case("oracle")
def _oracle(settings: SuiteSettings) -> list[CheckRecord]:
    """
    The pseudospectral solver against brute-force sums and RK45.
    """
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _subcritical(basis, settings, salt=1)

    scale = max(norm(bilinear_B(u0, u0), "L2"), 1.0)
    advection_gap = norm(bilinear_B(u0, u0) - dense_B(u0, u0), "L2")
    advection = CheckRecord(
        name="oracle-advection",
        status=Status.judge(1e-12 * scale - advection_gap),
        margin=1e-12 * scale - advection_gap,
        details=dict(gap=advection_gap),
    )

    traj = run(u0, p, SolverConfig(dt=1e-3, T=1.0, cadence=100))
    reference = reference_integrate(u0, p, T=1.0, rtol=1e-10, dt=0.1)
    gap = _gap(traj.states, reference.states, "L2")
    return [
        advection,
        CheckRecord(
            name="oracle",
            status=Status.judge(ORACLE_TOLERANCE - gap),
            margin=ORACLE_TOLERANCE - gap,
            details=dict(gap=gap, evaluations=reference.meta["evaluations"]),
        ),
    ]


@_case("picard")
def _picard(settings: SuiteSettings) -> list[CheckRecord]:
    """
    Picard iteration converges to the ETD2 solution, starting from the heat
    flow.
    """
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _subcritical(basis, settings, salt=2)
    direct_cfg = SolverConfig(dt=1e-3, T=0.1, cadence=10)
    picard_cfg = evolve(direct_cfg, mode="PICARD", picard_window=0.05)

    direct = run(u0, p, direct_cfg)
    solved = run(u0, p, picard_cfg)
    gap = _gap(direct.states, solved.states, "H1")
    iterations = solved.meta["iterations"]

    heat = picard_pass(u0, p, direct_cfg)
    heat_gap = max(
        norm(u - apply_semigroup(p.nu * m * direct_cfg.dt, u0), "L2")
        for m, u in enumerate(heat)
    ) / norm(u0, "L2")
    return [
        CheckRecord(
            name="picard",
            status=Status.judge(PICARD_TOLERANCE - gap),
            margin=PICARD_TOLERANCE - gap,
            details=dict(gap=gap, iterations=iterations),
        ),
        CheckRecord(
            name="picard-iterations",
            status=Status.judge(picard_cfg.picard_max_iter - iterations),
            margin=float(picard_cfg.picard_max_iter - iterations),
            details=dict(iterations=iterations),
        ),
        CheckRecord(
            name="picard-heat-flow",
            status=Status.judge(1e-10 - heat_gap),
            margin=1e-10 - heat_gap,
            details=dict(relative_gap=heat_gap),
        ),
    ]


def _presets(
    basis: TorusBasis,
    p: TamingParams,
    settings: SuiteSettings,
) -> dict[str, SpectralField]:
    return {
        "zero": SpectralField.zeros(basis),
        "single-mode": single_mode(basis, (1, 1, 0)),
        "taylor-green": taylor_green(basis),
        "random": _supercritical(basis, settings, salt=3, sup_sq=4 * p.N),
    }


@_case("energy")
def _energy(settings: SuiteSettings) -> list[CheckRecord]:
    """
    Energy and enstrophy bounds on every preset, and a corrupted run which
    must be caught.
    """
    basis = TorusBasis(n=16)
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(dt=5e-3, T=1.0, cadence=2, state_cadence=0)
    records: list[CheckRecord] = []
    control: Trajectory | None = None
    for preset, u0 in _presets(basis, p, settings).items():
        traj = run(u0, p, cfg)
        if settings.inject_fault:
            traj = corrupt_energy(traj)
        if preset == "taylor-green":
            control = traj
        records.append(_renamed(check_energy(traj), f"energy-{preset}"))
        records.append(
            _renamed(check_gradient_bound(traj), f"gradient-{preset}"),
        )

    assert control is not None
    caught = check_energy(corrupt_energy(control))
    failed = caught.status is Status.FAIL
    records.append(
        CheckRecord(
            name="energy-negative-control",
            status=Status.PASS if failed else Status.FAIL,
            margin=caught.margin,
            details=dict(corrupted_status=caught.status.value),
        ),
    )
    return records


@_case("taming")
def _taming(settings: SuiteSettings) -> list[CheckRecord]:
    """
    The valve stays shut far above the data, opens below it, and the time
    spent tamed obeys Chebyshev's inequality.
    """
    basis = TorusBasis(n=16)
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=1, state_cadence=0)

    valve = check_valve(taylor_green(basis), p, evolve(cfg, state_cadence=20))
    u0 = _supercritical(basis, settings, salt=4, sup_sq=4 * p.N)
    traj = run(u0, p, cfg)
    opened = float(traj.g_value[0])
    return [
        valve,
        CheckRecord(
            name="valve-open",
            status=Status.PASS if opened > 0 else Status.FAIL,
            margin=opened,
            details=dict(g_value=opened, tame_arg=float(traj.tame_arg[0])),
        ),
        tame_time_measure(traj),
        tame_time_sweep(traj),
    ]


@_case("symmetries")
def _symmetries(settings: SuiteSettings) -> list[CheckRecord]:
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1, N=4.0)
    u0 = _supercritical(basis, settings, salt=5, sup_sq=2.0)
    cfg = SolverConfig(dt=1e-3, T=0.1, cadence=10, state_cadence=0)
    return check_symmetries(
        u0,
        p,
        cfg,
        shift=(0.05, 0.1, 0.15),
        tolerances=(1e-8, 1e-10, 1e-6),
    )


@_case("decay")
def _decay(settings: SuiteSettings) -> list[CheckRecord]:
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.5)
    u0 = _subcritical(basis, settings, salt=6)
    horizon = 50 / (p.nu * float(basis.eigenvalues[0]))
    cfg = SolverConfig(dt=0.05, T=horizon, cadence=20, state_cadence=0)
    return [check_decay(run(u0, p, cfg))]


@_case("dependence")
def _dependence(settings: SuiteSettings) -> list[CheckRecord]:
    """
    Differences of nearby solutions scale quadratically, whether the
    initial state or the threshold is perturbed.
    """
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    cfg = SolverConfig(dt=5e-3, T=0.5, cadence=10)
    return [
        continuous_dependence_sweep(
            _subcritical(basis, settings, salt=7),
            p,
            cfg,
            "initial",
        ),
        continuous_dependence_sweep(
            _supercritical(basis, settings, salt=8, sup_sq=4 * p.N),
            p,
            cfg,
            "threshold",
            sizes=(0.5, 0.25, 0.125),
        ),
    ]


@_case("attractor")
def _attractor(settings: SuiteSettings) -> list[CheckRecord]:
    """
    A bounded ensemble is absorbed, and its high-mode tails shrink.
    """
    basis = TorusBasis(n=16)
    p = TamingParams(nu=0.5)
    ensemble = EnsembleSpec(radius=5.0, count=8, seed=settings.seed)
    cfg = SolverConfig(dt=0.02, T=16.0, cadence=5, snapshots=(0.0,))
    trajectories = ensemble.run(basis, p, cfg, jobs=settings.jobs)
    return [
        absorbing_record(trajectories, first_eigenvalue(basis)),
        tail_record(trajectories, ensemble.n_list, t=ensemble.times[0]),
    ]


@_case("convergence")
def _convergence(settings: SuiteSettings) -> list[CheckRecord]:
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _subcritical(basis, settings, salt=9, h1=2.0)
    cfg = SolverConfig(dt=0.02, T=0.5)
    return [convergence_order(refinement_runs(u0, p, cfg))]


@_case("vorticity")
def _vorticity(settings: SuiteSettings) -> list[CheckRecord]:
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _subcritical(basis, settings, salt=10)
    cfg = SolverConfig(dt=1e-3, T=0.02)
    refined = evolve(cfg, dt=cfg.dt / 2)
    return [vorticity_residual(run(u0, p, cfg), run(u0, p, refined))]


@_case("informational")
def _informational(settings: SuiteSettings) -> list[CheckRecord]:
    """
    Reported, never judged: Lq moment bounds and the threshold iteration.
    """
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _supercritical(basis, settings, salt=11, sup_sq=4 * p.N)
    cfg = SolverConfig(
        dt=5e-3,
        T=0.5,
        state_cadence=0,
        lq_exponents=(2.0, 4.0, 6.0),
    )
    traj = run(u0, p, cfg)
    return [
        *(lq_moment_report(traj, q) for q in traj.lq),
        threshold_fixed_point(u0, p, cfg),
    ]


@_case("kappa")
def _kappa(settings: SuiteSettings) -> list[CheckRecord]:
    """
    Reported, never judged: the smallest κ at which each Lq moment bound
    holds, and how fast it grows with q.
    """
    basis = TorusBasis(n=8)
    p = TamingParams(nu=0.1)
    u0 = _supercritical(basis, settings, salt=12, sup_sq=4 * p.N)
    cfg = SolverConfig(dt=2e-3, T=0.2, state_cadence=0)
    return [kappa_sweep(u0, p, cfg, qs=(2, 4, 6), hi=8.0, iterations=3)]

def _guarded(
    name: str,
    settings: SuiteSettings,
) -> list[CheckRecord]:
    log.info("verifying", case=name)
    try:
        return CASES[name](settings)
    except TamedError as error:
        log.error("case failed", case=name, error=str(error))
        return [
            CheckRecord(
                name=name,
                status=Status.FAIL,
                details=dict(error=str(error)),
            ),
        ]


def verify(
    settings: SuiteSettings | None = None,
    cases: Iterable[str] | None = None,
) -> DiagnosticsReport:
    """
    Run the selected cases (all of them by default) into one report.
    """
    settings = SuiteSettings() if settings is None else settings
    names = list(CASES) if cases is None else list(cases)
    unknown = sorted(set(names) - CASES.keys())
    if unknown:
        raise ConfigError(
            f"unknown verification case(s) {', '.join(unknown)}; "
            f"known cases are {', '.join(CASES)}",
            key="checks",
        )
    with ThreadPoolExecutor(max_workers=max(1, settings.jobs)) as pool:
        results = list(pool.map(lambda name: _guarded(name, settings), names))
    records = [record for each in results for record in each]
    return DiagnosticsReport(
        records=records,
        metadata=dict(suite=names, **settings.describe()),
    )
