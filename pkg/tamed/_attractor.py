"""
Absorbing sets and tail compactness over ensembles of trajectories.

Without forcing, the global attractor on the torus is just the rest state,
so what is checked here is the mechanism which produces an attractor: every
bounded set of initial data is absorbed into small balls of H¹, uniformly in
time, and the high-mode tails of an ensemble shrink uniformly.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any
import io

from attrs import evolve, field, frozen
from scipy.integrate import trapezoid
import numpy as np
import structlog

from tamed._core import LineFit, atomic_write, format_float, frozen_array
from tamed._initial import random_field
from tamed._integrators import Observation, run_many
from tamed._report import CheckRecord, Status
from tamed._spectral import galerkin_project, norm
from tamed.exceptions import ConfigError, DomainError

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from tamed._integrators import SolverConfig, Trajectory
    from tamed._rhs import TamingParams
    from tamed._spectral import SpectralField, StokesBasis

log = structlog.stdlib.get_logger()

#: Relative margin below ε after which a trajectory counts as absorbed.
ABSORPTION_MARGIN = 0.01


def _floats(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(each) for each in values)


def _ints(values: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(each) for each in values)


@frozen
class EnsembleSpec:
    """
    A reproducible bounded family of initial data, and when to look at it.

    Members are random fields with energy spectrum slope ``slope``, each
    rescaled to have H¹ norm exactly ``radius``.
    """

    radius: float = 5.0
    count: int = 8
    seed: int = 0
    slope: float = -4.0
    times: tuple[float, ...] = field(default=(1.0,), converter=_floats)
    n_list: tuple[int, ...] = field(default=(4, 8, 16, 32), converter=_ints)

    def __attrs_post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"ensemble radius {self.radius} is not positive")
        if self.count < 1:
            raise DomainError("an ensemble needs at least one member")
        if not self.times or any(t < 0 for t in self.times):
            raise DomainError("observation times must be nonnegative")
        if list(self.n_list) != sorted(set(self.n_list)):
            raise DomainError("tail mode counts must strictly increase")

    def members(self, basis: StokesBasis) -> list[SpectralField]:
        """
        The initial data, member ``i`` drawn from its own spawned stream.
        """
        streams = np.random.SeedSequence(self.seed).spawn(self.count)
        return [
            random_field(
                basis,
                np.random.default_rng(stream),
                slope=self.slope,
                h1=self.radius,
            )
            for stream in streams
        ]

    def run(
        self,
        basis: StokesBasis,
        p: TamingParams,
        cfg: SolverConfig,
        jobs: int = 1,
    ) -> list[Trajectory]:
        """
        Every member, with states kept at each observation time.
        """
        if max(self.times) > cfg.T:
            raise ConfigError(
                f"observation time {max(self.times)} is past the horizon",
            )
        snapshots = sorted({*cfg.snapshots, *self.times})
        cfg = evolve(cfg, snapshots=snapshots, state_cadence=0)
        return run_many(self.members(basis), p, cfg, jobs=jobs)

    def describe(self) -> dict[str, Any]:
        return dict(
            radius=self.radius,
            count=self.count,
            seed=self.seed,
            slope=self.slope,
            times=list(self.times),
            n_list=list(self.n_list),
        )


def first_eigenvalue(basis: StokesBasis) -> float:
    return float(basis.eigenvalues[0])


def absorbing_record(
    trajectories: Sequence[Trajectory],
    lam1: float,
    eps: float = 0.01,
    rtol: float = 1e-4,
) -> CheckRecord:
    """
    Poincaré decay of the energy, and absorption into the ε-ball of H¹.

    Asserts ``‖u(t)‖² ≤ ‖u₀‖² exp(-2νλ₁t)`` at every recorded time, that
    once a member is inside ``(1 - margin)·ε`` it never leaves the ε-ball,
    and that the fitted decay rate of ``‖∇u‖²`` after entry is at least
    ``νλ₁/2``. Members which never enter make the record inconclusive.
    """
    slack, violated = float("inf"), False
    entries: list[float | None] = []
    rates: list[float] = []
    exits = 0
    for traj in trajectories:
        nu, times, energy = traj.params.nu, traj.times, traj.energy
        envelope = energy[0] * np.exp(-2 * nu * lam1 * times)
        worst = float(np.min(envelope - energy))
        violated |= worst < -rtol * energy[0]
        slack = min(slack, worst)

        inside = np.flatnonzero(traj.h1 < eps * (1 - ABSORPTION_MARGIN))
        if not inside.size:
            entries.append(None)
            continue
        entry = int(inside[0])
        entries.append(float(times[entry]))
        if np.any(traj.h1[entry:] >= eps):
            exits += 1

        h1_sq = traj.h1**2
        tail = (times >= times[entry]) & (h1_sq > 0)
        if np.count_nonzero(tail) >= 3:
            fit = LineFit.through(times[tail], np.log(h1_sq[tail]))
            rates.append(-fit.slope / (nu * lam1 / 2))

    details: dict[str, Any] = dict(
        entry_times=entries,
        re_exits=exits,
        relative_rates=rates,
        eps=eps,
    )
    if violated or exits or any(rate < 1 for rate in rates):
        status = Status.FAIL
    elif any(entry is None for entry in entries):
        status = Status.INCONCLUSIVE
        details["reason"] = "not every member entered the ε-ball"
    else:
        status = Status.PASS
    return CheckRecord(
        name="absorbing",
        status=status,
        margin=slack,
        details=details,
    )


def check_absorbing(
    ensemble: EnsembleSpec,
    basis: StokesBasis,
    p: TamingParams,
    cfg: SolverConfig,
    eps: float = 0.01,
    jobs: int = 1,
) -> CheckRecord:
    trajectories = ensemble.run(basis, p, cfg, jobs=jobs)
    return absorbing_record(trajectories, first_eigenvalue(basis), eps)


def _tail(u: SpectralField, n: int) -> float:
    return norm(galerkin_project(n, u, complement=True), "H1")


def tail_sizes(
    states: Sequence[SpectralField],
    n_list: Sequence[int],
) -> NDArray[np.float64]:
    """
    ``s(n) = max ‖Π_n^c u‖_{H¹}`` over the given states, for each ``n``.
    """
    total = states[0].basis.mode_count
    if any(n > total for n in n_list):
        raise ConfigError(
            f"tail mode counts {list(n_list)} exceed the {total} modes "
            "available at this resolution",
        )
    return frozen_array([max(_tail(u, n) for u in states) for n in n_list])


def tail_record(
    trajectories: Sequence[Trajectory],
    n_list: Sequence[int],
    t: float,
    contraction: float = 0.1,
) -> CheckRecord:
    """
    Uniform smallness of the high-mode tails of an ensemble at time ``t``.

    Asserts that ``s(n)`` is nonincreasing and that ``s(n_max) / s(n_min)``
    is below ``contraction``. The envelope constant of the nonlinear tail
    estimate is fitted and reported, and so is the slack of the linear
    modewise decay envelope.
    """
    if len(n_list) < 2:
        raise ConfigError("tail compactness needs at least two mode counts")
    if t <= 0:
        return CheckRecord(
            name="tail-compactness",
            status=Status.SKIPPED,
            details=dict(reason="tails only shrink for t > 0"),
        )
    states = [traj.snapshots[t] for traj in trajectories]
    initial = [
        traj.snapshots[0.0] if 0.0 in traj.snapshots else traj.initial
        for traj in trajectories
    ]
    sizes = tail_sizes(states, n_list)
    lam = states[0].basis.eigenvalues
    nu = trajectories[0].params.nu
    radius_sq = max(norm(u, "H1") ** 2 for u in initial)

    # nested complements, so only round-off can make s(n) grow
    growth = float(np.max(np.diff(sizes), initial=-np.inf))
    monotone = 1e-12 * float(sizes[0]) - growth
    ratio = sizes[-1] / sizes[0] if sizes[0] > 0 else 0.0
    margin = min(monotone, contraction - ratio)

    linear = float(
        np.min(
            [
                np.exp(-2 * nu * lam[n] * t) * radius_sq - size**2
                for n, size in zip(n_list, sizes)
                if n < lam.size
            ],
            initial=np.inf,
        ),
    )
    forcing = 0.0
    for traj in trajectories:
        before = traj.times <= t
        h = traj.h2[before] * traj.h1[before] ** 3
        if np.count_nonzero(before) > 1:
            forcing = max(forcing, float(trapezoid(h**2, traj.times[before])))
    constants = [
        (size**2 - np.exp(-nu * lam[n] * t) * radius_sq)
        * nu
        * np.sqrt(2 * nu * lam[n])
        / np.sqrt(forcing)
        for n, size in zip(n_list, sizes)
        if n < lam.size and forcing > 0
    ]
    return CheckRecord(
        name="tail-compactness",
        status=Status.judge(margin),
        margin=margin,
        details=dict(
            t=t,
            n_list=list(n_list),
            sizes=sizes,
            ratio=ratio,
            linear_envelope_margin=linear,
            fitted_constant=max([0.0, *constants]),
        ),
    )


def check_tail_compactness(
    ensemble: EnsembleSpec,
    basis: StokesBasis,
    p: TamingParams,
    cfg: SolverConfig,
    t: float | None = None,
    contraction: float = 0.1,
    jobs: int = 1,
) -> CheckRecord:
    t = ensemble.times[0] if t is None else t
    ensemble = evolve(ensemble, times=sorted({*ensemble.times, t, 0.0}))
    trajectories = ensemble.run(basis, p, cfg, jobs=jobs)
    return tail_record(trajectories, ensemble.n_list, t, contraction)


@frozen(eq=False)
class AttractorSample:
    """
    Post burn-in observables and leading modal coordinates of an ensemble.
    """

    members: NDArray[np.int64] = field(converter=frozen_array)
    times: NDArray[np.float64] = field(converter=frozen_array)
    l2: NDArray[np.float64] = field(converter=frozen_array)
    h1: NDArray[np.float64] = field(converter=frozen_array)
    h2: NDArray[np.float64] = field(converter=frozen_array)
    sup: NDArray[np.float64] = field(converter=frozen_array)
    coordinates: NDArray[Any] = field(converter=frozen_array)

    def __len__(self) -> int:
        return self.times.size

    def within(self, eps: float) -> bool:
        """
        Whether every sampled state lies in the ε-ball of H¹.
        """
        return bool(np.all(self.h1 < eps))

    def columns(self) -> list[str]:
        count = self.coordinates.shape[1] if self.coordinates.ndim == 2 else 0
        parts = [f"{part}_{i}" for i in range(count) for part in ("re", "im")]
        return ["member", "time", "l2", "h1", "h2_proxy", "sup", *parts]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(self.columns()) + "\n")
        for row in range(len(self)):
            values = [
                self.times[row],
                self.l2[row],
                self.h1[row],
                self.h2[row],
                self.sup[row],
            ]
            for each in self.coordinates[row]:
                values.extend([each.real, np.imag(each)])
            cells = [str(int(self.members[row]))]
            cells.extend(format_float(each) for each in values)
            out.write(",".join(cells) + "\n")
        return out.getvalue()

    def write_csv(self, path: Path) -> None:
        atomic_write(path, self.to_csv())


def attractor_sample(
    trajectories: Sequence[Trajectory],
    times: Sequence[float],
    p: TamingParams,
    burn_in: float,
    coordinates: int = 8,
) -> AttractorSample:
    """
    Every member of an ensemble run at each of ``times`` past ``burn_in``.
    """
    kept = [t for t in times if t >= burn_in]
    if not kept:
        raise ConfigError("no observation time falls after the burn-in")
    if trajectories:
        coordinates = min(coordinates, trajectories[0].final.basis.mode_count)

    rows: list[tuple[int, float, Observation, NDArray[Any]]] = []
    for member, traj in enumerate(trajectories):
        for t in kept:
            state = traj.snapshots[t]
            observation = Observation.of(state, p)
            rows.append((member, t, observation, state.modal[:coordinates]))
    log.info(
        "attractor sampled",
        members=len(trajectories),
        times=len(kept),
        burn_in=burn_in,
    )
    return AttractorSample(
        members=[member for member, *_ in rows],
        times=[t for _, t, *_ in rows],
        l2=[each.l2 for _, _, each, _ in rows],
        h1=[each.h1 for _, _, each, _ in rows],
        h2=[each.h2 for _, _, each, _ in rows],
        sup=[each.sup for _, _, each, _ in rows],
        coordinates=np.array([modal for *_, modal in rows]),
    )


def sample_attractor(
    ensemble: EnsembleSpec,
    basis: StokesBasis,
    p: TamingParams,
    cfg: SolverConfig,
    burn_in: float,
    coordinates: int = 8,
    jobs: int = 1,
) -> AttractorSample:
    """
    Run the ensemble, then sample it at every observation time past
    ``burn_in``.
    """
    if not burn_in < cfg.T:
        raise ConfigError(f"burn-in {burn_in} is not before the horizon")
    if not any(t >= burn_in for t in ensemble.times):
        raise ConfigError("no observation time falls after the burn-in")
    trajectories = ensemble.run(basis, p, cfg, jobs=jobs)
    return attractor_sample(
        trajectories,
        ensemble.times,
        p,
        burn_in,
        coordinates,
    )
