"""
Time integration by exponential time differencing and by Picard iteration.

The viscous term (and the advection by a constant frame velocity) is linear
and diagonal in the spectral basis, so it is integrated exactly. Everything
else, including the taming term, is treated explicitly through the
φ-functions ``φ₁(z) = (eᶻ - 1)/z`` and ``φ₂(z) = (eᶻ - 1 - z)/z²``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import TYPE_CHECKING, Any, Literal
import io

from attrs import field, frozen
from scipy.integrate import cumulative_trapezoid
import numpy as np
import structlog

from tamed._core import (
    atomic_write,
    format_float,
    frozen_array,
    trapezoid_error,
)
from tamed._rhs import (
    TamingParams,
    bilinear_B,
    check_taming,
    deviation,
    tamed_rhs,
    taming_g,
)
from tamed._spectral import SpectralField, StokesBasis, TorusBasis, norm
from tamed.exceptions import (
    BlowUp,
    BoundViolation,
    DomainError,
    NonConvergence,
    StructuralError,
)

if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from tamed._rhs import RhsBreakdown

log = structlog.stdlib.get_logger()

Mode = Literal["ETD1", "ETD2", "PICARD"]
Scheme = Literal["ETD1", "ETD2"]
MODES: tuple[Mode, ...] = ("ETD1", "ETD2", "PICARD")

#: Below this modulus the φ-functions are evaluated by their Taylor series.
SERIES_RADIUS = 1e-4

#: Runs abort once ‖u‖²_∞ exceeds this multiple of the threshold N.
BLOWUP_FACTOR = 1e6

CSV_COLUMNS = (
    "time",
    "l2",
    "h1",
    "h2_proxy",
    "sup",
    "g_value",
    "cum_diss_h1",
    "cum_diss_h2",
)


def phi1(z: ArrayLike) -> NDArray[Any]:
    z = np.asarray(z)
    small = np.abs(z) < SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    series = 1 + z / 2 + z**2 / 6 + z**3 / 24
    return np.where(small, series, np.expm1(safe) / safe)


def phi2(z: ArrayLike) -> NDArray[Any]:
    z = np.asarray(z)
    small = np.abs(z) < SERIES_RADIUS
    safe = np.where(small, 1.0, z)
    series = 1 / 2 + z / 6 + z**2 / 24 + z**3 / 120
    return np.where(small, series, (np.expm1(safe) - safe) / safe**2)


def _tuple_of_floats(values: Iterable[float]) -> tuple[float, ...]:
    return tuple(float(each) for each in values)


@frozen
class SolverConfig:
    """
    How to march: step size, horizon, scheme and what to record.

    Observables are recorded every ``cadence`` steps and states every
    ``state_cadence`` steps (the same as ``cadence`` unless set, with ``0``
    keeping no states). The initial and final steps are always recorded.
    ``snapshots`` names extra times, multiples of ``dt``, at which to keep
    the state.
    """

    dt: float
    T: float
    mode: Mode = "ETD2"
    cadence: int = 1
    state_cadence: int | None = None
    snapshots: tuple[float, ...] = field(
        default=(),
        converter=_tuple_of_floats,
    )
    picard_tol: float = 1e-8
    picard_max_iter: int = 15
    picard_window: float | None = None
    picard_scheme: Scheme = "ETD2"
    cfl: float | None = None
    lq_exponents: tuple[float, ...] = field(
        default=(),
        converter=_tuple_of_floats,
    )
    energy_rtol: float = 1e-4

    def __attrs_post_init__(self):
        if not self.dt > 0:
            raise DomainError(f"the time step must be positive, not {self.dt}")
        if not self.T >= 0:
            raise DomainError(f"the horizon must be nonnegative, not {self.T}")
        if self.mode not in MODES:
            raise DomainError(f"{self.mode!r} is not one of {MODES}")
        if self.picard_scheme not in ("ETD1", "ETD2"):
            raise DomainError(f"{self.picard_scheme!r} is not an ETD scheme")
        if not self.picard_tol > 0:
            raise DomainError("the Picard tolerance must be positive")
        if self.picard_max_iter < 1:
            raise DomainError("the Picard iteration cap must be at least 1")
        if self.picard_window is not None and not self.picard_window > 0:
            raise DomainError("Picard windows must have positive length")
        if self.cadence < 1:
            raise DomainError(f"cadence {self.cadence} must be at least 1")
        if self.state_cadence is not None and self.state_cadence < 0:
            raise DomainError("the state cadence cannot be negative")
        if self.cfl is not None and not self.cfl > 0:
            raise DomainError(f"CFL number {self.cfl} must be positive")
        if self.cfl is not None and self.snapshots:
            raise DomainError("snapshots need a fixed time step")
        if any(q < 1 for q in self.lq_exponents):
            raise DomainError("Lq exponents must be at least 1")
        for each in self.snapshots:
            if not 0 <= each <= self.T * (1 + 1e-12):
                raise DomainError(f"snapshot time {each} is outside [0, T]")
            step = round(each / self.dt)
            if abs(step * self.dt - each) > 1e-9 * max(1.0, each):
                raise DomainError(
                    f"snapshot time {each} is not a multiple of dt={self.dt}",
                )

    @property
    def steps(self) -> int:
        """
        The number of fixed-size steps to the horizon.
        """
        return round(self.T / self.dt)

    @property
    def scheme(self) -> Scheme:
        return self.picard_scheme if self.mode == "PICARD" else self.mode

    @property
    def states_every(self) -> int:
        if self.state_cadence is None:
            return self.cadence
        return self.state_cadence

    def snapshot_steps(self) -> dict[int, float]:
        return {round(each / self.dt): each for each in self.snapshots}

    def describe(self) -> dict[str, Any]:
        return dict(
            dt=self.dt,
            T=self.T,
            mode=self.mode,
            cadence=self.cadence,
            picard_tol=self.picard_tol,
            picard_max_iter=self.picard_max_iter,
            cfl=self.cfl,
        )


@frozen
class Propagator:
    """
    The exponential and φ-function multipliers for one step size.

    A frame velocity ``v`` enters as the exact translation ``e^{-dt v·∇}``
    applied after a step of the viscous problem, so a run in a moving frame
    is the translate of the run at rest whenever the nonlinearity commutes
    with translations.
    """

    basis: StokesBasis
    dt: float
    nu: float
    mean_flow: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @cached_property
    def z(self) -> NDArray[Any]:
        """
        The symbol of ``-dt νA``.
        """
        dt, nu = self.dt, self.nu
        return frozen_array(self.basis.symbol(lambda lam: -dt * nu * lam))

    @cached_property
    def shift(self) -> NDArray[Any] | None:
        """
        The symbol of ``e^{-dt v·∇}``, or None without a frame velocity.
        """
        if not any(self.mean_flow):
            return None
        if not isinstance(self.basis, TorusBasis):
            raise StructuralError("frame velocities need a torus basis")
        drift = self.basis.drift_symbol(self.mean_flow)
        return frozen_array(np.exp(-1j * self.dt * drift))

    def _shifted(self, symbol: NDArray[Any]) -> NDArray[Any]:
        if self.shift is None:
            return frozen_array(symbol)
        return frozen_array(symbol * self.shift)

    @cached_property
    def exponential(self) -> NDArray[Any]:
        return self._shifted(np.exp(self.z))

    @cached_property
    def dt_phi1(self) -> NDArray[Any]:
        return self._shifted(self.dt * phi1(self.z))

    @cached_property
    def dt_phi2(self) -> NDArray[Any]:
        return frozen_array(self.dt * phi2(self.z))

    def _apply(self, u: SpectralField, symbol: NDArray[Any]):
        return self.basis.multiply(u.coefficients, symbol)

    def advance(self, u: SpectralField, f: SpectralField) -> SpectralField:
        """
        The first-order update ``e^{z} u + dt φ₁(z) f``, then translated.
        """
        coefficients = self._apply(u, self.exponential)
        coefficients = coefficients + self._apply(f, self.dt_phi1)
        return SpectralField(basis=u.basis, coefficients=coefficients)

    def correct(
        self,
        a: SpectralField,
        f0: SpectralField,
        f1: SpectralField,
    ) -> SpectralField:
        """
        The second-order correction ``a + dt φ₂(z) (f₁ - f₀)``.

        ``f₀`` is translated along with the prediction ``a`` first.
        """
        if self.shift is not None:
            f0 = SpectralField(
                basis=f0.basis,
                coefficients=self._apply(f0, self.shift),
            )
        difference = f1 - f0
        coefficients = a.coefficients + self._apply(difference, self.dt_phi2)
        return SpectralField(basis=a.basis, coefficients=coefficients)

    def step(
        self,
        u: SpectralField,
        p: TamingParams,
        scheme: Scheme,
        rhs: RhsBreakdown | None = None,
    ) -> SpectralField:
        if rhs is None:
            rhs = tamed_rhs(u, p)
        f0 = rhs.nonlinear
        a = self.advance(u, f0)
        if scheme == "ETD1":
            return a
        f1 = tamed_rhs(a, p).nonlinear
        return self.correct(a, f0, f1)


def propagator_for(p: TamingParams, basis: StokesBasis, dt: float):
    return Propagator(basis=basis, dt=dt, nu=p.nu, mean_flow=p.mean_flow)


def etd_step(
    u: SpectralField,
    p: TamingParams,
    dt: float,
    scheme: Scheme = "ETD2",
    t: float = 0.0,
) -> SpectralField:
    """
    One exponential time differencing step of size ``dt`` from time ``t``.

    ``ETD1`` is exponential Euler. ``ETD2`` is the second-order Runge-Kutta
    variant which corrects with ``φ₂`` using the right-hand side at the
    first-order prediction.
    """
    if not dt > 0:
        raise DomainError(f"the time step must be positive, not {dt}")
    if not u.is_finite():
        raise BlowUp(time=t)
    stepped = propagator_for(p, u.basis, dt).step(u, p, scheme)
    if not stepped.is_finite():
        raise BlowUp(time=t)
    return stepped


@frozen
class Observation:
    """
    The scalar observables of one state.
    """

    l2: float
    h1: float
    h2: float
    sup: float
    g_value: float
    tame_arg: float
    lq: tuple[float, ...] = ()

    @classmethod
    def of(
        cls,
        u: SpectralField,
        p: TamingParams,
        lq_exponents: Sequence[float] = (),
        rhs: RhsBreakdown | None = None,
    ) -> Observation:
        modal = u.modal
        power = (modal * np.conj(modal)).real
        lam = u.basis.eigenvalues
        if isinstance(u.basis, TorusBasis):
            tame_arg = (
                rhs.sup_sq
                if rhs is not None
                else norm(deviation(u, p), "sup") ** 2
            )
            sup = np.sqrt(tame_arg) if p.U is None else norm(u, "sup")
            lq = tuple(norm(u, "Lq", q=q) for q in lq_exponents)
        else:
            tame_arg, sup = 0.0, float("nan")
            lq = tuple(float("nan") for _ in lq_exponents)
        g = rhs.g_value if rhs is not None else taming_g(tame_arg, p)
        return cls(
            l2=float(np.sqrt(power.sum())),
            h1=float(np.sqrt(lam @ power)),
            h2=float(np.sqrt((lam * lam) @ power)),
            sup=float(sup),
            g_value=float(g),
            tame_arg=float(tame_arg),
            lq=lq,
        )


def _array(**kwargs: Any):
    return field(converter=frozen_array, **kwargs)


@frozen(eq=False)
class Trajectory:
    """
    Recorded observables (and optionally states) of one run.

    ``h2`` is ``‖Au‖``. ``cum_diss_h1`` and ``cum_diss_h2`` are running
    trapezoid integrals of ``‖∇u‖²`` and ``‖Au‖²`` over every step, not
    just recorded ones. ``tame_arg`` is ``‖u - U‖²_∞``, the argument of the
    taming function.
    """

    times: NDArray[np.float64] = _array()
    l2: NDArray[np.float64] = _array()
    h1: NDArray[np.float64] = _array()
    h2: NDArray[np.float64] = _array()
    sup: NDArray[np.float64] = _array()
    g_value: NDArray[np.float64] = _array()
    tame_arg: NDArray[np.float64] = _array()
    cum_diss_h1: NDArray[np.float64] = _array()
    cum_diss_h2: NDArray[np.float64] = _array()
    final: SpectralField
    params: TamingParams
    dt: float
    states: tuple[SpectralField, ...] = ()
    state_times: NDArray[np.float64] = _array(factory=tuple)
    snapshots: Mapping[float, SpectralField] = field(factory=dict)
    lq: Mapping[float, NDArray[np.float64]] = field(factory=dict)
    meta: Mapping[str, Any] = field(factory=dict)

    def __attrs_post_init__(self):
        if self.times.ndim != 1 or self.times.size == 0:
            raise StructuralError("a trajectory needs at least one time")
        if np.any(np.diff(self.times) <= 0):
            raise StructuralError("trajectory times must strictly increase")
        for name in CSV_COLUMNS[1:]:
            column = self.column(name)
            if column.shape != self.times.shape:
                raise StructuralError(f"{name} does not match the times")
        if len(self.states) != self.state_times.size:
            raise StructuralError("states and state times differ in length")

    @classmethod
    def from_states(
        cls,
        times: ArrayLike,
        states: Sequence[SpectralField],
        p: TamingParams,
        *,
        cadence: int = 1,
        state_cadence: int | None = None,
        snapshots: Mapping[int, float] | None = None,
        lq_exponents: Sequence[float] = (),
        meta: Mapping[str, Any] | None = None,
    ) -> Trajectory:
        """
        Compute observables for a complete list of states, then decimate.
        """
        times = np.asarray(times, dtype=float)
        if len(states) != times.size:
            raise StructuralError("one state is needed per time")
        observations = [Observation.of(u, p, lq_exponents) for u in states]
        h1 = np.array([each.h1 for each in observations])
        h2 = np.array([each.h2 for each in observations])
        cum_h1 = cumulative_trapezoid(h1**2, times, initial=0)
        cum_h2 = cumulative_trapezoid(h2**2, times, initial=0)

        last = times.size - 1
        kept = [m for m in range(times.size) if m % cadence == 0 or m == last]
        every = cadence if state_cadence is None else state_cadence
        stored = (
            [m for m in range(times.size) if m % every == 0 or m == last]
            if every
            else []
        )

        def column(name: str) -> NDArray[np.float64]:
            return np.array([getattr(observations[m], name) for m in kept])

        lq = {
            q: np.array([observations[m].lq[i] for m in kept])
            for i, q in enumerate(lq_exponents)
        }
        return cls(
            times=times[kept],
            l2=column("l2"),
            h1=column("h1"),
            h2=column("h2"),
            sup=column("sup"),
            g_value=column("g_value"),
            tame_arg=column("tame_arg"),
            cum_diss_h1=cum_h1[kept],
            cum_diss_h2=cum_h2[kept],
            final=states[-1],
            params=p,
            dt=float(times[1] - times[0]) if times.size > 1 else 0.0,
            states=tuple(states[m] for m in stored),
            state_times=times[stored],
            snapshots={
                time: states[m] for m, time in (snapshots or {}).items()
            },
            lq=lq,
            meta=dict(meta or {}),
        )

    @property
    def initial(self) -> SpectralField:
        return self.states[0]

    @property
    def energy(self) -> NDArray[np.float64]:
        return self.l2**2

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def column(self, name: str) -> NDArray[np.float64]:
        match name:
            case "time":
                return self.times
            case "h2_proxy":
                return self.h2
            case _ if name.startswith("lq_"):
                return self.lq[float(name.removeprefix("lq_"))]
            case _:
                return getattr(self, name)

    def columns(self) -> list[str]:
        return [*CSV_COLUMNS, *(f"lq_{q:g}" for q in self.lq)]

    def to_csv(self) -> str:
        """
        Every recorded row, with floats in their shortest round-trip form.
        """
        names = self.columns()
        data = [self.column(name) for name in names]
        out = io.StringIO()
        out.write(",".join(names) + "\n")
        for row in zip(*data):
            out.write(",".join(format_float(each) for each in row) + "\n")
        return out.getvalue()

    def write_csv(self, path: Path) -> None:
        atomic_write(path, self.to_csv())


def _check_inputs(u0: SpectralField, p: TamingParams) -> None:
    if p.U is not None and p.U.basis != u0.basis:
        raise StructuralError("the reference field lives in another basis")
    check_taming(u0.basis, p)
    if not u0.is_finite():
        raise BlowUp(time=0.0, reason="the initial state is not finite")


def _step_size(
    u: SpectralField,
    sup: float,
    cfg: SolverConfig,
    remaining: float,
) -> float:
    dt = cfg.dt
    if cfg.cfl is not None and isinstance(u.basis, TorusBasis) and sup > 0:
        h = u.basis.length / u.basis.n
        dt = min(dt, cfg.cfl * h / sup)
    return min(dt, remaining)


def _march(u0: SpectralField, p: TamingParams, cfg: SolverConfig):
    """
    Step with ETD, recording as we go.
    """
    propagators: dict[float, Propagator] = {}
    snapshot_steps = cfg.snapshot_steps()
    states_every = cfg.states_every
    fixed = cfg.cfl is None

    times: list[float] = []
    observations: list[Observation] = []
    cum_h1: list[float] = []
    cum_h2: list[float] = []
    states: list[SpectralField] = []
    state_times: list[float] = []
    snapshots: dict[float, SpectralField] = {}

    u, t, m = u0, 0.0, 0
    running_h1 = running_h2 = 0.0
    previous: Observation | None = None
    last_t, max_g = 0.0, 0.0
    while True:
        if not u.is_finite():
            raise BlowUp(time=last_t)
        rhs = tamed_rhs(u, p)
        if rhs.sup_sq > BLOWUP_FACTOR * p.N:
            raise BlowUp(
                time=last_t,
                reason=f"‖u - U‖²_∞ = {rhs.sup_sq!r} exceeds 10⁶·N",
            )
        observation = Observation.of(u, p, cfg.lq_exponents, rhs)
        max_g = max(max_g, observation.g_value)
        if previous is not None:
            dt = t - last_t
            running_h1 += dt / 2 * (previous.h1**2 + observation.h1**2)
            running_h2 += dt / 2 * (previous.h2**2 + observation.h2**2)

        done = m == cfg.steps if fixed else t >= cfg.T * (1 - 1e-12)
        if m % cfg.cadence == 0 or done:
            times.append(t)
            observations.append(observation)
            cum_h1.append(running_h1)
            cum_h2.append(running_h2)
        if states_every and (m % states_every == 0 or done):
            states.append(u)
            state_times.append(t)
        if m in snapshot_steps:
            snapshots[snapshot_steps[m]] = u
        if done:
            break

        dt = _step_size(u, observation.sup, cfg, cfg.T - t)
        propagator = propagators.get(dt)
        if propagator is None:
            propagator = propagators[dt] = propagator_for(p, u.basis, dt)
        previous, last_t = observation, t
        u = propagator.step(u, p, cfg.scheme, rhs)
        m += 1
        t = m * cfg.dt if fixed else t + dt

    log.info(
        "run finished",
        mode=cfg.mode,
        steps=m,
        horizon=t,
        max_g=max_g,
        final_l2=observations[-1].l2,
    )

    def column(name: str) -> list[float]:
        return [getattr(each, name) for each in observations]

    return Trajectory(
        times=times,
        l2=column("l2"),
        h1=column("h1"),
        h2=column("h2"),
        sup=column("sup"),
        g_value=column("g_value"),
        tame_arg=column("tame_arg"),
        cum_diss_h1=cum_h1,
        cum_diss_h2=cum_h2,
        final=u,
        params=p,
        dt=cfg.dt,
        states=tuple(states),
        state_times=state_times,
        snapshots=snapshots,
        lq={
            q: np.array([each.lq[i] for each in observations])
            for i, q in enumerate(cfg.lq_exponents)
        },
        meta=dict(
            mode=cfg.mode,
            scheme=cfg.scheme,
            steps=m,
            cadence=cfg.cadence,
        ),
    )


def _frozen_rhs(
    frozen: SpectralField,
    u: SpectralField,
    p: TamingParams,
) -> SpectralField:
    """
    The right-hand side of the linearized equation, coefficients frozen.

    ``B(w, u) - g(‖w - U‖²_∞)(u - U)`` for the previous iterate ``w``.
    """
    if p.advection == "none":
        advected = SpectralField.zeros(u.basis)
    else:
        advected = bilinear_B(frozen, u, p.advection)
    if not check_taming(u.basis, p):
        return advected
    g = taming_g(norm(deviation(frozen, p), "sup") ** 2, p)
    if g == 0:
        return advected
    return advected - g * deviation(u, p)


def _iterate_margins(
    states: Sequence[SpectralField],
    p: TamingParams,
    dt: float,
    rtol: float,
) -> dict[str, tuple[float, float]]:
    """
    The slack (and its allowance) in each a priori bound along one iterate.

    ``energy`` is ``‖u₀‖² - (‖u(t)‖² + 2ν∫‖∇u‖²)``, and for tamed flows
    ``gradient`` is ``(κN/ν²)‖u₀‖² + ‖∇u₀‖² - (‖∇u(t)‖² + ν∫‖Au‖²)``,
    each minimized over the window. The allowances cover the trapezoid
    rule's error plus ``rtol`` of the bound.
    """
    observations = [Observation.of(u, p) for u in states]
    times = np.arange(len(states)) * dt
    energy = np.array([each.l2**2 for each in observations])
    h1_sq = np.array([each.h1**2 for each in observations])
    h2_sq = np.array([each.h2**2 for each in observations])

    dissipation = 2 * p.nu * h1_sq
    spent = cumulative_trapezoid(dissipation, dx=dt, initial=0)
    margins = dict(
        energy=(
            float(np.min(energy[0] - (energy + spent))),
            trapezoid_error(times, dissipation, dt) + rtol * energy[0],
        ),
    )
    if p.tamed:
        bound = p.kappa * p.N / p.nu**2 * energy[0] + h1_sq[0]
        smoothing = p.nu * h2_sq
        spent = cumulative_trapezoid(smoothing, dx=dt, initial=0)
        margins["gradient"] = (
            float(np.min(bound - (h1_sq + spent))),
            trapezoid_error(times, smoothing, dt) + rtol * bound,
        )
    return margins


def _linearized_pass(
    start: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    propagator: Propagator,
    frozen: Sequence[SpectralField],
    frozen_stages: Sequence[SpectralField],
    t0: float,
) -> tuple[list[SpectralField], list[SpectralField]]:
    """
    March the linear equation whose coefficients are frozen at an iterate.
    """
    states, stages = [start], []
    for m in range(len(frozen) - 1):
        u = states[m]
        f0 = _frozen_rhs(frozen[m], u, p)
        stepped = propagator.advance(u, f0)
        if cfg.picard_scheme == "ETD2":
            stages.append(stepped)
            f1 = _frozen_rhs(frozen_stages[m], stepped, p)
            stepped = propagator.correct(stepped, f0, f1)
        if not stepped.is_finite():
            raise BlowUp(time=t0 + m * cfg.dt)
        if isinstance(stepped.basis, TorusBasis):
            sup_sq = norm(deviation(stepped, p), "sup") ** 2
            if sup_sq > BLOWUP_FACTOR * p.N:
                raise BlowUp(
                    time=t0 + m * cfg.dt,
                    reason=f"‖u - U‖²_∞ = {sup_sq!r} exceeds 10⁶·N",
                )
        states.append(stepped)
    return states, stages


def picard_pass(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    frozen: Sequence[SpectralField] | None = None,
) -> list[SpectralField]:
    """
    One Picard iterate over ``[0, cfg.T]``, on the fixed step grid.

    Without ``frozen`` the previous iterate is taken to be identically zero,
    which produces the second iterate.
    """
    steps = cfg.steps
    if frozen is None:
        frozen = [SpectralField.zeros(u0.basis)] * (steps + 1)
    elif len(frozen) != steps + 1:
        raise StructuralError(
            f"a frozen iterate needs {steps + 1} states, not {len(frozen)}",
        )
    # Given iterates carry no intermediate stages, so freeze at the states.
    propagator = propagator_for(p, u0.basis, cfg.dt)
    states, _ = _linearized_pass(
        u0,
        p,
        cfg,
        propagator,
        frozen,
        frozen[:-1],
        0.0,
    )
    return states


def _picard_window(
    start: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    steps: int,
    t0: float,
):
    """
    Iterate the linearized equation to its fixed point over one window.

    Iterate ``k`` freezes the coefficients at iterate ``k - 1`` (including
    its intermediate stages for ETD2), so the fixed point is exactly the
    corresponding ETD solution.

    Every iterate must respect the energy bound, and for tamed flows the
    gradient bound, or the iteration stops with `BoundViolation`.
    """
    propagator = propagator_for(p, start.basis, cfg.dt)
    zero = SpectralField.zeros(start.basis)
    previous = [zero] * (steps + 1)
    previous_stages = [zero] * steps
    history: list[dict[str, float]] = []

    increment = float("inf")
    for k in range(2, cfg.picard_max_iter + 2):
        states, stages = _linearized_pass(
            start,
            p,
            cfg,
            propagator,
            previous,
            previous_stages,
            t0,
        )

        increment = max(
            norm(new - old, "H1") for new, old in zip(states, previous)
        )
        margins = _iterate_margins(states, p, cfg.dt, cfg.energy_rtol)
        entry = dict(iterate=k, increment=increment)
        entry.update(
            (f"{bound}_margin", margin)
            for bound, (margin, _) in margins.items()
        )
        history.append(entry)
        log.debug("picard iterate", t0=t0, **entry)
        for bound, (margin, tolerance) in margins.items():
            if margin < -tolerance:
                log.error(
                    "picard iterate breaks its bound",
                    bound=bound,
                    iterate=k,
                    margin=margin,
                    tolerance=tolerance,
                    t0=t0,
                )
                raise BoundViolation(
                    bound=bound,
                    iterate=k,
                    time=t0,
                    margin=margin,
                )
        if increment < cfg.picard_tol:
            return states, dict(iterations=k, history=history, t0=t0)
        previous, previous_stages = states, stages

    raise NonConvergence(iterations=cfg.picard_max_iter, increment=increment)


def picard_solve(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    horizon: float | None = None,
) -> Trajectory:
    """
    Solve by iterating linear equations with the previous iterate frozen.

    The first iterate is identically zero. Horizons longer than
    ``cfg.picard_window`` are split into windows, each restarted from the
    previous window's final state.
    """
    _check_inputs(u0, p)
    horizon = cfg.T if horizon is None else horizon
    total = round(horizon / cfg.dt)
    per_window = (
        total
        if cfg.picard_window is None
        else max(1, round(cfg.picard_window / cfg.dt))
    )

    states, windows, done = [u0], [], 0
    while done < total:
        steps = min(per_window, total - done)
        solved, info = _picard_window(states[-1], p, cfg, steps, done * cfg.dt)
        states.extend(solved[1:])
        windows.append(info)
        done += steps

    log.info(
        "picard finished",
        windows=len(windows),
        iterations=[each["iterations"] for each in windows],
    )
    return Trajectory.from_states(
        np.arange(total + 1) * cfg.dt,
        states,
        p,
        cadence=cfg.cadence,
        state_cadence=cfg.state_cadence,
        snapshots=cfg.snapshot_steps(),
        lq_exponents=cfg.lq_exponents,
        meta=dict(
            mode="PICARD",
            scheme=cfg.picard_scheme,
            steps=total,
            cadence=cfg.cadence,
            iterations=max(
                (each["iterations"] for each in windows),
                default=0,
            ),
            picard=windows,
        ),
    )


def run(u0: SpectralField, p: TamingParams, cfg: SolverConfig) -> Trajectory:
    """
    Integrate from ``u0`` to ``cfg.T`` with the configured scheme.
    """
    _check_inputs(u0, p)
    if cfg.mode == "PICARD":
        return picard_solve(u0, p, cfg)
    return _march(u0, p, cfg)


def run_many(
    initial: Sequence[SpectralField],
    p: TamingParams,
    cfg: SolverConfig,
    jobs: int = 1,
) -> list[Trajectory]:
    """
    Run independent members, in parallel threads when ``jobs > 1``.

    Results come back in the order of ``initial``.
    """
    if jobs <= 1:
        return [run(u0, p, cfg) for u0 in initial]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda u0: run(u0, p, cfg), initial))
