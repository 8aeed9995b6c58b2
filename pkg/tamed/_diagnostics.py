"""
Numerical checks of the a priori estimates and symmetries of tamed flows.

Each check produces a `CheckRecord` whose margin is the worst signed slack
of the inequality it checks. Checks of a single trajectory are pure
functions of it, so they may be evaluated in parallel over one shared
trajectory. Sweeps and symmetry checks re-run the solver.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any, Literal

from attrs import evolve
from scipy.integrate import cumulative_trapezoid, trapezoid
import numpy as np
import structlog

from tamed._core import LineFit, arrays_equal, trapezoid_error
from tamed._integrators import run
from tamed._report import CheckRecord, Status
from tamed._rhs import curl, vorticity_rhs
from tamed._spectral import (
    SpectralField,
    TorusBasis,
    dilate,
    eigenfield,
    norm,
    rotate,
    signed_permutation,
    translate,
)
from tamed.exceptions import ConfigError, DomainError, StructuralError

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from tamed._integrators import SolverConfig, Trajectory
    from tamed._rhs import TamingParams

log = structlog.stdlib.get_logger()

#: Relative slack allowed on top of the quadrature error of energy checks.
ENERGY_RTOL = 1e-4

#: Checks which only need the trajectory (and its parameters).
TRAJECTORY_CHECKS = (
    "energy",
    "gradient",
    "decay",
    "tame-time",
    "lq-moments",
    "vorticity",
)

#: Quarter turn about the z axis.
QUARTER_TURN = ((0, -1, 0), (1, 0, 0), (0, 0, 1))

_TINY = np.finfo(float).tiny


def _relative(difference: float, scale: float) -> float:
    return difference / scale if scale > 0 else difference


def _nominal_order(traj: Trajectory) -> int:
    return 1 if traj.meta.get("scheme") == "ETD1" else 2


def check_energy(traj: Trajectory, rtol: float = ENERGY_RTOL) -> CheckRecord:
    """
    ``‖u(t)‖² + 2ν∫₀ᵗ‖∇u‖² ≤ ‖u₀‖²`` at every recorded time.
    """
    nu = traj.params.nu
    energy = traj.energy
    initial = float(energy[0])
    slack = initial - (energy + 2 * nu * traj.cum_diss_h1)
    worst = int(np.argmin(slack))
    tolerance = (
        trapezoid_error(traj.times, 2 * nu * traj.h1**2, traj.dt)
        + rtol * initial
    )
    return CheckRecord(
        name="energy",
        status=Status.judge(float(slack[worst]), tolerance),
        margin=float(slack[worst]),
        details=dict(
            tolerance=tolerance,
            worst_time=float(traj.times[worst]),
            initial_energy=initial,
        ),
    )


def check_gradient_bound(
    traj: Trajectory,
    rtol: float = ENERGY_RTOL,
) -> CheckRecord:
    """
    ``‖∇u(t)‖² + ν∫₀ᵗ‖Au‖² ≤ (κN/ν²)‖u₀‖² + ‖∇u₀‖²`` at every recorded time.

    The bound is only claimed for tamed flows.
    """
    p = traj.params
    if not p.tamed:
        return CheckRecord(
            name="gradient",
            status=Status.SKIPPED,
            details=dict(reason="taming is disabled, so no bound is claimed"),
        )
    bound = (
        p.kappa * p.N / p.nu**2 * float(traj.energy[0])
        + float(traj.h1[0]) ** 2
    )
    slack = bound - (traj.h1**2 + p.nu * traj.cum_diss_h2)
    worst = int(np.argmin(slack))
    tolerance = (
        trapezoid_error(traj.times, p.nu * traj.h2**2, traj.dt)
        + rtol * bound
    )
    return CheckRecord(
        name="gradient",
        status=Status.judge(float(slack[worst]), tolerance),
        margin=float(slack[worst]),
        details=dict(
            bound=bound,
            tolerance=tolerance,
            worst_time=float(traj.times[worst]),
        ),
    )


def check_decay(
    traj: Trajectory,
    tail: float = 0.5,
    min_points: int = 8,
    slack: float = 0.1,
) -> CheckRecord:
    """
    Fit the decay of ``‖∇u‖`` over the last ``tail`` of the horizon.

    Passes if the log-log slope is at most ``-1/2 + slack``, or if a
    log-linear fit certifies exponential decay (a material drop over the
    window, fitted with r² of at least 0.99).
    """
    if not 0 < tail <= 1:
        raise DomainError(f"the tail fraction {tail} is not in (0, 1]")
    times, h1 = traj.times, traj.h1
    window = (times > 0) & (times >= times[-1] * (1 - tail))
    t, y = times[window], h1[window]
    if t.size and np.all(y == 0):
        return CheckRecord(
            name="decay",
            status=Status.PASS,
            details=dict(reason="the gradient vanished"),
        )
    positive = y > 0
    if np.count_nonzero(positive) < min_points:
        return CheckRecord(
            name="decay",
            status=Status.INCONCLUSIVE,
            details=dict(
                reason="the tail is too short to fit",
                points=int(np.count_nonzero(positive)),
                needed=min_points,
            ),
        )
    t, y = t[positive], y[positive]
    power = LineFit.through(np.log(t), np.log(y))
    exponential = LineFit.through(t, np.log(y))
    power_margin = (-0.5 + slack) - power.slope
    drop = -exponential.slope * float(t[-1] - t[0])
    certified = drop >= 0.1 and exponential.r_squared >= 0.99
    margin = max(power_margin, drop) if certified else power_margin
    return CheckRecord(
        name="decay",
        status=Status.PASS if power_margin >= 0 or certified else Status.FAIL,
        margin=margin,
        details=dict(
            window=[float(t[0]), float(t[-1])],
            power_slope=power.slope,
            power_r_squared=power.r_squared,
            exponential_rate=-exponential.slope,
            exponential_r_squared=exponential.r_squared,
            exponential=certified,
        ),
    )


def tame_measure(
    times: ArrayLike,
    tame_arg: ArrayLike,
    N: float,
) -> tuple[float, float]:
    """
    The time spent with ``‖u - U‖²_∞ ≥ N``, and its Chebyshev bound.

    Both are left Riemann sums over the same recorded intervals, summed in
    the same order, so the measure never exceeds the bound.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(tame_arg, dtype=float)[:-1]
    widths = np.diff(times)
    measure = float(np.sum(widths * (values >= N)))
    bound = float(np.sum(widths * (values / N)))
    return measure, bound


def tame_time_measure(
    traj: Trajectory,
    N: float | None = None,
) -> CheckRecord:
    """
    The measure of ``{t ≤ T : ‖u - U‖²_∞ ≥ N}`` against ``(1/N)∫‖u - U‖²_∞``.
    """
    N = traj.params.N if N is None else N
    measure, bound = tame_measure(traj.times, traj.tame_arg, N)
    return CheckRecord(
        name="tame-time",
        status=Status.judge(bound - measure),
        margin=bound - measure,
        details=dict(N=N, measure=measure, bound=bound),
    )


def tame_time_sweep(
    traj: Trajectory,
    factors: Sequence[float] = (1, 2, 4, 8),
    N: float | None = None,
    shrink: float | None = 4.0,
) -> CheckRecord:
    """
    The tame time measure over thresholds ``N · factors`` of one trajectory.

    It must be nonincreasing in the threshold and bounded by Chebyshev's
    inequality throughout. With ``shrink``, the last measure must also be at
    most the first divided by it (unless the first is already zero).
    """
    base = traj.params.N if N is None else N
    thresholds = [base * factor for factor in sorted(factors)]
    measured = [
        tame_measure(traj.times, traj.tame_arg, each) for each in thresholds
    ]
    measures = np.array([measure for measure, _ in measured])
    bounds = np.array([bound for _, bound in measured])
    slacks = [float(np.min(bounds - measures))]
    if measures.size > 1:
        slacks.append(float(np.min(measures[:-1] - measures[1:])))
    if shrink is not None and measures[0] > 0:
        slacks.append(float(measures[0] / shrink - measures[-1]))
    margin = min(slacks)
    return CheckRecord(
        name="tame-time-sweep",
        status=Status.judge(margin),
        margin=margin,
        details=dict(
            thresholds=thresholds,
            measures=measures,
            bounds=bounds,
        ),
    )


def _keeping_states(cfg: SolverConfig) -> SolverConfig:
    if cfg.state_cadence == 0:
        return evolve(cfg, state_cadence=None)
    return cfg


def difference_functional(first: Trajectory, second: Trajectory) -> float:
    """
    ``sup_t ‖u - v‖²_{H¹} + ∫₀ᵀ ‖u - v‖²_{H¹}`` over stored states.
    """
    if not arrays_equal(first.state_times, second.state_times):
        raise StructuralError("trajectories were stored at different times")
    if not first.states:
        raise StructuralError("the trajectories kept no states")
    gaps = np.array(
        [norm(u - v, "H1") ** 2 for u, v in zip(first.states, second.states)],
    )
    integral = trapezoid(gaps, first.state_times) if gaps.size > 1 else 0.0
    return float(np.max(gaps) + integral)


def dependence_record(
    first: Trajectory,
    second: Trajectory,
    N: float,
    M: float,
    name: str = "continuous-dependence",
) -> CheckRecord:
    """
    The ratio of the difference functional to ``|N - M|² + ‖u₀ - v₀‖²_{H¹}``.

    Identical inputs instead require identical trajectories.
    """
    initial_gap = norm(first.initial - second.initial, "H1") ** 2
    denominator = (N - M) ** 2 + initial_gap
    if denominator == 0:
        identical = all(
            arrays_equal(u.coefficients, v.coefficients)
            for u, v in zip(
                (*first.states, first.final),
                (*second.states, second.final),
            )
        )
        return CheckRecord(
            name=name,
            status=Status.PASS if identical else Status.FAIL,
            margin=0.0 if identical else -difference_functional(first, second),
            details=dict(identical=identical),
        )
    difference = difference_functional(first, second)
    return CheckRecord(
        name=name,
        status=Status.INFO,
        details=dict(
            difference=difference,
            denominator=denominator,
            ratio=difference / denominator,
        ),
    )


def check_continuous_dependence(
    u0: SpectralField,
    v0: SpectralField,
    N: float,
    M: float,
    p: TamingParams,
    cfg: SolverConfig,
) -> CheckRecord:
    """
    Compare the runs from ``u0`` at threshold ``N`` and ``v0`` at ``M``.
    """
    cfg = _keeping_states(cfg)
    first = run(u0, evolve(p, N=N), cfg)
    second = run(v0, evolve(p, N=M), cfg)
    return dependence_record(first, second, N, M)


Perturbation = Literal["initial", "threshold"]


def continuous_dependence_sweep(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    perturbation: Perturbation = "initial",
    sizes: Sequence[float] = (1e-2, 1e-3, 1e-4),
    mode: int = 0,
    expected: float = 2.0,
    tolerance: float = 0.2,
) -> CheckRecord:
    """
    The log-log slope of the difference functional against perturbation size.

    ``initial`` perturbs the initial state along the ``mode``-th eigenfield,
    ``threshold`` perturbs the threshold of the second run.
    """
    if len(sizes) < 2:
        raise DomainError("a dependence sweep needs at least two sizes")
    cfg = _keeping_states(cfg)
    base = run(u0, p, cfg)
    direction = eigenfield(u0.basis, mode)
    differences: list[float] = []
    for size in sizes:
        match perturbation:
            case "initial":
                other = run(u0 + size * direction, p, cfg)
            case "threshold":
                other = run(u0, evolve(p, N=p.N + size), cfg)
            case _:
                raise DomainError(f"{perturbation!r} is not a perturbation")
        differences.append(difference_functional(base, other))
        log.debug(
            "dependence sweep",
            perturbation=perturbation,
            size=size,
            difference=differences[-1],
        )

    name = f"continuous-dependence-{perturbation}"
    if min(differences) <= 0:
        return CheckRecord(
            name=name,
            status=Status.INCONCLUSIVE,
            details=dict(
                sizes=list(sizes),
                differences=differences,
                reason="a perturbation left the trajectory unchanged",
            ),
        )
    fit = LineFit.through(np.log(sizes), np.log(differences))
    margin = tolerance - abs(fit.slope - expected)
    return CheckRecord(
        name=name,
        status=Status.judge(margin),
        margin=margin,
        details=dict(
            sizes=list(sizes),
            differences=differences,
            slope=fit.slope,
            expected=expected,
        ),
    )


def _comparison(
    name: str,
    got: SpectralField,
    expected: SpectralField,
    tolerance: float,
    **details: Any,
) -> CheckRecord:
    error = _relative(norm(got - expected, "L2"), norm(expected, "L2"))
    return CheckRecord(
        name=name,
        status=Status.judge(tolerance - error),
        margin=tolerance - error,
        details=dict(error=error, tolerance=tolerance, **details),
    )


def check_symmetries(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    *,
    shift: ArrayLike = (0.0, 0.0, 0.0),
    rotation: ArrayLike = QUARTER_TURN,
    scale: int = 2,
    tolerances: tuple[float, float, float] = (1e-8, 1e-10, 1e-6),
) -> list[CheckRecord]:
    """
    Galilean, rotation and scaling equivariance, one record for each.

    * A frame velocity ``v`` must reproduce the direct solution shifted by
      ``v·T``. The integrators carry the drift as an exact translation,
      so agreement is to round-off while the flow stays below ``N``.
    * A signed permutation ``Q`` commutes with the grid and the dealiasing
      mask, so ``Qᵀu(Qx)`` agrees to round-off.
    * The problem dilated by ``scale`` on a grid ``scale`` times finer,
      with threshold ``N``, must match the coarse problem with threshold
      ``N / scale²`` run for ``scale²`` times as long.
    """
    basis = u0.basis
    if not isinstance(basis, TorusBasis):
        raise ConfigError("symmetry checks need a torus basis")
    if cfg.cfl is not None:
        raise ConfigError("symmetry checks need a fixed time step")
    if p.U is not None and any(np.asarray(shift, dtype=float)):
        raise ConfigError("a frame shift needs a steady reference field")
    if scale < 2 or int(scale) != scale:
        raise ConfigError(f"scale factor {scale} must be a whole number >= 2")
    if p.N / scale**2 < 1:
        raise ConfigError(
            f"threshold {p.N} cannot be scaled by 1/{scale**2} "
            "and stay at least 1",
        )
    try:
        Q = signed_permutation(rotation)
    except DomainError as error:
        raise ConfigError(str(error)) from error

    galilean, rotated, scaled = tolerances
    cfg = evolve(cfg, snapshots=(), state_cadence=0)
    direct = run(u0, p, cfg)

    v = np.asarray(shift, dtype=float)
    moving = run(u0, evolve(p, mean_flow=np.add(p.mean_flow, v)), cfg)
    records = [
        _comparison(
            "symmetry-galilean",
            moving.final,
            translate(direct.final, v * direct.horizon),
            galilean,
            shift=v,
        ),
    ]

    turned_p = evolve(
        p,
        U=None if p.U is None else rotate(p.U, Q),
        mean_flow=Q.T @ np.asarray(p.mean_flow),
    )
    turned = run(rotate(u0, Q), turned_p, cfg)
    records.append(
        _comparison(
            "symmetry-rotation",
            turned.final,
            rotate(direct.final, Q),
            rotated,
            rotation=Q,
        ),
    )

    fine_p = evolve(
        p,
        U=None if p.U is None else dilate(p.U, scale),
        mean_flow=scale * np.asarray(p.mean_flow),
    )
    fine = run(dilate(u0, scale), fine_p, cfg)
    coarse_cfg = evolve(cfg, dt=cfg.dt * scale**2, T=cfg.T * scale**2)
    coarse = run(u0, evolve(p, N=p.N / scale**2), coarse_cfg)
    records.append(
        _comparison(
            "symmetry-scaling",
            fine.final,
            dilate(coarse.final, scale),
            scaled,
            scale=scale,
            coarse_N=p.N / scale**2,
        ),
    )
    return records


def lq_moment_report(
    traj: Trajectory,
    q: float,
    r: float = 2.0,
) -> CheckRecord:
    """
    Growth of ``‖u‖^r_{Lq}`` against what the taming allows (informational).

    Evaluates ``‖u(t)‖^r ≤ ‖u₀‖^r + (rκN/ν)∫₀ᵗ‖u‖^r``, its Grönwall form
    ``‖u(t)‖^r ≤ ‖u₀‖^r exp((rκN/ν)t)`` and the companion inequality
    ``∫₀ᵗ‖u‖²_∞‖u‖^r ≤ (2ν/(rκ))‖u₀‖^r + 2N∫₀ᵗ‖u‖^r``. Whether they hold
    depends on κ exceeding an unknown multiple of ``q⁴``, so nothing is
    asserted.
    """
    name = f"lq-moments-{q:g}"
    column = traj.lq.get(float(q))
    if column is None:
        return CheckRecord(
            name=name,
            status=Status.SKIPPED,
            details=dict(reason=f"no L{q:g} norms were recorded"),
        )
    p, times = traj.params, traj.times
    moment = column**r
    rate = r * p.kappa * p.N / p.nu
    integral = cumulative_trapezoid(moment, times, initial=0)
    integral_form = moment[0] + rate * integral - moment
    gronwall = moment[0] * np.exp(np.minimum(rate * times, 700)) - moment
    weighted = cumulative_trapezoid(traj.sup**2 * moment, times, initial=0)
    companion = (
        2 * p.nu / (r * p.kappa) * moment[0] + 2 * p.N * integral - weighted
    )
    margin = float(min(integral_form.min(), gronwall.min()))
    return CheckRecord(
        name=name,
        status=Status.INFO,
        margin=margin,
        details=dict(
            q=q,
            r=r,
            kappa=p.kappa,
            integral_margin=float(integral_form.min()),
            gronwall_margin=float(gronwall.min()),
            companion_margin=float(companion.min()),
        ),
    )


def kappa_threshold(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    q: float,
    r: float = 2.0,
    lo: float = 1.0,
    hi: float = 64.0,
    iterations: int = 6,
) -> float | None:
    """
    The smallest κ (to bisection accuracy) at which the Lq moment bound holds.

    ``None`` means it fails even at ``hi``.
    """
    cfg = evolve(
        cfg,
        lq_exponents=sorted({*cfg.lq_exponents, float(q)}),
        state_cadence=0,
        snapshots=(),
    )

    def holds(kappa: float) -> bool:
        traj = run(u0, evolve(p, kappa=kappa), cfg)
        record = lq_moment_report(traj, q, r)
        scale = max(float(traj.lq[float(q)][0]) ** r, _TINY)
        return record.details["integral_margin"] >= -1e-12 * scale

    if holds(lo):
        return lo
    if not holds(hi):
        return None
    for _ in range(iterations):
        middle = float(np.sqrt(lo * hi))
        if holds(middle):
            hi = middle
        else:
            lo = middle
    return hi


def kappa_sweep(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    qs: Sequence[float] = (2, 4, 6),
    r: float = 2.0,
    **kwargs: Any,
) -> CheckRecord:
    """
    Empirical κ thresholds over ``qs``, and the exponent of their growth.
    """
    thresholds = {
        float(q): kappa_threshold(u0, p, cfg, q, r, **kwargs) for q in qs
    }
    finite = {q: kappa for q, kappa in thresholds.items() if kappa}
    exponent = None
    if len(finite) >= 2 and len(set(finite.values())) > 1:
        exponent = LineFit.through(
            np.log(list(finite)),
            np.log(list(finite.values())),
        ).slope
    return CheckRecord(
        name="kappa-sweep",
        status=Status.INFO,
        details=dict(
            thresholds={f"{q:g}": kappa for q, kappa in thresholds.items()},
            exponent=exponent,
        ),
    )


def _vorticity_residual(traj: Trajectory) -> float | None:
    """
    ``max_t ‖∂ₜω - RHS(u)‖`` with centered differences over stored states.
    """
    times = traj.state_times
    if times.size < 3 or traj.dt <= 0:
        return None
    if not np.allclose(np.diff(times), traj.dt, rtol=1e-9, atol=0):
        return None
    p, states = traj.params, traj.states
    worst = 0.0
    for before, here, after in zip(states, states[1:], states[2:]):
        rate = (curl(after) - curl(before)) * (1 / (2 * traj.dt))
        worst = max(worst, norm(rate - vorticity_rhs(here, p), "L2"))
    return worst


def vorticity_residual(
    traj: Trajectory,
    refined: Trajectory | None = None,
    slack: float = 0.5,
) -> CheckRecord:
    """
    How well stored states satisfy the vorticity equation.

    Alone, the residual is reported. Against a ``refined`` run (a smaller
    step over the same window) the residual must shrink at least at the
    integrator's order less ``slack``.
    """
    coarse = _vorticity_residual(traj)
    fine = None if refined is None else _vorticity_residual(refined)
    if coarse is None or (refined is not None and fine is None):
        return CheckRecord(
            name="vorticity",
            status=Status.INCONCLUSIVE,
            details=dict(reason="states must be stored at every step"),
        )
    if refined is None or fine is None:
        return CheckRecord(
            name="vorticity",
            status=Status.INFO,
            details=dict(residual=coarse),
        )
    nominal = _nominal_order(traj)
    scale = max(norm(curl(traj.initial), "L2"), _TINY)
    if max(coarse, fine) <= 1e-12 * scale:
        return CheckRecord(
            name="vorticity",
            status=Status.PASS,
            margin=0.0,
            details=dict(residual=coarse, refined_residual=fine, exact=True),
        )
    if fine == 0:
        return CheckRecord(
            name="vorticity",
            status=Status.INCONCLUSIVE,
            details=dict(residual=coarse, refined_residual=fine),
        )
    order = float(np.log(coarse / fine) / np.log(traj.dt / refined.dt))
    margin = order - (nominal - slack)
    return CheckRecord(
        name="vorticity",
        status=Status.judge(margin),
        margin=margin,
        details=dict(
            residual=coarse,
            refined_residual=fine,
            order=order,
            nominal=nominal,
        ),
    )


def threshold_fixed_point(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    iterations: int = 5,
    rtol: float = 1e-2,
) -> CheckRecord:
    """
    Iterate ``N ↦ sup_t ‖u_N(t) - U‖²_∞`` from the configured threshold.

    Iteration stops early once the threshold would fall below 1.
    """
    cfg = evolve(cfg, state_cadence=0, snapshots=())
    thresholds = [p.N]
    converged, reason = False, "iteration cap reached"
    for _ in range(iterations):
        traj = run(u0, evolve(p, N=thresholds[-1]), cfg)
        following = float(np.max(traj.tame_arg))
        if following < 1:
            reason = f"the next threshold {following!r} is below 1"
            break
        thresholds.append(following)
        if abs(following - thresholds[-2]) <= rtol * thresholds[-2]:
            converged, reason = True, "converged"
            break
    return CheckRecord(
        name="threshold",
        status=Status.INFO,
        details=dict(
            thresholds=thresholds,
            converged=converged,
            reason=reason,
        ),
    )


def refinement_runs(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
    levels: int = 3,
) -> list[Trajectory]:
    """
    Runs at ``dt``, ``dt/2``, ``dt/4``, ... keeping only what they need.
    """
    return [
        run(
            u0,
            p,
            evolve(
                cfg,
                dt=cfg.dt / 2**level,
                cadence=cfg.cadence * 2**level,
                state_cadence=0,
                snapshots=(),
            ),
        )
        for level in range(levels)
    ]


def convergence_order(
    trajectories: Sequence[Trajectory],
    tolerance: float = 0.3,
) -> CheckRecord:
    """
    The observed order from final states of successively refined runs.
    """
    if len(trajectories) < 3:
        raise DomainError("an order estimate needs at least three runs")
    coarse, middle, fine = trajectories[-3:]
    ratio = coarse.dt / middle.dt
    first = norm(coarse.final - middle.final, "L2")
    second = norm(middle.final - fine.final, "L2")
    scale = norm(fine.final, "L2")
    nominal = _nominal_order(fine)
    details: dict[str, Any] = dict(
        errors=[first, second],
        nominal=nominal,
        dts=[each.dt for each in trajectories],
    )
    if max(first, second) <= 1e-12 * scale:
        return CheckRecord(
            name="convergence-order",
            status=Status.PASS,
            margin=tolerance,
            details=dict(details, exact=True),
        )
    if second == 0:
        return CheckRecord(
            name="convergence-order",
            status=Status.INCONCLUSIVE,
            details=details,
        )
    order = float(np.log(first / second) / np.log(ratio))
    margin = tolerance - abs(order - nominal)
    return CheckRecord(
        name="convergence-order",
        status=Status.judge(margin),
        margin=margin,
        details=dict(details, order=order),
    )


def check_valve(
    u0: SpectralField,
    p: TamingParams,
    cfg: SolverConfig,
) -> CheckRecord:
    """
    Far above the largest ``‖u - U‖²_∞``, taming must change nothing at all.
    """
    cfg = _keeping_states(cfg)
    untamed = run(u0, evolve(p, tamed=False), cfg)
    threshold = max(10 * float(np.max(untamed.tame_arg)), p.N)
    tamed = run(u0, evolve(p, N=threshold, tamed=True), cfg)
    identical = all(
        arrays_equal(u.coefficients, v.coefficients)
        for u, v in zip(
            (*untamed.states, untamed.final),
            (*tamed.states, tamed.final),
        )
    )
    return CheckRecord(
        name="valve",
        status=Status.PASS if identical else Status.FAIL,
        details=dict(N=threshold, identical=identical),
    )


def corrupt_energy(traj: Trajectory, factor: float = 1.01) -> Trajectory:
    """
    A copy of ``traj`` whose energy is multiplied by ``factor`` after t = 0.
    """
    l2 = np.array(traj.l2)
    l2[1:] *= np.sqrt(factor)
    return evolve(traj, l2=l2)


def trajectory_checks(
    traj: Trajectory,
    enabled: Iterable[str] = TRAJECTORY_CHECKS,
    energy_rtol: float = ENERGY_RTOL,
    lq_r: float = 2.0,
) -> list[CheckRecord]:
    """
    Every enabled check which needs nothing but the trajectory.
    """

    def lq_reports() -> list[CheckRecord]:
        if not traj.lq:
            return [
                CheckRecord(
                    name="lq-moments",
                    status=Status.SKIPPED,
                    details=dict(reason="no Lq norms were recorded"),
                ),
            ]
        return [lq_moment_report(traj, q, lq_r) for q in traj.lq]

    checks: dict[str, Callable[[], list[CheckRecord]]] = {
        "energy": lambda: [check_energy(traj, energy_rtol)],
        "gradient": lambda: [check_gradient_bound(traj, energy_rtol)],
        "decay": lambda: [check_decay(traj)],
        "tame-time": lambda: [tame_time_measure(traj)],
        "lq-moments": lq_reports,
        "vorticity": lambda: [vorticity_residual(traj)],
    }
    records: list[CheckRecord] = []
    for name in enabled:
        if name in checks:
            records.extend(checks[name]())
    return records
