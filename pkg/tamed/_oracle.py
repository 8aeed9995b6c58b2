"""
A brute-force reference path, sharing no nonlinearity code with the solver.

`dense_B` evaluates the advection term as a direct sum over interacting
wavevector pairs with an explicit per-mode Leray projector, and
`reference_integrate` hands the resulting mode ODE system to an adaptive
Dormand-Prince integrator. Both are only practical at tiny resolutions and
exist for cross-checking the pseudospectral solver.
"""

from __future__ import annotations

from functools import cache
from typing import TYPE_CHECKING, Any, Literal

from attrs import evolve
from scipy.integrate import solve_ivp
import numpy as np
import structlog

from tamed._integrators import Trajectory
from tamed._rhs import check_taming, taming_g
from tamed._spectral import ManufacturedBasis, SpectralField, TorusBasis
from tamed.exceptions import (
    BlowUp,
    DomainError,
    ResolutionCapExceeded,
    StiffnessError,
    StructuralError,
)

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from tamed._rhs import TamingParams
    from tamed._spectral import StokesBasis

log = structlog.stdlib.get_logger()

#: The largest grid (per axis) the dense sums are allowed to run at.
RESOLUTION_CAP = 12

Truncation = Literal["dealias", "full"]


@cache
def _output_basis(basis: TorusBasis, truncation: Truncation) -> TorusBasis:
    match truncation:
        case "dealias":
            return basis
        case "full":
            return evolve(basis, dealias=1.0)
        case _:
            raise DomainError(f"{truncation!r} is not a truncation rule")


def _support(basis: TorusBasis) -> NDArray[np.int64]:
    """
    Integer wavevectors of every retained mode, both halves, shape ``(R, 3)``.
    """
    return np.argwhere(basis.retained)


def _on_support(
    coefficients: NDArray[Any],
    index: NDArray[np.int64],
) -> NDArray[np.complex128]:
    return np.asarray(coefficients)[:, index[:, 0], index[:, 1], index[:, 2]]


def dense_B(
    v: SpectralField,
    u: SpectralField,
    truncation: Truncation = "dealias",
) -> SpectralField:
    """
    ``-P((v·∇)u)`` as a sum over all pairs ``p + q = k``.

    With ``dealias`` truncation the output keeps the modes of ``u``'s basis,
    which makes it the exact Galerkin truncation the pseudospectral solver
    computes. With ``full`` it keeps every mode below the Nyquist frequency
    of the same grid.
    """
    basis = u.basis
    if not isinstance(basis, TorusBasis) or v.basis != basis:
        raise StructuralError("dense_B needs both fields on one torus basis")
    if basis.n > RESOLUTION_CAP:
        raise ResolutionCapExceeded(n=basis.n, cap=RESOLUTION_CAP)

    out_basis = _output_basis(basis, truncation)
    n, scale = basis.n, 2 * np.pi / basis.length
    index = _support(basis)
    K = np.where(index > n // 2 - 1, index - n, index)
    v_hat = _on_support(v.coefficients, index)
    u_hat = _on_support(u.coefficients, index)

    # (v̂(p) · i q) û(q) for every pair, landing on k = p + q
    along = 1j * scale * np.einsum("ip,qi->pq", v_hat, K)
    terms = along[np.newaxis] * u_hat[:, np.newaxis, :]
    k = K[:, np.newaxis, :] + K[np.newaxis, :, :]

    bound = out_basis.dealias * n - 1e-9
    keep = np.all(2 * np.abs(k) < bound, axis=-1) & np.any(k != 0, axis=-1)
    target = k[keep] % n
    advected = np.zeros((3, n, n, n), dtype=complex)
    for i in range(3):
        np.add.at(
            advected[i],
            (target[:, 0], target[:, 1], target[:, 2]),
            terms[i][keep],
        )

    wavevectors = out_basis.wavevectors
    lam = np.sum(wavevectors**2, axis=0)
    lam[0, 0, 0] = 1.0
    projector = (
        np.eye(3)[:, :, np.newaxis, np.newaxis, np.newaxis]
        - np.einsum("ixyz,jxyz->ijxyz", wavevectors, wavevectors) / lam
    )
    projected = np.einsum("ijxyz,jxyz->ixyz", projector, advected)
    return SpectralField(
        basis=out_basis,
        coefficients=-projected * out_basis.retained,
    )


class _DenseSampler:
    """
    Grid values by direct summation of exponentials, no FFT.
    """

    def __init__(self, basis: TorusBasis):
        m = basis.oversample * basis.n
        x = np.arange(m) * (basis.length / m)
        points = np.stack(np.meshgrid(x, x, x, indexing="ij")).reshape(3, -1)
        index = _support(basis)
        n = basis.n
        K = np.where(index > n // 2 - 1, index - n, index)
        phase = (2 * np.pi / basis.length) * (K @ points)
        self._index = index
        self._exponentials = np.exp(1j * phase).T

    def sup_sq(self, coefficients: NDArray[Any]) -> float:
        on_support = _on_support(coefficients, self._index)
        values = self._exponentials @ on_support.T
        return float(np.max(np.sum(values.real**2, axis=1)))


def _torus_rhs(basis: TorusBasis, p: TamingParams):
    sampler = _DenseSampler(basis)
    lam = np.sum(basis.wavevectors**2, axis=0) * basis.retained
    velocity = np.asarray(p.mean_flow)
    drift = np.einsum("i,ixyz->xyz", velocity, basis.wavevectors)
    linear = -p.nu * lam - 1j * drift * basis.retained
    reference = None if p.U is None else np.asarray(p.U.coefficients)

    def rhs(coefficients: NDArray[np.complex128]) -> NDArray[np.complex128]:
        u = SpectralField(basis=basis, coefficients=coefficients)
        total = linear[np.newaxis] * coefficients
        if p.advection != "none":
            total = total + dense_B(u, u).coefficients
        away = coefficients if reference is None else coefficients - reference
        g = taming_g(sampler.sup_sq(away), p)
        if g:
            total = total - g * away
        return total

    return rhs


def _manufactured_rhs(basis: StokesBasis, p: TamingParams):
    if not isinstance(basis, ManufacturedBasis):
        raise StructuralError(f"no reference path for a {basis.kind} basis")
    if p.advection != "none" or p.has_mean_flow:
        raise StructuralError(
            "manufactured bases have no nonlinearity; use advection 'none'",
        )
    check_taming(basis, p)
    matrix = basis.matrix

    def rhs(coefficients: NDArray[np.float64]) -> NDArray[np.float64]:
        return -p.nu * (matrix @ coefficients)

    return rhs


def reference_integrate(
    u0: SpectralField,
    p: TamingParams,
    T: float,
    rtol: float = 1e-10,
    dt: float | None = None,
) -> Trajectory:
    """
    Integrate the mode ODE system with adaptive RK45 to relative tolerance.

    States are reported every ``dt`` when given, otherwise at every accepted
    step of the integrator.
    """
    if not rtol >= 1e-12:
        raise DomainError(f"reference tolerance {rtol} is below 1e-12")
    if not T > 0:
        raise DomainError(f"the horizon must be positive, not {T}")
    basis = u0.basis
    if isinstance(basis, TorusBasis):
        if basis.n > RESOLUTION_CAP:
            raise ResolutionCapExceeded(n=basis.n, cap=RESOLUTION_CAP)
        rhs = _torus_rhs(basis, p)
    else:
        rhs = _manufactured_rhs(basis, p)

    shape = basis.coefficient_shape
    complex_state = np.iscomplexobj(basis.zeros())

    def pack(coefficients: NDArray[Any]) -> NDArray[np.float64]:
        flat = np.asarray(coefficients).reshape(-1)
        if complex_state:
            return np.concatenate([flat.real, flat.imag])
        return flat.astype(float)

    def unpack(y: NDArray[np.float64]) -> NDArray[Any]:
        if complex_state:
            half = y.size // 2
            return (y[:half] + 1j * y[half:]).reshape(shape)
        return y.reshape(shape)

    y0 = pack(u0.coefficients)
    atol = rtol * max(float(np.abs(y0).max(initial=0)), 1e-300)
    t_eval = None if dt is None else np.arange(round(T / dt) + 1) * dt
    solution = solve_ivp(
        lambda _, y: pack(rhs(unpack(y))),
        (0.0, T),
        y0,
        method="RK45",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
    )
    if solution.status == -1:
        raise StiffnessError(
            f"{solution.message} Try a smaller ν·λ_max·dt regime.",
        )
    if not np.all(np.isfinite(solution.y)):
        raise BlowUp(time=float(solution.t[-1]))
    log.info(
        "reference integration finished",
        evaluations=solution.nfev,
        horizon=T,
        rtol=rtol,
    )
    states = [
        SpectralField(basis=basis, coefficients=unpack(y))
        for y in solution.y.T
    ]
    return Trajectory.from_states(
        solution.t,
        states,
        p,
        meta=dict(mode="reference", rtol=rtol, evaluations=solution.nfev),
    )
