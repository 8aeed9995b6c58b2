"""
The tamed right-hand side and its pieces.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Literal

from attrs import field, frozen
import numpy as np

from tamed._spectral import (
    SpectralField,
    TorusBasis,
    apply_A,
    norm,
)
from tamed.exceptions import ConfigError, DomainError, StructuralError

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from tamed._spectral import StokesBasis

AdvectionForm = Literal["convective", "skew", "none"]
ADVECTION_FORMS: tuple[AdvectionForm, ...] = ("convective", "skew", "none")


def _velocity(value: object) -> tuple[float, float, float]:
    x, y, z = np.asarray(value, dtype=float).reshape(3)
    return float(x), float(y), float(z)


@frozen
class TamingParams:
    """
    Viscosity, taming strength and threshold, plus an optional reference field.

    ``mean_flow`` is a constant velocity ``v`` carried outside of the mean
    mode. The flow is ``u + v``, the reference field's constant part is ``v``
    too, and ``-(v·∇)u`` is integrated exactly along with the viscous term.
    """

    nu: float
    kappa: float = 1.0
    N: float = 1.0
    U: SpectralField | None = None
    mean_flow: tuple[float, float, float] = field(
        default=(0.0, 0.0, 0.0),
        converter=_velocity,
    )
    advection: AdvectionForm = "convective"
    tamed: bool = True

    def __attrs_post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"viscosity must be positive, not {self.nu}")
        if not self.kappa >= 1:
            raise DomainError(f"kappa must be at least 1, not {self.kappa}")
        if not self.N >= 1:
            raise DomainError(f"threshold N must be at least 1, not {self.N}")
        if self.advection not in ADVECTION_FORMS:
            raise DomainError(
                f"{self.advection!r} is not an advection form "
                f"({', '.join(ADVECTION_FORMS)})",
            )
        if not all(np.isfinite(self.mean_flow)):
            raise DomainError(f"mean flow {self.mean_flow} is not finite")

    @property
    def has_mean_flow(self) -> bool:
        return any(self.mean_flow)

    def describe(self) -> dict[str, object]:
        return dict(
            nu=self.nu,
            kappa=self.kappa,
            N=self.N,
            reference=self.U is not None,
            mean_flow=list(self.mean_flow),
            advection=self.advection,
            tamed=self.tamed,
        )


def taming_g(r: float, p: TamingParams) -> float:
    """
    ``κ (r - N) / ν`` at or above the threshold, zero below it.
    """
    if not p.tamed or r < p.N:
        return 0.0
    return p.kappa * (r - p.N) / p.nu


def _torus(u: SpectralField) -> TorusBasis:
    if not isinstance(u.basis, TorusBasis):
        raise StructuralError(
            f"the nonlinearity needs a torus basis, not a {u.basis.kind} one",
        )
    return u.basis


def _finish(
    basis: TorusBasis,
    advected: NDArray[np.complex128],
) -> SpectralField:
    """
    ``-P`` of a truncated spectral vector field.
    """
    projected = basis.project(advected)
    return SpectralField(
        basis=basis,
        coefficients=-basis.symmetrize(projected),
    )


def bilinear_B(
    v: SpectralField,
    u: SpectralField,
    form: AdvectionForm = "convective",
) -> SpectralField:
    """
    ``B(v, u) = -P((v·∇) u)``, pseudospectrally and dealiased.

    The ``skew`` form averages the convective and divergence forms,
    ``½ [(v·∇)u + ∇·(v ⊗ u)]``, which agree for divergence-free ``v``.
    """
    basis = _torus(u)
    if v.basis != basis:
        raise StructuralError("B(v, u) needs v and u to share a basis")
    if form == "none":
        return SpectralField.zeros(basis)

    velocity = v.samples()
    gradient = basis.gradient(u.coefficients)
    convective = np.einsum("jxyz,ijxyz->ixyz", velocity, gradient)
    advected = basis.analyze(convective)
    if form == "skew":
        flux = velocity[np.newaxis] * u.samples()[:, np.newaxis]
        divergence = np.einsum(
            "jxyz,ijxyz->ixyz",
            1j * basis.wavevectors,
            basis.analyze(flux),
        )
        advected = (advected + divergence) / 2
    return _finish(basis, advected * basis.retained)


def frame_advection(u: SpectralField, p: TamingParams) -> SpectralField:
    """
    ``-(v·∇)u`` for the constant frame velocity ``v``.
    """
    if not p.has_mean_flow:
        return SpectralField.zeros(u.basis)
    basis = _torus(u)
    drift = basis.drift_symbol(p.mean_flow)
    return SpectralField(
        basis=basis,
        coefficients=-1j * drift[np.newaxis] * u.coefficients,
    )


@frozen
class RhsBreakdown:
    """
    Each addend of the tamed right-hand side, evaluated at one state.
    """

    stokes_part: SpectralField
    advection_part: SpectralField
    taming_part: SpectralField
    g_value: float
    sup_sq: float
    frame_part: SpectralField | None = None

    @property
    def nonlinear(self) -> SpectralField:
        """
        What an exponential integrator treats explicitly.
        """
        if self.g_value == 0:
            return self.advection_part
        return self.advection_part + self.taming_part

    @property
    def total(self) -> SpectralField:
        total = self.stokes_part + self.nonlinear
        if self.frame_part is not None:
            total = total + self.frame_part
        return total


def deviation(u: SpectralField, p: TamingParams) -> SpectralField:
    """
    ``u - U``, the field the taming acts on.
    """
    return u if p.U is None else u - p.U


def check_taming(basis: StokesBasis, p: TamingParams) -> bool:
    """
    Whether ``‖u - U‖²_∞`` can be sampled in this basis.

    Only a torus grid can sample it, so a tamed flow in any other basis
    is a `ConfigError`.
    """
    if isinstance(basis, TorusBasis):
        return True
    if p.tamed:
        raise ConfigError(
            f"taming needs a torus basis, not a {basis.kind} one; "
            "set taming.tamed = false",
            key="taming.tamed",
        )
    return False


def tamed_rhs(u: SpectralField, p: TamingParams) -> RhsBreakdown:
    """
    ``-νAu + B(u, u) - g(‖u - U‖²_∞)(u - U)``, addend by addend.
    """
    if p.U is not None and p.U.basis != u.basis:
        raise StructuralError("the reference field lives in another basis")
    away = deviation(u, p)
    sup_sq = norm(away, "sup") ** 2 if check_taming(u.basis, p) else 0.0
    g = taming_g(sup_sq, p)
    return RhsBreakdown(
        stokes_part=-p.nu * apply_A(u),
        advection_part=bilinear_B(u, u, p.advection)
        if p.advection != "none"
        else SpectralField.zeros(u.basis),
        taming_part=-g * away if g else SpectralField.zeros(u.basis),
        g_value=g,
        sup_sq=sup_sq,
        frame_part=frame_advection(u, p) if p.has_mean_flow else None,
    )


def curl(u: SpectralField) -> SpectralField:
    """
    The vorticity ``ik × û``, which is solenoidal without any projection.

    With this convention ``(0, 0, sin x)`` has curl ``(0, -cos x, 0)``.
    """
    basis = _torus(u)
    k = basis.wavevectors
    return SpectralField(
        basis=basis,
        coefficients=1j * np.cross(k, u.coefficients, axis=0),
    )


def vorticity_rhs(u: SpectralField, p: TamingParams) -> SpectralField:
    """
    ``νΔω + (ω·∇)u - (u·∇)ω - g(‖u - U‖²_∞)(ω - curl U)``.

    A frame velocity adds ``-(v·∇)ω``.
    """
    basis = _torus(u)
    omega = curl(u)
    velocity = u.samples()
    vorticity = omega.samples()
    stretching = np.einsum(
        "jxyz,ijxyz->ixyz",
        vorticity,
        basis.gradient(u.coefficients),
    )
    advection = np.einsum(
        "jxyz,ijxyz->ixyz",
        velocity,
        basis.gradient(omega.coefficients),
    )
    if p.advection == "none":
        transport = basis.zeros()
    else:
        transport = basis.analyze(stretching - advection) * basis.retained
    total = SpectralField(
        basis=basis,
        coefficients=basis.symmetrize(transport),
    )
    total = total - p.nu * apply_A(omega)
    if p.has_mean_flow:
        total = total + frame_advection(omega, p)
    g = taming_g(norm(deviation(u, p), "sup") ** 2, p)
    if g:
        reference = omega if p.U is None else omega - curl(p.U)
        total = total - g * reference
    return total
