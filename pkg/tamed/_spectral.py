"""
The Stokes operator via its spectral decomposition, and fields expanded in it.

Two realizations of the operator exist. A `TorusBasis` is the Fourier basis of
mean-zero divergence-free fields on a periodic box, where the Leray projector
and the eigenfields are explicit. A `ManufacturedBasis` is a dense symmetric
positive matrix with a prescribed spectrum, which exercises the operator
algebra without any FFTs.

Coefficients of a torus field are stored in full FFT layout, shape
``(3, n, n, n)``, normalized so that ``u(x) = sum_k û(k) exp(i k·x)``. Modal
coordinates are the coefficients against an orthonormal eigenbasis, listed in
ascending eigenvalue order, so that ``‖u‖²_{L²}`` is the plain sum of their
squared moduli.
"""

from __future__ import annotations

from functools import cached_property
from pathlib import Path
from typing import TYPE_CHECKING, Any, ClassVar, Literal, Protocol
import struct
import threading

from attrs import cmp_using, evolve, field, frozen
import numpy as np
import scipy.fft
import scipy.linalg

from tamed._core import arrays_equal, atomic_write, frozen_array
from tamed.exceptions import DomainError, StructuralError

if TYPE_CHECKING:
    from collections.abc import Callable

    from numpy.typing import ArrayLike, NDArray

    Symbol = NDArray[Any]

TWO_PI = 2 * np.pi

#: Relative tolerance for the structural invariants of a field.
STRUCTURAL_RTOL = 1e-12

NormKind = Literal["L2", "H1", "H2", "Lq", "sup"]
NORM_KINDS: tuple[NormKind, ...] = ("L2", "H1", "H2", "Lq", "sup")


class StokesBasis(Protocol):
    """
    A spectral realization of the Stokes operator.

    Operators act through *symbols*, arrays laid out however the realization
    likes, built from a function of the eigenvalue via `symbol` and applied
    to coefficients via `multiply`.
    """

    kind: ClassVar[str]

    @property
    def eigenvalues(self) -> NDArray[np.float64]:
        """
        Every eigenvalue, ascending, one per modal coordinate.
        """
        ...

    @property
    def mode_count(self) -> int: ...

    @property
    def coefficient_shape(self) -> tuple[int, ...]: ...

    def zeros(self) -> NDArray[Any]: ...

    def symbol(self, fn: Callable[[NDArray[Any]], NDArray[Any]]) -> Symbol:
        """
        The symbol of ``fn(A)``.
        """
        ...

    def multiply(
        self,
        coefficients: NDArray[Any],
        symbol: Symbol,
    ) -> NDArray[Any]: ...

    def to_modal(self, coefficients: NDArray[Any]) -> NDArray[Any]: ...

    def from_modal(self, modal: ArrayLike) -> NDArray[Any]: ...

    def check(self, coefficients: NDArray[Any]) -> None:
        """
        Raise `StructuralError` unless the coefficients are a valid field.
        """
        ...

    def describe(self) -> dict[str, Any]: ...


def _wavenumbers(n: int) -> NDArray[np.int64]:
    return np.rint(np.fft.fftfreq(n, 1 / n)).astype(np.int64)


@frozen
class TorusBasis:
    """
    Fourier modes on the periodic box ``[0, length)³``, ``n`` points per axis.

    A wavevector is retained when it is nonzero and every component satisfies
    ``|k_i| < dealias · n / 2``, so at the default ``dealias = 2/3`` the
    quadratic nonlinearity is computed free of aliasing.
    """

    kind: ClassVar[str] = "torus"

    n: int = 16
    length: float = TWO_PI
    dealias: float = 2 / 3
    oversample: int = 2
    workers: int | None = field(default=None, eq=False, repr=False)

    def __attrs_post_init__(self):
        if self.n < 4 or self.n % 2:
            raise DomainError(f"resolution {self.n} must be even and >= 4")
        if not self.length > 0:
            raise DomainError(f"box length {self.length} must be positive")
        if not 0 < self.dealias <= 1:
            raise DomainError(f"dealias fraction {self.dealias} not in (0, 1]")
        if self.oversample < 1:
            raise DomainError(f"oversampling {self.oversample} must be >= 1")
        if not self.retained.any():
            raise DomainError(
                f"n={self.n} at dealias {self.dealias} retains no modes",
            )

    @cached_property
    def integer_wavevectors(self) -> NDArray[np.int64]:
        """
        Integer wavevectors in FFT layout, shape ``(3, n, n, n)``.
        """
        kint = _wavenumbers(self.n)
        mesh = np.meshgrid(kint, kint, kint, indexing="ij")
        return frozen_array(np.stack(mesh))

    @cached_property
    def wavevectors(self) -> NDArray[np.float64]:
        """
        Physical wavevectors ``2π k / L`` in FFT layout.
        """
        return frozen_array(self.integer_wavevectors * (TWO_PI / self.length))

    @cached_property
    def retained(self) -> NDArray[np.bool_]:
        K = self.integer_wavevectors
        bound = self.dealias * self.n - 1e-9
        inside = np.all(2 * np.abs(K) < bound, axis=0)
        return frozen_array(inside & np.any(K != 0, axis=0))

    @cached_property
    def _safe_lam(self) -> NDArray[np.float64]:
        k = self.wavevectors
        lam = np.sum(k * k, axis=0)
        return frozen_array(np.where(self.retained, lam, 1.0))

    @cached_property
    def _modes(self) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        """
        Indices of the canonical half of the retained set, sorted, and of
        their mirror images.
        """
        K = self.integer_wavevectors
        kx, ky, kz = K
        canonical = (kz > 0) | ((kz == 0) & (ky > 0))
        canonical |= (kz == 0) & (ky == 0) & (kx > 0)
        index = np.array(np.nonzero(self.retained & canonical))
        k = K[(slice(None), *index)]
        order = np.lexsort((k[2], k[1], k[0], np.sum(k * k, axis=0)))
        index = index[:, order]
        mirror = (-index) % self.n
        return frozen_array(index), frozen_array(mirror)

    @cached_property
    def mode_wavevectors(self) -> NDArray[np.int64]:
        """
        The canonical integer wavevector of each mode pair, shape ``(M, 3)``.
        """
        index, _ = self._modes
        return frozen_array(self.integer_wavevectors[(slice(None), *index)].T)

    @cached_property
    def mode_ids(self) -> tuple[tuple[int, int, int, int], ...]:
        """
        ``(kx, ky, kz, polarization)`` for each modal coordinate, in order.
        """
        return tuple(
            (int(kx), int(ky), int(kz), p)
            for kx, ky, kz in self.mode_wavevectors
            for p in (0, 1)
        )

    @cached_property
    def polarizations(self) -> NDArray[np.float64]:
        """
        Real orthonormal divergence-free directions, shape ``(2, 3, M)``.
        """
        k = self.mode_wavevectors.astype(float)
        along_z = (k[:, 0] == 0) & (k[:, 1] == 0)
        helper = np.zeros_like(k)
        helper[~along_z, 2] = 1
        helper[along_z, 0] = 1
        first = np.cross(k, helper)
        first /= np.linalg.norm(first, axis=1, keepdims=True)
        khat = k / np.linalg.norm(k, axis=1, keepdims=True)
        second = np.cross(khat, first)
        return frozen_array(np.stack([first.T, second.T]))

    @cached_property
    def eigenvalues(self) -> NDArray[np.float64]:
        index, _ = self._modes
        lam = self._safe_lam[tuple(index)]
        return frozen_array(np.repeat(lam, 2))

    @property
    def mode_count(self) -> int:
        return 2 * self._modes[0].shape[1]

    @property
    def coefficient_shape(self) -> tuple[int, ...]:
        return (3, self.n, self.n, self.n)

    @property
    def _modal_scale(self) -> float:
        return float(np.sqrt(2 * self.length**3))

    def zeros(self) -> NDArray[np.complex128]:
        return np.zeros(self.coefficient_shape, dtype=complex)

    def symbol(self, fn: Callable[[NDArray[Any]], NDArray[Any]]) -> Symbol:
        return np.where(self.retained, fn(self._safe_lam), 0)

    def drift_symbol(self, velocity: ArrayLike) -> NDArray[np.float64]:
        """
        ``k · v`` on the retained set, the symbol of ``(v · ∇) / i``.
        """
        v = np.asarray(velocity, dtype=float)
        drift = np.einsum("i,ixyz->xyz", v, self.wavevectors)
        return np.where(self.retained, drift, 0.0)

    def multiply(
        self,
        coefficients: NDArray[Any],
        symbol: Symbol,
    ) -> NDArray[Any]:
        return coefficients * symbol[np.newaxis]

    def to_modal(self, coefficients: NDArray[Any]) -> NDArray[np.complex128]:
        index, _ = self._modes
        uk = coefficients[(slice(None), *index)]
        modal = np.einsum("pim,im->mp", self.polarizations, uk)
        return modal.reshape(-1) * self._modal_scale

    def from_modal(self, modal: ArrayLike) -> NDArray[np.complex128]:
        index, mirror = self._modes
        pairs = np.asarray(modal, dtype=complex).reshape(-1, 2)
        uk = np.einsum("pim,mp->im", self.polarizations, pairs)
        uk /= self._modal_scale
        out = self.zeros()
        out[(slice(None), *index)] = uk
        out[(slice(None), *mirror)] = np.conj(uk)
        return out

    def mirrored(self, coefficients: NDArray[Any]) -> NDArray[Any]:
        """
        The coefficients at ``-k`` for every ``k``.
        """
        flipped = np.flip(coefficients, axis=(1, 2, 3))
        return np.roll(flipped, 1, axis=(1, 2, 3))

    def symmetrize(self, coefficients: NDArray[Any]) -> NDArray[np.complex128]:
        """
        Enforce conjugate symmetry, which is what makes samples real.
        """
        return (coefficients + np.conj(self.mirrored(coefficients))) / 2

    def project(self, coefficients: NDArray[Any]) -> NDArray[np.complex128]:
        """
        Apply the per-mode Leray projector ``I - k kᵀ / |k|²`` and truncate.
        """
        k = self.wavevectors
        along = np.einsum("ixyz,ixyz->xyz", k, coefficients) / self._safe_lam
        projected = coefficients - k * along[np.newaxis]
        return projected * self.retained[np.newaxis]

    def gradient(self, coefficients: NDArray[Any]) -> NDArray[np.float64]:
        """
        Grid samples of ``∂_j u_i``, shape ``(3, 3, n, n, n)``.
        """
        k = self.wavevectors[np.newaxis]
        spectral = 1j * k * coefficients[:, np.newaxis]
        return self.synthesize(spectral)

    def synthesize(
        self,
        coefficients: NDArray[Any],
        oversample: int = 1,
    ) -> NDArray[np.float64]:
        """
        Real grid samples from spectral coefficients along the last three axes.
        """
        m = oversample * self.n
        padded = self.pad(coefficients, m)
        values = scipy.fft.ifftn(
            padded,
            axes=(-3, -2, -1),
            workers=self.workers,
        )
        return np.ascontiguousarray((values * m**3).real)

    def analyze(self, values: NDArray[Any]) -> NDArray[np.complex128]:
        """
        Spectral coefficients from grid samples along the last three axes.
        """
        spectral = scipy.fft.fftn(
            values,
            axes=(-3, -2, -1),
            workers=self.workers,
        )
        return spectral / self.n**3

    def pad(self, coefficients: NDArray[Any], m: int) -> NDArray[Any]:
        """
        Embed coefficients in the FFT layout of an ``m``-point grid.

        Only retained modes are carried over, which is lossless for valid
        fields since everything else is zero.
        """
        if m == self.n:
            return coefficients
        kint = _wavenumbers(self.n) % m
        out = np.zeros((*coefficients.shape[:-3], m, m, m), dtype=complex)
        masked = coefficients * self.retained
        out[(..., *np.ix_(kint, kint, kint))] = masked
        return out

    def grid(self, oversample: int = 1) -> NDArray[np.float64]:
        """
        Collocation points, shape ``(3, m, m, m)`` for ``m = oversample · n``.
        """
        m = oversample * self.n
        x = np.arange(m) * (self.length / m)
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    def check(self, coefficients: NDArray[Any]) -> None:
        """
        Raise unless coefficients represent a valid field of this basis.
        """
        if coefficients.shape != self.coefficient_shape:
            raise StructuralError(
                f"coefficients of shape {coefficients.shape} do not fit "
                f"a torus basis at n={self.n}",
            )
        scale = max(float(np.abs(coefficients).max(initial=0)), 1e-300)
        outside = np.abs(coefficients * ~self.retained).max(initial=0)
        if outside > STRUCTURAL_RTOL * scale:
            raise StructuralError("coefficients outside of the retained modes")
        unreal = np.abs(coefficients - np.conj(self.mirrored(coefficients)))
        if unreal.max(initial=0) > STRUCTURAL_RTOL * scale:
            raise StructuralError("coefficients are not conjugate symmetric")
        k = self.wavevectors
        divergence = np.abs(np.einsum("ixyz,ixyz->xyz", k, coefficients))
        size = np.sqrt(self._safe_lam) * np.linalg.norm(coefficients, axis=0)
        if np.any(divergence > STRUCTURAL_RTOL * np.maximum(size, scale)):
            raise StructuralError("coefficients are not divergence free")

    def describe(self) -> dict[str, Any]:
        return dict(
            kind=self.kind,
            n=self.n,
            length=self.length,
            dealias=self.dealias,
            oversample=self.oversample,
            mode_count=self.mode_count,
        )


def _sorted_spectrum(values: ArrayLike) -> NDArray[np.float64]:
    return frozen_array(np.sort(np.asarray(values, dtype=float)))


@frozen(eq=False)
class ManufacturedBasis:
    """
    A dense symmetric positive matrix with a prescribed spectrum.

    Fields are real vectors. There is no grid, so grid-based operations raise
    `StructuralError`. Two instances are only equal if they are the same one.
    """

    kind: ClassVar[str] = "manufactured"

    spectrum: NDArray[np.float64] = field(converter=_sorted_spectrum)
    seed: int = 0

    def __attrs_post_init__(self):
        if self.spectrum.ndim != 1 or self.spectrum.size == 0:
            raise DomainError("a manufactured spectrum must be nonempty")
        if not np.all(self.spectrum > 0):
            raise DomainError("a manufactured spectrum must be positive")

    @cached_property
    def matrix(self) -> NDArray[np.float64]:
        m = self.spectrum.size
        rng = np.random.default_rng(self.seed)
        q, _ = scipy.linalg.qr(rng.standard_normal((m, m)))
        matrix = (q * self.spectrum) @ q.T
        return frozen_array((matrix + matrix.T) / 2)

    @cached_property
    def _eigh(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        w, v = scipy.linalg.eigh(self.matrix)
        return frozen_array(w), frozen_array(v)

    @property
    def eigenvalues(self) -> NDArray[np.float64]:
        return self._eigh[0]

    @property
    def mode_count(self) -> int:
        return self.spectrum.size

    @property
    def coefficient_shape(self) -> tuple[int, ...]:
        return (self.spectrum.size,)

    def zeros(self) -> NDArray[np.float64]:
        return np.zeros(self.coefficient_shape)

    def symbol(self, fn: Callable[[NDArray[Any]], NDArray[Any]]) -> Symbol:
        return np.asarray(fn(self.eigenvalues))

    def multiply(
        self,
        coefficients: NDArray[Any],
        symbol: Symbol,
    ) -> NDArray[Any]:
        vectors = self._eigh[1]
        result = vectors @ (symbol * (vectors.T @ coefficients))
        return np.real(result) if np.isrealobj(coefficients) else result

    def to_modal(self, coefficients: NDArray[Any]) -> NDArray[np.float64]:
        return self._eigh[1].T @ coefficients

    def from_modal(self, modal: ArrayLike) -> NDArray[np.float64]:
        return self._eigh[1] @ np.real(np.asarray(modal))

    def check(self, coefficients: NDArray[Any]) -> None:
        if coefficients.shape != self.coefficient_shape:
            raise StructuralError(
                f"coefficients of shape {coefficients.shape} do not fit a "
                f"manufactured basis with {self.mode_count} modes",
            )
        if np.iscomplexobj(coefficients):
            raise StructuralError("manufactured fields are real vectors")

    def describe(self) -> dict[str, Any]:
        return dict(kind=self.kind, mode_count=self.mode_count, seed=self.seed)


def _require_torus(basis: StokesBasis, operation: str) -> TorusBasis:
    if not isinstance(basis, TorusBasis):
        raise StructuralError(
            f"{operation} needs a grid, which a {basis.kind} basis lacks",
        )
    return basis


@frozen
class SpectralField:
    """
    A divergence-free, mean-zero, real field given by its coefficients.
    """

    basis: StokesBasis
    coefficients: NDArray[Any] = field(
        converter=frozen_array,
        eq=cmp_using(eq=arrays_equal),
        hash=False,
        repr=False,
    )
    _samples: dict[int, NDArray[np.float64]] = field(
        factory=dict,
        init=False,
        eq=False,
        repr=False,
        hash=False,
    )
    _lock: threading.Lock = field(
        factory=threading.Lock,
        init=False,
        eq=False,
        repr=False,
        hash=False,
    )

    def __attrs_post_init__(self):
        if self.coefficients.shape != self.basis.coefficient_shape:
            raise StructuralError(
                f"coefficients of shape {self.coefficients.shape} do not fit "
                f"{self.basis.coefficient_shape}",
            )

    @classmethod
    def zeros(cls, basis: StokesBasis) -> SpectralField:
        return cls(basis=basis, coefficients=basis.zeros())

    @classmethod
    def from_modal(cls, basis: StokesBasis, modal: ArrayLike) -> SpectralField:
        modal = np.asarray(modal)
        if modal.shape != (basis.mode_count,):
            raise StructuralError(
                f"modal coordinates of shape {modal.shape} given "
                f"for a basis with {basis.mode_count} modes",
            )
        return cls(basis=basis, coefficients=basis.from_modal(modal))

    @property
    def modal(self) -> NDArray[Any]:
        return self.basis.to_modal(self.coefficients)

    def validate(self) -> None:
        """
        Raise unless every structural invariant holds.
        """
        self.basis.check(self.coefficients)

    def samples(self, oversample: int = 1) -> NDArray[np.float64]:
        """
        Grid samples of the field, shape ``(3, m, m, m)``, cached.
        """
        basis = _require_torus(self.basis, "sampling on a grid")
        with self._lock:
            cached = self._samples.get(oversample)
            if cached is None:
                values = basis.synthesize(self.coefficients, oversample)
                cached = self._samples[oversample] = frozen_array(values)
        return cached

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coefficients)))

    def _combine(self, other: SpectralField, op: Callable[[Any, Any], Any]):
        if other.basis != self.basis:
            raise StructuralError("fields live in different bases")
        return SpectralField(
            basis=self.basis,
            coefficients=op(self.coefficients, other.coefficients),
        )

    def __add__(self, other: SpectralField) -> SpectralField:
        return self._combine(other, np.add)

    def __sub__(self, other: SpectralField) -> SpectralField:
        return self._combine(other, np.subtract)

    def __neg__(self) -> SpectralField:
        return evolve(self, coefficients=-self.coefficients)

    def __mul__(self, scalar: float) -> SpectralField:
        return evolve(self, coefficients=self.coefficients * scalar)

    __rmul__ = __mul__


def _same_basis(left: SpectralField, right: SpectralField) -> None:
    if left.basis != right.basis:
        raise StructuralError("fields live in different bases")


def apply_symbol(
    u: SpectralField,
    fn: Callable[[NDArray[Any]], NDArray[Any]],
) -> SpectralField:
    """
    ``fn(A) u`` for a function ``fn`` of the eigenvalue.
    """
    symbol = u.basis.symbol(fn)
    return SpectralField(
        basis=u.basis,
        coefficients=u.basis.multiply(u.coefficients, symbol),
    )


def apply_A(u: SpectralField) -> SpectralField:
    return apply_symbol(u, lambda lam: lam)


def apply_A_pow(alpha: float, u: SpectralField) -> SpectralField:
    """
    The fractional power ``A^α`` for ``α ∈ [-1, 1]``.
    """
    if not -1 <= alpha <= 1:
        raise DomainError(f"fractional power {alpha} is outside [-1, 1]")
    return apply_symbol(u, lambda lam: lam**alpha)


def apply_semigroup(t: float, u: SpectralField) -> SpectralField:
    """
    The Stokes semigroup ``exp(-tA)``.
    """
    if not t >= 0:
        raise DomainError(f"the semigroup is only defined for t >= 0, not {t}")
    return apply_symbol(u, lambda lam: np.exp(-t * lam))


def leray_project(v: ArrayLike, basis: TorusBasis) -> SpectralField:
    """
    Project real grid samples onto retained mean-zero divergence-free fields.
    """
    _require_torus(basis, "Leray projection")
    values = np.asarray(v)
    if values.shape != basis.coefficient_shape:
        raise StructuralError(
            f"grid field of shape {values.shape} given for a "
            f"{basis.coefficient_shape} grid",
        )
    if np.iscomplexobj(values):
        raise StructuralError("grid fields must be real valued")
    projected = basis.project(basis.analyze(values))
    return SpectralField(basis=basis, coefficients=basis.symmetrize(projected))


def _modal_power(u: SpectralField, power: float) -> float:
    modal = u.modal
    weights = u.basis.eigenvalues**power
    return float(np.sum(weights * (modal * np.conj(modal)).real))


def norm(u: SpectralField, kind: NormKind, q: float | None = None) -> float:
    """
    A norm of a field.

    ``L2``, ``H1`` (the norm of ``A^{1/2} u``) and ``H2`` are exact sums over
    modal coordinates. ``sup`` and ``Lq`` are evaluated on the grid refined by
    the basis' oversampling factor, so ``sup`` is a (documented)
    underestimate of the true supremum.
    """
    match kind:
        case "L2":
            return np.sqrt(_modal_power(u, 0))
        case "H1":
            return np.sqrt(_modal_power(u, 1))
        case "H2":
            return np.sqrt(_modal_power(u, 0) + _modal_power(u, 2))
        case "sup":
            basis = _require_torus(u.basis, "the sup norm")
            samples = u.samples(basis.oversample)
            return float(np.sqrt(np.max(np.sum(samples**2, axis=0))))
        case "Lq":
            if q is None or not q >= 1:
                raise DomainError(f"Lq norms need q >= 1, not {q}")
            basis = _require_torus(u.basis, "Lq norms")
            samples = u.samples(basis.oversample)
            magnitude = np.sqrt(np.sum(samples**2, axis=0))
            cell = (basis.length / magnitude.shape[0]) ** 3
            return float((cell * np.sum(magnitude**q)) ** (1 / q))
        case _:
            raise DomainError(f"{kind!r} is not a known norm ({NORM_KINDS})")


def inner(u: SpectralField, v: SpectralField) -> float:
    """
    The real L² inner product.
    """
    _same_basis(u, v)
    return float(np.sum(np.conj(u.modal) * v.modal).real)


def galerkin_project(
    n: int,
    u: SpectralField,
    complement: bool = False,
) -> SpectralField:
    """
    Keep the ``n`` lowest modes (or, with ``complement``, all but them).
    """
    total = u.basis.mode_count
    if not 0 <= n <= total:
        raise DomainError(f"cannot project onto {n} of {total} modes")
    if (n == total and not complement) or (n == 0 and complement):
        return u
    keep = np.arange(total) < n
    if complement:
        keep = ~keep
    return SpectralField.from_modal(u.basis, u.modal * keep)


def translate(u: SpectralField, shift: ArrayLike) -> SpectralField:
    """
    The field ``x ↦ u(x - shift)``, by an exact phase shift.
    """
    basis = _require_torus(u.basis, "translation")
    phase = np.exp(-1j * basis.drift_symbol(shift))
    return SpectralField(
        basis=basis,
        coefficients=u.coefficients * phase[np.newaxis],
    )


def signed_permutation(matrix: ArrayLike) -> NDArray[np.int64]:
    """
    Validate (and return as integers) a signed permutation matrix.
    """
    Q = np.asarray(matrix)
    if Q.shape != (3, 3):
        raise DomainError("a rotation must be a 3x3 matrix")
    integral = np.rint(Q).astype(np.int64)
    valid = (
        np.array_equal(integral, Q)
        and np.all(np.sum(np.abs(integral), axis=0) == 1)
        and np.all(np.sum(np.abs(integral), axis=1) == 1)
    )
    if not valid:
        raise DomainError(f"{Q.tolist()} is not a signed permutation matrix")
    return integral


def rotate(u: SpectralField, matrix: ArrayLike) -> SpectralField:
    """
    The field ``x ↦ Qᵀ u(Q x)`` for a signed permutation ``Q``.

    Both the grid and the retained set are invariant under ``Q``, so this is
    an exact reindexing.
    """
    basis = _require_torus(u.basis, "rotation")
    Q = signed_permutation(matrix)
    source = np.einsum("ij,jxyz->ixyz", Q, basis.integer_wavevectors)
    gathered = u.coefficients[(slice(None), *(source % basis.n))]
    rotated = np.einsum("ji,jxyz->ixyz", Q, gathered)
    return SpectralField(basis=basis, coefficients=rotated)


def dilate(u: SpectralField, factor: int) -> SpectralField:
    """
    The field ``x ↦ λ u(λ x)`` on a basis ``λ`` times finer.
    """
    basis = _require_torus(u.basis, "dilation")
    if factor < 1 or int(factor) != factor:
        raise DomainError(f"dilation factor {factor} must be a whole number")
    fine = evolve(basis, n=basis.n * factor)
    target = (factor * _wavenumbers(basis.n)) % fine.n
    out = fine.zeros()
    masked = u.coefficients * basis.retained
    out[(slice(None), *np.ix_(target, target, target))] = factor * masked
    return SpectralField(basis=fine, coefficients=out)


_HEADER = struct.Struct("<4sBB2xdIIdQ")
MAGIC = b"TNS1"
_KINDS = {"torus": 0, "manufactured": 1}
_LITTLE_ENDIAN = 1


def checkpoint_bytes(u: SpectralField) -> bytes:
    basis = u.basis
    if isinstance(basis, TorusBasis):
        geometry = (basis.length, basis.n, basis.oversample, basis.dealias)
    else:
        geometry = (0.0, basis.mode_count, 0, 0.0)
    header = _HEADER.pack(
        MAGIC,
        _KINDS[basis.kind],
        _LITTLE_ENDIAN,
        *geometry,
        basis.mode_count,
    )
    body = np.asarray(u.modal, dtype="<c16").tobytes()
    return header + body


def save_checkpoint(path: Path, u: SpectralField) -> None:
    """
    Write a field's modal coordinates (see the checkpoint format docs).
    """
    atomic_write(path, checkpoint_bytes(u))


def load_checkpoint(
    path: Path,
    basis: StokesBasis | None = None,
) -> SpectralField:
    """
    Read a field written by `save_checkpoint`.

    Torus checkpoints carry their own geometry. Manufactured ones do not
    carry their matrix, so the basis must be passed in.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StructuralError(f"{path} is too short to be a checkpoint")
    magic, kind, endian, length, n, oversample, dealias, count = (
        _HEADER.unpack_from(data)
    )
    if magic != MAGIC or endian != _LITTLE_ENDIAN:
        raise StructuralError(f"{path} is not a checkpoint")
    if kind == _KINDS["torus"]:
        stored = TorusBasis(
            n=n,
            length=length,
            dealias=dealias,
            oversample=oversample,
        )
        if basis is not None and basis != stored:
            raise StructuralError(f"{path} holds a field on {stored}")
        basis = stored if basis is None else basis
    elif kind == _KINDS["manufactured"]:
        if basis is None or basis.kind != "manufactured":
            raise StructuralError(
                "manufactured checkpoints need their basis to be given",
            )
    else:
        raise StructuralError(f"{path} holds an unknown basis kind {kind}")
    if count != basis.mode_count:
        raise StructuralError(
            f"{path} holds {count} modes but the basis has {basis.mode_count}",
        )
    modal = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    if modal.size != count:
        raise StructuralError(f"{path} is truncated")
    return SpectralField.from_modal(basis, modal.astype(complex))


def eigenfield(
    basis: StokesBasis,
    index: int,
    amplitude: complex = 1,
) -> SpectralField:
    """
    ``amplitude`` times the ``index``-th (0-based) eigenfield.
    """
    if not 0 <= index < basis.mode_count:
        raise DomainError(f"no mode {index} among {basis.mode_count}")
    modal = np.zeros(basis.mode_count, dtype=complex)
    modal[index] = amplitude
    if basis.kind == "manufactured":
        modal = modal.real
    return SpectralField.from_modal(basis, modal)
