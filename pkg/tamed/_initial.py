"""
Named initial conditions.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal

from attrs import field, frozen
import numpy as np

from tamed._spectral import (
    SpectralField,
    TorusBasis,
    eigenfield,
    leray_project,
    load_checkpoint,
    norm,
)
from tamed.exceptions import DomainError

if TYPE_CHECKING:
    from tamed._spectral import StokesBasis

Preset = Literal["zero", "single-mode", "taylor-green", "random", "checkpoint"]
PRESETS: tuple[Preset, ...] = (
    "zero",
    "single-mode",
    "taylor-green",
    "random",
    "checkpoint",
)


def _wavevector(value: object) -> tuple[int, int, int]:
    x, y, z = (int(each) for each in np.asarray(value).reshape(3))
    return x, y, z


def single_mode(
    basis: StokesBasis,
    wavevector: tuple[int, int, int] = (1, 0, 0),
    polarization: int = 0,
    amplitude: float = 1.0,
) -> SpectralField:
    """
    One eigenfield with the given L² norm.

    On a torus the mode is picked by its integer wavevector (either one of a
    conjugate pair) and polarization. On a manufactured basis the first
    component of the wavevector is the mode's index.
    """
    if not isinstance(basis, TorusBasis):
        return eigenfield(basis, wavevector[0], amplitude)
    ids = basis.mode_ids
    for candidate in (wavevector, tuple(-k for k in wavevector)):
        key = (*candidate, polarization)
        if key in ids:
            return eigenfield(basis, ids.index(key), amplitude)
    raise DomainError(
        f"{wavevector} (polarization {polarization}) is not a retained mode "
        f"at n={basis.n}",
    )


def taylor_green(basis: TorusBasis, amplitude: float = 1.0) -> SpectralField:
    """
    ``amplitude · (sin x cos y cos z, -cos x sin y cos z, 0)``.
    """
    x, y, z = basis.grid() * (2 * np.pi / basis.length)
    values = amplitude * np.stack(
        [
            np.sin(x) * np.cos(y) * np.cos(z),
            -np.cos(x) * np.sin(y) * np.cos(z),
            np.zeros_like(x),
        ],
    )
    return leray_project(values, basis)


def random_field(
    basis: StokesBasis,
    rng: np.random.Generator,
    slope: float = -2.0,
    h1: float = 1.0,
) -> SpectralField:
    """
    Gaussian modal coordinates with energy ``∝ λ^slope`` per mode.

    The result is rescaled so its H¹ norm is exactly ``h1``.
    """
    if h1 < 0:
        raise DomainError(f"a target H¹ norm must be nonnegative, not {h1}")
    count = basis.mode_count
    scale = basis.eigenvalues ** (slope / 2)
    if isinstance(basis, TorusBasis):
        draws = rng.standard_normal((2, count))
        modal = scale * (draws[0] + 1j * draws[1]) / np.sqrt(2)
    else:
        modal = scale * rng.standard_normal(count)
    size = norm(SpectralField.from_modal(basis, modal), "H1")
    if h1 == 0 or size == 0:
        return SpectralField.zeros(basis)
    return SpectralField.from_modal(basis, modal * (h1 / size))


@frozen
class InitialCondition:
    """
    Which preset to start from, and its knobs.
    """

    preset: Preset = "zero"
    amplitude: float = 1.0
    wavevector: tuple[int, int, int] = field(
        default=(1, 0, 0),
        converter=_wavevector,
    )
    polarization: int = 0
    slope: float = -2.0
    h1: float = 1.0
    path: Path | None = None

    def __attrs_post_init__(self):
        if self.preset not in PRESETS:
            raise DomainError(
                f"{self.preset!r} is not a preset ({', '.join(PRESETS)})",
            )
        if self.polarization not in (0, 1):
            raise DomainError("the polarization must be 0 or 1")
        if self.preset == "checkpoint" and self.path is None:
            raise DomainError("the checkpoint preset needs a path")

    def build(self, basis: StokesBasis, seed: int = 0) -> SpectralField:
        match self.preset:
            case "zero":
                return SpectralField.zeros(basis)
            case "single-mode":
                return single_mode(
                    basis,
                    wavevector=self.wavevector,
                    polarization=self.polarization,
                    amplitude=self.amplitude,
                )
            case "taylor-green":
                if not isinstance(basis, TorusBasis):
                    raise DomainError("taylor-green needs a torus basis")
                return taylor_green(basis, amplitude=self.amplitude)
            case "random":
                rng = np.random.default_rng(seed)
                return random_field(basis, rng, self.slope, self.h1)
            case "checkpoint":
                assert self.path is not None
                return load_checkpoint(self.path, basis)

    def describe(self) -> dict[str, Any]:
        described: dict[str, Any] = dict(preset=self.preset)
        match self.preset:
            case "single-mode":
                described.update(
                    wavevector=list(self.wavevector),
                    polarization=self.polarization,
                    amplitude=self.amplitude,
                )
            case "taylor-green":
                described.update(amplitude=self.amplitude)
            case "random":
                described.update(slope=self.slope, h1=self.h1)
            case "checkpoint":
                described.update(path=str(self.path))
            case _:
                pass
        return described
