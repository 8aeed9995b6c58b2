"""
Small pieces shared across the solver and its harness.
"""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any
import os
import tempfile

from attrs import frozen
from scipy.stats import linregress
import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray


def frozen_array(value: ArrayLike, dtype: Any = None) -> NDArray[Any]:
    """
    A read-only copy of the given array.
    """
    array = np.array(value, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def arrays_equal(left: NDArray[Any], right: NDArray[Any]) -> bool:
    return left.shape == right.shape and bool(np.array_equal(left, right))


def atomic_write(path: Path, contents: str | bytes) -> None:
    """
    Write a file such that readers never see it half written.

    The contents land in a temporary file next to the target which is then
    renamed over it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = contents.encode() if isinstance(contents, str) else contents
    fd, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as file:
            file.write(data)
        Path(temporary).replace(path)
    except BaseException:
        Path(temporary).unlink(missing_ok=True)
        raise


def format_float(value: float) -> str:
    """
    Round-trippable text for a float, the same on every platform.
    """
    return repr(float(value))


def trapezoid_error(
    times: NDArray[np.float64],
    integrand: NDArray[np.float64],
    dt: float,
) -> float:
    """
    An estimate of the trapezoid rule's error on the step grid.
    """
    if times.size < 3:
        return 0.0
    curvature = np.gradient(np.gradient(integrand, times), times)
    span = float(times[-1] - times[0])
    return span * dt**2 / 12 * float(np.max(np.abs(curvature)))


@frozen
class LineFit:
    """
    A least-squares line through some points.
    """

    slope: float
    intercept: float
    r_squared: float

    @classmethod
    def through(cls, x: ArrayLike, y: ArrayLike) -> LineFit:
        fit = linregress(
            np.asarray(x, dtype=float),
            np.asarray(y, dtype=float),
        )
        return cls(
            slope=float(fit.slope),
            intercept=float(fit.intercept),
            r_squared=float(fit.rvalue) ** 2,
        )
