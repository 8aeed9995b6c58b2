# type: ignore[reportMissingParameterType]
"""
Hypothesis strategies and support for tamed.

Note that this module depends on you having installed Hypothesis.
"""

from itertools import permutations

from hypothesis.strategies import (
    booleans,
    builds,
    composite,
    floats,
    integers,
    just,
    lists,
    sampled_from,
    tuples,
)
import numpy as np

from tamed._initial import random_field
from tamed._report import CheckRecord, DiagnosticsReport, Status
from tamed._rhs import TamingParams
from tamed._spectral import ManufacturedBasis, TorusBasis

#: Tiny grids, so that properties checked on many examples stay fast.
resolutions = sampled_from([4, 6, 8])
lengths = sampled_from([2 * np.pi, np.pi, 4 * np.pi])


def torus_bases(n=resolutions, length=lengths):
    """
    Periodic boxes at the default dealiasing fraction.
    """
    return builds(TorusBasis, n=n, length=length)


@composite
def manufactured_bases(draw, min_modes=1, max_modes=12):
    """
    Symmetric positive definite matrices with a given spectrum.
    """
    eigenvalues = draw(
        lists(
            floats(min_value=0.5, max_value=50),
            min_size=min_modes,
            max_size=max_modes,
        ),
    )
    return ManufacturedBasis(
        spectrum=eigenvalues,
        seed=draw(integers(min_value=0, max_value=2**32 - 1)),
    )


def bases():
    return torus_bases() | manufactured_bases()


@composite
def fields(draw, basis=None, h1=floats(min_value=0, max_value=5)):
    """
    Random fields with a smooth spectrum and a chosen H¹ norm.
    """
    basis = draw(torus_bases() if basis is None else basis)
    rng = np.random.default_rng(draw(integers(min_value=0, max_value=2**32)))
    return random_field(basis, rng, slope=-2.0, h1=draw(h1))


@composite
def field_pairs(draw, basis=None):
    """
    Two fields sharing one basis.
    """
    basis = draw(torus_bases() if basis is None else basis)
    return draw(fields(just(basis))), draw(fields(just(basis)))


def params(
    nu=floats(min_value=0.01, max_value=2),
    kappa=floats(min_value=1, max_value=8),
    N=floats(min_value=1, max_value=100),
    tamed=booleans(),
):
    return builds(TamingParams, nu=nu, kappa=kappa, N=N, tamed=tamed)


@composite
def signed_permutations(draw):
    """
    The 48 symmetries of the cube, as integer matrices.
    """
    order = draw(sampled_from(list(permutations(range(3)))))
    signs = draw(tuples(*[sampled_from([-1, 1])] * 3))
    matrix = np.zeros((3, 3), dtype=int)
    for row, (column, sign) in enumerate(zip(order, signs)):
        matrix[row, column] = sign
    return matrix


alphas = floats(min_value=-1, max_value=1)
statuses = sampled_from(list(Status))


def check_records(name=None):
    names = sampled_from(["energy", "gradient", "decay", "tame-time"])
    return builds(
        CheckRecord,
        name=names if name is None else name,
        status=statuses,
        margin=floats(allow_nan=False, allow_infinity=False) | just(None),
    )


@composite
def reports(draw, max_records=6):
    """
    Reports with uniquely named records.
    """
    count = draw(integers(min_value=0, max_value=max_records))
    records = [draw(check_records(just(f"check-{i}"))) for i in range(count)]
    seed = draw(integers(min_value=0, max_value=2**16))
    return DiagnosticsReport(records=records, metadata=dict(seed=seed))
