from hypothesis import given, settings
from hypothesis.strategies import just
import numpy as np

from tamed import hypothesis as strategies
from tamed._spectral import TorusBasis, norm


@given(strategies.bases())
def test_bases_have_modes(basis):
    assert basis.mode_count >= 1
    assert np.all(basis.eigenvalues > 0)


@given(strategies.fields(h1=just(2.0)))
@settings(deadline=None)
def test_fields_have_the_requested_norm(u):
    u.validate()
    assert np.isclose(norm(u, "H1"), 2.0)


@given(strategies.field_pairs(basis=just(TorusBasis(n=6))))
@settings(deadline=None)
def test_field_pairs_share_a_basis(pair):
    first, second = pair
    assert first.basis == second.basis == TorusBasis(n=6)


@given(strategies.params())
def test_params_are_valid(p):
    assert p.nu > 0
    assert p.kappa >= 1
    assert p.N >= 1


@given(strategies.signed_permutations())
def test_signed_permutations_are_orthogonal(Q):
    assert np.array_equal(Q @ Q.T, np.eye(3))


@given(strategies.reports())
def test_reports_have_unique_names(report):
    names = [each.name for each in report]
    assert len(names) == len(set(names))
