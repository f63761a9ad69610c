from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from metastable.errors import ModelError
from metastable.hierarchy import limit_chain
from metastable.models import FIG1_ENERGIES, Landscape, landscape_spec, random_reversible_spec
from metastable.scale_algebra import AsymScalar, detailed_balance_check, stationary_asymptotics


def test_fig1_profile(fig1):
    assert fig1.size == 30
    assert FIG1_ENERGIES[:4] == (0, -1, 0, -1)
    # downhill at rate 1, uphill at e^{-n dH}
    assert fig1.rate(5, 6) == AsymScalar(1, 0)
    assert fig1.rate(6, 5) == AsymScalar(1, 1)
    assert fig1.edges.keys() == {(k, k + 1) for k in range(29)} | {(k + 1, k) for k in range(29)}


def test_flat_landscape_single_class():
    spec = landscape_spec([0, 0, 0, 0])
    assert all(r == AsymScalar(1, 0) for r in spec.edges.values())
    lim = limit_chain(spec)
    assert len(lim.closed_classes) == 1 and lim.delta == ()


def test_v_shape_one_well():
    lim = limit_chain(landscape_spec([2, 1, 0, 1, 2]))
    assert lim.closed_classes == ((2,),)


def test_landscape_rejects_short():
    with pytest.raises(ModelError):
        Landscape((0,))


def test_custom_prefactors():
    spec = landscape_spec([0, -1, 0], {(0, 1): 3})
    assert spec.rate(0, 1) == AsymScalar(3, 0)


def test_random_spec_determinism():
    a, b = random_reversible_spec(8, seed=5), random_reversible_spec(8, seed=5)
    assert a.states == b.states and a.edges == b.edges
    assert random_reversible_spec(8, seed=6).edges != a.edges


def test_random_two_state():
    spec = random_reversible_spec(2, seed=1)
    pi = stationary_asymptotics(spec)
    r01, r10 = spec.rate(0, 1), spec.rate(1, 0)
    assert pi[0] * r01 == pi[1] * r10


def test_random_specs_balanced_100():
    assert all(detailed_balance_check(random_reversible_spec(2 + s % 9, seed=s)).holds
               for s in range(100))


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10**6))
def test_random_spec_costs_in_range(num, seed):
    spec = random_reversible_spec(num, cost_range=(0, 3), seed=seed)
    assert spec.size == num
    assert all(0 <= r.cost for r in spec.edges.values())
    assert all(isinstance(r.prefactor, Fraction) for r in spec.edges.values())
