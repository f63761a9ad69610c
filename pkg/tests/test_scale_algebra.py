from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from metastable.errors import CapacityError, DomainError, ModelError, UnsupportedOperationError
from metastable.models import random_reversible_spec
from metastable.scale_algebra import (ONE, ZERO, AsymScalar, RateSpec, Relation,
                                      arborescence_weight, capacity_order, compare_order,
                                      detailed_balance_check, semiring_add, semiring_mul,
                                      stationary_asymptotics, widest_path)

F = Fraction


def A(p, c=0):
    return AsymScalar(p, c)


# --- oracles ------------------------------------------------------------------------------

def test_add_examples():
    assert semiring_add(A(1, 1), A(2, 1)) == A(3, 1)
    assert semiring_add(A(1, 0), A(5, 2)) == A(1, 0)
    assert semiring_add(ZERO, A(F(2, 3), 4)) == A(F(2, 3), 4)


def test_mul_examples():
    assert semiring_mul(A(2, 1), A(3, 2)) == A(6, 3)
    assert semiring_mul(A(7, 2), ONE) == A(7, 2)
    assert semiring_mul(A(F(1, 2), -3), A(1, 3)) == A(F(1, 2), 0)
    assert semiring_mul(ZERO, A(3, 1)).is_zero


def test_compare_examples():
    assert compare_order(A(1, 2), A(1, 1)).relation is Relation.PRECEDES
    c = compare_order(A(2, 1), A(4, 1))
    assert c.relation is Relation.SAME_ORDER and c.ratio == F(1, 2)
    assert compare_order(A(1, 0), A(1, 1)).relation is Relation.SUCCEEDS
    with pytest.raises(DomainError):
        compare_order(ZERO, A(1, 5))


def test_zero_is_sentinel():
    with pytest.raises(DomainError):
        AsymScalar(0, 1)
    with pytest.raises(DomainError):
        AsymScalar(-1, 0)
    assert ZERO.is_zero and not A(1).is_zero
    assert ZERO.evaluate(5) == 0


def test_evaluate():
    import math
    assert math.isclose(A(2, 1).evaluate(math.log(2)), 1.0)


def two_state():
    return RateSpec((1, 2), {(1, 2): A(1, 1), (2, 1): A(1, 0)})


def test_stationary_two_state():
    pi = stationary_asymptotics(two_state())
    assert pi[1] == A(1, 0) and pi[2] == A(1, 1)


def test_stationary_fig1(fig1, x):
    pi = stationary_asymptotics(fig1)
    assert pi[x["x4"]] == A(F(1, 2), 0)
    assert pi[x["x9"]] == A(F(1, 2), 0)
    assert pi[x["x1"]] == A(F(1, 2), 2)


def test_stationary_fig1_matches_finite_n(fig1, x):
    from metastable.finite_chain import instantiate, stationary
    import gmpy2
    pi = stationary_asymptotics(fig1)
    lo, hi = (stationary(instantiate(fig1, n, 256)) for n in (20, 40))
    for s in fig1.states:
        fitted = float(gmpy2.log(lo[s] / hi[s])) / 20
        assert abs(fitted - float(pi[s].cost)) < 1e-6


def test_stationary_methods_agree_small():
    for seed in range(10):
        spec = random_reversible_spec(6, seed=seed)
        a = stationary_asymptotics(spec)
        b = stationary_asymptotics(spec, method="arborescence")
        assert a == b


def test_arborescence_capacity_guard(fig1):
    with pytest.raises(CapacityError):
        arborescence_weight(fig1, 0)


def test_detailed_balance(fig1):
    assert detailed_balance_check(fig1).holds
    cyc = RateSpec((0, 1, 2), {(0, 1): A(1), (1, 2): A(1), (2, 0): A(1),
                               (1, 0): A(2), (2, 1): A(1), (0, 2): A(1)})
    check = detailed_balance_check(cyc)
    assert not check.holds and check.witness is not None
    sym = RateSpec((0, 1, 2), {(0, 1): A(3, 1), (1, 0): A(3, 1), (1, 2): A(2), (2, 1): A(2)})
    assert detailed_balance_check(sym).holds


def test_spec_validation():
    with pytest.raises(ModelError):
        RateSpec((0, 1), {(0, 1): A(1)})  # not strongly connected
    with pytest.raises(ModelError):
        RateSpec((0, 1), {(0, 1): A(1, -1), (1, 0): A(1)})
    with pytest.raises(ModelError):
        RateSpec((0, 0), {})


def test_capacity_order_fig1(fig1, x):
    others = [v for k, v in x.items() if k != "x1"]
    c = capacity_order(fig1, [x["x1"]], others)
    assert c.cost == 3
    pi = stationary_asymptotics(fig1)
    assert (pi[x["x1"]] / c).cost == -1


def test_capacity_order_x4_x9(fig1, x):
    # the only route climbs to H = +1 (states 19 and 25), which is four above the -3 minima
    c = capacity_order(fig1, [x["x4"]], [x["x9"]])
    assert c.cost == 4


def test_capacity_order_single_edge():
    spec = RateSpec((0, 1), {(0, 1): A(3, 0), (1, 0): A(3, 0)})
    c = capacity_order(spec, [0], [1])
    assert c == A(F(3, 2), 0)


def test_capacity_order_errors(fig1):
    with pytest.raises(DomainError):
        capacity_order(fig1, [], [1])
    with pytest.raises(DomainError):
        capacity_order(fig1, [1, 2], [2])
    cyc = RateSpec((0, 1, 2), {(0, 1): A(1), (1, 2): A(1), (2, 0): A(1)})
    with pytest.raises(UnsupportedOperationError):
        capacity_order(cyc, [0], [1])


def test_widest_path_simple():
    w = {(0, 1): 5, (1, 2): 2, (0, 2): 1, (1, 0): 5, (2, 1): 2, (2, 0): 1}
    assert widest_path(w, [0], [2], 3) == 2


# --- properties ---------------------------------------------------------------------------

scalars = st.builds(AsymScalar, st.fractions(min_value=F(1, 100), max_value=100),
                    st.integers(min_value=-5, max_value=5))
maybe_zero = st.one_of(st.just(ZERO), scalars)


@given(maybe_zero, maybe_zero, maybe_zero)
def test_semiring_laws(a, b, c):
    assert a + b == b + a
    assert (a + b) + c == a + (b + c)
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c
    assert a + ZERO == a and a * ONE == a
    assert (a * ZERO).is_zero


@given(scalars, scalars)
def test_add_is_leading_order_of_sum(a, b):
    # the semiring sum is the leading term of the actual sum
    n = 30
    s = a + b
    exact = a.evaluate(n, mp=True) + b.evaluate(n, mp=True)
    assert abs(s.evaluate(n, mp=True) / exact - 1) < 1e-9 or a.cost != b.cost and \
        abs(s.evaluate(n, mp=True) / exact - 1) < 100 * 2.718281828 ** (-n)


@given(scalars, scalars)
def test_order_is_total_and_consistent(a, b):
    cmp = compare_order(a, b)
    rel = cmp.relation
    assert (rel is Relation.PRECEDES) == (a.cost > b.cost)
    if rel is Relation.SAME_ORDER:
        assert cmp.ratio == a.prefactor / b.prefactor
    else:
        assert (rel is Relation.PRECEDES) == (a < b)
    assert compare_order(b, a).relation is {Relation.PRECEDES: Relation.SUCCEEDS,
                                            Relation.SUCCEEDS: Relation.PRECEDES,
                                            Relation.SAME_ORDER: Relation.SAME_ORDER}[rel]


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=7), st.integers(min_value=0, max_value=10_000))
def test_stationary_matches_tree_walk(num, seed):
    # reversible: pi(y)/pi(x) = R(x,y)/R(y,x) along any spanning tree
    spec = random_reversible_spec(num, seed=seed)
    pi = stationary_asymptotics(spec)
    import networkx as nx
    tree = nx.bfs_tree(spec.graph().to_undirected(), spec.states[0])
    for u, v in tree.edges():
        assert pi[v] == pi[u] * spec.rate(u, v) / spec.rate(v, u)
