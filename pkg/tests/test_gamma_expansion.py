import math
import random
from fractions import Fraction

import gmpy2
import pytest
from hypothesis import given, settings, strategies as st

from metastable._mp import working_precision
from metastable.errors import DomainError, UnsupportedOperationError
from metastable.finite_chain import instantiate
from metastable.gamma_expansion import (I0_closed, I0_graded, I0_variational, Ip_band, Ip_closed,
                                        Ip_variational, RateExpansion, decompose,
                                        decomposition_residual, gamma_sweep, is_infinite,
                                        recovery_normaliser, recovery_sequence, sweep_to_csv)
from metastable.hierarchy import build_tree
from metastable.models import random_reversible_spec
from metastable.scale_algebra import AsymScalar, RateSpec

mpfr = gmpy2.mpfr


def mixture(level, weights):
    mu = {}
    for j, w in enumerate(weights):
        for s, v in level.metastable_measures[j].items():
            mu[s] = mu.get(s, 0) + w * float(v)
    return mu


# --- decompose --------------------------------------------------------------------------------

def test_decompose_unit(fig1_tree):
    L = fig1_tree.level(2)
    dec = decompose(fig1_tree, 2, mixture(L, [0, 0, 1, 0]))
    assert [float(w) for w in dec.weights] == [0, 0, 1, 0] and dec.residual < 1e-30


def test_decompose_delta_mass(fig1_tree):
    assert decompose(fig1_tree, 1, {0: 0.5, 1: 0.5}) is None
    assert decompose(fig1_tree, 2, {1: 1}) is None  # x1 is in Delta_2
    assert decomposition_residual(fig1_tree, 2, {1: 1}) == 1


def test_decompose_combination(fig1_tree):
    L = fig1_tree.level(2)
    dec = decompose(fig1_tree, 2, mixture(L, [0.3, 0, 0, 0.7]))
    assert [round(float(w), 12) for w in dec.weights] == [0.3, 0, 0, 0.7]


def test_decompose_wrong_shape_inside_well(fig1_tree, x):
    assert decompose(fig1_tree, 2, {x["x7"]: 0.9, x["x8"]: 0.1}) is None


# --- I0 ----------------------------------------------------------------------------------------

def test_I0_zero_set(fig1_expansion, fig1_tree):
    mu = mixture(fig1_tree.level(1), [1 / 9] * 9)
    assert I0_closed(fig1_expansion, mu) == 0
    assert abs(I0_variational(fig1_expansion, mu)) < 1e-30


def test_I0_delta_saddle(fig1_expansion):
    # state 2 sits between x1 and x2 with two unit downhill exits
    assert I0_closed(fig1_expansion, {2: 1}) == 2
    assert abs(I0_variational(fig1_expansion, {2: 1}) - 2) < 1e-30
    assert I0_closed(fig1_expansion, {0: 1}) == 1


def test_I0_two_state_limit():
    spec = RateSpec((0, 1), {(0, 1): AsymScalar(3), (1, 0): AsymScalar(1, 1)})
    exp = RateExpansion.from_tree(build_tree(spec))
    assert abs(I0_variational(exp, {0: 1}) - 3) < 1e-30
    assert abs(I0_closed(exp, {0: 1}) - 3) < 1e-30


def test_I0_graded_tends_to_closed(fig1_expansion):
    rng = random.Random(1)
    mu = {s: rng.random() for s in range(30)}
    target = I0_closed(fig1_expansion, mu)
    gaps = [abs(I0_graded(fig1_expansion, mu, ell) - target) for ell in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_I0_transient_class():
    # {0, 1} is a transient class draining into 2
    spec = RateSpec((0, 1, 2), {(0, 1): AsymScalar(1), (1, 0): AsymScalar(2),
                                (1, 2): AsymScalar(1), (2, 1): AsymScalar(1, 1)})
    exp = RateExpansion.from_tree(build_tree(spec))
    for mu in ({0: 0.5, 1: 0.5}, {0: 0.2, 1: 0.3, 2: 0.5}, {1: 1}):
        a, b = I0_closed(exp, mu), I0_variational(exp, mu, start="flat")
        assert abs(a - b) <= 1e-6 * max(a, b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_I0_methods_agree_fig1(seed):
    tree = _fig1_tree()
    exp = _fig1_exp()
    rng = random.Random(seed)
    support = rng.sample(range(30), rng.randint(1, 30))
    mu = {s: rng.random() + 0.01 for s in support}
    a, b = I0_closed(exp, mu), I0_variational(exp, mu, start="flat")
    assert abs(a - b) <= 1e-6 * max(a, b, mpfr(1e-30))


_cache = {}


def _fig1_tree():
    if "tree" not in _cache:
        from metastable.models import fig1_spec
        _cache["tree"] = build_tree(fig1_spec())
    return _cache["tree"]


def _fig1_exp():
    if "exp" not in _cache:
        _cache["exp"] = RateExpansion.from_tree(_fig1_tree())
    return _cache["exp"]


def test_depth_property(fig1_expansion):
    lim = fig1_expansion.limit
    for (x, y) in lim.surviving_edges:
        d = fig1_expansion.depth
        same = any(x in c and y in c for c in lim.closed_classes + lim.transient_classes)
        if not same:
            assert d[x] >= d[y] + 1


# --- Ip ----------------------------------------------------------------------------------------

def test_Ip_zero_on_next_level(fig1_expansion, fig1_tree):
    for p in (1, 2, 3):
        upper = fig1_tree.level(p + 1)
        for m in range(upper.size):
            mu = {s: float(v) for s, v in upper.metastable_measures[m].items()}
            assert abs(Ip_closed(fig1_expansion, p, mu)) < 1e-12
            assert abs(Ip_variational(fig1_expansion, p, mu)) < 1e-12


def test_Ip_infinite_off_wells(fig1_expansion):
    assert is_infinite(Ip_closed(fig1_expansion, 1, {0: 0.1, 1: 0.9}))
    assert is_infinite(Ip_variational(fig1_expansion, 2, {1: 1}))


def test_Ip_level3_two_state_formula(fig1_expansion, fig1_tree, x):
    r = fig1_tree.level(3).reduced_rates
    r12, r21 = float(r[0][1]), float(r[1][0])
    for w in (0, 0.1, 0.37, 0.5, 0.8, 1):
        mu = {x["x4"]: w, x["x9"]: 1 - w}
        exact = (math.sqrt(2 * w * r12) - math.sqrt(2 * (1 - w) * r21)) ** 2 / 2
        assert abs(float(Ip_closed(fig1_expansion, 3, mu)) - exact) < 1e-12


def test_Ip_level1_delta(fig1_expansion, x):
    assert abs(Ip_closed(fig1_expansion, 1, {x["x1"]: 1}) - 0.125) < 1e-60
    # generalized form: x1 and x2 form a transient class in the reduced chain
    assert abs(Ip_closed(fig1_expansion, 1, {x["x1"]: 0.5, x["x2"]: 0.5}) - 0.0625) < 1e-30


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10**6))
def test_Ip_methods_agree(p, seed):
    tree, exp = _fig1_tree(), _fig1_exp()
    L = tree.level(p)
    rng = random.Random(seed)
    raw = [rng.random() if rng.random() < 0.7 else 0 for _ in range(L.size)]
    if not any(raw):
        raw[0] = 1
    mu = mixture(L, [v / sum(raw) for v in raw])
    a, b = Ip_closed(exp, p, mu), Ip_variational(exp, p, mu, start="flat")
    assert abs(a - b) <= 1e-6 * max(a, b, mpfr(1e-12))


def test_domain_nesting(fig1_expansion, fig1_tree):
    rng = random.Random(3)
    for p in (1, 2):
        L = fig1_tree.level(p)
        for _ in range(20):
            raw = [rng.random() if rng.random() < 0.4 else 0 for _ in range(L.size)]
            if not any(raw):
                continue
            mu = mixture(L, [v / sum(raw) for v in raw])
            zero = Ip_variational(fig1_expansion, p, mu) < 1e-12
            finite = not is_infinite(Ip_variational(fig1_expansion, p + 1, mu))
            assert zero == finite


def test_Ip_band(fig1_expansion, x):
    b = Ip_band(fig1_expansion, 1, {x["x1"]: 1})
    assert b.low <= b.value <= b.high
    assert is_infinite(Ip_band(fig1_expansion, 1, {0: 1}).value)


def test_Ip_level_bounds(fig1_expansion):
    with pytest.raises(DomainError):
        Ip_closed(fig1_expansion, 4, {11: 1})


def test_closed_forms_need_reversible():
    e = {(0, 1): AsymScalar(1, 1), (1, 2): AsymScalar(1), (2, 3): AsymScalar(1, 2),
         (3, 0): AsymScalar(1), (1, 0): AsymScalar(1)}
    exp = RateExpansion.from_tree(build_tree(RateSpec((0, 1, 2, 3), e)))
    with pytest.raises(UnsupportedOperationError):
        I0_closed(exp, {0: 1})
    assert I0_variational(exp, {1: 1}) > 0
    assert abs(Ip_variational(exp, 1, {0: 1}) - float(exp.tree.level(1).reduced_rates[0][1])) < 1e-20


# --- recovery and sweep ---------------------------------------------------------------------

def test_recovery_on_pure_measure(fig1_tree, fig1, x):
    L = fig1_tree.level(2)
    mu = mixture(L, [0, 0, 1, 0])
    tvs, alphas = [], []
    for n in (10, 15, 20):
        ch = instantiate(fig1, n, 256)
        mu_n = recovery_sequence(fig1_tree, 2, mu, ch)
        tvs.append(mu_n.total_variation(mu))
        alphas.append(recovery_normaliser(fig1_tree, 2, mu, ch))
    assert tvs[0] > tvs[1] > tvs[2]
    assert all(abs(a - 1) > abs(b - 1) for a, b in zip(alphas, alphas[1:]))
    assert abs(alphas[-1] - 1) < 1e-6


def test_recovery_outside_domain(fig1_tree, fig1):
    with pytest.raises(DomainError):
        recovery_sequence(fig1_tree, 1, {0: 1}, instantiate(fig1, 5, 256))


def test_sweep_delta_x1(fig1_tree, fig1_expansion, x):
    rows = gamma_sweep(fig1_tree, 1, {x["x1"]: 1}, [10, 14, 18], fig1_expansion)
    assert abs(rows[0].target - 0.125) < 1e-60
    errs = [r.abs_err for r in rows]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 0.1 * rows[0].target
    csv = sweep_to_csv(rows)
    assert csv.splitlines()[0] == "n,I_n,theta_I_n,target,abs_err"


def test_sweep_zero_set(fig1_tree, fig1_expansion):
    top = fig1_tree.level(4).metastable_measures[0]
    rows = gamma_sweep(fig1_tree, 3, {s: float(v) for s, v in top.items()}, [10, 14],
                       fig1_expansion)
    assert all(abs(r.theta_I_n) < 1e-12 for r in rows)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_residual_zero_iff_decomposes(seed):
    tree = _fig1_tree()
    rng = random.Random(seed)
    p = rng.randint(1, 3)
    L = tree.level(p)
    if rng.random() < 0.5:
        raw = [rng.random() for _ in range(L.size)]
        mu = mixture(L, [v / sum(raw) for v in raw])
    else:
        mu = {s: rng.random() for s in rng.sample(range(30), rng.randint(1, 30))}
    assert (decompose(tree, p, mu) is not None) == (decomposition_residual(tree, p, mu) <= 1e-6)
