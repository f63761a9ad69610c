"""Exact bookkeeping of exponentially scaled sequences ``a * exp(-b n)``.

An :class:`AsymScalar` stands for the sequence ``n -> prefactor * exp(-cost * n)``.
The operations below keep only the leading term, which is exact for sums,
products and quotients of positive sequences (no cancellation can occur).
This is enough to read off the order of every stationary weight, capacity
and time scale of a chain in the exponential rate family.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Hashable, Iterable, Mapping, NamedTuple

import networkx as nx

from . import _mp
from .errors import CapacityError, DomainError, ModelError, UnsupportedOperationError

TOL = 1e-12


def as_number(value):
    """Normalise a user-supplied number: rationals stay exact, reals become floats."""
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            return float(value)
    return float(value)


def _is_exact(value) -> bool:
    return isinstance(value, Fraction)


def _close(a, b) -> bool:
    if _is_exact(a) and _is_exact(b):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=TOL, abs_tol=TOL)


class AsymScalar:
    """Leading-order representative of a positive sequence.

    ``AsymScalar(2, 1)`` is ``2 e^{-n}``; the zero sequence is the module
    constant :data:`ZERO`. Arithmetic operators implement the semiring
    (``+`` keeps the dominant term) and ``<`` is the lexicographic order:
    larger cost first, then smaller prefactor.
    """

    __slots__ = ("prefactor", "cost")

    def __init__(self, prefactor, cost=0):
        prefactor = as_number(prefactor)
        cost = as_number(cost)
        if not prefactor > 0:
            raise DomainError(f"prefactor must be positive, got {prefactor!r}")
        if not math.isfinite(float(cost)):
            raise DomainError(f"cost must be finite, got {cost!r}")
        object.__setattr__(self, "prefactor", prefactor)
        object.__setattr__(self, "cost", cost)

    @classmethod
    def _zero(cls):
        obj = object.__new__(cls)
        object.__setattr__(obj, "prefactor", None)
        object.__setattr__(obj, "cost", math.inf)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("AsymScalar is immutable")

    @property
    def is_zero(self) -> bool:
        return self.prefactor is None

    def __repr__(self):
        if self.is_zero:
            return "AsymScalar.ZERO"
        return f"AsymScalar({self.prefactor}, cost={self.cost})"

    def __eq__(self, other):
        if not isinstance(other, AsymScalar):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        return _close(self.cost, other.cost) and _close(self.prefactor, other.prefactor)

    __hash__ = None

    def __add__(self, other):
        return semiring_add(self, other)

    def __mul__(self, other):
        return semiring_mul(self, other)

    def __truediv__(self, other):
        if other.is_zero:
            raise ZeroDivisionError("division by the zero sequence")
        if self.is_zero:
            return ZERO
        return AsymScalar(self.prefactor / other.prefactor, self.cost - other.cost)

    def __lt__(self, other):
        if self.is_zero:
            return not other.is_zero
        if other.is_zero:
            return False
        if not _close(self.cost, other.cost):
            return self.cost > other.cost
        return self.prefactor < other.prefactor and not _close(self.prefactor, other.prefactor)

    def __gt__(self, other):
        return other < self

    def __le__(self, other):
        return not other < self

    def __ge__(self, other):
        return not self < other

    def evaluate(self, n, mp: bool = False):
        """Value of the sequence at ``n`` (a float, or an mpfr when ``mp``)."""
        if self.is_zero:
            return _mp.mpfr(0) if mp else 0.0
        if mp:
            return _mp.to_mp(self.prefactor) * _mp.gmpy2.exp(-_mp.to_mp(self.cost) * _mp.to_mp(n))
        return float(self.prefactor) * math.exp(-float(self.cost) * float(n))


ZERO = AsymScalar._zero()
ONE = AsymScalar(1, 0)


def semiring_add(a: AsymScalar, b: AsymScalar) -> AsymScalar:
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if _close(a.cost, b.cost):
        return AsymScalar(a.prefactor + b.prefactor, a.cost)
    return a if a.cost < b.cost else b


def semiring_mul(a: AsymScalar, b: AsymScalar) -> AsymScalar:
    if a.is_zero or b.is_zero:
        return ZERO
    return AsymScalar(a.prefactor * b.prefactor, a.cost + b.cost)


def semiring_sum(values: Iterable[AsymScalar]) -> AsymScalar:
    total = ZERO
    for v in values:
        total = semiring_add(total, v)
    return total


class Relation(enum.Enum):
    PRECEDES = "precedes"
    SAME_ORDER = "same_order"
    SUCCEEDS = "succeeds"


class OrderComparison(NamedTuple):
    relation: Relation
    ratio: object = None  # limit of a_n / b_n when relation is SAME_ORDER


def compare_order(a: AsymScalar, b: AsymScalar) -> OrderComparison:
    """Compare the growth of two sequences.

    ``PRECEDES`` means ``a_n / b_n -> 0``; ``SAME_ORDER`` carries the finite
    positive limit of the ratio.
    """
    if a.is_zero or b.is_zero:
        raise DomainError("order comparison is undefined for the zero sequence")
    if _close(a.cost, b.cost):
        return OrderComparison(Relation.SAME_ORDER, a.prefactor / b.prefactor)
    if a.cost > b.cost:
        return OrderComparison(Relation.PRECEDES)
    return OrderComparison(Relation.SUCCEEDS)


@dataclass(frozen=True, eq=False)
class RateSpec:
    """Directed graph on ``states`` with rates ``R_n(x, y) = c e^{-e n}``."""

    states: tuple
    edges: Mapping[tuple, AsymScalar]
    index: Mapping[Hashable, int] = field(init=False, repr=False)

    def __post_init__(self):
        states = tuple(self.states)
        if len(set(states)) != len(states):
            raise ModelError("state labels must be unique")
        if len(states) < 1:
            raise ModelError("the state space is empty")
        index = {s: i for i, s in enumerate(states)}
        edges = {}
        for (x, y), rate in dict(self.edges).items():
            if x not in index or y not in index:
                raise ModelError(f"edge ({x!r}, {y!r}) references an unknown state")
            if x == y:
                raise ModelError(f"self-loop at {x!r}")
            if not isinstance(rate, AsymScalar):
                rate = AsymScalar(*rate)
            if rate.is_zero:
                continue
            if rate.cost < 0 and not _close(rate.cost, 0):
                raise ModelError(f"edge ({x!r}, {y!r}) has negative cost {rate.cost}; "
                                 "rates must converge as n grows")
            edges[(x, y)] = rate
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "edges", MappingProxyType(edges))
        object.__setattr__(self, "index", MappingProxyType(index))
        if len(states) > 1 and not nx.is_strongly_connected(self.graph()):
            raise ModelError("the rate graph is not strongly connected, so the chain "
                             "is reducible")

    @property
    def size(self) -> int:
        return len(self.states)

    def rate(self, x, y) -> AsymScalar:
        return self.edges.get((x, y), ZERO)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.states)))
        g.add_edges_from((self.index[x], self.index[y]) for x, y in self.edges)
        return g

    def matrix(self) -> list[list[AsymScalar]]:
        n = len(self.states)
        out = [[ZERO] * n for _ in range(n)]
        for (x, y), rate in self.edges.items():
            out[self.index[x]][self.index[y]] = rate
        return out

    def subset_indices(self, states: Iterable) -> list[int]:
        return sorted(self.index[s] for s in states)

    @property
    def reversible(self) -> bool:
        return detailed_balance_check(self).holds


def _state_reduction(rates, zero, one):
    """Subtraction-free stationary solve (Grassmann-Taksar-Heyman elimination).

    Works for any number type closed under ``+``, ``*`` and ``/`` on positive
    values, which is what makes it exact in the semiring.
    """
    n = len(rates)
    q = [list(row) for row in rates]
    outflow = [None] * n
    for k in range(n - 1, 0, -1):
        s = zero
        for j in range(k):
            s = s + q[k][j]
        if s == zero:
            raise ModelError("chain is reducible: elimination found no outflow")
        outflow[k] = s
        for i in range(k):
            if q[i][k] == zero:
                continue
            q[i][k] = q[i][k] / s
            for j in range(k):
                if j != i and q[k][j] != zero:
                    q[i][j] = q[i][j] + q[i][k] * q[k][j]
    weights = [one] + [zero] * (n - 1)
    for k in range(1, n):
        acc = zero
        for i in range(k):
            if q[i][k] != zero:
                acc = acc + weights[i] * q[i][k]
        weights[k] = acc
    return weights


def arborescence_weight(spec: RateSpec, root, max_states: int = 16) -> AsymScalar:
    """Semiring sum over spanning arborescences directed toward ``root``.

    Exhaustive branch-and-bound; exponential in the worst case.
    """
    n = spec.size
    if n > max_states:
        raise CapacityError(
            f"{n} states exceed the arborescence enumeration cap of {max_states}; "
            "use the elimination method or the finite-n engine instead")
    r = spec.index[root]
    mat = spec.matrix()
    others = [v for v in range(n) if v != r]
    choices = {v: sorted(((w, mat[v][w]) for w in range(n) if not mat[v][w].is_zero),
                         key=lambda item: float(item[1].cost))
               for v in others}
    floor = {v: min(float(c.cost) for _, c in choices[v]) if choices[v] else math.inf
             for v in others}
    suffix = [0.0] * (len(others) + 1)
    for k in range(len(others) - 1, -1, -1):
        suffix[k] = suffix[k + 1] + floor[others[k]]
    parent = {}
    best = [ZERO]

    def reaches(start, target):
        node = start
        while node in parent:
            node = parent[node]
            if node == target:
                return True
        return node == target

    def descend(k, acc):
        if k == len(others):
            best[0] = semiring_add(best[0], acc)
            return
        if not best[0].is_zero and float(acc.cost) + suffix[k] > float(best[0].cost) + TOL:
            return
        v = others[k]
        for w, rate in choices[v]:
            if w == v or reaches(w, v):
                continue
            parent[v] = w
            descend(k + 1, semiring_mul(acc, rate))
            del parent[v]

    descend(0, ONE)
    return best[0]


def stationary_asymptotics(spec: RateSpec, method: str = "elimination",
                           max_states: int = 16) -> dict:
    """Leading-order stationary weights ``pi_n(x)``.

    ``method="arborescence"`` evaluates the matrix-tree sum by enumeration
    (capped at ``max_states``); the default eliminates states one at a time
    in the semiring, which produces the same leading terms in cubic time.
    """
    if method == "arborescence":
        raw = [arborescence_weight(spec, s, max_states) for s in spec.states]
    elif method == "elimination":
        raw = _state_reduction(spec.matrix(), ZERO, ONE)
    else:
        raise ValueError(f"unknown method {method!r}")
    total = semiring_sum(raw)
    return {s: w / total for s, w in zip(spec.states, raw)}


class BalanceCheck(NamedTuple):
    holds: bool
    witness: tuple | None = None

    def __bool__(self):
        return self.holds


def detailed_balance_check(spec: RateSpec, pi: Mapping | None = None) -> BalanceCheck:
    if pi is None:
        pi = stationary_asymptotics(spec)
    for (x, y), rate in spec.edges.items():
        if pi[x] * rate != pi[y] * spec.rate(y, x):
            return BalanceCheck(False, (x, y))
    return BalanceCheck(True)


def widest_path(weights: Mapping[tuple[int, int], object], sources: Iterable[int],
                targets: Iterable[int], n: int):
    """Max over self-avoiding paths of the min edge weight (bottleneck value).

    ``weights`` maps index pairs to values of any totally ordered type.
    Returns ``None`` when no path exists.
    """
    sources, targets = set(sources), set(targets)
    adj = {v: [] for v in range(n)}
    for (x, y), w in weights.items():
        adj[x].append((y, w))
    width = {v: None for v in sources}
    done = set()
    frontier = set(sources)
    reached_inf = set(sources)
    while frontier:
        best = None
        for v in frontier:
            if v in reached_inf:
                best = v
                break
            if best is None or width[v] > width[best]:
                best = v
        frontier.discard(best)
        done.add(best)
        if best in targets:
            continue
        for y, w in adj[best]:
            if y in done:
                continue
            cand = w if best in reached_inf else min(width[best], w)
            if y in reached_inf:
                continue
            if y not in width or cand > width[y]:
                width[y] = cand
                frontier.add(y)
    hits = [width[t] for t in targets if t in width and t not in reached_inf]
    return max(hits) if hits else None


def capacity_order(spec: RateSpec, A: Iterable, B: Iterable,
                   pi: Mapping | None = None) -> AsymScalar:
    """Bottleneck conductance ``c_n(A, B)`` in the semiring.

    Matches ``Cap_n(A, B)`` up to an n-independent factor: the cost is the
    exact capacity exponent, the prefactor is only a bound.
    """
    A, B = set(A), set(B)
    if not A or not B:
        raise DomainError("A and B must be non-empty")
    if A & B:
        raise DomainError("A and B must be disjoint")
    if pi is None:
        pi = stationary_asymptotics(spec)
    check = detailed_balance_check(spec, pi)
    if not check.holds:
        raise UnsupportedOperationError(
            f"capacity_order needs a reversible spec (edge {check.witness} violates "
            "detailed balance); use finite_chain.capacity instead")
    idx = spec.index
    weights = {(idx[x], idx[y]): pi[x] * rate for (x, y), rate in spec.edges.items()}
    value = widest_path(weights, (idx[a] for a in A), (idx[b] for b in B), spec.size)
    return ZERO if value is None else value
