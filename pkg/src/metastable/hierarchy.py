"""The metastable hierarchy: wells, time scales and reduced chains, level by level.

Level 1 wells are the closed classes of the zero-cost (limit) dynamics.
Given the wells of level ``p``, the chain watched on their union is
reduced to a chain on well indices; its mean rates, sped up by
``theta^(p)_n``, converge to the reduced rates ``r^(p)``. The closed classes
of ``r^(p)`` glue wells into the wells of level ``p + 1``; wells that are
transient for ``r^(p)`` join the transient set. The process stops once a
single closed class remains.

Orders of ``theta^(p)_n`` and of every reduced rate are computed exactly by
running the trace elimination in the leading-order semiring. Finite-n
evaluations at two probe values cross-check every positive/zero verdict.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import gmpy2
import networkx as nx
import numpy as np

from . import _mp
from ._mp import mpfr, working_precision
from .errors import AmbiguityError, DomainError, MisidentifiedScaleError, ModelError
from .finite_chain import (Distribution, FiniteChain, _eliminate, _extend, _gth_stationary,
                           capacity, expm_rates, instantiate, mean_rates, stationary)
from .scale_algebra import (ZERO, AsymScalar, RateSpec, _close, capacity_order,
                            semiring_sum, stationary_asymptotics)


@dataclass(frozen=True)
class Tolerances:
    probes: tuple = (12, 18)
    eps_cost: float = 0.05
    probe_agreement: float = 0.10
    decompose: float = 1e-6
    precision_bits: int = _mp.DEFAULT_PRECISION

    def __post_init__(self):
        n1, n2 = self.probes
        if not 0 < n1 < n2:
            raise DomainError("probes must satisfy 0 < n1 < n2")


# --- small exact linear algebra -------------------------------------------------

def _unit(value):
    return Fraction(1) if isinstance(value, Fraction) else 1.0


def _is_exact(matrix) -> bool:
    return all(isinstance(v, (Fraction, int)) for row in matrix for v in row)


def _restricted_stationary(rates, members: Sequence[int]) -> dict:
    """Stationary law of the rates restricted to ``members`` (index -> weight)."""
    members = list(members)
    sub = [[rates[x][y] for y in members] for x in members]
    one = Fraction(1) if _is_exact(sub) else 1.0
    return dict(zip(members, _gth_stationary(sub, one=one)))


def _absorption(rates, classes: Sequence[Sequence[int]]) -> list[list]:
    """Probability of ending in each closed class, for every start state."""
    n = len(rates)
    kept = {k for c in classes for k in c}
    one = Fraction(1) if _is_exact(rates) else 1.0
    zero = one * 0
    elim = _eliminate(rates, [k for k in range(n) if k not in kept], zero)
    boundary = {}
    for m, cls in enumerate(classes):
        vec = np.array([zero] * len(classes), dtype=object)
        vec[m] = one
        for k in cls:
            boundary[k] = vec
    table = _extend(elim, boundary, n)
    return [list(row) for row in table]


def _classes(positive: Mapping[tuple, bool], n: int):
    """Closed and non-closed strongly connected classes, each sorted, ordered by minimum."""
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edge for edge, ok in positive.items() if ok)
    comps = [tuple(sorted(c)) for c in nx.strongly_connected_components(g)]
    where = {v: i for i, c in enumerate(comps) for v in c}
    leaving = {i: False for i in range(len(comps))}
    for x, y in g.edges:
        if where[x] != where[y]:
            leaving[where[x]] = True
    closed = sorted((c for i, c in enumerate(comps) if not leaving[i]), key=min)
    other = sorted((c for i, c in enumerate(comps) if leaving[i]), key=min)
    return closed, other


def _matmul(a, b):
    return [[sum((a[i][k] * b[k][j] for k in range(len(b))), a[i][0] * 0)
             for j in range(len(b[0]))] for i in range(len(a))]


# --- limit chain ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LimitChain:
    """Zero-cost part of a spec: the dynamics that survives as ``n`` grows."""

    states: tuple
    surviving_edges: Mapping
    closed_classes: tuple
    transient_classes: tuple
    delta: tuple

    @property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    def rate_matrix(self) -> list[list]:
        idx = self.index
        exact = all(isinstance(v, Fraction) for v in self.surviving_edges.values())
        zero = Fraction(0) if exact else 0.0
        out = [[zero] * len(self.states) for _ in self.states]
        for (x, y), c in self.surviving_edges.items():
            out[idx[x]][idx[y]] = c
        return out

    def class_indices(self) -> list[list[int]]:
        idx = self.index
        return [[idx[s] for s in c] for c in self.closed_classes]


def limit_chain(spec: RateSpec) -> LimitChain:
    """Closed classes, transient classes and transient set of the zero-cost dynamics."""
    surviving = {e: r.prefactor for e, r in spec.edges.items() if _close(r.cost, 0)}
    if not surviving:
        raise ModelError("no edge has zero cost: the limit dynamics is frozen and the "
                         "hierarchy is undefined (at least one cost-0 edge is required)")
    idx = spec.index
    positive = {(idx[x], idx[y]): True for x, y in surviving}
    closed, other = _classes(positive, spec.size)
    states = spec.states
    closed_states = tuple(tuple(states[k] for k in c) for c in closed)
    transient = tuple(tuple(states[k] for k in c) for c in other if len(c) > 1)
    in_closed = {k for c in closed for k in c}
    delta = tuple(states[k] for k in range(spec.size) if k not in in_closed)
    return LimitChain(states, dict(surviving), closed_states, transient, delta)


def absorption_a0(limit: LimitChain) -> list[list]:
    """``a0(x, j)``: probability that the limit chain from ``x`` is absorbed in class ``j``."""
    return _absorption(limit.rate_matrix(), limit.class_indices())


# --- levels and tree --------------------------------------------------------------------

@dataclass(eq=False)
class Level:
    """One generation of the tree.

    For ``p <= q`` the level carries the time scale and the reduced chain on
    its wells; the top level ``q + 1`` has a single well and ``theta_order``
    is ``None`` (the chain never leaves it).
    """

    p: int
    wells: tuple
    delta: tuple
    metastable_measures: tuple
    theta_order: AsymScalar | None = None
    theta_probes: dict = field(default_factory=dict)
    reduced_rates: tuple | None = None
    reduced_orders: tuple | None = None
    reduced_rates_probes: dict = field(default_factory=dict)
    recurrent_classes: tuple = ((0,),)
    transient_indices: tuple = ()
    class_stationaries: tuple = ()
    absorption_A: tuple | None = None
    subdominant_wells: tuple = ()
    _spec: RateSpec | None = field(default=None, repr=False)
    _bits: int = field(default=_mp.DEFAULT_PRECISION, repr=False)
    _theta_cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.wells)

    @property
    def positive(self) -> tuple:
        if self.reduced_rates is None:
            return ()
        return tuple(tuple(v > 0 for v in row) for row in self.reduced_rates)

    def theta_at(self, n, precision_bits: int | None = None):
        """``theta^(p)_n = 1 / sum_i Cap(V_i, union of the other wells) / pi(V_i)``."""
        if self.theta_order is None:
            return mpfr("inf")
        bits = precision_bits or self._bits
        key = (n, bits)
        if key not in self._theta_cache:
            chain = instantiate(self._spec, n, bits)
            self._theta_cache[key] = theta_from_chain(chain, self.wells)
        return self._theta_cache[key]

    def well_of(self, state):
        for j, well in enumerate(self.wells):
            if state in well:
                return j
        return None

    def measure(self, j: int) -> Distribution:
        states = self._spec.states
        return Distribution(states, [self.metastable_measures[j].get(s, 0) for s in states])

    def generator(self) -> list[list]:
        return [list(row) for row in self.reduced_rates]


def theta_from_chain(chain: FiniteChain, wells: Sequence[Sequence]):
    """Exact finite-n time scale of a well partition (capacity form)."""
    with working_precision(chain.precision_bits):
        pi = stationary(chain)
        total = mpfr(0)
        for i, well in enumerate(wells):
            rest = [s for k, w in enumerate(wells) if k != i for s in w]
            mass = sum((pi[s] for s in well), mpfr(0))
            total += capacity(chain, well, rest) / mass
        return 1 / total


@dataclass(eq=False)
class MetastableTree:
    spec: RateSpec
    limit: LimitChain
    levels: list
    q: int
    absorption: list  # a^(p) for p = 0..q, rows by state, columns by wells of level p + 1
    tolerances: Tolerances = field(default_factory=Tolerances)
    reversible: bool = True

    def level(self, p: int) -> Level:
        if not 1 <= p <= self.q + 1:
            raise DomainError(f"level must be between 1 and {self.q + 1}, got {p}")
        return self.levels[p - 1]

    def absorption_row(self, p: int, x) -> list:
        return self.absorption[p][self.spec.index[x]]


class _Context:
    def __init__(self, spec: RateSpec, tol: Tolerances):
        self.spec = spec
        self.tol = tol
        self.pi = stationary_asymptotics(spec)
        self.pi_list = [self.pi[s] for s in spec.states]
        self.matrix = spec.matrix()
        self.chains = {n: instantiate(spec, n, tol.precision_bits) for n in tol.probes}
        self.reversible = spec.reversible


def _semiring_mean_rates(ctx: _Context, wells_idx: list[list[int]]):
    kept = {k for w in wells_idx for k in w}
    elim = _eliminate(ctx.matrix, [k for k in range(ctx.spec.size) if k not in kept], ZERO)
    m = len(wells_idx)
    r = [[ZERO] * m for _ in range(m)]
    for i, wi in enumerate(wells_idx):
        mass = semiring_sum(ctx.pi_list[x] for x in wi)
        for j, wj in enumerate(wells_idx):
            if i != j:
                flow = semiring_sum(ctx.pi_list[x] * elim.rates[x][y] for x in wi for y in wj)
                r[i][j] = flow / mass
    return r


def _fitted_decay(v1, v2, n1, n2) -> float:
    if v1 <= 0 or v2 <= 0:
        return math.inf
    return float((gmpy2.log(v1) - gmpy2.log(v2)) / (n2 - n1))


def _reduce_level(ctx: _Context, p: int, wells: tuple, delta: tuple, measures: tuple) -> Level:
    spec, tol = ctx.spec, ctx.tol
    idx = spec.index
    wells_idx = [[idx[s] for s in w] for w in wells]
    m = len(wells)

    # exact orders
    r_sym = _semiring_mean_rates(ctx, wells_idx)
    escape = [semiring_sum(row) for row in r_sym]
    theta = AsymScalar(1) / semiring_sum(escape)
    t_sym = [[theta * v for v in row] for row in r_sym]
    if ctx.reversible:
        # the widest-path bound must reproduce every escape order
        for i, wi in enumerate(wells):
            rest = [s for k, w in enumerate(wells) if k != i for s in w]
            c = capacity_order(spec, wi, rest, ctx.pi)
            mass = semiring_sum(ctx.pi[s] for s in wi)
            if not _close((c / mass).cost, escape[i].cost):
                raise MisidentifiedScaleError(
                    f"level {p}: escape order of well {i} from capacities "
                    f"({(c / mass).cost}) differs from the trace computation ({escape[i].cost})")

    # finite-n probes
    n1, n2 = tol.probes
    probes = {}
    theta_n = {}
    for n in (n1, n2):
        chain = ctx.chains[n]
        with working_precision(chain.precision_bits):
            r = mean_rates(chain, wells)
            th = 1 / sum((v for row in r for v in row), mpfr(0))
            theta_n[n] = th
            probes[n] = [[th * v for v in row] for row in r]

    limits = [[0] * m for _ in range(m)]
    positive = {}
    numeric_positive = {}
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            v1, v2 = probes[n1][i][j], probes[n2][i][j]
            decay = _fitted_decay(v1, v2, n1, n2)
            num_pos = decay <= tol.eps_cost
            numeric_positive[(i, j)] = num_pos
            exact = t_sym[i][j]
            exact_pos = not exact.is_zero and _close(exact.cost, 0)
            positive[(i, j)] = exact_pos
            if num_pos and abs(v1 - v2) > tol.probe_agreement * v2:
                raise AmbiguityError(
                    f"level {p}: reduced rate ({i}, {j}) differs by more than "
                    f"{tol.probe_agreement:.0%} between n = {n1} and n = {n2}",
                    {"level": p, "pair": (i, j), "values": (float(v1), float(v2)),
                     "fitted_cost": decay})
            if num_pos != exact_pos:
                raise AmbiguityError(
                    f"level {p}: probes classify reduced rate ({i}, {j}) as "
                    f"{'positive' if num_pos else 'zero'} but its exact order is "
                    f"{exact!r}; move the probes further out",
                    {"level": p, "pair": (i, j), "values": (float(v1), float(v2)),
                     "fitted_cost": decay, "exact_cost": float(exact.cost)})
            limits[i][j] = exact.prefactor if exact_pos else 0
    zero = Fraction(0) if all(isinstance(v, Fraction) for row in limits for v in row if v) else 0.0
    limits = [[v if v else zero for v in row] for row in limits]
    if all(isinstance(v, int) for row in limits for v in row):
        limits = [[Fraction(v) for v in row] for row in limits]

    subdominant = []
    for i in range(m):
        row_decay = _fitted_decay(sum(probes[n1][i], mpfr(0)), sum(probes[n2][i], mpfr(0)), n1, n2)
        if row_decay <= tol.eps_cost and not any(numeric_positive[(i, j)] for j in range(m) if j != i):
            raise MisidentifiedScaleError(
                f"level {p}: well {i} escapes on the level time scale but no reduced rate "
                "out of it is positive", {"level": p, "well": i})
        if not any(positive[(i, j)] for j in range(m) if j != i):
            subdominant.append(i)
    if not any(positive.values()):
        raise MisidentifiedScaleError(f"level {p}: every reduced rate vanishes", {"level": p})

    closed, other = _classes(positive, m)
    transient = tuple(sorted(k for c in other for k in c))
    stationaries = tuple(_restricted_stationary(limits, c) for c in closed)
    absorb = _absorption(limits, closed)
    return Level(
        p=p, wells=wells, delta=delta, metastable_measures=measures,
        theta_order=theta, theta_probes=theta_n,
        reduced_rates=tuple(tuple(row) for row in limits),
        reduced_orders=tuple(tuple(row) for row in t_sym),
        reduced_rates_probes={n: tuple(tuple(row) for row in probes[n]) for n in probes},
        recurrent_classes=tuple(closed), transient_indices=transient,
        class_stationaries=stationaries,
        absorption_A=tuple(tuple(row) for row in absorb),
        subdominant_wells=tuple(subdominant),
        _spec=spec, _bits=tol.precision_bits,
        _theta_cache={(n, tol.precision_bits): theta_n[n] for n in theta_n})


def _next_generation(level: Level):
    wells, measures = [], []
    for cls, weights in zip(level.recurrent_classes, level.class_stationaries):
        states = sorted((s for j in cls for s in level.wells[j]), key=level._spec.index.get)
        wells.append(tuple(states))
        mix = {}
        for j in cls:
            for s, w in level.metastable_measures[j].items():
                mix[s] = mix.get(s, 0) + weights[j] * w
        measures.append(mix)
    moved = [s for j in level.transient_indices for s in level.wells[j]]
    delta = tuple(sorted(set(level.delta) | set(moved), key=level._spec.index.get))
    return tuple(wells), delta, tuple(measures)


def build_tree(spec: RateSpec, n_probes: Sequence | None = None,
               tolerances: Tolerances | None = None) -> MetastableTree:
    """Construct all levels of the hierarchy for ``spec``."""
    tol = tolerances or Tolerances()
    if n_probes is not None:
        tol = Tolerances(tuple(n_probes), tol.eps_cost, tol.probe_agreement,
                         tol.decompose, tol.precision_bits)
    limit = limit_chain(spec)
    matrix0 = limit.rate_matrix()
    wells = limit.closed_classes
    measures = []
    for cls, members in zip(wells, limit.class_indices()):
        weights = _restricted_stationary(matrix0, members)
        measures.append({spec.states[k]: w for k, w in weights.items()})
    measures = tuple(measures)
    absorption = [absorption_a0(limit)]
    delta = limit.delta
    levels = []
    ctx = None
    p = 1
    while len(wells) > 1:
        if ctx is None:
            ctx = _Context(spec, tol)
        level = _reduce_level(ctx, p, wells, delta, measures)
        levels.append(level)
        absorption.append(_matmul(absorption[-1], [list(r) for r in level.absorption_A]))
        wells, delta, measures = _next_generation(level)
        p += 1
    top = Level(p=p, wells=wells, delta=delta, metastable_measures=measures,
                class_stationaries=({0: _unit(next(iter(measures[0].values())))},),
                _spec=spec, _bits=tol.precision_bits)
    levels.append(top)
    return MetastableTree(spec, limit, levels, p - 1, absorption[:p], tol,
                          reversible=spec.reversible)


# --- kernels and measures -------------------------------------------------------------

def reduced_kernel(level: Level, t, precision_bits: int | None = None) -> np.ndarray:
    """``exp(t L^(p))`` on the well indices of ``level``."""
    if level.reduced_rates is None:
        return _mp.eye(1)
    bits = precision_bits or level._bits
    with working_precision(bits):
        rates = _mp.asarray([list(row) for row in level.reduced_rates])
        return expm_rates(rates, t, bits)


def absorption_A(level: Level) -> tuple:
    if level.absorption_A is None:
        return ((_unit(1),),)
    return level.absorption_A


def absorption_compose(tree: MetastableTree, p: int) -> list[list]:
    """``a^(p) = a^(p-1) A^(p)``."""
    if not 1 <= p <= tree.q:
        raise DomainError(f"p must be between 1 and {tree.q}")
    return _matmul(tree.absorption[p - 1], [list(r) for r in absorption_A(tree.level(p))])


def metastable_measures(tree: MetastableTree, p: int) -> list[Distribution]:
    """Measures ``pi^(p+1)_m`` of the wells of level ``p + 1`` (``p = 0`` gives level 1)."""
    level = tree.level(p + 1)
    return [level.measure(m) for m in range(level.size)]


def _mixture(tree: MetastableTree, level: Level, weights) -> Distribution:
    states = tree.spec.states
    out = {s: 0 for s in states}
    for j, w in enumerate(weights):
        if w:
            for s, v in level.metastable_measures[j].items():
                out[s] = out[s] + w * v
    return Distribution(states, [out[s] for s in states])


def limiting_kernel_between(tree: MetastableTree, p: int, x) -> Distribution:
    """``Pi_{p-1}(x, .) = sum_j a^(p-1)(x, j) pi^(p)_j``."""
    level = tree.level(p)
    return _mixture(tree, level, tree.absorption_row(p - 1, x))


def limiting_kernel_at(tree: MetastableTree, p: int, t, x) -> Distribution:
    """``sum_j omega_t(x, j) pi^(p)_j`` with ``omega_t = a^(p-1) p^(p)_t``."""
    if not 1 <= p <= tree.q:
        raise DomainError(f"p must be between 1 and {tree.q}")
    level = tree.level(p)
    kernel = reduced_kernel(level, t)
    row = tree.absorption_row(p - 1, x)
    with working_precision(level._bits):
        omega = [sum((_mp.to_mp(row[k]) * kernel[k, j] for k in range(level.size)), mpfr(0))
                 for j in range(level.size)]
        return _mixture(tree, level, omega)


@dataclass(frozen=True)
class ConditionedReport:
    p: int
    j: int
    n: object
    distance: object


def conditioned_measure_check(tree: MetastableTree, chain: FiniteChain, p: int, j: int) -> ConditionedReport:
    """Max-norm gap between ``pi_n`` conditioned on well ``j`` of level ``p`` and ``pi^(p)_j``."""
    level = tree.level(p)
    well = level.wells[j]
    target = level.metastable_measures[j]
    with working_precision(chain.precision_bits):
        pi = stationary(chain)
        mass = sum((pi[s] for s in well), mpfr(0))
        gap = max(abs(pi[s] / mass - _mp.to_mp(target.get(s, 0))) for s in well)
    return ConditionedReport(p, j, chain.n_value, gap)


# --- export -------------------------------------------------------------------------

def _label(states, names=None):
    names = names or {}
    return "{" + ", ".join(str(names.get(s, s)) for s in states) + "}"


def tree_to_dot(tree: MetastableTree, names: Mapping | None = None) -> str:
    """Graphviz description of the tree: one rank per generation plus the root.

    Empty transient sets are left out.
    """
    lines = ["digraph metastable_tree {", "  rankdir=BT;", "  node [shape=box];"]
    ids = {}
    for level in tree.levels:
        rank = []
        for j, well in enumerate(level.wells):
            node = f"g{level.p}_w{j}"
            ids[(level.p, j)] = node
            lines.append(f'  {node} [label="{_label(well, names)}"];')
            rank.append(node)
        if level.delta:
            node = f"g{level.p}_delta"
            ids[(level.p, "delta")] = node
            lines.append(f'  {node} [label="Delta_{level.p} {_label(level.delta, names)}", '
                         'style=dashed];')
            rank.append(node)
        lines.append("  { rank=same; " + "; ".join(rank) + "; }")
    lines.append(f'  root [label="V", shape=ellipse];')
    for level in tree.levels:
        p = level.p
        if p == tree.q + 1:
            parents = {j: "root" for j in range(level.size)}
            delta_parent = "root"
        else:
            parents = {}
            for m, cls in enumerate(level.recurrent_classes):
                for j in cls:
                    parents[j] = ids[(p + 1, m)]
            for j in level.transient_indices:
                parents[j] = ids[(p + 1, "delta")]
            delta_parent = ids.get((p + 1, "delta"))
        for j in range(level.size):
            lines.append(f"  {ids[(p, j)]} -> {parents[j]};")
        if (p, "delta") in ids:
            lines.append(f"  {ids[(p, 'delta')]} -> {delta_parent};")
    lines.append("}")
    return "\n".join(lines) + "\n"
