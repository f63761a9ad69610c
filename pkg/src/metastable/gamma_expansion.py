"""Expansion of the level-two rate functional along the hierarchy.

``I^(0)`` is the rate functional of the limit (zero-cost) dynamics and
``I^(p)``, ``1 <= p <= q``, the one of the reduced chain of level ``p``,
finite only on convex combinations of the level-``p`` metastable measures.
Each has a closed form on reversible inputs and a variational form that
works in general; both are evaluated here, together with the recovery
sequences that realise the upper bound at finite ``n``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from . import _mp
from ._mp import mpfr, working_precision
from .errors import DomainError, UnsupportedOperationError
from .finite_chain import (Distribution, FiniteChain, as_weights, dv_rate_reversible,
                           dv_rate_variational, instantiate, poisson_solve, stationary,
                           variational_rate, _balanced)
from .hierarchy import Level, LimitChain, MetastableTree, _classes, _restricted_stationary

INF = mpfr("inf")


def is_infinite(value) -> bool:
    return value == INF


@dataclass(frozen=True)
class Decomposition:
    level: int
    weights: tuple
    residual: object


@dataclass(eq=False)
class RateExpansion:
    """Evaluator of ``I^(0)`` and ``I^(p)`` for one tree."""

    tree: MetastableTree
    limit: LimitChain
    sharp: tuple  # stationary law of the limit dynamics on each closed class
    transient_stationaries: tuple  # nu_k on each multi-element transient class
    depth: dict
    precision_bits: int = _mp.DEFAULT_PRECISION

    @classmethod
    def from_tree(cls, tree: MetastableTree) -> "RateExpansion":
        limit = tree.limit
        rates = limit.rate_matrix()
        idx = limit.index
        sharp = tuple(tree.levels[0].metastable_measures)
        nus = []
        for members in limit.transient_classes:
            weights = _restricted_stationary(rates, [idx[s] for s in members])
            nus.append({limit.states[k]: w for k, w in weights.items()})
        return cls(tree, limit, sharp, tuple(nus), _depth(limit),
                   tree.tolerances.precision_bits)

    @property
    def spec(self):
        return self.tree.spec


def _depth(limit: LimitChain) -> dict:
    """Longest path in the class graph of the limit dynamics down to a closed class."""
    g = nx.DiGraph()
    g.add_nodes_from(limit.states)
    g.add_edges_from(limit.surviving_edges)
    cond = nx.condensation(g)
    depth_of = {}
    for node in reversed(list(nx.topological_sort(cond))):
        succ = list(cond.successors(node))
        depth_of[node] = 1 + max(depth_of[s] for s in succ) if succ else 0
    mapping = cond.graph["mapping"]
    return {s: depth_of[mapping[s]] for s in limit.states}


def _to_mp_matrix(rows) -> np.ndarray:
    return _mp.asarray([list(r) for r in rows])


def _class_form(rates: np.ndarray, mu: np.ndarray) -> object:
    """Closed-form rate on a chain whose rates may be reducible.

    Every strongly connected class ``K`` contributes the Dirichlet form of
    ``sqrt(mu / nu_K)`` under the rates restricted to ``K`` (``nu_K`` the
    restricted stationary law) plus the flux ``sum mu(x) R(x, y)`` leaving
    ``K``. For closed classes the second term is empty; for a single state
    the first one is.
    """
    n = rates.shape[0]
    positive = {(i, j): True for i in range(n) for j in range(n) if i != j and rates[i, j] > 0}
    closed, other = _classes(positive, n)
    total = mpfr(0)
    for comp in list(closed) + list(other):
        members = set(comp)
        comp = list(comp)
        if len(comp) > 1:
            nu = _restricted_stationary([[rates[x, y] for y in range(n)] for x in range(n)], comp)
            root = {x: _mp.gmpy2.sqrt(mu[x] / nu[x]) for x in comp}
            form = mpfr(0)
            for x in comp:
                for y in comp:
                    if x != y and rates[x, y] > 0:
                        diff = root[y] - root[x]
                        form += nu[x] * rates[x, y] * diff * diff
            total += form / 2
        for x in comp:
            if mu[x] > 0:
                total += mu[x] * sum((rates[x, y] for y in range(n) if y not in members), mpfr(0))
    return total


def _limit_rates(expansion: RateExpansion) -> np.ndarray:
    return _to_mp_matrix(expansion.limit.rate_matrix())


def I0_closed(expansion: RateExpansion, mu) -> object:
    """Closed form of ``I^(0)``; reversible specs only."""
    if not expansion.tree.reversible:
        raise UnsupportedOperationError("closed form needs a reversible spec; use I0_variational")
    with working_precision(expansion.precision_bits):
        w = as_weights(expansion.limit.states, mu)
        return _class_form(_limit_rates(expansion), w)


def I0_variational(expansion: RateExpansion, mu, max_iter: int = 500,
                   start: str = "balanced") -> object:
    """``-inf_{u > 0} sum mu(x) (L0 u)(x) / u(x)`` for the limit generator."""
    with working_precision(expansion.precision_bits):
        w = as_weights(expansion.limit.states, mu)
        return variational_rate(_limit_rates(expansion), w, expansion.precision_bits, max_iter,
                                start=start)


def I0_graded(expansion: RateExpansion, mu, ell) -> object:
    """Objective at the depth-graded test function ``u(x) = ell^D(x) sqrt(mu(x) / nu(x))``.

    ``nu`` is the stationary law of the class of ``x``; states without mass get
    a potential below every graded one. Tends to ``I^(0)(mu)`` as ``ell`` grows.
    """
    with working_precision(expansion.precision_bits):
        states = expansion.limit.states
        w = as_weights(states, mu)
        rates = _limit_rates(expansion)
        n = len(states)
        positive = {(i, j): True for i in range(n) for j in range(n) if i != j and rates[i, j] > 0}
        closed, other = _classes(positive, n)
        nu = {}
        for comp in list(closed) + list(other):
            nu.update(_restricted_stationary([[rates[x, y] for y in range(n)] for x in range(n)],
                                             comp))
        ell = _mp.to_mp(ell)
        top = max(expansion.depth.values()) + 1
        u = []
        for k, s in enumerate(states):
            if w[k] > 0:
                u.append(ell ** expansion.depth[s] * _mp.gmpy2.sqrt(w[k] / _mp.to_mp(nu[k])))
            else:
                u.append(ell ** (-top))
        u = np.array(u, dtype=object)
        value = mpfr(0)
        for x in range(n):
            if w[x] > 0:
                value -= w[x] * sum((rates[x, y] * (u[y] / u[x] - 1) for y in range(n) if y != x),
                                    mpfr(0))
        return value


def decomposition_residual(tree: MetastableTree, p: int, mu) -> object:
    """Mass of ``mu`` on ``Delta_p`` plus, per well, its mass times the total
    variation between ``mu`` conditioned on the well and ``pi^(p)_j``.

    Zero exactly when ``mu`` is a convex combination of the level-``p`` measures.
    """
    level = tree.level(p)
    with working_precision(tree.tolerances.precision_bits):
        w = as_weights(tree.spec.states, mu)
        idx = tree.spec.index
        total = sum((w[idx[s]] for s in level.delta), mpfr(0))
        for j, well in enumerate(level.wells):
            target = level.metastable_measures[j]
            mass = sum((w[idx[s]] for s in well), mpfr(0))
            total += sum((abs(w[idx[s]] - mass * _mp.to_mp(target.get(s, 0))) for s in well),
                         mpfr(0)) / 2
        return total


def decompose(tree: MetastableTree, p: int, mu, tol: float | None = None) -> Decomposition | None:
    """Write ``mu`` as ``sum_j w_j pi^(p)_j`` if ``decomposition_residual`` is within ``tol``."""
    if tol is None:
        tol = tree.tolerances.decompose
    residual = decomposition_residual(tree, p, mu)
    if residual > tol:
        return None
    level = tree.level(p)
    with working_precision(tree.tolerances.precision_bits):
        w = as_weights(tree.spec.states, mu)
        idx = tree.spec.index
        weights = [sum((w[idx[s]] for s in well), mpfr(0)) for well in level.wells]
        total = sum(weights, mpfr(0))
        return Decomposition(p, tuple(v / total for v in weights), residual)


def _reduced_matrix(level: Level, probe=None) -> np.ndarray:
    if probe is None:
        return _to_mp_matrix(level.reduced_rates)
    raw = level.reduced_rates_probes[probe]
    m = level.size
    return _mp.asarray([[raw[i][j] if level.reduced_rates[i][j] > 0 else 0 for j in range(m)]
                        for i in range(m)])


def _check_level(expansion: RateExpansion, p: int) -> Level:
    if not 1 <= p <= expansion.tree.q:
        raise DomainError(f"p must be between 1 and {expansion.tree.q}")
    return expansion.tree.level(p)


def Ip_closed(expansion: RateExpansion, p: int, mu, probe=None) -> object:
    """Closed form of ``I^(p)``: ``+inf`` off convex combinations of ``pi^(p)_j``.

    On the reduced chain, recurrent classes contribute the Dirichlet form of
    ``sqrt(w / M_m)``, transient indices their outflow (transient classes
    with several indices also their internal Dirichlet form).
    """
    if not expansion.tree.reversible:
        raise UnsupportedOperationError("closed form needs a reversible spec; use Ip_variational")
    level = _check_level(expansion, p)
    dec = decompose(expansion.tree, p, mu)
    if dec is None:
        return INF
    with working_precision(expansion.precision_bits):
        return _class_form(_reduced_matrix(level, probe), np.array(dec.weights, dtype=object))


def Ip_variational(expansion: RateExpansion, p: int, mu, probe=None, max_iter: int = 500,
                   start: str = "balanced") -> object:
    """``-inf_h sum_j w_j (L^(p) h)(j) / h(j)`` after decomposing ``mu``; ``+inf`` if it fails."""
    level = _check_level(expansion, p)
    dec = decompose(expansion.tree, p, mu)
    if dec is None:
        return INF
    with working_precision(expansion.precision_bits):
        return variational_rate(_reduced_matrix(level, probe), np.array(dec.weights, dtype=object),
                                expansion.precision_bits, max_iter, start=start)


@dataclass(frozen=True)
class BandedValue:
    value: object
    low: object
    high: object

    @property
    def relative_spread(self):
        if self.value == 0 or is_infinite(self.value):
            return mpfr(0)
        return (self.high - self.low) / self.value

    @property
    def banded(self) -> bool:
        return self.relative_spread > 0.01


def Ip_band(expansion: RateExpansion, p: int, mu) -> BandedValue:
    """``I^(p)(mu)`` with the spread obtained from the finite-n reduced rates at the probes."""
    level = _check_level(expansion, p)
    evaluate = Ip_closed if expansion.tree.reversible else Ip_variational
    value = evaluate(expansion, p, mu)
    if is_infinite(value):
        return BandedValue(INF, INF, INF)
    probes = [evaluate(expansion, p, mu, probe=n) for n in sorted(level.reduced_rates_probes)]
    return BandedValue(value, min([value] + probes), max([value] + probes))


def recovery_sequence(tree: MetastableTree, p: int, mu, chain: FiniteChain) -> Distribution:
    """``mu_n = alpha_n h_n^2 pi_n``, ``h_n`` harmonic off the wells of level ``p``.

    On well ``j``, ``h_n^2 = w_j / pi_n(V_j)`` with ``w`` the decomposition weights.
    """
    dec = decompose(tree, p, mu)
    if dec is None:
        raise DomainError(f"mu is not a convex combination of the level-{p} metastable measures")
    level = tree.level(p)
    with working_precision(chain.precision_bits):
        pi = stationary(chain)
        boundary = {}
        for j, well in enumerate(level.wells):
            mass = sum((pi[s] for s in well), mpfr(0))
            root = _mp.gmpy2.sqrt(_mp.to_mp(dec.weights[j]) / mass)
            for s in well:
                boundary[s] = root
        h = poisson_solve(chain, list(boundary), boundary)
        raw = h * h * pi.weights
        return Distribution(chain.states, raw / sum(raw, mpfr(0)))


def recovery_normaliser(tree: MetastableTree, p: int, mu, chain: FiniteChain) -> object:
    """``alpha_n`` of the recovery sequence (tends to 1)."""
    dec = decompose(tree, p, mu)
    if dec is None:
        raise DomainError("mu is outside the domain")
    level = tree.level(p)
    with working_precision(chain.precision_bits):
        pi = stationary(chain)
        boundary = {}
        for j, well in enumerate(level.wells):
            mass = sum((pi[s] for s in well), mpfr(0))
            for s in well:
                boundary[s] = _mp.gmpy2.sqrt(_mp.to_mp(dec.weights[j]) / mass)
        h = poisson_solve(chain, list(boundary), boundary)
        return 1 / sum(h * h * pi.weights, mpfr(0))


@dataclass(frozen=True)
class SweepRow:
    n: object
    I_n: object
    theta_I_n: object
    target: object

    @property
    def abs_err(self):
        return abs(self.theta_I_n - self.target)


def gamma_sweep(tree: MetastableTree, p: int, mu, n_list: Sequence,
                expansion: RateExpansion | None = None) -> list[SweepRow]:
    """Rows ``(n, I_n(mu_n), theta^(p)_n I_n(mu_n), I^(p)(mu))`` along ``n_list``."""
    expansion = expansion or RateExpansion.from_tree(tree)
    bits = tree.tolerances.precision_bits
    if p == 0:
        target = (I0_closed if tree.reversible else I0_variational)(expansion, mu)
    else:
        target = (Ip_closed if tree.reversible else Ip_variational)(expansion, p, mu)
    rows = []
    for n in n_list:
        chain = instantiate(tree.spec, n, bits)
        if p == 0:
            mu_n, theta = mu, mpfr(1)
        else:
            mu_n = recovery_sequence(tree, p, mu, chain)
            theta = tree.level(p).theta_at(n, bits)
        rate = dv_rate_reversible if tree.reversible else dv_rate_variational
        value = rate(chain, mu_n)
        with working_precision(bits):
            rows.append(SweepRow(n, value, theta * value, target))
    return rows


def sweep_to_csv(rows: Iterable[SweepRow], digits: int = 12) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "I_n", "theta_I_n", "target", "abs_err"])
    fmt = lambda v: "+inf" if is_infinite(v) else f"{float(v):.{digits}g}"
    for r in rows:
        writer.writerow([r.n, fmt(r.I_n), fmt(r.theta_I_n), fmt(r.target), fmt(r.abs_err)])
    return buf.getvalue()
