"""Extended-precision engine for one chain at a fixed value of ``n``.

Linear problems on rate matrices (stationary vectors, hitting probabilities,
trace rates, harmonic extensions) are solved by state elimination in the
style of Grassmann, Taksar and Heyman: removing one state at a time only
ever adds positive quantities, so every entry keeps full relative accuracy
even when the rates span hundreds of orders of magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import gmpy2
import networkx as nx
import numpy as np

from . import _mp
from ._mp import mpfr, working_precision
from .errors import (ConditioningError, ConvergenceError, DomainError, ModelError,
                     PrecisionError, UnsupportedOperationError)
from .scale_algebra import RateSpec, widest_path

E = math.e


def _at_precision(func):
    """Run ``func(chain, ...)`` in the chain's working precision."""
    def wrapper(chain, *args, **kwargs):
        with working_precision(chain.precision_bits):
            return func(chain, *args, **kwargs)
    wrapper.__name__ = func.__name__
    wrapper.__qualname__ = func.__qualname__
    wrapper.__doc__ = func.__doc__
    wrapper.__wrapped__ = func
    return wrapper


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Rates ``R_n(x, y)`` of one chain, as a dense object array of mpfr."""

    states: tuple
    rates: np.ndarray
    n_value: object = None
    precision_bits: int = _mp.DEFAULT_PRECISION
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(self.states)
        rates = np.asarray(self.rates, dtype=object)
        if rates.shape != (len(states), len(states)):
            raise ModelError("rate matrix shape does not match the state list")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "index", {s: i for i, s in enumerate(states)})
        for i in range(len(states)):
            rates[i, i] = mpfr(0)
        if len(states) > 1:
            g = nx.DiGraph()
            g.add_nodes_from(range(len(states)))
            g.add_edges_from(zip(*np.nonzero(rates != 0)))
            if not nx.is_strongly_connected(g):
                raise ModelError("chain is not irreducible")

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def holding_rates(self) -> np.ndarray:
        if "holding" not in self._cache:
            with working_precision(self.precision_bits):
                self._cache["holding"] = np.array([sum(row, mpfr(0)) for row in self.rates],
                                                  dtype=object)
        return self._cache["holding"]

    def jump_probabilities(self) -> np.ndarray:
        with working_precision(self.precision_bits):
            return self.rates / self.holding_rates[:, None]

    def generator(self) -> np.ndarray:
        with working_precision(self.precision_bits):
            gen = self.rates.copy()
            for i, lam in enumerate(self.holding_rates):
                gen[i, i] = -lam
            return gen

    def indices(self, subset: Iterable) -> list[int]:
        try:
            return sorted({self.index[s] for s in subset})
        except KeyError as exc:
            raise DomainError(f"unknown state {exc.args[0]!r}") from None

    def rate(self, x, y):
        return self.rates[self.index[x], self.index[y]]


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability weights over an ordered list of states."""

    states: tuple
    weights: np.ndarray

    def __post_init__(self):
        states = tuple(self.states)
        bits = max(gmpy2.get_context().precision, _mp.DEFAULT_PRECISION)
        with working_precision(bits):
            self._init(states, bits)

    def _init(self, states, bits):
        w = _mp.asarray(list(self.weights))
        if w.shape != (len(states),):
            raise DomainError("weights do not match the state list")
        if any(v < 0 for v in w):
            raise DomainError("weights must be non-negative")
        total = sum(w, mpfr(0))
        if abs(total - 1) > 1e-9:
            raise DomainError(f"weights sum to {float(total)}, not 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", w / total)

    def __getitem__(self, state):
        return self.weights[self.states.index(state)]

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.weights))

    @property
    def support(self) -> tuple:
        return tuple(s for s, w in zip(self.states, self.weights) if w > 0)

    def total_variation(self, other: "Distribution | Mapping") -> object:
        other = as_weights(self.states, other)
        return sum((abs(a - b) for a, b in zip(self.weights, other)), mpfr(0)) / 2


@dataclass(frozen=True)
class Trajectory:
    seed: int
    events: tuple  # (state, holding time) pairs; the last one is cut at the horizon

    @property
    def endpoint(self):
        return self.events[-1][0]


def as_weights(states: Sequence, mu) -> np.ndarray:
    """Weights of ``mu`` over ``states`` as an mpfr array (missing states get 0)."""
    if isinstance(mu, Distribution):
        lookup = mu.as_dict()
    elif isinstance(mu, Mapping):
        lookup = mu
    else:
        values = list(mu)
        if len(values) != len(states):
            raise DomainError("measure length does not match the state list")
        return _mp.asarray(values)
    unknown = set(lookup) - set(states)
    if unknown:
        raise DomainError(f"measure charges unknown states {sorted(map(str, unknown))}")
    return _mp.asarray([lookup.get(s, 0) for s in states])


def instantiate(spec: RateSpec, n, precision_bits: int | None = None) -> FiniteChain:
    """Evaluate every rate of ``spec`` at ``n``."""
    bits = int(precision_bits or _mp.DEFAULT_PRECISION)
    if bits < 64:
        raise DomainError("precision_bits must be at least 64")
    if float(n) < 0:
        raise DomainError("n must be non-negative")
    budget = bits - 32
    with working_precision(bits):
        rates = _mp.zeros((spec.size, spec.size))
        nn = _mp.to_mp(n) if not isinstance(n, gmpy2.mpfr) else n
        for (x, y), r in spec.edges.items():
            drop = float(r.cost) * float(n) / math.log(2)
            if drop > budget:
                raise PrecisionError(
                    f"rate of edge ({x!r}, {y!r}) is about 2^-{drop:.0f}, beyond the "
                    f"{bits}-bit budget; raise the precision or lower n")
            rates[spec.index[x], spec.index[y]] = (
                _mp.to_mp(r.prefactor) * gmpy2.exp(-_mp.to_mp(r.cost) * nn))
    return FiniteChain(spec.states, rates, n, bits)


def from_rates(states: Sequence, rates, precision_bits: int | None = None, n_value=None) -> FiniteChain:
    bits = int(precision_bits or _mp.DEFAULT_PRECISION)
    with working_precision(bits):
        return FiniteChain(tuple(states), _mp.asarray(rates), n_value, bits)


# --- state elimination -------------------------------------------------------

@dataclass
class _Elimination:
    """Trace rates on the surviving states plus the records needed to
    extend boundary data back to the eliminated ones."""

    rates: list
    alive: list
    records: list  # (k, outgoing {j: rate}, incoming {i: rate}, total outflow)


def _eliminate(rates, remove: Sequence[int], zero=None) -> _Elimination:
    """Remove the states in ``remove`` one by one, rerouting their flows.

    Works over any positive number type with ``+``, ``*`` and ``/``: mpfr,
    Fraction, or the leading-order semiring of :mod:`scale_algebra`.
    """
    if zero is None:
        zero = mpfr(0)
    n = len(rates)
    r = [list(row) for row in rates]
    alive = set(range(n))
    records = []
    for k in remove:
        alive.discard(k)
        out = {j: r[k][j] for j in alive if r[k][j] != zero}
        inc = {i: r[i][k] for i in alive if r[i][k] != zero}
        d = sum(out.values(), zero)
        if d == zero:
            raise ConditioningError(f"state index {k} has no path back to the kept set")
        records.append((k, out, inc, d))
        for i, rik in inc.items():
            f = rik / d
            row = r[i]
            for j, rkj in out.items():
                if j != i:
                    row[j] = row[j] + f * rkj
            row[k] = zero
        for j in out:
            r[k][j] = zero
    return _Elimination(r, sorted(alive), records)


def _extend(elim: _Elimination, boundary: Mapping[int, object], n: int) -> np.ndarray:
    """Harmonic extension of boundary values (scalars or arrays) to all states."""
    values = dict(boundary)
    for k, out, _inc, d in reversed(elim.records):
        acc = None
        for j, rate in out.items():
            term = values[j] * rate
            acc = term if acc is None else acc + term
        values[k] = acc / d
    first = next(iter(values.values()))
    if isinstance(first, np.ndarray):
        out = np.empty((n,) + first.shape, dtype=object)
    else:
        out = np.empty(n, dtype=object)
    for k, v in values.items():
        out[k] = v
    return out


def _gth_stationary(rates, one=None, zero=None) -> np.ndarray:
    """Stationary vector of an irreducible rate matrix, subtraction free."""
    if one is None:
        one, zero = mpfr(1), mpfr(0)
    elif zero is None:
        zero = one * 0
    n = len(rates)
    if n == 1:
        return np.array([one], dtype=object)
    elim = _eliminate(rates, list(range(n - 1, 0, -1)), zero)
    weights = {0: one}
    for k, _out, inc, d in reversed(elim.records):
        weights[k] = sum((weights[i] * rate for i, rate in inc.items()), zero) / d
    pi = np.array([weights[k] for k in range(n)], dtype=object)
    return pi / sum(pi, zero)


@_at_precision
def stationary(chain: FiniteChain) -> Distribution:
    """Unique stationary distribution, with a residual check on ``pi L = 0``."""
    if "pi" not in chain._cache:
        pi = _gth_stationary(chain.rates)
        flux_in = pi @ chain.rates
        flux_out = pi * chain.holding_rates
        res = _mp.abs_max(flux_in - flux_out)
        scale = _mp.abs_max(flux_out)
        if res > scale * mpfr(2) ** (-(chain.precision_bits // 2)):
            raise ConditioningError(f"stationary residual {float(res):.3e} relative to "
                                    f"{float(scale):.3e}")
        chain._cache["pi"] = Distribution(chain.states, pi)
    return chain._cache["pi"]


def _disjoint(chain: FiniteChain, A, B) -> tuple[list[int], list[int]]:
    a, b = chain.indices(A), chain.indices(B)
    if not a or not b:
        raise DomainError("A and B must be non-empty")
    if set(a) & set(b):
        raise DomainError("A and B must be disjoint")
    return a, b


def _equilibrium_potential(chain: FiniteChain, a: list[int], b: list[int]) -> np.ndarray:
    """``h(x) = P_x[H_A < H_B]`` for all x (1 on A, 0 on B)."""
    key = ("h", tuple(a), tuple(b))
    if key not in chain._cache:
        keep = set(a) | set(b)
        elim = _eliminate(chain.rates, [k for k in range(chain.size) if k not in keep])
        boundary = {k: mpfr(1) for k in a}
        boundary.update({k: mpfr(0) for k in b})
        chain._cache[key] = _extend(elim, boundary, chain.size)
    return chain._cache[key]


@_at_precision
def hitting_probability(chain: FiniteChain, x, A, B):
    """``P_x[H_A < H_B]``, with ``H_A = 0`` when ``x`` is in ``A``."""
    a, b = _disjoint(chain, A, B)
    return _equilibrium_potential(chain, a, b)[chain.index[x]]


@_at_precision
def return_probability(chain: FiniteChain, x, A, B):
    """``P_x[H_B < H_A^+]`` for ``x`` in ``A``: leave x, then reach B before A."""
    a, b = _disjoint(chain, A, B)
    i = chain.index[x]
    if i not in a:
        raise DomainError("x must belong to A")
    g = _equilibrium_potential(chain, b, a)
    return sum((chain.rates[i, j] * g[j] for j in range(chain.size)), mpfr(0)) / chain.holding_rates[i]


@_at_precision
def capacity(chain: FiniteChain, A, B):
    """``Cap(A, B) = sum_{x in A} pi(x) lambda(x) P_x[H_B < H_A^+]``."""
    a, b = _disjoint(chain, A, B)
    pi = stationary(chain).weights
    g = _equilibrium_potential(chain, b, a)
    total = mpfr(0)
    for i in a:
        total += pi[i] * sum((chain.rates[i, j] * g[j] for j in range(chain.size)), mpfr(0))
    return total


@_at_precision
def trace_rates(chain: FiniteChain, W) -> FiniteChain:
    """Jump rates of the chain watched only while it sits in ``W``."""
    w = chain.indices(W)
    if not w:
        raise DomainError("W must be non-empty")
    if len(w) == chain.size:
        return chain
    keep = set(w)
    elim = _eliminate(chain.rates, [k for k in range(chain.size) if k not in keep])
    sub = np.array([[elim.rates[i][j] if i != j else mpfr(0) for j in w] for i in w], dtype=object)
    return FiniteChain(tuple(chain.states[i] for i in w), sub, chain.n_value, chain.precision_bits)


@_at_precision
def mean_rates(chain: FiniteChain, partition: Sequence[Iterable]) -> np.ndarray:
    """``r(i, j) = pi(B_i)^-1 sum_{x in B_i} pi(x) sum_{y in B_j} R^W(x, y)``, W the union."""
    blocks = [chain.indices(block) for block in partition]
    if any(not b for b in blocks):
        raise DomainError("partition blocks must be non-empty")
    flat = [k for b in blocks for k in b]
    if len(flat) != len(set(flat)):
        raise DomainError("partition blocks must be disjoint")
    union = sorted(flat)
    tr = trace_rates(chain, [chain.states[k] for k in union])
    pos = {k: i for i, k in enumerate(union)}
    pi = stationary(chain).weights
    m = len(blocks)
    out = _mp.zeros((m, m))
    for bi, block_i in enumerate(blocks):
        mass = sum((pi[k] for k in block_i), mpfr(0))
        for bj, block_j in enumerate(blocks):
            if bi == bj:
                continue
            flow = mpfr(0)
            for x in block_i:
                row = tr.rates[pos[x]]
                flow += pi[x] * sum((row[pos[y]] for y in block_j), mpfr(0))
            out[bi, bj] = flow / mass
    return out


@_at_precision
def poisson_solve(chain: FiniteChain, V0, g) -> np.ndarray:
    """Function harmonic off ``V0`` and equal to ``g`` on it, i.e. ``E_x[g(X_{H_V0})]``.

    ``g`` may be a mapping, a callable, or a sequence aligned with ``V0``.
    The result is indexed like ``chain.states``.
    """
    v0 = list(V0)
    if not v0:
        raise DomainError("V0 must be non-empty")
    if callable(g):
        values = {s: g(s) for s in v0}
    elif isinstance(g, Mapping):
        values = dict(g)
    else:
        values = dict(zip(v0, g))
    keep = set(chain.indices(v0))
    elim = _eliminate(chain.rates, [k for k in range(chain.size) if k not in keep])
    boundary = {chain.index[s]: _mp.to_mp(values[s]) for s in v0}
    return _extend(elim, boundary, chain.size)


def _as_function(chain: FiniteChain, f) -> np.ndarray:
    if callable(f):
        return _mp.asarray([f(s) for s in chain.states])
    return as_weights(chain.states, f)


@_at_precision
def dirichlet_form(chain: FiniteChain, f) -> object:
    """``<f, (-L) f>_pi``, written as ``(1/2) sum pi(x) R(x, y) (f(y) - f(x))^2``.

    The two expressions agree for any chain once ``pi`` is stationary; the
    squared form has no cancellation.
    """
    f = _as_function(chain, f)
    pi = stationary(chain).weights
    diff = f[None, :] - f[:, None]
    return (pi[:, None] * chain.rates * diff * diff).sum() / 2


@_at_precision
def generator_apply(chain: FiniteChain, f) -> np.ndarray:
    """``(L f)(x) = sum_y R(x, y) (f(y) - f(x))``."""
    f = _as_function(chain, f)
    return (chain.rates * (f[None, :] - f[:, None])).sum(axis=1)


# --- matrix exponential --------------------------------------------------------

def expm_rates(rates: np.ndarray, t, precision_bits: int) -> np.ndarray:
    """``exp(t L)`` for the generator with off-diagonal ``rates``.

    Uniformization on a short step ``tau = t / 2^k`` with ``Lambda tau <= 1``,
    then ``k`` squarings. Rows may be absorbing (all zero).
    """
    with working_precision(precision_bits):
        n = rates.shape[0]
        t = _mp.to_mp(t)
        if t < 0:
            raise DomainError("t must be non-negative")
        lam = np.array([sum(row, mpfr(0)) for row in rates], dtype=object)
        big = max(lam) if n else mpfr(0)
        if t == 0 or big == 0:
            return _mp.eye(n)
        span = big * t
        k = max(0, int(gmpy2.ceil(gmpy2.log2(span)))) if span > 1 else 0
        guard = 16
        limit = precision_bits // 2 - math.log2(max(n, 2)) - guard
        if k > limit:
            raise PrecisionError(
                f"t * max rate = 2^{float(gmpy2.log2(span)):.1f} needs {k} squarings, more "
                f"than the {precision_bits}-bit budget allows ({limit:.0f}); raise the "
                "precision")
        tau = t / mpfr(2) ** k
        step = big * tau
        p = rates / big
        for i in range(n):
            p[i, i] = 1 - lam[i] / big
        tol = mpfr(2) ** (-(precision_bits // 2 + k + 8))
        weight = gmpy2.exp(-step)
        term = _mp.eye(n)
        out = term * weight
        j = 0
        while True:
            j += 1
            weight = weight * step / j
            term = term @ p
            out = out + term * weight
            if weight < tol and j > step:
                break
        for _ in range(k):
            out = out @ out
        return out


@_at_precision
def transition_kernel(chain: FiniteChain, t) -> np.ndarray:
    """``exp(t L_n)``; rows indexed like ``chain.states``."""
    return expm_rates(chain.rates, t, chain.precision_bits)


# --- large deviations ------------------------------------------------------------

def _newton_scc(rates: np.ndarray, mu: np.ndarray, members: list[int], bits: int,
                max_iter: int, start: str = "balanced"):
    """Minimise ``F(phi) = sum_{x,y in K} mu(x) R(x,y) exp(phi(y) - phi(x))``.

    The gauge is fixed by ``phi = 0`` at the first member. The start point
    ``phi = log sqrt(mu / nu)``, ``nu`` the stationary law of the rates
    restricted to ``K``, is the exact minimiser for reversible rates;
    ``start="flat"`` begins at ``phi = 0`` instead (used for cross-checks).
    """
    m = len(members)
    sub = np.array([[rates[x, y] for y in members] for x in members], dtype=object)
    mk = np.array([mu[x] for x in members], dtype=object)
    base = mk[:, None] * sub
    if start == "flat":
        phi = _mp.zeros(m)
    elif start == "balanced":
        nu = _gth_stationary(sub)
        phi = _mp.log(_mp.sqrt(mk / nu))
        phi = phi - phi[0]
    else:
        raise ValueError(f"unknown start {start!r}")

    def evaluate(ph):
        w = base * _mp.exp(ph[None, :] - ph[:, None])
        return w, w.sum()

    w, value = evaluate(phi)
    tol = mpfr(2) ** (-(bits // 2))
    for it in range(max_iter):
        grad = w.sum(axis=0) - w.sum(axis=1)
        gnorm = _mp.abs_max(grad[1:])
        if gnorm <= tol * value:
            return value, phi, it
        sym = w + w.T
        hess = -sym
        for z in range(m):
            hess[z, z] = sym[z].sum() - sym[z, z]
        step = _mp.solve(hess[1:, 1:], -grad[1:])
        slope = (grad[1:] * step).sum()
        t = mpfr(1)
        while True:
            trial = phi.copy()
            trial[1:] = phi[1:] + t * step
            w_new, v_new = evaluate(trial)
            if v_new <= value + t * slope / 4 or t < mpfr(2) ** -60:
                break
            t = t / 2
        phi, w, value = trial, w_new, v_new
    raise ConvergenceError(
        f"Newton iteration did not converge in {max_iter} steps",
        {"gradient": float(gnorm), "value": float(value), "members": members})


def variational_rate(rates: np.ndarray, mu: np.ndarray, precision_bits: int,
                     max_iter: int = 500, return_potential: bool = False,
                     start: str = "balanced"):
    """``sup_u -sum mu(x) (L u)(x) / u(x)`` for the generator with off-diagonal ``rates``.

    States outside the support of ``mu`` are sent to ``u = 0``. The support is
    split into strongly connected pieces of the rate graph; by shifting the
    potential down along the condensation, edges between pieces cost nothing,
    so the supremum is the total holding flux minus one convex minimum per
    piece. The rate graph may be reducible.
    """
    with working_precision(precision_bits):
        rates = np.asarray(rates, dtype=object)
        mu = np.asarray(mu, dtype=object)
        n = rates.shape[0]
        support = [x for x in range(n) if mu[x] > 0]
        lam = np.array([sum((rates[x, y] for y in range(n) if y != x), mpfr(0))
                        for x in range(n)], dtype=object)
        total = sum((mu[x] * lam[x] for x in support), mpfr(0))
        g = nx.DiGraph()
        g.add_nodes_from(support)
        g.add_edges_from((x, y) for x in support for y in support
                         if x != y and rates[x, y] > 0)
        phi = {}
        for comp in sorted((sorted(c) for c in nx.strongly_connected_components(g))):
            if len(comp) == 1:
                phi[comp[0]] = mpfr(0)
                continue
            value, ph, _ = _newton_scc(rates, mu, comp, precision_bits, max_iter, start)
            total -= value
            phi.update(zip(comp, ph))
        if total < 0:
            total = mpfr(0)
        if return_potential:
            return total, phi
        return total


def _balanced(chain: FiniteChain) -> bool:
    pi = stationary(chain).weights
    flux = pi[:, None] * chain.rates
    tol = mpfr(2) ** (-(chain.precision_bits // 2))
    for i in range(chain.size):
        for j in range(i + 1, chain.size):
            a, b = flux[i, j], flux[j, i]
            if abs(a - b) > tol * max(a, b):
                return False
    return True


@_at_precision
def dv_rate_reversible(chain: FiniteChain, mu) -> object:
    """``<sqrt f, (-L) sqrt f>_pi`` with ``f = mu / pi``; reversible chains only."""
    if not _balanced(chain):
        raise UnsupportedOperationError(
            "chain is not reversible; use dv_rate_variational")
    w = as_weights(chain.states, mu)
    pi = stationary(chain).weights
    return dirichlet_form.__wrapped__(chain, _mp.sqrt(w / pi))


@_at_precision
def dv_rate_variational(chain: FiniteChain, mu, max_iter: int = 500,
                        start: str = "balanced") -> object:
    """Level-two rate ``-inf_{u > 0} sum mu(x) (L u)(x) / u(x)`` by damped Newton."""
    w = as_weights(chain.states, mu)
    return variational_rate(chain.rates, w, chain.precision_bits, max_iter, start=start)


def dv_objective(chain: FiniteChain, mu, phi) -> object:
    """``-sum mu(x) sum_y R(x,y) (exp(phi(y) - phi(x)) - 1)`` at a finite potential."""
    with working_precision(chain.precision_bits):
        w = as_weights(chain.states, mu)
        ph = _mp.asarray(list(phi))
        terms = chain.rates * (_mp.exp(ph[None, :] - ph[:, None]) - 1)
        return -(w[:, None] * terms).sum()


# --- simulation --------------------------------------------------------------------

def _float_rates(chain: FiniteChain) -> np.ndarray:
    return _mp.to_float(chain.rates)


def simulate(chain: FiniteChain, start, horizon: float, seed: int) -> Trajectory:
    """Exact-jump trajectory up to ``horizon``; deterministic in ``seed``."""
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    rng = np.random.default_rng(seed)
    rates = _float_rates(chain)
    lam = rates.sum(axis=1)
    probs = rates / lam[:, None]
    x = chain.index[start]
    t = 0.0
    events = []
    while True:
        hold = rng.exponential(1.0 / lam[x])
        if t + hold >= horizon:
            events.append((chain.states[x], horizon - t))
            break
        events.append((chain.states[x], hold))
        t += hold
        x = int(rng.choice(chain.size, p=probs[x]))
    return Trajectory(seed, tuple(events))


def sample_marginals(chain: FiniteChain, start, times: Sequence[float], replicas: int,
                     seed: int) -> np.ndarray:
    """Endpoint states of ``replicas`` independent paths at each of ``times``.

    Returns an integer array ``(len(times), replicas)`` of state indices.
    """
    times = sorted(float(t) for t in times)
    rates = _float_rates(chain)
    lam = rates.sum(axis=1)
    cum = np.cumsum(rates / lam[:, None], axis=1)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = np.empty((len(times), replicas), dtype=int)
    x0 = chain.index[start]
    for r in range(replicas):
        x, t = x0, 0.0
        k = 0
        while k < len(times):
            t_next = t + rng.exponential(1.0 / lam[x])
            while k < len(times) and times[k] < t_next:
                out[k, r] = x
                k += 1
            if k == len(times):
                break
            t = t_next
            x = min(int(np.searchsorted(cum[x], rng.random(), side="right")), chain.size - 1)
    return out


# --- potential-theoretic checks ----------------------------------------------------

@_at_precision
def hitting_before(chain: FiniteChain, nu, B, rho) -> object:
    """``P_nu[H_B <= rho]`` from the kernel of the chain absorbed at ``B``."""
    b = chain.indices(B)
    absorbed = chain.rates.copy()
    for k in b:
        absorbed[k, :] = mpfr(0)
    kernel = expm_rates(absorbed, rho, chain.precision_bits)
    w = as_weights(chain.states, nu)
    return sum((w @ kernel[:, k] for k in b), mpfr(0))


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    lhs: object
    rhs: object

    def __bool__(self):
        return self.holds


@_at_precision
def hitting_time_bound_check(chain: FiniteChain, A, B, rho) -> BoundCheck:
    """``P_x[H_B <= rho] <= e Cap({x}, B) rho / pi(x)`` for ``A = {x}``."""
    a, b = _disjoint(chain, A, B)
    if len(a) != 1:
        raise DomainError("the singleton form needs A = {x}; use hitting_time_bound_check_measure")
    x = chain.states[a[0]]
    lhs = hitting_before(chain, {x: 1}, B, rho)
    pi = stationary(chain).weights
    rhs = gmpy2.exp(mpfr(1)) * capacity(chain, [x], B) / pi[a[0]] * _mp.to_mp(rho)
    return BoundCheck(bool(lhs <= rhs), lhs, rhs)


@_at_precision
def hitting_time_bound_check_measure(chain: FiniteChain, nu, A, B, rho) -> BoundCheck:
    """``P_nu[H_B <= rho]^2 <= e^2 E_{pi_A}[(nu/pi_A)^2] Cap(A, B) rho / pi(A)``."""
    a, b = _disjoint(chain, A, B)
    w = as_weights(chain.states, nu)
    if any(w[k] > 0 for k in range(chain.size) if k not in a):
        raise DomainError("nu must be concentrated on A")
    pi = stationary(chain).weights
    mass = sum((pi[k] for k in a), mpfr(0))
    second = sum((w[k] ** 2 / (pi[k] / mass) for k in a), mpfr(0))
    lhs = hitting_before(chain, w, B, rho) ** 2
    rhs = (gmpy2.exp(mpfr(2)) * second * capacity(chain, [chain.states[k] for k in a], B)
           / mass * _mp.to_mp(rho))
    return BoundCheck(bool(lhs <= rhs), lhs, rhs)


@_at_precision
def bottleneck_conductance(chain: FiniteChain, A, B):
    """Finite-n widest-path conductance ``c_n(A, B)`` with ``c(x,y) = pi(x) R(x,y)``."""
    a, b = _disjoint(chain, A, B)
    pi = stationary(chain).weights
    weights = {(i, j): pi[i] * chain.rates[i, j]
               for i in range(chain.size) for j in range(chain.size) if chain.rates[i, j] > 0}
    return widest_path(weights, a, b, chain.size)
