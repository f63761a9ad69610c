"""Numerical verification suites run from the command line and the acceptance tests.

Each suite evaluates finite-n quantities with :mod:`finite_chain` and
compares them against the asymptotic objects of :mod:`hierarchy` and
:mod:`gamma_expansion`, or checks exact identities of potential theory.
"""
from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

import gmpy2
import numpy as np

from . import _mp
from ._mp import mpfr, working_precision
from .finite_chain import (FiniteChain, as_weights, bottleneck_conductance, capacity,
                           dirichlet_form, generator_apply, hitting_probability,
                           hitting_time_bound_check, instantiate, poisson_solve, stationary,
                           trace_rates, transition_kernel)
from .gamma_expansion import (RateExpansion, Ip_closed, Ip_variational, gamma_sweep,
                              is_infinite)
from .hierarchy import MetastableTree, limiting_kernel_between
from .scale_algebra import RateSpec, capacity_order, stationary_asymptotics

IDENTITY_TOL = mpfr("1e-20")


@dataclass
class SuiteResult:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_csv(self, digits: int = 12) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(row.get(c), digits) for c in self.columns])
        return buf.getvalue()


def _cell(value, digits):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "pass" if value else "FAIL"
    if isinstance(value, (int, str)):
        return str(value)
    if isinstance(value, gmpy2.mpfr) and gmpy2.is_infinite(value):
        return "+inf"
    return f"{float(value):.{digits}g}"


def _rel(a, b, floor=0):
    """Relative gap; ``floor`` is the magnitude of the summed terms, so that
    identities whose value cancels to zero are judged against rounding scale."""
    scale = max(abs(a), abs(b), abs(floor))
    return abs(a - b) / scale if scale else mpfr(0)


def _gen_scale(chain, f, k):
    # size of the terms in (Lf)(x) before cancellation
    return sum((chain.rates[k, j] * (abs(f[j]) + abs(f[k])) for j in range(chain.size)), mpfr(0))


def _dir_scale(chain, f):
    pi = stationary(chain).weights
    sq = np.array([v * v for v in f], dtype=object)
    return (pi[:, None] * chain.rates * (sq[None, :] + sq[:, None])).sum() / 2


# --- time scales ---------------------------------------------------------------------------

def beta_scale(tree: MetastableTree, p: int, n, bits: int | None = None):
    """Intermediate time ``beta_n`` between ``theta^(p-1)_n`` and ``theta^(p)_n``.

    The geometric mean for ``p <= q``; above the last scale, ``theta^(q)_n``
    times the square root of the last scale ratio.
    """
    bits = bits or tree.tolerances.precision_bits
    with working_precision(bits):
        theta = lambda k: mpfr(1) if k == 0 else tree.level(k).theta_at(n, bits)
        if p <= tree.q:
            return gmpy2.sqrt(theta(p - 1) * theta(p))
        if tree.q == 0:
            return _mp.to_mp(n)
        last, before = theta(tree.q), theta(tree.q - 1)
        return last * gmpy2.sqrt(last / before)


def kernel_gap(tree: MetastableTree, chain: FiniteChain, p: int, t) -> object:
    """Max over starting states of the total variation between ``p_t(x, .)`` and ``Pi_{p-1}(x, .)``."""
    kernel = transition_kernel(chain, t)
    with working_precision(chain.precision_bits):
        worst = mpfr(0)
        for i, x in enumerate(chain.states):
            target = limiting_kernel_between(tree, p, x).weights
            tv = sum((abs(kernel[i, k] - target[k]) for k in range(chain.size)), mpfr(0)) / 2
            worst = max(worst, tv)
        return worst


def kernel_convergence(tree: MetastableTree, n_list: Sequence, bits: int | None = None,
                       final_tol: float = 0.02) -> SuiteResult:
    res = SuiteResult("kernel-convergence", ["p", "n", "beta", "max_tv", "ok"])
    bits = bits or tree.tolerances.precision_bits
    for p in range(1, tree.q + 2):
        gaps = []
        for n in n_list:
            chain = instantiate(tree.spec, n, bits)
            beta = beta_scale(tree, p, n, bits)
            gap = kernel_gap(tree, chain, p, beta)
            gaps.append(gap)
            res.rows.append({"p": p, "n": n, "beta": beta, "max_tv": gap})
        ok = all(a > b for a, b in zip(gaps, gaps[1:])) and gaps[-1] < final_tol
        res.rows[-1]["ok"] = ok
        if not ok:
            res.failures.append(f"p = {p}: gaps {[float(g) for g in gaps]}")
    return res


# --- Gamma-limsup ------------------------------------------------------------------------------

def _mixture(level, weights):
    mu = {}
    for j, w in enumerate(weights):
        for s, v in level.metastable_measures[j].items():
            mu[s] = mu.get(s, 0) + w * float(v)
    return mu


def sample_measures(tree: MetastableTree, p: int, count: int = 5, seed: int = 0,
                    expansion: RateExpansion | None = None) -> list[dict]:
    """Convex combinations of level-``p`` measures with a positive limit value."""
    expansion = expansion or RateExpansion.from_tree(tree)
    level = tree.level(p)
    rng = random.Random(seed)
    candidates = []
    for j in range(level.size):
        w = [0.0] * level.size
        w[j] = 1.0
        candidates.append(w)
    for _ in range(50):
        raw = [rng.random() for _ in range(level.size)]
        candidates.append([v / sum(raw) for v in raw])
    out = []
    for w in candidates:
        mu = _mixture(level, w)
        value = Ip_closed(expansion, p, mu) if tree.reversible else Ip_variational(expansion, p, mu)
        if not is_infinite(value) and value > mpfr("1e-6"):
            out.append(mu)
        if len(out) == count:
            break
    return out


def gamma_limsup(tree: MetastableTree, n_list: Sequence, levels: Sequence | None = None,
                 per_level: int = 5, final_tol: float = 0.10) -> SuiteResult:
    res = SuiteResult("gamma-limsup", ["p", "measure", "n", "I_n", "theta_I_n", "target",
                                        "abs_err", "ok"])
    expansion = RateExpansion.from_tree(tree)
    for p in levels or range(1, tree.q + 1):
        for k, mu in enumerate(sample_measures(tree, p, per_level, expansion=expansion)):
            rows = gamma_sweep(tree, p, mu, n_list, expansion)
            errs = [r.abs_err for r in rows]
            for r in rows:
                res.rows.append({"p": p, "measure": k, "n": r.n, "I_n": r.I_n,
                                 "theta_I_n": r.theta_I_n, "target": r.target,
                                 "abs_err": r.abs_err})
            ok = (all(a > b for a, b in zip(errs, errs[1:]))
                  and errs[-1] < final_tol * rows[-1].target)
            res.rows[-1]["ok"] = ok
            if not ok:
                res.failures.append(f"p = {p}, measure {k}: errors {[float(e) for e in errs]}")
    return res


# --- appendix identities -------------------------------------------------------------------

def _random_subsets(rng: random.Random, states: Sequence):
    size = len(states)
    w_size = rng.randint(1, size)
    W = rng.sample(list(states), w_size)
    V0 = rng.sample(W, rng.randint(1, w_size))
    return V0, W


def identity_checks(chain: FiniteChain, draws: int = 25, seed: int = 0) -> list[dict]:
    """Generator, Dirichlet, capacity and trace identities on random subsets.

    Each row holds the largest relative discrepancy seen for one draw.
    """
    rng = random.Random(seed)
    rows = []
    bits = chain.precision_bits
    with working_precision(bits):
        pi = stationary(chain)
        for d in range(draws):
            V0, W = _random_subsets(rng, chain.states)
            g = {s: mpfr(rng.uniform(0.1, 2.0)) for s in V0}
            f = poisson_solve(chain, V0, g)
            trace = trace_rates(chain, W)
            f_w = poisson_solve(trace, V0, g)
            lf = generator_apply(chain, f)
            lw = generator_apply(trace, f_w)
            gen_err = max((_rel(lf[chain.index[x]], lw[trace.index[x]],
                                _gen_scale(chain, f, chain.index[x])) for x in V0),
                          default=mpfr(0))
            mass = sum((pi[s] for s in W), mpfr(0))
            dir_err = _rel(dirichlet_form(chain, f), mass * dirichlet_form(trace, f_w),
                           _dir_scale(chain, f))
            tpi = stationary(trace)
            tr_err = max(_rel(tpi[s], pi[s] / mass) for s in W)
            # integral identity for u harmonic off V0 against a random measure
            raw = [mpfr(rng.random()) for _ in chain.states]
            mu = np.array(raw, dtype=object) / sum(raw, mpfr(0))
            lhs = sum((mu[k] * lf[k] / f[k] for k in range(chain.size)), mpfr(0))
            t0 = trace_rates(chain, V0)
            g_arr = np.array([g[s] for s in t0.states], dtype=object)
            l0 = generator_apply(t0, g_arr)
            rhs = sum((mu[chain.index[s]] * l0[t0.index[s]] / g[s] for s in V0), mpfr(0))
            int_scale = sum((mu[k] * _gen_scale(chain, f, k) / abs(f[k]) for k in range(chain.size)),
                            mpfr(0))
            int_err = _rel(lhs, rhs, int_scale)
            cap_err = mpfr(0)
            if chain.size >= 2:
                pool = list(chain.states)
                rng.shuffle(pool)
                cut = rng.randint(1, len(pool) - 1)
                A = pool[:rng.randint(1, cut)]
                B = pool[cut:cut + rng.randint(1, len(pool) - cut)]
                a, b = chain.indices(A), chain.indices(B)
                h = np.array([hitting_probability(chain, x, A, B) for x in chain.states],
                             dtype=object)
                cap_err = _rel(capacity(chain, A, B), dirichlet_form(chain, h))
            rows.append({"draw": d, "generator": gen_err, "dirichlet": dir_err,
                         "integral": int_err, "capacity": cap_err, "trace_stationary": tr_err})
    return rows


def appendix_identities(spec: RateSpec, n_list: Sequence, bits: int | None = None,
                        draws: int = 25, seed: int = 0) -> SuiteResult:
    cols = ["n", "draw", "generator", "dirichlet", "integral", "capacity", "trace_stationary", "ok"]
    res = SuiteResult("appendix-identities", cols)
    for n in n_list:
        chain = instantiate(spec, n, bits)
        for row in identity_checks(chain, draws, seed):
            worst = max(row[c] for c in cols[2:7])
            row.update(n=n, ok=bool(worst < IDENTITY_TOL))
            res.rows.append(row)
            if not row["ok"]:
                res.failures.append(f"n = {n}, draw {row['draw']}: worst relative gap {float(worst):.3e}")
    return res


# --- capacity sandwich ------------------------------------------------------------------------

def random_pairs(states: Sequence, count: int, rng: random.Random):
    pairs = []
    for _ in range(count):
        pool = list(states)
        rng.shuffle(pool)
        cut = rng.randint(1, len(pool) - 1)
        A = sorted(pool[:rng.randint(1, cut)])
        B = sorted(pool[cut:cut + rng.randint(1, len(pool) - cut)])
        pairs.append((A, B))
    return pairs


def capacity_sandwich(spec: RateSpec, n_list: Sequence, pairs: int = 50, seed: int = 0,
                      bits: int | None = None, cost_tol: float = 0.05) -> SuiteResult:
    """``Cap_n / c_n`` stays in ``[1/|V|, |V|^2]`` and the capacity exponent matches ``c_n``'s."""
    res = SuiteResult("capacity-sandwich", ["pair", "n", "capacity", "bottleneck", "ratio",
                                             "fitted_cost", "order_cost", "ok"])
    rng = random.Random(seed)
    chains = [instantiate(spec, n, bits) for n in n_list]
    pi = stationary_asymptotics(spec)
    size = spec.size
    lo, hi = mpfr(1) / size, mpfr(size) ** 2
    for k, (A, B) in enumerate(random_pairs(spec.states, pairs, rng)):
        caps = []
        order = capacity_order(spec, A, B, pi)
        for n, chain in zip(n_list, chains):
            with working_precision(chain.precision_bits):
                cap = capacity(chain, A, B)
                c = bottleneck_conductance(chain, A, B)
                ratio = cap / c
                caps.append(cap)
                ok = bool(lo <= ratio <= hi)
                res.rows.append({"pair": k, "n": n, "capacity": cap, "bottleneck": c,
                                 "ratio": ratio, "order_cost": float(order.cost), "ok": ok})
                if not ok:
                    res.failures.append(f"pair {k} at n = {n}: ratio {float(ratio):.4g}")
        if len(caps) >= 2:
            fitted = float(gmpy2.log(caps[0] / caps[-1])) / (n_list[-1] - n_list[0])
            res.rows[-1]["fitted_cost"] = fitted
            if abs(fitted - float(order.cost)) > cost_tol:
                res.rows[-1]["ok"] = False
                res.failures.append(f"pair {k}: fitted cost {fitted:.4f} vs {float(order.cost)}")
    return res


# --- hitting-time bound -----------------------------------------------------------------------

def hitting_bound(spec: RateSpec, n_list: Sequence, instances: int = 100, seed: int = 0,
                  bits: int | None = None) -> SuiteResult:
    res = SuiteResult("hitting-bound", ["instance", "n", "x", "rho", "lhs", "rhs", "ok"])
    rng = random.Random(seed)
    chains = [instantiate(spec, n, bits) for n in n_list]
    for k in range(instances):
        chain = chains[k % len(chains)]
        x = rng.choice(chain.states)
        others = [s for s in chain.states if s != x]
        B = rng.sample(others, rng.randint(1, len(others)))
        with working_precision(chain.precision_bits):
            pi = stationary(chain)
            scale = pi[x] / capacity(chain, [x], B)
            rho = scale * mpfr(10) ** mpfr(rng.uniform(-3, 1))
            check = hitting_time_bound_check(chain, [x], B, rho)
        res.rows.append({"instance": k, "n": chain.n_value, "x": str(x), "rho": rho,
                         "lhs": check.lhs, "rhs": check.rhs, "ok": check.holds})
        if not check.holds:
            res.failures.append(f"instance {k}: {float(check.lhs):.4g} > {float(check.rhs):.4g}")
    return res


SUITES = ("kernel-convergence", "gamma-limsup", "appendix-identities", "capacity-sandwich",
          "hitting-bound")


def run_suite(name: str, spec: RateSpec, tree: MetastableTree | None, n_list: Sequence,
              bits: int | None = None, seed: int = 0) -> SuiteResult:
    if name == "kernel-convergence":
        return kernel_convergence(tree, n_list, bits)
    if name == "gamma-limsup":
        return gamma_limsup(tree, n_list)
    if name == "appendix-identities":
        return appendix_identities(spec, n_list, bits, seed=seed)
    if name == "capacity-sandwich":
        return capacity_sandwich(spec, n_list, seed=seed, bits=bits)
    if name == "hitting-bound":
        return hitting_bound(spec, n_list, seed=seed, bits=bits)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
