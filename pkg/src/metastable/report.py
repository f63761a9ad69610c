"""Structured report of a built tree, with JSON round-trip and text rendering.

Numbers are stored as strings: exact rationals as ``"p/q"``, extended
precision values with a fixed number of significant digits. This keeps the
serialised form deterministic and lossless with respect to the report.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Optional

import gmpy2
from pydantic import BaseModel, ConfigDict

from .hierarchy import MetastableTree

DIGITS = 12


def fmt(value, digits: int = DIGITS) -> str:
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, gmpy2.mpfr) and gmpy2.is_infinite(value):
        return "+inf" if value > 0 else "-inf"
    return f"{float(value):.{digits}g}"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class LimitReport(_Model):
    closed_classes: list[list[str]]
    transient_classes: list[list[str]]
    delta: list[str]


class LevelReport(_Model):
    p: int
    wells: list[list[str]]
    delta: list[str]
    theta_cost: Optional[str] = None
    theta_prefactor: Optional[str] = None
    theta_at_probes: dict[str, str] = {}
    reduced_rates: Optional[list[list[str]]] = None
    reduced_rates_at_probes: dict[str, list[list[str]]] = {}
    recurrent_classes: list[list[int]]
    transient_indices: list[int]
    class_stationaries: list[dict[str, str]]
    metastable_measures: list[dict[str, str]]
    absorption_A: Optional[list[list[str]]] = None
    subdominant_wells: list[int] = []


class Report(_Model):
    schema_version: str = "metastable-report/1"
    precision_bits: int
    digits: int = DIGITS
    probes: list[str]
    reversible: bool
    q: int
    limit: LimitReport
    levels: list[LevelReport]
    absorption: list[list[list[str]]]
    names: dict[str, str] = {}


def _states(states, names):
    return [str(names.get(s, s)) for s in states]


def build_report(tree: MetastableTree, names: dict | None = None, digits: int = DIGITS) -> Report:
    names = names or {}
    f = lambda v: fmt(v, digits)
    lim = tree.limit
    levels = []
    for L in tree.levels:
        entry = dict(
            p=L.p,
            wells=[_states(w, names) for w in L.wells],
            delta=_states(L.delta, names),
            recurrent_classes=[list(c) for c in L.recurrent_classes],
            transient_indices=list(L.transient_indices),
            class_stationaries=[{str(k): f(v) for k, v in sorted(d.items())}
                                for d in L.class_stationaries],
            metastable_measures=[{str(names.get(s, s)): f(v) for s, v in
                                  sorted(m.items(), key=lambda kv: tree.spec.index[kv[0]])}
                                 for m in L.metastable_measures],
            subdominant_wells=list(L.subdominant_wells),
        )
        if L.theta_order is not None:
            entry.update(
                theta_cost=f(L.theta_order.cost),
                theta_prefactor=f(L.theta_order.prefactor),
                theta_at_probes={fmt(n): f(v) for n, v in sorted(L.theta_probes.items())},
                reduced_rates=[[f(v) for v in row] for row in L.reduced_rates],
                reduced_rates_at_probes={fmt(n): [[f(v) for v in row] for row in m]
                                         for n, m in sorted(L.reduced_rates_probes.items())},
                absorption_A=[[f(v) for v in row] for row in L.absorption_A],
            )
        levels.append(LevelReport(**entry))
    return Report(
        precision_bits=tree.tolerances.precision_bits,
        digits=digits,
        probes=[fmt(n) for n in tree.tolerances.probes],
        reversible=tree.reversible,
        q=tree.q,
        limit=LimitReport(closed_classes=[_states(c, names) for c in lim.closed_classes],
                          transient_classes=[_states(c, names) for c in lim.transient_classes],
                          delta=_states(lim.delta, names)),
        levels=levels,
        absorption=[[[f(v) for v in row] for row in a] for a in tree.absorption],
        names={str(k): v for k, v in names.items()},
    )


def _set(items):
    return "{" + ", ".join(items) + "}"


def render_text(report: Report) -> str:
    out = [f"# precision {report.precision_bits} bits, {report.digits} significant digits, "
           f"probes n = {', '.join(report.probes)}",
           f"reversible: {'yes' if report.reversible else 'no'}",
           f"q = {report.q}",
           "",
           "limit dynamics",
           f"  closed classes: {' '.join(_set(c) for c in report.limit.closed_classes)}",
           f"  transient classes: {' '.join(_set(c) for c in report.limit.transient_classes) or '-'}",
           f"  Delta: {_set(report.limit.delta)}"]
    for L in report.levels:
        out.append("")
        out.append(f"level {L.p}")
        out.append(f"  wells: {' '.join(_set(w) for w in L.wells)}")
        out.append(f"  Delta_{L.p}: {_set(L.delta)}")
        if L.theta_cost is None:
            out.append("  theta: +inf (single well)")
        else:
            growth = L.theta_cost[1:] if L.theta_cost.startswith("-") else "-" + L.theta_cost
            out.append(f"  theta ~ {L.theta_prefactor} * exp({growth} n)")
            for n, v in L.theta_at_probes.items():
                out.append(f"    theta at n = {n}: {v}")
            out.append("  reduced rates r (row i -> column j):")
            for i, row in enumerate(L.reduced_rates):
                out.append(f"    {i}: " + " ".join(row))
            out.append(f"  recurrent classes: {' '.join(_set(map(str, c)) for c in L.recurrent_classes)}")
            out.append(f"  transient indices: {_set(map(str, L.transient_indices)) if L.transient_indices else '-'}")
            for m, st in enumerate(L.class_stationaries):
                out.append(f"    M_{m}: " + ", ".join(f"{k}: {v}" for k, v in st.items()))
            if L.subdominant_wells:
                out.append(f"  wells escaping slower than theta: {_set(map(str, L.subdominant_wells))}")
        for j, m in enumerate(L.metastable_measures):
            out.append(f"  pi_{j}: " + ", ".join(f"{k}: {v}" for k, v in m.items()))
    return "\n".join(out) + "\n"
