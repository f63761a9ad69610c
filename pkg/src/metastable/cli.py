"""Command-line front end.

Subcommands: ``analyze``, ``tree``, ``kernel``, ``ldp``, ``verify``, ``simulate``.
Exit codes: 0 success, 1 failed verification, 2 unreadable input or model
error, 3 ambiguous probe verdicts, 4 precision or conditioning trouble.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import _mp
from .errors import (AmbiguityError, CapacityError, ConditioningError, ConvergenceError,
                     DomainError, ModelError, PrecisionError, UnsupportedOperationError)
from .finite_chain import instantiate, simulate
from .gamma_expansion import (INF, I0_closed, I0_variational, Ip_band, Ip_closed,
                              Ip_variational, RateExpansion, decomposition_residual, is_infinite)
from .hierarchy import (Tolerances, build_tree, limiting_kernel_at, limiting_kernel_between,
                        tree_to_dot)
from .report import build_report, fmt, render_text
from .specfile import load_measure, load_spec
from .verify import SUITES, run_suite

EXIT_FAILED, EXIT_INPUT, EXIT_AMBIGUOUS, EXIT_PRECISION = 1, 2, 3, 4

DEFAULT_SWEEPS = {
    "kernel-convergence": [8, 10, 12, 14],
    "gamma-limsup": [10, 14, 18],
    "appendix-identities": [12],
    "capacity-sandwich": [10, 20],
    "hitting-bound": [8, 10],
}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) if "." in v or "e" in v.lower() else int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _probes(text: str) -> tuple:
    values = _floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError("--probes takes exactly two values n1,n2")
    return tuple(values)


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("spec", help="JSON spec file")
    common.add_argument("--probes", type=_probes, help="probe values n1,n2 (default 12,18)")
    common.add_argument("--precision", type=int, help="working precision in bits "
                        f"(default {_mp.DEFAULT_PRECISION}, or $METASTABLE_PRECISION)")
    common.add_argument("--tol-cost", type=float, help="cost threshold for zero limits (0.05)")
    common.add_argument("--tol-decompose", type=float, help="decomposition tolerance (1e-6)")
    common.add_argument("--out", help="write output to this file instead of stdout")
    common.add_argument("--format", choices=("text", "json", "csv", "dot"))
    common.add_argument("--digits", type=int, default=12, help="significant digits (12)")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metastable",
                                     description="Metastable hierarchy of exponentially scaled "
                                                 "Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    sub.add_parser("analyze", parents=[common], help="build the tree and print a report")

    p = sub.add_parser("tree", parents=[common], help="export the tree as DOT")
    p.add_argument("--dot", help="DOT output path (same as --out)")

    p = sub.add_parser("kernel", parents=[common], help="limiting transition kernels")
    p.add_argument("--level", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--time", type=float)
    g.add_argument("--between", action="store_true")
    p.add_argument("--from", dest="start", required=True)

    p = sub.add_parser("ldp", parents=[common], help="rate functional at one level")
    p.add_argument("--level", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--measure")
    g.add_argument("--grid", type=int)

    p = sub.add_parser("verify", parents=[common], help="run a numerical verification suite")
    p.add_argument("--suite", choices=SUITES, action="append",
                   help="suite to run (repeatable; default all)")
    p.add_argument("--n-sweep", type=_floats, help="comma-separated n values")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo marginals")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--from", dest="start", required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicas", type=int, default=1000)
    return parser


# --- helpers --------------------------------------------------------------------------------

def _write(text: str, out: str | None) -> None:
    """Write atomically: a temporary file in the target directory, then rename."""
    if not out:
        sys.stdout.write(text)
        return
    target = Path(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _tolerances(args, doc) -> Tolerances:
    opts = doc.options
    base = Tolerances()
    return Tolerances(
        probes=tuple(args.probes or opts.probes or base.probes),
        eps_cost=args.tol_cost or opts.tol_cost or base.eps_cost,
        probe_agreement=opts.probe_agreement or base.probe_agreement,
        decompose=args.tol_decompose or opts.tol_decompose or base.decompose,
        precision_bits=args.precision or opts.precision or _mp.DEFAULT_PRECISION,
    )


def _state(spec, names, text):
    reverse = {v: k for k, v in names.items()}
    if text in reverse:
        return reverse[text]
    for s in spec.states:
        if str(s) == text:
            return s
    raise UsageError(f"unknown state {text!r}")


def _header(tol: Tolerances, digits: int) -> str:
    return f"# precision {tol.precision_bits} bits, {digits} significant digits\n"


def _load(args):
    spec, doc = load_spec(args.spec)
    return spec, doc, _tolerances(args, doc), doc.state_names(spec)


def _level(tree, p, low, high):
    if not low <= p <= high:
        raise UsageError(f"--level must be between {low} and {high} for this spec")


def _distribution_table(dist, names, fmt_, header, fmt_name):
    rows = [(str(names.get(s, s)), w) for s, w in zip(dist.states, dist.weights)]
    if fmt_name == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "weight"])
        for s, v in rows:
            w.writerow([s, fmt_(v)])
        return header + buf.getvalue()
    if fmt_name == "json":
        return json.dumps({s: fmt_(v) for s, v in rows if v != 0}, indent=2) + "\n"
    return header + "".join(f"{s}: {fmt_(v)}\n" for s, v in rows if v != 0)


# --- commands -----------------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    spec, doc, tol, names = _load(args)
    tree = build_tree(spec, tolerances=tol)
    report = build_report(tree, names, args.digits)
    if (args.format or "text") == "json":
        _write(report.model_dump_json(indent=2) + "\n", args.out)
    else:
        _write(render_text(report), args.out)
    return 0


def cmd_tree(args) -> int:
    spec, doc, tol, names = _load(args)
    tree = build_tree(spec, tolerances=tol)
    _write(tree_to_dot(tree, names), args.dot or args.out)
    return 0


def cmd_kernel(args) -> int:
    spec, doc, tol, names = _load(args)
    tree = build_tree(spec, tolerances=tol)
    x = _state(spec, names, args.start)
    if args.between:
        _level(tree, args.level, 1, tree.q + 1)
        dist = limiting_kernel_between(tree, args.level, x)
    else:
        _level(tree, args.level, 1, tree.q)
        if args.time < 0:
            raise UsageError("--time must be non-negative")
        dist = limiting_kernel_at(tree, args.level, args.time, x)
    f = lambda v: fmt(v, args.digits)
    _write(_distribution_table(dist, names, f, _header(tol, args.digits), args.format or "text"),
           args.out)
    return 0


def _ldp_values(expansion, tree, p, mu):
    if p == 0:
        closed = I0_closed(expansion, mu) if tree.reversible else None
        return closed, I0_variational(expansion, mu), None, None
    closed = Ip_closed(expansion, p, mu) if tree.reversible else None
    variational = Ip_variational(expansion, p, mu)
    band = Ip_band(expansion, p, mu)
    residual = decomposition_residual(tree, p, mu) if is_infinite(variational) else None
    return closed, variational, band, residual


def cmd_ldp(args) -> int:
    spec, doc, tol, names = _load(args)
    tree = build_tree(spec, tolerances=tol)
    _level(tree, args.level, 0, tree.q)
    expansion = RateExpansion.from_tree(tree)
    p = args.level
    f = lambda v: "" if v is None else fmt(v, args.digits)
    header = _header(tol, args.digits)
    if args.measure:
        mu = load_measure(args.measure, spec, names)
        closed, variational, band, residual = _ldp_values(expansion, tree, p, mu)
        lines = [header, f"level: {p}\n", f"closed: {f(closed) or 'n/a (non-reversible)'}\n",
                 f"variational: {f(variational)}\n"]
        if band is not None and band.banded:
            lines.append(f"band: [{f(band.low)}, {f(band.high)}]\n")
        if residual is not None:
            lines.append(f"decomposition residual: {f(residual)}\n")
        _write("".join(lines), args.out)
        return 0
    if args.grid < 2:
        raise UsageError("--grid needs at least 2 points")
    level = tree.level(max(p, 1))
    grid = [k / (args.grid - 1) for k in range(args.grid)]
    pairs = [(a, b) for a in range(level.size) for b in range(a + 1, level.size)] or [(0, 0)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["well_a", "well_b", "omega_a", "closed", "variational"])
    for a, b in pairs:
        for t in grid:
            mu = {}
            for j, weight in ((a, t), (b, 1 - t)):
                for s, v in level.metastable_measures[j].items():
                    mu[s] = mu.get(s, 0) + weight * v
            closed, variational, _, _ = _ldp_values(expansion, tree, p, mu)
            w.writerow([a, b, f"{t:.{args.digits}g}", f(closed), f(variational)])
    _write(header + buf.getvalue(), args.out)
    return 0


def cmd_verify(args) -> int:
    spec, doc, tol, names = _load(args)
    suites = args.suite or list(SUITES)
    needs_tree = {"kernel-convergence", "gamma-limsup"} & set(suites)
    tree = build_tree(spec, tolerances=tol) if needs_tree else None
    out = [_header(tol, args.digits)]
    failed = False
    for name in suites:
        n_list = args.n_sweep or DEFAULT_SWEEPS[name]
        result = run_suite(name, spec, tree, n_list, tol.precision_bits, args.seed)
        out.append(f"# suite {name}\n")
        out.append(result.to_csv(args.digits))
        status = "PASS" if result.passed else "FAIL"
        print(f"{name}: {status}" + (f" ({len(result.failures)} failures)" if result.failures else ""),
              file=sys.stderr)
        for line in result.failures[:10]:
            print(f"  {line}", file=sys.stderr)
        failed |= not result.passed
    _write("".join(out), args.out)
    return EXIT_FAILED if failed else 0


def cmd_simulate(args) -> int:
    spec, doc, tol, names = _load(args)
    x = _state(spec, names, args.start)
    if args.replicas < 0:
        raise UsageError("--replicas must be non-negative")
    if not args.horizon > 0:
        raise UsageError("--horizon must be positive")
    chain = instantiate(spec, args.n, tol.precision_bits)
    seeds = np.random.SeedSequence(args.seed).generate_state(max(args.replicas, 1))
    size = chain.size
    ends = np.zeros(size)
    occupation = np.zeros((args.replicas, size))
    for r in range(args.replicas):
        traj = simulate(chain, x, args.horizon, int(seeds[r]))
        for state, hold in traj.events:
            occupation[r, chain.index[state]] += hold
        ends[chain.index[traj.endpoint]] += 1
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "endpoint_count", "endpoint_freq", "endpoint_se", "endpoint_lo",
                "endpoint_hi", "occupation_mean", "occupation_se"])
    R = args.replicas
    d = args.digits
    if R:
        occ = occupation / args.horizon
        for k, s in enumerate(chain.states):
            p = ends[k] / R
            se = math.sqrt(p * (1 - p) / R)
            mean = occ[:, k].mean()
            ose = occ[:, k].std(ddof=1) / math.sqrt(R) if R > 1 else 0.0
            w.writerow([names.get(s, s), int(ends[k]), f"{p:.{d}g}", f"{se:.{d}g}",
                        f"{max(0.0, p - 3 * se):.{d}g}", f"{min(1.0, p + 3 * se):.{d}g}",
                        f"{mean:.{d}g}", f"{ose:.{d}g}"])
    _write(_header(tol, d) + buf.getvalue(), args.out)
    return 0


COMMANDS = {"analyze": cmd_analyze, "tree": cmd_tree, "kernel": cmd_kernel, "ldp": cmd_ldp,
            "verify": cmd_verify, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except AmbiguityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return EXIT_AMBIGUOUS
    except (PrecisionError, ConditioningError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except (ModelError, DomainError, UnsupportedOperationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
