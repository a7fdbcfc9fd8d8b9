"""Command-line front end.

Subcommands::

    momentdecomp decompose  --model M [--target cov|var] [--output text|json]
    momentdecomp verify     --model M [--target cov|var] [--tol 1e-10]
    momentdecomp mc         --model M [--target ...] [--samples N] [--inner M] [--total-samples N] [--seed S]
    momentdecomp random     [--k K] [--trials T] [--target ...] [--models] [--dump-dir D] [--seed S]
    momentdecomp dump-joint --model M

Exit status is 0 on success, 1 when a verification or consistency check
fails, and 2 on input errors. ``MOMENTDECOMP_SEED`` supplies the default seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from collections.abc import Sequence
from typing import Any

from .decomp import (
    OperatorGrid,
    cov_term_literal,
    decompose_covariance,
    decompose_variance,
    grid_term_eval,
    term_label,
)
from .errors import MomentDecompError
from .fuzz import run_trials
from .joint import FiniteJoint, duplicate_target
from .mc import estimate_term, estimate_total, wrap_exact
from .model import compile_model, load_model


class InputError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("MOMENTDECOMP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"MOMENTDECOMP_SEED must be an integer, got {raw!r}") from None


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _count(minimum: int):
    def parse(text: str) -> int:
        value = int(text)
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentdecomp",
        description="Exact and Monte Carlo level-by-level decomposition of variance and covariance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p: argparse.ArgumentParser, target: bool = True) -> None:
        p.add_argument("--model", required=True, help="path to a JSON chain model")
        if target:
            p.add_argument("--target", choices=("cov", "var"), help="default: cov for two targets, var for one")

    def output_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--output", choices=("text", "json"), default="text")

    p = sub.add_parser("decompose", help="print every decomposition term")
    model_args(p)
    output_arg(p)

    p = sub.add_parser("verify", help="check the residual and literal-vs-collapsed agreement")
    model_args(p)
    p.add_argument("--tol", type=_positive_float, default=1e-10)
    output_arg(p)

    p = sub.add_parser("mc", help="Monte Carlo term estimates against the exact values")
    model_args(p)
    p.add_argument("--samples", type=_count(2), default=10_000, help="outer samples per term")
    p.add_argument("--inner", type=_count(2), default=64, help="inner draws per outer sample")
    p.add_argument("--total-samples", type=_count(2), default=100_000)
    p.add_argument("--seed", type=int, default=None)
    output_arg(p)

    p = sub.add_parser("random", help="fuzz the decomposition identities on random joints")
    p.add_argument("--k", type=int, choices=(1, 2, 3, 4), default=None, help="default: cycle through 1..4")
    p.add_argument("--trials", type=_count(1), default=100)
    p.add_argument("--target", choices=("cov", "var"), default="cov")
    p.add_argument("--models", action="store_true", help="fuzz compiled random chain models instead of raw joints")
    p.add_argument("--tol", type=_positive_float, default=1e-10)
    p.add_argument("--dump-dir", default=None, help="directory for failing joints/models")
    p.add_argument("--seed", type=int, default=None)
    output_arg(p)

    p = sub.add_parser("dump-joint", help="print the compiled joint as canonical JSON")
    model_args(p, target=False)
    return parser


# -- helpers --------------------------------------------------------------------------


def _load_joint(path: str) -> FiniteJoint:
    try:
        model = load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    joint, _ = compile_model(model)
    return joint


def _resolve_target(joint: FiniteJoint, target: str | None) -> str:
    if target is None:
        return "cov" if joint.p == 2 else "var"
    if target == "var" and joint.p != 1:
        raise InputError("--target var needs a model with exactly one target; this model has two")
    if target == "cov" and joint.p != 2:
        raise InputError("--target cov needs a model with two targets; this model has one")
    return target


def _num(x: float) -> str:
    return repr(float(x))


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False)


def _decomposition(joint: FiniteJoint, target: str):
    if target == "cov":
        return decompose_covariance(joint)
    return decompose_variance(joint, tol=math.inf)


# -- subcommands -----------------------------------------------------------------------


def cmd_decompose(args) -> tuple[int, str]:
    joint = _load_joint(args.model)
    target = _resolve_target(joint, args.target)
    dec = _decomposition(joint, target)
    labels = [term_label(i, joint.cond_vars, target) for i in range(1, joint.k + 2)]
    shares = [t / dec.total_direct + 0.0 if dec.total_direct != 0 else None for t in dec.terms]
    report = dec.to_dict(target)
    report["labels"] = labels
    report["shares"] = shares
    if args.output == "json":
        return 0, _dump(report)
    width = max(len(label) for label in labels)
    lines = [f"k = {joint.k}, target = {target}", f"{'term':>4}  {'operator':<{width}}  {'value':>24}  share"]
    for i, (label, term, share) in enumerate(zip(labels, dec.terms, shares), start=1):
        lines.append(f"{i:>4}  {label:<{width}}  {_num(term):>24}  {'n/a' if share is None else _num(share)}")
    lines += [
        f"total_direct = {_num(dec.total_direct)}",
        f"sum_terms    = {_num(dec.sum_terms)}",
        f"residual     = {_num(dec.residual)}",
    ]
    return 0, "\n".join(lines)


def cmd_verify(args) -> tuple[int, str]:
    joint = _load_joint(args.model)
    target = _resolve_target(joint, args.target)
    dec = _decomposition(joint, target)
    pair = joint if target == "cov" else duplicate_target(joint)
    literal = [cov_term_literal(pair, i) for i in range(1, joint.k + 2)]
    gaps = [abs(a - b) for a, b in zip(literal, dec.terms)]
    grid_terms = None
    if target == "var":
        grid = OperatorGrid(joint.k)
        grid_terms = [grid_term_eval(joint, grid, i) for i in range(1, grid.size + 1)]
        gaps += [abs(a - b) for a, b in zip(grid_terms, dec.terms)]
    max_gap = max(gaps)
    ok = dec.residual <= args.tol and max_gap <= args.tol
    report = dec.to_dict(target)
    report.update(
        literal_terms=literal,
        grid_terms=grid_terms,
        max_tower_gap=max_gap,
        tol=args.tol,
        passed=ok,
    )
    if args.output == "json":
        return (0 if ok else 1), _dump(report)
    lines = [f"k = {joint.k}, target = {target}, tol = {_num(args.tol)}"]
    for i, (c, l) in enumerate(zip(dec.terms, literal), start=1):
        lines.append(f"term {i}: collapsed {_num(c)}  literal {_num(l)}")
    if grid_terms is not None:
        lines.append("grid terms: " + ", ".join(_num(g) for g in grid_terms))
    lines += [
        f"residual      = {_num(dec.residual)}",
        f"max_tower_gap = {_num(max_gap)}",
        "PASS" if ok else "FAIL",
    ]
    return (0 if ok else 1), "\n".join(lines)


def cmd_mc(args) -> tuple[int, str]:
    joint = _load_joint(args.model)
    target = _resolve_target(joint, args.target)
    seed = args.seed if args.seed is not None else _default_seed()
    chain = wrap_exact(joint, seed)
    dec = _decomposition(joint, target)
    rows = []
    for i, exact in enumerate(dec.terms, start=1):
        est = estimate_term(chain, i, args.samples, args.inner)
        rows.append({**est.to_dict(), "exact": exact, "consistent": est.covers(exact)})
    total = estimate_total(chain, args.total_samples)
    total_row = {**total.to_dict(), "exact": dec.total_direct, "consistent": total.covers(dec.total_direct)}
    ok = all(r["consistent"] for r in rows) and total_row["consistent"]
    report = {"k": joint.k, "target": target, "seed": seed, "terms": rows, "total": total_row, "consistent": ok}
    code = 0 if ok else 1
    if args.output == "json":
        return code, _dump(report)
    lines = [f"k = {joint.k}, target = {target}, seed = {seed}"]
    for r in rows + [total_row]:
        verdict = "ok" if r["consistent"] else "INCONSISTENT"
        lines.append(
            f"term {r['term']}: estimate {_num(r['estimate'])} +/- {_num(r['se'])}  exact {_num(r['exact'])}  {verdict}"
        )
    lines.append("consistent within 3 SE" if ok else "NOT consistent within 3 SE")
    return code, "\n".join(lines)


def cmd_random(args) -> tuple[int, str]:
    seed = args.seed if args.seed is not None else _default_seed()
    p = 2 if args.target == "cov" else 1
    rep = run_trials(args.trials, seed, k=args.k, p=p, tol=args.tol, dump_dir=args.dump_dir, models=args.models)

    def cfg_dict(cfg):
        return {"seed": cfg.seed, "k": cfg.k, "p": cfg.p, "support_sizes": list(cfg.support_sizes), "zero_fraction": cfg.zero_fraction}

    report = {
        "trials": rep.trials,
        "passed": rep.passed,
        "failed": rep.failed,
        "target": args.target,
        "seed": seed,
        "failures": [{**cfg_dict(cfg), "problems": problems} for cfg, problems in rep.failures],
        "smallest": cfg_dict(rep.smallest) if rep.smallest is not None else None,
    }
    code = 0 if rep.failed == 0 else 1
    if args.output == "json":
        return code, _dump(report)
    lines = [f"{rep.trials} trials, {rep.passed} passed, {rep.failed} failed (target {args.target}, seed {seed})"]
    for cfg, problems in rep.failures[:20]:
        lines.append(f"  seed {cfg.seed} k={cfg.k} sizes={list(cfg.support_sizes)}: {'; '.join(problems)}")
    if rep.smallest is not None:
        lines.append(f"smallest failing config: {cfg_dict(rep.smallest)}")
    return code, "\n".join(lines)


def cmd_dump_joint(args) -> tuple[int, str]:
    return 0, _dump(_load_joint(args.model).to_dict())


COMMANDS = {
    "decompose": cmd_decompose,
    "verify": cmd_verify,
    "mc": cmd_mc,
    "random": cmd_random,
    "dump-joint": cmd_dump_joint,
}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code, text = COMMANDS[args.command](args)
    except (InputError, MomentDecompError, ValueError) as exc:
        print(f"momentdecomp: error: {exc}", file=stderr)
        return 2
    print(text, file=stdout)
    return code


def main() -> None:
    sys.exit(run())
