"""Problem files, command dispatch and line-oriented reports.

A problem file holds one ``key = value`` pair per line::

    # comment
    n = 2
    objective = x2
    objective = abs(x1) + x2^2
    constraint = x2
    point = 0, 0
    seed = 42

Optional keys: ``tol_act``, ``tol_dd``, ``tol_strict``, ``budget``. Reports
are one record per line, ``TAG key=value ...``; result records read
``RESULT <kind> key=value ...``. Indices in reports are 1-based.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import certify as cert
from . import cq
from . import expr as ex
from .deriv import SamplingConfig
from .geometry import FeasibilityOracle, in_second_order_tangent_set, in_tangent_cone
from .problem import PointContext, Tolerances, VectorProblem
from .structure import directional_index_sets, sample_critical_cone

SCHEMA_VERSION = "kkt2-report/1"
COMMANDS = ("derivs", "indexsets", "critical", "cones", "cq", "certify", "all")
EXIT_OK, EXIT_ERROR, EXIT_CERTIFICATE = 0, 1, 2

_SCALAR_KEYS = {"n": int, "seed": int, "budget": int, "tol_act": float, "tol_dd": float, "tol_strict": float}
_LIST_KEYS = ("objective", "constraint")


class ProblemFileError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemFile:
    n: int
    objectives: tuple[str, ...]
    constraints: tuple[str, ...]
    point: tuple[float, ...]
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    digest: str = ""

    def problem(self) -> VectorProblem:
        return VectorProblem.from_strings(self.n, self.objectives, self.constraints)


def parse_problem_text(text: str) -> ProblemFile:
    vals: dict = {}
    lists: dict[str, list[tuple[int, str]]] = {k: [] for k in _LIST_KEYS}
    point = None
    line_of: dict[str, int] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemFileError(f"line {ln}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        line_of.setdefault(key, ln)
        if key in _LIST_KEYS:
            lists[key].append((ln, value))
        elif key == "point":
            try:
                point = tuple(float(s) for s in value.split(","))
            except ValueError:
                raise ProblemFileError(f"line {ln}: point must be comma-separated numbers") from None
        elif key in _SCALAR_KEYS:
            if key in vals:
                raise ProblemFileError(f"line {ln}: duplicate key {key!r}")
            try:
                vals[key] = _SCALAR_KEYS[key](value)
            except ValueError:
                raise ProblemFileError(f"line {ln}: bad value for {key!r}: {value!r}") from None
        else:
            raise ProblemFileError(f"line {ln}: unknown key {key!r}")

    for req in ("n",):
        if req not in vals:
            raise ProblemFileError(f"missing field {req!r}")
    if point is None:
        raise ProblemFileError("missing field 'point'")
    if not lists["objective"]:
        raise ProblemFileError("missing field 'objective'")
    n = vals["n"]
    if n < 1:
        raise ProblemFileError("n must be at least 1")
    if len(point) != n:
        raise ProblemFileError(f"line {line_of['point']}: point has {len(point)} coordinates, expected n = {n}")
    for key in _LIST_KEYS:
        for ln, src in lists[key]:
            try:
                ex.parse(src, n)
            except ex.ExprSyntaxError as err:
                raise ProblemFileError(f"line {ln}, {key} {src!r}: {err}") from None
    overrides = {k: vals[k] for k in ("budget", "tol_act", "tol_dd", "tol_strict") if k in vals}
    return ProblemFile(
        n, tuple(s for _, s in lists["objective"]), tuple(s for _, s in lists["constraint"]), point, vals.get("seed", 0), overrides,
        hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def load(path) -> ProblemFile:
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise ProblemFileError(f"{path}: not UTF-8 ({err})") from None
    return parse_problem_text(text)


# --------------------------------------------------------------------------
# report records


def fmt(x) -> str:
    if x is None:
        return "none"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(0.0 if x == 0 else x, ".10g")
    if isinstance(x, str):
        return x.replace(" ", "_") if x else "none"
    if isinstance(x, (tuple, list, np.ndarray)):
        return ",".join(fmt(v) for v in x) if len(x) else "none"
    raise TypeError(f"cannot format {type(x).__name__}")


def idx1(ix) -> str:
    return fmt([int(i) + 1 for i in ix])


def record(tag: str, kind: str | None = None, /, **fields) -> str:
    head = tag if kind is None else f"{tag} {kind}"
    return " ".join([head] + [f"{k}={fmt(v)}" for k, v in fields.items()])


SCHEMA = {
    "SCHEMA": {"version"},
    "PROBLEM": {"digest", "n", "p", "m", "point"},
    "COMMAND": {"name"},
    "CONFIG": {"seed", "t0", "rho", "K", "c", "P", "tail_start", "kappa", "tau_act", "tau_dd", "tau_strict",
               "feas_tol", "budget", "multistart", "iterations", "exhaustive", "u", "v"},
    "WALLTIME": {"seconds"},
    "RESULT": {
        "deriv": {"fn", "u", "value", "method", "second", "second_method"},
        "active": {"J"},
        "indexsets": {"u", "J_dir", "I_dir", "exact"},
        "critical": {"u", "f", "g", "exact"},
        "critical_summary": {"count", "samples"},
        "tangent": {"v", "verdict", "t_min", "eta_min", "margin"},
        "tangent2": {"u", "v", "verdict", "t_min", "eta_min", "margin"},
        "cq": {"kind", "u", "verdict", "witness", "margin", "samples", "seed", "reason"},
        "audit": {"u", "consistent", "flags"},
        "certificate": {"kind", "found", "u", "v", "margin", "values", "cq", "cq_verdict", "exact", "budget", "seed"},
    },
}


def validate_report(text: str) -> list[str]:
    """Problems found in a report against the published field list (empty when valid)."""
    errors = []
    lines = text.splitlines()
    if not lines or not lines[0].startswith("SCHEMA "):
        errors.append("first record must be SCHEMA")
    for no, line in enumerate(lines, 1):
        parts = line.split(" ")
        tag = parts[0]
        if tag not in SCHEMA:
            errors.append(f"line {no}: unknown record {tag!r}")
            continue
        allowed = SCHEMA[tag]
        if tag == "RESULT":
            if len(parts) < 2 or parts[1] not in allowed:
                errors.append(f"line {no}: unknown result kind")
                continue
            allowed = allowed[parts[1]]
            parts = parts[1:]
        for kv in parts[1:]:
            key, sep, _ = kv.partition("=")
            if not sep or key not in allowed:
                errors.append(f"line {no}: unknown field {key!r} in {tag}")
    return errors


def result_section(text: str) -> str:
    """The report without its wall-time record (the part that must be reproducible)."""
    return "\n".join(l for l in text.splitlines() if not l.startswith("WALLTIME"))


# --------------------------------------------------------------------------
# commands


@dataclass(frozen=True)
class Overrides:
    u: tuple[float, ...] | None = None
    v: tuple[float, ...] | None = None
    seed: int | None = None
    budget: int | None = None
    tol_act: float | None = None
    tol_dd: float | None = None
    exhaustive: bool = False


def _setup(pf: ProblemFile, ov: Overrides):
    seed = pf.seed if ov.seed is None else ov.seed
    changes = {}
    for key, attr in (("tol_act", "tau_act"), ("tol_dd", "tau_dd"), ("tol_strict", "tau_strict")):
        val = getattr(ov, key, None)
        val = pf.overrides.get(key) if val is None else val
        if val is not None:
            changes[attr] = val
    tol = replace(Tolerances(), **changes)
    cfg = SamplingConfig(seed=seed)
    budget_n = ov.budget if ov.budget is not None else pf.overrides.get("budget", 256)
    if budget_n < 1:
        raise ValueError("budget must be positive")
    budget = cert.SearchBudget(multistart=max(2, budget_n // 32), seed=seed, cq_samples=budget_n)
    return cfg, tol, budget


def _vec(v, n, name):
    if v is None:
        return None
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"--{name} has {a.size} coordinates, expected {n}")
    return a


def _derivs(ctx, u):
    out = []
    dirs = [u] if u is not None else list(np.eye(ctx.problem.n))
    for d in dirs:
        for kind, count in (("f", ctx.problem.p), ("g", ctx.problem.m)):
            for i in range(count):
                a, b = ctx.fo(kind, i, d), ctx.so(kind, i, d)
                out.append(record("RESULT", "deriv", fn=f"{kind}{i + 1}", u=d, value=a.value, method=a.method,
                                  second=b.value, second_method=b.method))
    return out


def _indexsets(ctx, u):
    u = np.zeros(ctx.problem.n) if u is None else u
    s = directional_index_sets(ctx, u)
    return [
        record("RESULT", "active", J=idx1(ctx.active)),
        record("RESULT", "indexsets", u=u, J_dir=idx1(s.J_dir), I_dir=idx1(s.I_dir), exact=s.exact),
    ]


def _critical(ctx):
    dcs = sample_critical_cone(ctx)
    out = [record("RESULT", "critical", u=d.u, f=d.f_values, g=d.g_values, exact=d.exact) for d in dcs]
    out.append(record("RESULT", "critical_summary", count=len(dcs), samples=ctx.cfg.P * ctx.cfg.K))
    return out


def _cones(ctx, u, v):
    n = ctx.problem.n
    oracle = FeasibilityOracle(ctx.problem.constraints, ctx.tol.feas_tol, n)
    tests = [v] if v is not None else [s * e for e in np.eye(n) for s in (1.0, -1.0)]
    out = []
    for d in tests:
        tri = in_tangent_cone(oracle, ctx.xbar, d, ctx.cfg)
        out.append(record("RESULT", "tangent", v=d, verdict=tri.verdict, t_min=tri.t_min, eta_min=tri.eta_min,
                          margin=tri.best.margin))
        if u is not None and np.any(u):
            tri = in_second_order_tangent_set(oracle, ctx.xbar, u, d, ctx.cfg)
            out.append(record("RESULT", "tangent2", u=u, v=d, verdict=tri.verdict, t_min=tri.t_min,
                              eta_min=tri.eta_min, margin=tri.best.margin))
    return out


def _cq_record(r: cq.CQReport) -> str:
    return record("RESULT", "cq", kind=r.kind, u=r.u, verdict=r.verdict, witness=r.witness, margin=r.margin,
                  samples=r.samples, seed=r.seed)


def _cq(ctx, u, budget):
    u = np.zeros(ctx.problem.n) if u is None else u
    reports = [
        cq.check_zscq(ctx, u, N=budget.cq_samples),
        cq.check_inclusion_cq(ctx, u, "ASCQ", N=budget.cq_samples),
        cq.check_inclusion_cq(ctx, u, "WASRC", N=budget.cq_samples),
    ]
    out = [_cq_record(r) for r in reports]
    try:
        r = cq.check_mfscq(ctx, u)
        reports.insert(1, r)
        out.insert(1, _cq_record(r))
    except ValueError:
        out.insert(1, record("RESULT", "cq", kind=cq.kind_name("MFSCQ", u), u=u, verdict="Skipped",
                             reason="non-critical-direction"))
    audit = cq.implication_audit(reports)
    out.append(record("RESULT", "audit", u=u, consistent=audit.consistent, flags=";".join(audit.flags) or None))
    return out


def _certify(ctx, budget, exhaustive):
    out, found = [], False
    for kind in cert.ORDER:
        c = cert.FILTERS[kind](ctx, budget)
        if c is None:
            out.append(record("RESULT", "certificate", kind=kind, found=False, budget=budget.cq_samples,
                              seed=budget.seed))
            continue
        found = True
        values = ",".join(f"{k}:{fmt(x)}" for k, x in c.values.items())
        out.append(record("RESULT", "certificate", kind=kind, found=True, u=c.u, v=c.v, margin=c.margin,
                          values=values, cq=c.required_cq.kind, cq_verdict=c.required_cq.verdict, exact=c.exact,
                          budget=budget.cq_samples, seed=budget.seed))
        if not exhaustive:
            break
    return out, found


def run(command: str, pf: ProblemFile, overrides: Overrides | None = None) -> tuple[str, int]:
    """Execute ``command`` and return ``(report_text, exit_code)``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    ov = overrides or Overrides()
    start = time.perf_counter()
    cfg, tol, budget = _setup(pf, ov)
    problem = pf.problem()
    ctx = PointContext(problem, np.asarray(pf.point), cfg, tol)
    u, v = _vec(ov.u, pf.n, "u"), _vec(ov.v, pf.n, "v")

    lines = [
        record("SCHEMA", version=SCHEMA_VERSION),
        record("PROBLEM", digest=f"sha256:{pf.digest}", n=pf.n, p=problem.p, m=problem.m, point=pf.point),
        record("COMMAND", name=command),
        record("CONFIG", seed=cfg.seed, t0=cfg.t0, rho=cfg.rho, K=cfg.K, c=cfg.c, P=cfg.P, tail_start=cfg.tail_start,
               kappa=tol.kappa, tau_act=tol.tau_act, tau_dd=tol.tau_dd, tau_strict=tol.tau_strict,
               feas_tol=tol.feas_tol, budget=budget.cq_samples, multistart=budget.multistart,
               iterations=budget.iterations, exhaustive=ov.exhaustive, u=u, v=v),
    ]
    code = EXIT_OK
    steps = COMMANDS[:-1] if command == "all" else (command,)
    for step in steps:
        try:
            if step == "derivs":
                lines += _derivs(ctx, u)
            elif step == "indexsets":
                lines += _indexsets(ctx, u)
            elif step == "critical":
                lines += _critical(ctx)
            elif step == "cones":
                lines += _cones(ctx, u, v)
            elif step == "cq":
                lines += _cq(ctx, u, budget)
            elif step == "certify":
                recs, found = _certify(ctx, budget, ov.exhaustive)
                lines += recs
                if found:
                    code = EXIT_CERTIFICATE
        except ValueError as err:
            raise ValueError(f"{step}: {err}") from err
    lines.append(record("WALLTIME", seconds=round(time.perf_counter() - start, 3)))
    return "\n".join(lines) + "\n", code


def _csv(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2, which this tool reserves for "certificate found"
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="kkt2", description="Second-order optimality diagnostics for "
                                 "nonsmooth multiobjective problems.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("file", type=Path)
    ap.add_argument("--u", type=_csv, help="direction u (comma-separated)")
    ap.add_argument("--v", type=_csv, help="curvature / test vector v (comma-separated)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--budget", type=int, help="CQ sample count; filter multistarts scale with it")
    ap.add_argument("--tol-act", type=float)
    ap.add_argument("--tol-dd", type=float)
    ap.add_argument("--exhaustive", action="store_true", help="run every certificate filter")
    ap.add_argument("--out", type=Path, help="write the report here instead of stdout")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        pf = load(args.file)
        ov = Overrides(args.u, args.v, args.seed, args.budget, args.tol_act, args.tol_dd, args.exhaustive)
        text, code = run(args.command, pf, ov)
    except (OSError, ValueError) as err:
        print(f"kkt2: error: {err}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
