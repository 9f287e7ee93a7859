"""Witness search for the primal necessary optimality systems.

Each filter looks for a direction ``u`` (first order) or a pair ``(u, v)``
(second order) solving a system whose inconsistency is necessary for local
efficiency. A solution found here is a nonoptimality certificate, valid
under the constraint qualification whose empirical report is attached.
Not finding one is evidence only: the search is a sampled multistart
pattern search at a fixed budget and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._search import compass_search, project_ball, project_sphere
from .cq import CQReport, check_inclusion_cq
from .problem import PointContext
from .structure import candidate_directions, lex_pairs, sample_critical_cone

FIRST_ORDER = "FirstOrder"
STRONG_FIRST_ORDER = "StrongFirstOrder"
SECOND_ORDER_WEAK = "SecondOrderWeak"
SECOND_ORDER_GEOFFRION = "SecondOrderGeoffrion"
KINDS = (FIRST_ORDER, STRONG_FIRST_ORDER, SECOND_ORDER_WEAK, SECOND_ORDER_GEOFFRION)

_PENALTY = 10.0


@dataclass(frozen=True)
class SearchBudget:
    multistart: int = 8
    iterations: int = 150
    radii: tuple[float, ...] = (1.0, 10.0)
    seed: int = 0
    max_directions: int = 16  # critical directions tried by the second-order filters
    cq_samples: int = 256

    def __post_init__(self):
        if min(self.multistart, self.iterations, self.max_directions, self.cq_samples) < 1:
            raise ValueError("budget counts must be positive")
        if not self.radii or min(self.radii) <= 0:
            raise ValueError("radii must be positive")

    def as_dict(self) -> dict:
        return {
            "multistart": self.multistart, "iterations": self.iterations, "radii": list(self.radii),
            "seed": self.seed, "max_directions": self.max_directions, "cq_samples": self.cq_samples,
        }


@dataclass(frozen=True)
class SystemValues:
    """One system evaluated at ``(u, v)``.

    ``strict`` holds margins that must exceed ``tau_strict``: all of them
    (``mode == "all"``) or at least one (``mode == "any"``). ``nonstrict``
    holds values that must be ``<= tau_dd``.
    """

    strict: dict[str, float]
    nonstrict: dict[str, float]
    mode: str
    exact: bool

    def margin(self) -> float:
        vals = list(self.strict.values())
        if not vals:
            return -np.inf
        return min(vals) if self.mode == "all" else max(vals)

    def violation(self, tau_dd: float) -> float:
        return sum(max(0.0, x - tau_dd) for x in self.nonstrict.values())

    def solved(self, tau_strict: float, tau_dd: float) -> bool:
        return self.margin() > tau_strict and all(x <= tau_dd for x in self.nonstrict.values())


@dataclass(frozen=True)
class Certificate:
    kind: str
    u: tuple[float, ...]
    v: tuple[float, ...] | None
    system: SystemValues
    margin: float
    required_cq: CQReport
    exact: bool  # every derivative value behind the system came from the exact route
    budget: SearchBudget = field(default_factory=SearchBudget)

    @property
    def values(self) -> dict[str, float]:
        return {**self.system.strict, **self.system.nonstrict}


def lex_excess(pair, tau: float) -> float:
    """Scalar reading of ``pair <=_lex (0, 0)``: the result is ``<= tau`` exactly when it holds."""
    a1, a2 = pair
    if a1 < -tau:
        return float(a1)
    if a1 <= tau:
        return float(a2)
    return float(a1)


def evaluate_system(ctx: PointContext, kind: str, u, v=None) -> SystemValues:
    tau = ctx.tol.tau_dd
    u = np.asarray(u, dtype=float)
    p = ctx.problem.p
    if kind in (FIRST_ORDER, STRONG_FIRST_ORDER):
        fe = [ctx.fo("f", i, u) for i in range(p)]
        ge = {j: ctx.fo("g", j, u) for j in ctx.active}
        exact = all(e.exact for e in (*fe, *ge.values()))
        g_vals = {f"g{j + 1}": e.value for j, e in ge.items()}
        if kind == FIRST_ORDER:
            return SystemValues({f"f{i + 1}": -e.value for i, e in enumerate(fe)}, g_vals, "all", exact)
        f_vals = {f"f{i + 1}": e.value for i, e in enumerate(fe)}
        return SystemValues({f"f{i + 1}": -e.value for i, e in enumerate(fe)}, {**f_vals, **g_vals}, "any", exact)

    if v is None:
        raise ValueError("second-order systems need v")
    lp = lex_pairs(ctx, u, v)
    exact = all(lp.F_exact) and all(lp.G_exact.values())
    G = {f"G{j + 1}": lex_excess(pr, tau) for j, pr in lp.G.items()}
    if kind == SECOND_ORDER_WEAK:
        return SystemValues({f"F{i + 1}": -lex_excess(pr, tau) for i, pr in enumerate(lp.F)}, G, "all", exact)
    if kind == SECOND_ORDER_GEOFFRION:
        I_dir = [i for i, pr in enumerate(lp.F) if abs(pr[0]) <= tau]
        F = {f"F{i + 1}": lex_excess(pr, tau) for i, pr in enumerate(lp.F)}
        return SystemValues({f"F{i + 1}": -F[f"F{i + 1}"] for i in I_dir}, {**F, **G}, "any", exact)
    raise ValueError(f"unknown certificate kind {kind!r}")


def _score(ctx: PointContext, kind: str, u, v=None) -> float:
    s = evaluate_system(ctx, kind, u, v)
    m = s.margin()
    if not np.isfinite(m):
        m = np.sign(m) * 1e6
    # penalize from -tau_dd so witnesses land inside the nonstrict constraints, not on the tolerance band
    return m - _PENALTY * s.violation(-ctx.tol.tau_dd)


def verify_certificate(ctx: PointContext, cert: Certificate, slack: float = 0.1) -> tuple[bool, SystemValues]:
    """Re-evaluate the system under a doubled-resolution config; margins may shrink by ``slack`` at most."""
    fine = ctx.with_cfg(ctx.cfg.refined())
    s = evaluate_system(fine, cert.kind, cert.u, cert.v)
    old = cert.system
    ok = True
    if old.mode == "all":
        for k, m in old.strict.items():
            ok &= s.strict[k] >= m - slack * abs(m)
    else:
        ok &= s.margin() >= old.margin() - slack * abs(old.margin())
    for k, x in old.nonstrict.items():
        ok &= s.nonstrict[k] <= max(ctx.tol.tau_dd, x + slack * abs(x))
    return bool(ok), s


def _maximize(fun, starts: np.ndarray, step: float, project, iterations: int) -> tuple[np.ndarray, float]:
    def neg(batch):
        return np.array([-fun(x) for x in batch])

    best_x, best = None, -np.inf
    for x0 in starts:  # fixed order keeps the result deterministic
        x, f, _ = compass_search(neg, x0, step, max_evals=iterations, min_step=step * 1e-7, project=project)
        if -f > best:
            best, best_x = -f, x
    return best_x, best


def _issue(ctx, kind, u, v, budget) -> Certificate | None:
    tol = ctx.tol
    s = evaluate_system(ctx, kind, u, v)
    if not s.solved(tol.tau_strict, tol.tau_dd):
        return None
    cq_kind = "WASRC"
    cq_u = np.zeros(ctx.problem.n) if kind in (FIRST_ORDER, STRONG_FIRST_ORDER) else np.asarray(u, dtype=float)
    report = check_inclusion_cq(ctx, cq_u, cq_kind, N=budget.cq_samples)
    cert = Certificate(
        kind, tuple(float(x) for x in u), None if v is None else tuple(float(x) for x in v),
        s, float(s.margin()), report, s.exact, budget,
    )
    ok, _ = verify_certificate(ctx, cert)
    return cert if ok else None


def _first_order(ctx: PointContext, kind: str, budget: SearchBudget) -> Certificate | None:
    n = ctx.problem.n
    starts = candidate_directions(n, budget.multistart, budget.seed)
    u, _ = _maximize(lambda x: _score(ctx, kind, x), starts, 0.5, project_sphere(1.0), budget.iterations)
    return _issue(ctx, kind, u, None, budget)


def first_order_filter(ctx: PointContext, budget: SearchBudget | None = None) -> Certificate | None:
    """``f_i°(u) < 0`` for all i with ``g_j°(u) <= 0`` on the active set."""
    return _first_order(ctx, FIRST_ORDER, budget or SearchBudget())


def sfkkt_filter(ctx: PointContext, budget: SearchBudget | None = None) -> Certificate | None:
    """``f_i°(u) <= 0`` for all i, strictly for at least one, with ``g_j°(u) <= 0`` on the active set."""
    return _first_order(ctx, STRONG_FIRST_ORDER, budget or SearchBudget())


def critical_directions(ctx: PointContext, limit: int) -> list[np.ndarray]:
    return [np.asarray(dc.u) for dc in sample_critical_cone(ctx)[:limit]]


def _second_order(ctx: PointContext, kind: str, budget: SearchBudget) -> Certificate | None:
    n = ctx.problem.n
    base = candidate_directions(n, budget.multistart, budget.seed)
    for u in critical_directions(ctx, budget.max_directions):
        for r in budget.radii:
            starts = np.vstack([np.zeros((1, n)), r * base])
            v, _ = _maximize(lambda x: _score(ctx, kind, u, x), starts, r / 2, project_ball(np.zeros(n), r),
                             budget.iterations)
            cert = _issue(ctx, kind, u, v, budget)
            if cert is not None:
                return cert
    return None


def second_order_filter(ctx: PointContext, budget: SearchBudget | None = None) -> Certificate | None:
    """``F^2_i(u, v) <_lex (0, 0)`` for all i with ``G^2_j(u, v) <=_lex (0, 0)`` on the active set."""
    return _second_order(ctx, SECOND_ORDER_WEAK, budget or SearchBudget())


def geoffrion_filter(ctx: PointContext, budget: SearchBudget | None = None) -> Certificate | None:
    """All pairs ``<=_lex (0, 0)`` and ``F^2_i <_lex (0, 0)`` for at least one i in I(xbar; u).

    A certificate here rules out local Geoffrion proper efficiency, not weak efficiency.
    """
    return _second_order(ctx, SECOND_ORDER_GEOFFRION, budget or SearchBudget())


FILTERS = {
    FIRST_ORDER: first_order_filter,
    STRONG_FIRST_ORDER: sfkkt_filter,
    SECOND_ORDER_WEAK: second_order_filter,
    SECOND_ORDER_GEOFFRION: geoffrion_filter,
}
ORDER: Sequence[str] = (FIRST_ORDER, STRONG_FIRST_ORDER, SECOND_ORDER_WEAK, SECOND_ORDER_GEOFFRION)
