"""Index sets, critical directions and the linearized second-order sets.

All membership tests take a :class:`~kkt2.problem.PointContext`, which pins
the problem, the point, the sampling config and the tolerances, and caches
every derivative value it hands out. Exact equalities of the underlying
definitions (``g_j(xbar) = 0``, ``f_i°(xbar, u) = 0``) are read with the
tolerances ``tau_act`` and ``tau_dd``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .deriv import sphere_directions
from .geometry import CONFIRMED, INCONCLUSIVE, REFUTED, LevelRecord, Trilean, along_parabola
from .problem import InfeasiblePoint, PointContext, VectorProblem


class LexPair(NamedTuple):
    a1: float
    a2: float


def lex_leq(a: LexPair, b: LexPair, tau: float = 0.0) -> bool:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if a[0] < b[0] - tau:
        return True
    return abs(a[0] - b[0]) <= tau and a[1] <= b[1] + tau


def lex_lt(a: LexPair, b: LexPair, tau: float = 0.0) -> bool:
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if a[0] < b[0] - tau:
        return True
    return abs(a[0] - b[0]) <= tau and a[1] < b[1] - tau


ORIGIN = LexPair(0.0, 0.0)


@dataclass(frozen=True)
class IndexSets:
    J_active: tuple[int, ...]
    J_dir: tuple[int, ...] | None = None
    I_dir: tuple[int, ...] | None = None
    tau_act: float = 1e-9
    tau_dd: float | None = None
    exact: bool = True  # all derivative values behind J_dir / I_dir were exact


def active_set(problem: VectorProblem, xbar, tau_act: float = 1e-9, feas_tol: float = 1e-10) -> IndexSets:
    gv = problem.constraint_values(np.asarray(xbar, dtype=float))
    if gv.size and gv.max() > feas_tol:
        raise InfeasiblePoint(f"point is infeasible: max constraint value {gv.max():.6g}")
    return IndexSets(tuple(j for j in range(problem.m) if abs(gv[j]) <= tau_act), tau_act=tau_act)


def directional_index_sets(ctx: PointContext, u) -> IndexSets:
    tau = ctx.tol.tau_dd
    fe = [ctx.fo("f", i, u) for i in range(ctx.problem.p)]
    ge = {j: ctx.fo("g", j, u) for j in ctx.active}
    return IndexSets(
        J_active=ctx.active,
        J_dir=tuple(j for j in ctx.active if abs(ge[j].value) <= tau),
        I_dir=tuple(i for i in range(ctx.problem.p) if abs(fe[i].value) <= tau),
        tau_act=ctx.tol.tau_act,
        tau_dd=tau,
        exact=all(e.exact for e in (*fe, *ge.values())),
    )


@dataclass(frozen=True)
class DirectionClass:
    u: tuple[float, ...]
    f_values: tuple[float, ...]
    g_values: tuple[float, ...]  # one per active constraint, in ctx.active order
    is_critical: bool
    exact: bool


def is_critical_direction(ctx: PointContext, u) -> DirectionClass:
    tau = ctx.tol.tau_dd
    u = np.asarray(u, dtype=float)
    fe = [ctx.fo("f", i, u) for i in range(ctx.problem.p)]
    ge = [ctx.fo("g", j, u) for j in ctx.active]
    fv = np.array([e.value for e in fe])
    gv = np.array([e.value for e in ge])
    crit = bool(np.all(fv <= tau) and np.any(np.abs(fv) <= tau) and np.all(gv <= tau))
    return DirectionClass(
        tuple(u.tolist()), tuple(fv.tolist()), tuple(gv.tolist()), crit, all(e.exact for e in (*fe, *ge))
    )


def candidate_directions(n: int, count: int, seed: int, max_zeroed: int | None = None) -> np.ndarray:
    """Unit directions: coordinate axes, low-discrepancy sphere points, and
    copies of those points with coordinate subsets set to zero (renormalized).

    The zeroed copies reach lower-dimensional faces (e.g. ``{u_1 = 0}``) that
    a continuous sample hits with probability zero.
    """
    base = sphere_directions(n, count, seed)
    eye = np.eye(n)
    out = [eye, -eye, base]
    max_zeroed = n - 1 if max_zeroed is None else min(max_zeroed, n - 1)
    for r in range(1, max_zeroed + 1):
        for S in itertools.combinations(range(n), r):
            z = np.array(base)
            z[:, list(S)] = 0.0
            nr = np.linalg.norm(z, axis=1)
            out.append(z[nr > 0] / nr[nr > 0, None])
    allv = np.vstack(out)
    _, idx = np.unique(np.round(allv, 12), axis=0, return_index=True)
    return allv[np.sort(idx)]


def sample_critical_cone(ctx: PointContext) -> list[DirectionClass]:
    """Critical directions among ``P * K`` sphere samples (plus faces); ``u = 0`` first."""
    n = ctx.problem.n
    out = [is_critical_direction(ctx, np.zeros(n))]
    for u in candidate_directions(n, ctx.cfg.P * ctx.cfg.K, ctx.cfg.seed):
        dc = is_critical_direction(ctx, u)
        if dc.is_critical:
            out.append(dc)
    return out


@dataclass(frozen=True)
class LexPairs:
    F: tuple[LexPair, ...]
    G: dict[int, LexPair]
    F_exact: tuple[bool, ...]
    G_exact: dict[int, bool]


def lex_pairs(ctx: PointContext, u, v) -> LexPairs:
    """``F^2_i = (f_i°(u), f_i°(v) + f_i°°(u))`` for all i and ``G^2_j`` for active j."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)

    def pair(kind, i):
        a = ctx.fo(kind, i, u)
        b = ctx.fo(kind, i, v)
        c = ctx.so(kind, i, u)
        return LexPair(a.value, b.value + c.value), a.exact and b.exact and c.exact

    F = [pair("f", i) for i in range(ctx.problem.p)]
    G = {j: pair("g", j) for j in ctx.active}
    return LexPairs(
        tuple(p for p, _ in F), {j: p for j, (p, _) in G.items()},
        tuple(e for _, e in F), {j: e for j, (_, e) in G.items()},
    )


def _g_pairs_ok(ctx: PointContext, u, v, strict: bool) -> bool:
    tau = ctx.tol.tau_dd
    cmp = lex_lt if strict else lex_leq
    return all(cmp(p, ORIGIN, tau) for p in lex_pairs(ctx, u, v).G.values())


def in_L2Q0(ctx: PointContext, u, v) -> bool:
    """``v`` in L^2(Q0; xbar, u): every active ``G^2_j <=_lex (0, 0)``."""
    return _g_pairs_ok(ctx, u, v, strict=False)


def in_L2Q(ctx: PointContext, u, v) -> bool:
    """``v`` in L^2(Q; xbar, u): additionally every ``F^2_i <=_lex (0, 0)``."""
    tau = ctx.tol.tau_dd
    lp = lex_pairs(ctx, u, v)
    return all(lex_leq(p, ORIGIN, tau) for p in (*lp.F, *lp.G.values()))


def in_L0(ctx: PointContext, u, v) -> bool:
    """``v`` in L_0^2(Q0; xbar, u): every active ``G^2_j <_lex (0, 0)``."""
    return _g_pairs_ok(ctx, u, v, strict=True)


def in_LQ(ctx: PointContext, v) -> bool:
    """``v`` in L(Q; xbar) = L^2(Q; xbar, 0)."""
    return in_L2Q(ctx, np.zeros(ctx.problem.n), v)


def l0_margin(ctx: PointContext, u, v, J_dir=None) -> float:
    """``min_{j in J(xbar;u)} -(g_j°(v) + g_j°°(u))``; ``+inf`` when the index set is empty.

    For critical ``u`` this is positive exactly on L_0^2(Q0; xbar, u).
    """
    if J_dir is None:
        J_dir = directional_index_sets(ctx, u).J_dir
    if not J_dir:
        return np.inf
    return min(-(ctx.fo("g", j, v).value + ctx.so("g", j, u).value) for j in J_dir)


def in_B(ctx: PointContext, u, v) -> bool:
    """``g_j°(v) + g_j°°(u) <= 0`` for all ``j`` in J(xbar; u)."""
    return l0_margin(ctx, u, v) >= -ctx.tol.tau_dd


def in_A(ctx: PointContext, u, v, *, delta_max: float = 1.0, samples: int = 40, J_dir=None) -> Trilean:
    """Does every ``g_j``, ``j`` in J(xbar; u), stay ``<= 0`` along ``xbar + t u + t^2 v / 2``
    for all small ``t``?  Sampled at ``t_i = delta_max / 2**i``; the finer half decides."""
    if J_dir is None:
        J_dir = directional_index_sets(ctx, u).J_dir
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    ts = delta_max * 0.5 ** np.arange(samples)
    fine = ts[samples // 2 :]
    if not J_dir:
        return Trilean(CONFIRMED, (), float(fine[-1]), 0.0)
    vals = np.full(fine.shape, -np.inf)
    viol = np.full(fine.shape, -np.inf)
    for j in J_dir:
        a, b = along_parabola(ctx.problem.constraints[j], ctx.xbar, u, v, fine)
        vals = np.maximum(vals, a)
        viol = np.maximum(viol, b)
    ok = viol <= 0
    verdict = CONFIRMED if ok.all() else REFUTED if not ok.any() else INCONCLUSIVE
    recs = tuple(LevelRecord(float(t), 0.0, tuple(v.tolist()), float(m), bool(k)) for t, m, k in zip(fine, vals, ok))
    return Trilean(verdict, recs, float(fine[-1]), 0.0)
