"""Empirical checks of the second-order constraint qualifications.

Inclusion-type conditions (Zangwill, Abadie, weak Abadie) are probed by
sampling the left-hand set and testing each sample against the right-hand
set. A violation ships a concrete vector; "holds" means only that every
sample passed. The Mangasarian-Fromovitz condition asks for existence of a
vector, which search can confirm but never refute, so its failure is
reported as Inconclusive together with the best margin found.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from ._search import compass_search, project_sphere
from .deriv import ball_directions, sphere_directions
from .geometry import FeasibilityOracle, in_second_order_tangent_set
from .problem import PointContext
from .structure import (
    directional_index_sets,
    in_A,
    in_B,
    in_L2Q,
    in_L2Q0,
    is_critical_direction,
    l0_margin,
)

HOLDS = "HoldsEmpirically"
VIOLATED = "ViolatedWithWitness"
INCONCLUSIVE = "Inconclusive"

# direction-0 names of the same conditions
_AT_ZERO = {"ZSCQ": "ZCQ", "ASCQ": "ACQ", "MFSCQ": "MFCQ", "WASRC": "WARC"}
_BASE = {v: k for k, v in _AT_ZERO.items()} | {k: k for k in _AT_ZERO}


def kind_name(kind: str, u) -> str:
    return _AT_ZERO[kind] if not np.any(np.asarray(u)) else kind


def base_kind(kind: str) -> str:
    return _BASE[kind]


@dataclass(frozen=True)
class CQReport:
    kind: str
    u: tuple[float, ...]
    xbar: tuple[float, ...]
    verdict: str
    witness: tuple[float, ...] | None = None
    margin: float | None = None
    samples: int = 0
    seed: int = 0
    detail: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def violated(self) -> bool:
        return self.verdict == VIOLATED


def _tup(a) -> tuple[float, ...]:
    return tuple(float(x) for x in np.asarray(a, dtype=float))


# --------------------------------------------------------------------------
# Mangasarian-Fromovitz


def check_mfscq(
    ctx: PointContext,
    u,
    *,
    radii: Sequence[float] = (1.0, 10.0, 100.0),
    starts: int = 8,
    max_evals: int = 300,
) -> CQReport:
    """Search for ``v`` with ``g_j°(v) + g_j°°(u) < 0`` on J(xbar; u).

    Maximizes the smallest slack over spheres of the given radii by
    multistart compass search. Starting points include the scaled direction
    ``u`` itself (large multiples of a strictly feasible first-order
    direction added to ``u`` stay strictly feasible).
    """
    u = np.asarray(u, dtype=float)
    n = ctx.problem.n
    kind = kind_name("MFSCQ", u)
    if not is_critical_direction(ctx, u).is_critical:
        raise ValueError("MFSCQ check needs a critical direction")
    J_dir = directional_index_sets(ctx, u).J_dir
    if not J_dir:
        return CQReport(kind, _tup(u), _tup(ctx.xbar), HOLDS, _tup(np.zeros(n)), float("inf"), 0, ctx.cfg.seed,
                        {"J_dir": ()})

    def neg_margin(batch):
        return np.array([-l0_margin(ctx, u, v, J_dir) for v in batch])

    eye = np.eye(n)
    dirs = [eye, -eye, sphere_directions(n, starts, ctx.cfg.seed)]
    if np.any(u):
        dirs.append((u / np.linalg.norm(u))[None, :])
    dirs = np.vstack(dirs)
    best_v, best = None, -np.inf
    per_radius = {}
    used = 0
    for r in radii:
        rb = -np.inf
        for d in dirs:
            v, f, ev = compass_search(
                neg_margin, r * d, r / 2, max_evals=max_evals, min_step=r * 1e-6,
                project=project_sphere(r), target=-1e300,
            )
            used += ev
            if -f > rb:
                rb = -f
            if -f > best:
                best, best_v = -f, v
        per_radius[r] = rb
    verdict = HOLDS if best > ctx.tol.tau_strict else INCONCLUSIVE
    return CQReport(kind, _tup(u), _tup(ctx.xbar), verdict, _tup(best_v), float(best), used, ctx.cfg.seed,
                    {"J_dir": J_dir, "per_radius": per_radius})


# --------------------------------------------------------------------------
# candidate vectors for the inclusion checks


def candidate_vectors(n: int, radii: Sequence[float], seed: int, limit: int) -> Iterator[np.ndarray]:
    """Deterministic stream of candidate vectors: scaled ball samples and,
    for each, copies with coordinate subsets zeroed (face samples). The zero
    vector comes first."""
    yield np.zeros(n)
    subsets = [S for r in range(1, n) for S in itertools.combinations(range(n), r)]
    pts = ball_directions(n, limit, seed + 7919)
    for b in pts:
        for r in radii:
            v = r * b
            yield v
            for S in subsets:
                z = v.copy()
                z[list(S)] = 0.0
                yield z


def _sample_members(ctx: PointContext, u, test, N: int, radii, max_draws: int) -> tuple[list[np.ndarray], int]:
    members, draws = [], 0
    seen = set()
    for v in candidate_vectors(ctx.problem.n, radii, ctx.cfg.seed, max_draws):
        if draws >= max_draws or len(members) >= N:
            break
        key = v.tobytes()
        if key in seen:
            continue
        seen.add(key)
        draws += 1
        if test(ctx, u, v):
            members.append(v)
    return members, draws


# --------------------------------------------------------------------------
# Abadie / weak Abadie


def check_inclusion_cq(
    ctx: PointContext,
    u,
    kind: str,
    *,
    N: int = 256,
    radii: Sequence[float] = (1.0, 10.0),
    max_draws: int | None = None,
    stop_at_violation: bool = True,
) -> CQReport:
    """ASCQ: L^2(Q0; xbar, u) in T^2(Q0; xbar, u).  WASRC: L^2(Q; xbar, u) in T^2(Q0; xbar, u)."""
    if kind not in ("ASCQ", "WASRC"):
        raise ValueError("kind must be 'ASCQ' or 'WASRC'")
    u = np.asarray(u, dtype=float)
    lhs = in_L2Q0 if kind == "ASCQ" else in_L2Q
    max_draws = max_draws or 64 * N
    members, draws = _sample_members(ctx, u, lhs, N, radii, max_draws)
    oracle = FeasibilityOracle(ctx.problem.constraints, ctx.tol.feas_tol, ctx.problem.n)
    refined = ctx.with_cfg(ctx.cfg.refined())
    counts = {"lhs_members": len(members), "draws": draws, "confirmed": 0, "refuted": 0, "inconclusive": 0}
    witness, margin = None, None
    for v in members:
        tri = in_second_order_tangent_set(oracle, ctx.xbar, u, v, ctx.cfg)
        if tri.confirmed:
            counts["confirmed"] += 1
        elif tri.refuted and lhs(refined, u, v):
            counts["refuted"] += 1
            if witness is None:
                witness, margin = v, tri.best.margin
            if stop_at_violation:
                break
        else:
            counts["inconclusive"] += 1
    if witness is not None:
        verdict = VIOLATED
    elif members and counts["confirmed"] == len(members):
        verdict = HOLDS
    else:
        verdict = INCONCLUSIVE
    return CQReport(kind_name(kind, u), _tup(u), _tup(ctx.xbar), verdict,
                    None if witness is None else _tup(witness), margin, len(members), ctx.cfg.seed, counts)


# --------------------------------------------------------------------------
# Zangwill


def check_zscq(
    ctx: PointContext,
    u,
    *,
    N: int = 256,
    radii: Sequence[float] = (1.0, 10.0),
    d_min: float = 0.5,
    grid_levels: int = 7,
    max_draws: int | None = None,
    stop_at_violation: bool = True,
) -> CQReport:
    """B(xbar; u) in cl A(xbar; u), probed by distance-to-A estimates of sampled B members.

    For each B member the radii ``d_min / 2**i`` are scanned from the
    smallest up for a neighbour confirmed in A. A member with no confirmed
    neighbour within ``d_min`` and every neighbour refuted is a violation.
    """
    u = np.asarray(u, dtype=float)
    n = ctx.problem.n
    kind = kind_name("ZSCQ", u)
    J_dir = directional_index_sets(ctx, u).J_dir
    if not J_dir:
        return CQReport(kind, _tup(u), _tup(ctx.xbar), HOLDS, None, None, 0, ctx.cfg.seed,
                        {"J_dir": (), "note": "no active directional constraints"})
    max_draws = max_draws or 64 * N
    members, draws = _sample_members(ctx, u, in_B, N, radii, max_draws)
    eye = np.eye(n)
    dirs = np.vstack([eye, -eye, sphere_directions(n, ctx.cfg.P, ctx.cfg.seed)])
    rs = d_min * 0.5 ** np.arange(grid_levels)[::-1]
    refined = ctx.with_cfg(ctx.cfg.refined())
    counts = {"b_members": len(members), "draws": draws, "in_A": 0, "near_A": 0, "coarse": 0, "far": 0, "unresolved": 0}
    witness, dist = None, None
    for v in members:
        if in_A(ctx, u, v, J_dir=J_dir).confirmed:
            counts["in_A"] += 1
            continue
        found, all_refuted = None, True
        for r in rs:
            for w in dirs:
                tri = in_A(ctx, u, v + r * w, J_dir=J_dir)
                if tri.confirmed:
                    found = r
                    break
                all_refuted &= tri.refuted
            if found is not None:
                break
        if found is not None:
            counts["near_A" if found <= rs[0] else "coarse"] += 1
            continue
        if all_refuted and in_B(refined, u, v) and in_A(refined, u, v).refuted:
            counts["far"] += 1
            if witness is None:
                witness, dist = v, d_min
            if stop_at_violation:
                break
        else:
            counts["unresolved"] += 1
    if witness is not None:
        verdict = VIOLATED
    elif members and counts["in_A"] + counts["near_A"] == len(members):
        verdict = HOLDS
    else:
        verdict = INCONCLUSIVE
    counts["resolution"] = float(rs[0])
    return CQReport(kind, _tup(u), _tup(ctx.xbar), verdict, None if witness is None else _tup(witness),
                    dist, len(members), ctx.cfg.seed, counts)


# --------------------------------------------------------------------------
# implication lattice


_IMPLICATIONS = (
    ("ZSCQ", "ASCQ"),
    ("ASCQ", "WASRC"),
    ("ZSCQ", "WASRC"),
    ("MFSCQ", "ASCQ"),
    ("MFSCQ", "WASRC"),
)


@dataclass(frozen=True)
class AuditResult:
    consistent: bool
    flags: tuple[str, ...]
    verdicts: dict


def implication_audit(reports: Sequence[CQReport]) -> AuditResult:
    """Flag verdict combinations contradicting ZSCQ => ASCQ => WASRC and MFSCQ => ASCQ.

    Only a HoldsEmpirically premise against a ViolatedWithWitness conclusion
    counts. MFSCQ is never reported violated, so the propagation of MFSCQ
    from direction 0 to critical directions cannot produce a flag here.
    """
    if not reports:
        return AuditResult(True, (), {})
    u0, x0, s0 = reports[0].u, reports[0].xbar, reports[0].seed
    verdicts = {}
    for r in reports:
        if r.u != u0 or r.xbar != x0:
            raise ValueError("audit needs reports for the same point and direction")
        if r.seed != s0:
            raise ValueError("audit needs reports computed with the same seed")
        verdicts[base_kind(r.kind)] = r.verdict
    flags = []
    for a, b in _IMPLICATIONS:
        if verdicts.get(a) == HOLDS and verdicts.get(b) == VIOLATED:
            flags.append(f"{a} holds but {b} is violated")
    return AuditResult(not flags, tuple(flags), verdicts)
