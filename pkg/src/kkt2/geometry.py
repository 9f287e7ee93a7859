"""Empirical membership in the tangent cone and the second-order tangent set.

Both sets are defined by sequences ``t_k -> 0`` and perturbations shrinking
to the tested vector, so membership can only be probed at finitely many
scales. At each fine level of the step grid a compass search looks for a
feasible perturbation inside a ball of radius ``eta0 * eta_rho**k``; the
verdict summarizes how the fine levels went.

Feasibility inside these searches is judged against floating point rounding
(``g <= 64 eps * magnitude``) rather than the absolute ``feas_tol``: at
``t ~ 1e-9`` the second-order displacement ``t^2 v / 2`` is far below 1e-10
and an absolute tolerance would accept everything.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from ._search import compass_search, project_ball, snapped
from .deriv import SamplingConfig
from .problem import InfeasiblePoint

CONFIRMED = "Confirmed"
REFUTED = "RefutedAtResolution"
INCONCLUSIVE = "Inconclusive"

_ROUND = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class LevelRecord:
    t: float
    eta: float
    vector: tuple[float, ...]  # the perturbed direction / curvature found
    margin: float  # max_j g_j at the resulting point
    feasible: bool


@dataclass(frozen=True)
class Trilean:
    verdict: str
    levels: tuple[LevelRecord, ...] = ()
    t_min: float = 0.0
    eta_min: float = 0.0

    @property
    def confirmed(self) -> bool:
        return self.verdict == CONFIRMED

    @property
    def refuted(self) -> bool:
        return self.verdict == REFUTED

    @property
    def best(self) -> LevelRecord | None:
        """Least infeasible attempt at the finest level (the witness of a refutation)."""
        return self.levels[-1] if self.levels else None


def summarize(feasible: Sequence[bool]) -> str:
    if all(feasible):
        return CONFIRMED
    if not any(feasible):
        return REFUTED
    return INCONCLUSIVE


@dataclass
class FeasibilityOracle:
    constraints: tuple[ex.Expr, ...]
    feas_tol: float = 1e-10
    n: int | None = None

    def margin(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.n is not None and x.shape[-1] != self.n:
            raise ValueError(f"dimension mismatch: point has {x.shape[-1]} coordinates, expected {self.n}")
        if not self.constraints:
            return -np.inf
        return max(ex.evaluate(g, x) for g in self.constraints)

    def feasible(self, x) -> tuple[bool, float]:
        m = self.margin(x)
        return bool(m <= self.feas_tol), float(m)

    def violation(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(margin, rounding-aware violation)`` for a batch; feasible iff violation <= 0."""
        X = np.atleast_2d(X)
        if not self.constraints:
            z = np.full(X.shape[0], -np.inf)
            return z, z
        vals, viol = [], []
        for g in self.constraints:
            v, m = ex.evaluate_with_magnitude(g, X)
            vals.append(v)
            viol.append(v - _ROUND * m)
        return np.max(vals, axis=0), np.max(viol, axis=0)

    def without(self, j: int) -> "FeasibilityOracle":
        return FeasibilityOracle(self.constraints[:j] + self.constraints[j + 1 :], self.feas_tol, self.n)


def _check_start(oracle: FeasibilityOracle, xbar: np.ndarray) -> None:
    ok, m = oracle.feasible(xbar)
    if not ok:
        raise InfeasiblePoint(f"point is infeasible: max constraint value {m:.6g}")


def _probe(
    oracle: FeasibilityOracle,
    to_point: Callable[[np.ndarray], np.ndarray],
    center: np.ndarray,
    t: float,
    eta: float,
    budget: int,
) -> LevelRecord:
    def fun(batch):
        return oracle.violation(to_point(batch))[1]

    starts = [center]
    s = snapped(center, eta / max(1, center.size))
    if np.any(s != center):
        starts.append(s)
    best_x, best_f = None, np.inf
    used = 0
    for x0 in starts:
        f0 = float(fun(x0[None, :])[0])
        used += 1
        if f0 <= 0:
            best_x, best_f = x0, f0
            break
        x, f, ev = compass_search(
            fun, x0, eta / 2, max_evals=max(1, budget - used), min_step=eta * 1e-9,
            project=project_ball(center, eta), target=0.0,
        )
        used += ev
        if f < best_f:
            best_x, best_f = x, f
        if best_f <= 0 or used >= budget:
            break
    margin = float(oracle.violation(to_point(best_x[None, :]))[0][0])
    return LevelRecord(t, eta, tuple(best_x.tolist()), margin, bool(best_f <= 0))


def _run_levels(oracle, make_point, center, cfg, eta0, eta_rho, budget) -> Trilean:
    recs = []
    for k, t in zip(range(cfg.tail_start, cfg.K), cfg.levels):
        eta = eta0 * eta_rho**k
        recs.append(_probe(oracle, make_point(t), center, float(t), eta, budget))
    return Trilean(summarize([r.feasible for r in recs]), tuple(recs), recs[-1].t, recs[-1].eta)


def in_tangent_cone(
    oracle: FeasibilityOracle,
    xbar,
    d,
    cfg: SamplingConfig | None = None,
    *,
    eta0: float = 1.0,
    eta_rho: float = 0.7,
    budget: int = 200,
) -> Trilean:
    """Is ``d`` in T(Q0; xbar)?  Probes ``xbar + t_k d'`` with ``|d' - d| <= eta_k``."""
    cfg = cfg or SamplingConfig()
    xbar = np.asarray(xbar, dtype=float)
    d = np.asarray(d, dtype=float)
    if d.shape != xbar.shape:
        raise ValueError("dimension mismatch between xbar and d")
    _check_start(oracle, xbar)

    def make_point(t):
        return lambda D: xbar[None, :] + t * D

    return _run_levels(oracle, make_point, d, cfg, eta0, eta_rho, budget)


def in_second_order_tangent_set(
    oracle: FeasibilityOracle,
    xbar,
    u,
    v,
    cfg: SamplingConfig | None = None,
    *,
    eta0: float = 1.0,
    eta_rho: float = 0.7,
    budget: int = 200,
) -> Trilean:
    """Is ``v`` in T^2(Q0; xbar, u)?  Probes ``xbar + t_k u + t_k^2 v' / 2``.

    For ``u = 0`` the set coincides with the tangent cone and the tangent cone
    test is run on ``v`` directly.
    """
    cfg = cfg or SamplingConfig()
    xbar = np.asarray(xbar, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (u.shape == v.shape == xbar.shape):
        raise ValueError("dimension mismatch among xbar, u and v")
    if not np.any(u):
        return in_tangent_cone(oracle, xbar, v, cfg, eta0=eta0, eta_rho=eta_rho, budget=budget)
    _check_start(oracle, xbar)

    def make_point(t):
        return lambda V: xbar[None, :] + t * u[None, :] + 0.5 * t * t * V

    return _run_levels(oracle, make_point, v, cfg, eta0, eta_rho, budget)


def along_parabola(g: ex.Expr, xbar, u, v, ts) -> tuple[np.ndarray, np.ndarray]:
    """Values of ``g(xbar + t u + t^2 v / 2)`` and the rounding-aware violation over ``ts``."""
    xbar = np.asarray(xbar, dtype=float)
    ts = np.asarray(ts, dtype=float)
    X = xbar[None, :] + ts[:, None] * np.asarray(u)[None, :] + 0.5 * (ts * ts)[:, None] * np.asarray(v)[None, :]
    val, mag = ex.evaluate_with_magnitude(g, X)
    return val, val - _ROUND * mag
