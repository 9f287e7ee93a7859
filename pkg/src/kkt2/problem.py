"""Problem data and the per-point derivative cache shared by the analysis modules."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import expr as ex
from .deriv import DerivEstimate, SamplingConfig, clarke_dd, second_order_udd


@dataclass(frozen=True)
class VectorProblem:
    """``min (f_1, ..., f_p)`` subject to ``g_j(x) <= 0``, ``x`` in R^n. Indices are 0-based."""

    n: int
    objectives: tuple[ex.Expr, ...]
    constraints: tuple[ex.Expr, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be at least 1")
        if not self.objectives:
            raise ValueError("at least one objective is required")
        for e in (*self.objectives, *self.constraints):
            if ex.dimension(e) > self.n:
                raise ValueError(f"expression {ex.to_str(e)} uses more than {self.n} variables")

    @classmethod
    def from_strings(cls, n: int, objectives, constraints=()) -> "VectorProblem":
        return cls(n, tuple(ex.parse(s, n) for s in objectives), tuple(ex.parse(s, n) for s in constraints))

    @property
    def p(self) -> int:
        return len(self.objectives)

    @property
    def m(self) -> int:
        return len(self.constraints)

    def without_objectives(self) -> "VectorProblem":
        """Same feasible set with the zero objective (for constraint-only checks)."""
        return VectorProblem(self.n, (ex.Const(0.0),), self.constraints)

    def constraint_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"dimension mismatch: point has {x.shape[-1]} coordinates, expected {self.n}")
        if not self.constraints:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack([ex.evaluate(g, x) for g in self.constraints], axis=-1)


@dataclass(frozen=True)
class Tolerances:
    kappa: float = 1e-9  # kink detection
    tau_act: float = 1e-9  # constraint activity
    tau_dd: float = 1e-7  # "derivative is zero"
    tau_strict: float = 1e-6  # strict inequalities in witnesses
    feas_tol: float = 1e-10  # plain feasibility

    def as_dict(self) -> dict:
        return asdict(self)


class InfeasiblePoint(ValueError):
    pass


@dataclass
class PointContext:
    """A problem anchored at a feasible point, with memoized derivative values.

    ``fo(kind, i, u)`` is ``f_i°`` (kind ``"f"``) or ``g_i°`` (kind ``"g"``) at
    ``xbar`` in direction ``u``; ``so`` is the matching ``°°`` value built on
    the cached first-order value.
    """

    problem: VectorProblem
    xbar: np.ndarray
    cfg: SamplingConfig = field(default_factory=SamplingConfig)
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        self.xbar = np.asarray(self.xbar, dtype=float)
        if self.xbar.shape != (self.problem.n,):
            raise ValueError(f"dimension mismatch: point has {self.xbar.size} coordinates, expected {self.problem.n}")
        gv = self.problem.constraint_values(self.xbar)
        self.gvals = gv
        if gv.size and gv.max() > self.tol.feas_tol:
            raise InfeasiblePoint(f"point is infeasible: max constraint value {gv.max():.6g}")
        self.active = tuple(j for j in range(self.problem.m) if abs(gv[j]) <= self.tol.tau_act)
        self._fo: dict = {}
        self._so: dict = {}

    def _fn(self, kind: str, i: int) -> ex.Expr:
        return self.problem.objectives[i] if kind == "f" else self.problem.constraints[i]

    def fo(self, kind: str, i: int, u) -> DerivEstimate:
        u = np.asarray(u, dtype=float)
        key = (kind, i, u.tobytes())
        hit = self._fo.get(key)
        if hit is None:
            hit = clarke_dd(self._fn(kind, i), self.xbar, u, self.cfg, self.tol.kappa)
            self._fo[key] = hit
        return hit

    def so(self, kind: str, i: int, u) -> DerivEstimate:
        u = np.asarray(u, dtype=float)
        key = (kind, i, u.tobytes())
        hit = self._so.get(key)
        if hit is None:
            hit = second_order_udd(
                self._fn(kind, i), self.xbar, u, self.fo(kind, i, u), self.cfg, self.tol.kappa, self.tol.tau_dd
            )
            self._so[key] = hit
        return hit

    def fo_vec(self, kind: str, u, idx=None) -> np.ndarray:
        if idx is None:
            idx = range(self.problem.p if kind == "f" else self.problem.m)
        return np.array([self.fo(kind, i, u).value for i in idx], dtype=float)

    def with_cfg(self, cfg: SamplingConfig) -> "PointContext":
        return PointContext(self.problem, self.xbar, cfg, self.tol)
