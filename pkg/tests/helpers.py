"""Shared problem fixtures and random expression generators for the tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from kkt2 import expr as ex
from kkt2.deriv import SamplingConfig
from kkt2.problem import PointContext, VectorProblem

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
DATA = HERE / "data"

CUSP = (2, ["x2", "x1", "-x1"], ["abs(x1) + x2^3 - x1^2"])
PARABOLA = (2, ["x1", "-x1"], ["x1 - x2^2", "-x1 - x2^2"])
KINKED = (2, ["abs(x1) + x2^2", "-(abs(x1) + x2^2)"], ["x2"])
NAMED = {"cusp": CUSP, "parabola": PARABOLA, "kinked": KINKED}


def problem(which) -> VectorProblem:
    n, f, g = NAMED[which] if isinstance(which, str) else which
    return VectorProblem.from_strings(n, f, g)


def ctx(which, seed: int = 0, point=None, **cfg) -> PointContext:
    P = problem(which)
    x = np.zeros(P.n) if point is None else np.asarray(point, dtype=float)
    return PointContext(P, x, SamplingConfig(seed=seed, **cfg))


def planted() -> dict:
    return json.loads((DATA / "planted_oracle.json").read_text())


# --------------------------------------------------------------------------
# random expressions

_BIN = (ex.Add, ex.Sub, ex.Mul, ex.Min, ex.Max)


def random_expr(rng: np.random.Generator, n: int, depth: int = 3, kinky: bool = True) -> ex.Expr:
    """Random expression over x1..xn. Leaves are variables or small integers,
    so abs/min/max nodes often switch branch exactly at the origin."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return ex.Var(int(rng.integers(n)))
        return ex.Const(float(rng.integers(-2, 3)))
    r = rng.random()
    if r < 0.15:
        return ex.Neg(random_expr(rng, n, depth - 1, kinky))
    if r < 0.25:
        return ex.Pow(random_expr(rng, n, depth - 1, kinky), int(rng.integers(1, 4)))
    if kinky and r < 0.4:
        return ex.Abs(random_expr(rng, n, depth - 1, kinky))
    ops = _BIN if kinky else _BIN[:3]
    op = ops[int(rng.integers(len(ops)))]
    return op(random_expr(rng, n, depth - 1, kinky), random_expr(rng, n, depth - 1, kinky))


def unit(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


# --------------------------------------------------------------------------
# property runners: each returns (trials, list of violating cases)

KINKED_EXPRS = ("abs(x1) + x2^3 - x1^2", "abs(x1) + x2^2", "-(abs(x1) + x2^2)", "abs(x1)", "max(x1, x2)", "min(x1, x2)")


def homogeneity_trials(seed: int, count: int):
    from kkt2.deriv import clarke_dd

    rng = np.random.default_rng(seed)
    trials, bad = 0, []
    for _ in range(count):
        F = random_expr(rng, 2)
        xbar = np.zeros(2) if rng.random() < 0.7 else rng.uniform(-1, 1, 2)
        u = rng.standard_normal(2)
        base = clarke_dd(F, xbar, u).value
        for lam in (0.5, 2.0, 7.0):
            scaled = clarke_dd(F, xbar, lam * u).value
            trials += 1
            if abs(scaled - lam * base) > 1e-6 * abs(lam * base) + 1e-9:
                bad.append((ex.to_str(F), xbar, u, lam))
    return trials, bad


def subadditivity_trials(seed: int, count: int):
    from kkt2.deriv import clarke_dd

    rng = np.random.default_rng(seed)
    kinked = [ex.parse(s) for s in KINKED_EXPRS]
    bad = []
    for k in range(count):
        if k % 2:
            F, xbar = random_expr(rng, 2, kinky=False), rng.uniform(-1, 1, 2)
        else:
            F, xbar = kinked[k // 2 % len(kinked)], np.zeros(2)
        u, v = rng.standard_normal((2, 2))
        lhs = clarke_dd(F, xbar, u + v).value
        rhs = clarke_dd(F, xbar, u).value + clarke_dd(F, xbar, v).value
        if lhs > rhs + 1e-6 * (1 + abs(rhs)):
            bad.append((ex.to_str(F), xbar, u, v))
    return count, bad


def first_order_lemma_trials(seed: int, hits_wanted: int, max_tries: int = 50000):
    """Sequences xbar + t_k u_k with F >= F(xbar) and u_k -> u must give F°(xbar, u) >= 0."""
    from kkt2.deriv import clarke_dd

    rng = np.random.default_rng(seed)
    z = np.zeros(2)
    ts = 2.0 ** -np.arange(4, 25)
    hits, bad = 0, []
    for _ in range(max_tries):
        if hits >= hits_wanted:
            break
        F = random_expr(rng, 2)
        u = unit(rng, 2)
        uk = u[None, :] + rng.standard_normal((ts.size, 2)) * ts[:, None]
        if not np.all(ex.evaluate(F, ts[:, None] * uk) >= ex.evaluate(F, z)):
            continue
        hits += 1
        if clarke_dd(F, z, u).value < -1e-6:
            bad.append((ex.to_str(F), u))
    return hits, bad


# deep tail levels: the sampled Clarke value carries an O(curvature * t) bias, which at the
# default tail (t ~ 6e-9) can exceed tau_dd and misjudge the hypothesis F°(xbar, u) = 0
DEEP = SamplingConfig(K=40, tail_start=34)


def second_order_lemma_trials(seed: int, hits_wanted: int, max_tries: int = 50000, cfg: SamplingConfig = DEEP):
    """With F°(xbar, u) = 0, parabolic sequences with F >= F(xbar) must give F°(xbar, v) + F°°(xbar, u) >= 0."""
    from kkt2.deriv import clarke_dd, second_order_udd

    rng = np.random.default_rng(seed)
    z = np.zeros(2)
    ts = 2.0 ** -np.arange(4, 21)
    hits, bad = 0, []
    for _ in range(max_tries):
        if hits >= hits_wanted:
            break
        F0 = random_expr(rng, 2)
        u = unit(rng, 2)
        a = clarke_dd(F0, z, u, cfg).value
        # subtract the linear part along u so that G°(0, u) = 0
        G = ex.Sub(F0, ex.Mul(ex.Const(a), ex.Add(ex.Mul(ex.Const(u[0]), ex.Var(0)), ex.Mul(ex.Const(u[1]), ex.Var(1)))))
        gu = clarke_dd(G, z, u, cfg)
        if abs(gu.value) > 1e-7:
            continue
        v = rng.standard_normal(2)
        vk = v[None, :] + rng.standard_normal((ts.size, 2)) * ts[:, None]
        X = ts[:, None] * u[None, :] + 0.5 * (ts * ts)[:, None] * vk
        if not np.all(ex.evaluate(G, X) >= ex.evaluate(G, z)):
            continue
        hits += 1
        if clarke_dd(G, z, v, cfg).value + second_order_udd(G, z, u, gu, cfg).value < -1e-4:
            bad.append((ex.to_str(G), u, v))
    return hits, bad
