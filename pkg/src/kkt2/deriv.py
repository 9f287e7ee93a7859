"""Clarke generalized derivative and second-order upper directional derivative.

Both quantities are limsups and have no finite algorithm in general. Each
estimator has two routes:

* an exact route, licensed only when the function is provably smooth on the
  region the limit looks at (interval enclosure for the first order, exact
  polynomial restriction to the ray for the second order);
* a sampled route, the maximum of difference quotients over a geometric
  step grid and a fixed low-discrepancy set of base-point perturbations.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm, qmc

from . import expr as ex

EXACT = "exact-smooth"
SAMPLED = "sampled-limsup"


@dataclass(frozen=True)
class SamplingConfig:
    """Step grid ``t_k = t0 * rho**k`` and base-point perturbation set.

    Only the levels ``tail_start <= k < K`` enter the limsup estimates; the
    coarse levels carry O(t) bias and would dominate a plain maximum.
    """

    t0: float = 1e-1
    rho: float = 0.5
    K: int = 30
    c: float = 1.0
    P: int = 32
    seed: int = 0
    tail_start: int = 24

    def __post_init__(self):
        if not (0 < self.rho < 1):
            raise ValueError("rho must lie in (0, 1)")
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")
        if self.K < 4:
            raise ValueError("K must be at least 4")
        if self.P < 1:
            raise ValueError("P must be at least 1")
        if not (0 <= self.tail_start < self.K):
            raise ValueError("tail_start must satisfy 0 <= tail_start < K")
        if self.c < 0:
            raise ValueError("c must be nonnegative")

    @property
    def levels(self) -> np.ndarray:
        k = np.arange(self.tail_start, self.K)
        return self.t0 * self.rho**k

    def refined(self) -> "SamplingConfig":
        """Twice the perturbation directions and twice the number of tail levels."""
        tail = self.K - self.tail_start
        return SamplingConfig(self.t0, self.rho, self.K + tail, self.c, 2 * self.P, self.seed, self.tail_start)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivEstimate:
    value: float
    method: str
    t0: float
    rho: float
    K: int
    tail_start: int
    c: float
    samples: int
    seed: int
    # second-order estimates only: the first-order value they were built on
    fdd: float | None = None
    fdd_method: str | None = None

    @property
    def exact(self) -> bool:
        return self.method == EXACT


def _as_vec(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@functools.lru_cache(maxsize=64)
def ball_directions(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` points of the closed unit ball in R^n from a scrambled Halton set.

    Prefix-stable: the first ``k`` rows do not depend on ``count``.
    """
    if count == 0:
        return np.zeros((0, n))
    h = qmc.Halton(d=n + 1, scramble=True, seed=np.random.default_rng(seed))
    pts = h.random(count)
    z = norm.ppf(np.clip(pts[:, :n], 1e-12, 1 - 1e-12))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = pts[:, n] ** (1.0 / n)
    out = z * r[:, None]
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def sphere_directions(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` unit vectors in R^n, prefix-stable like :func:`ball_directions`."""
    if count == 0:
        return np.zeros((0, n))
    h = qmc.Halton(d=n, scramble=True, seed=np.random.default_rng(seed))
    z = norm.ppf(np.clip(h.random(count), 1e-12, 1 - 1e-12))
    if n == 1:
        z = np.sign(z)
        z[z == 0] = 1.0
    out = z / np.linalg.norm(z, axis=1, keepdims=True)
    out.setflags(write=False)
    return out


_BACK = np.array([0.25, 0.5, 0.75, 1.0])


class ClarkeEstimator:
    """Precomputed state for ``F°(xbar, .)`` at a fixed point and config.

    The exact route is licensed once per point: the box of half-width
    ``t0 * (1 + c)`` around ``xbar`` must contain no possible branch switch.
    Directions are normalized before use (``F°`` is positively homogeneous),
    which makes the base-point set independent of ``u``.
    """

    def __init__(self, F: ex.Expr, xbar: tuple[float, ...], cfg: SamplingConfig, kappa: float = 1e-9):
        self.F = F
        self.xbar = np.asarray(xbar, dtype=float)
        self.cfg = cfg
        n = self.xbar.shape[0]
        r = cfg.t0 * (1.0 + cfg.c)
        self.smooth = not ex.kinks_in_box(F, self.xbar - r, self.xbar + r, kappa)
        if self.smooth:
            self.grad = ex.gradient(F, self.xbar)
            return
        t = cfg.levels
        w = np.vstack([np.zeros((1, n)), ball_directions(n, cfg.P, cfg.seed)])
        # offsets of the base points from xbar: H[k, s] = c t_k w_s
        self.t = t
        self.H = cfg.c * t[:, None, None] * w[None, :, :]
        self.dbase = ex.delta(F, self.xbar, self.H)

    @property
    def samples(self) -> int:
        return 0 if self.smooth else self.dbase.size + self.t.size * _BACK.size

    def value(self, u: np.ndarray) -> tuple[float, str]:
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return 0.0, EXACT
        if self.smooth:
            return float(self.grad @ u), EXACT
        uh = u / nu
        step = self.t[:, None, None] * uh[None, None, :]
        q = (ex.delta(self.F, self.xbar, self.H + step) - self.dbase) / self.t[:, None]
        # base points behind xbar along -u: the step then crosses any kink at xbar
        back = -self.cfg.c * _BACK[None, :, None] * step
        qb = (ex.delta(self.F, self.xbar, back + step) - ex.delta(self.F, self.xbar, back)) / self.t[:, None]
        return nu * float(max(q.max(), qb.max())), SAMPLED


@functools.lru_cache(maxsize=512)
def _estimator(F: ex.Expr, xbar: tuple[float, ...], cfg: SamplingConfig, kappa: float) -> ClarkeEstimator:
    return ClarkeEstimator(F, xbar, cfg, kappa)


def clarke_estimator(F: ex.Expr, xbar, cfg: SamplingConfig, kappa: float = 1e-9) -> ClarkeEstimator:
    xbar = _as_vec(xbar, "xbar")
    if ex.dimension(F) > xbar.shape[0]:
        raise ValueError("dimension mismatch: expression uses more variables than the point has")
    return _estimator(F, tuple(xbar.tolist()), cfg, kappa)


def clarke_dd(F: ex.Expr, xbar, u, cfg: SamplingConfig | None = None, kappa: float = 1e-9) -> DerivEstimate:
    """Estimate ``F°(xbar, u) = limsup_{x -> xbar, t -> 0+} (F(x + t u) - F(x)) / t``."""
    cfg = cfg or SamplingConfig()
    xbar = _as_vec(xbar, "xbar")
    u = _as_vec(u, "u")
    if u.shape != xbar.shape:
        raise ValueError("dimension mismatch between xbar and u")
    est = clarke_estimator(F, xbar, cfg, kappa)
    val, method = est.value(u)
    return DerivEstimate(val, method, cfg.t0, cfg.rho, cfg.K, cfg.tail_start, cfg.c, est.samples, cfg.seed)


def second_order_udd(
    F: ex.Expr,
    xbar,
    u,
    fdd: float | DerivEstimate,
    cfg: SamplingConfig | None = None,
    kappa: float = 1e-9,
    tau: float = 1e-7,
) -> DerivEstimate:
    """Estimate ``F°°(xbar, u) = limsup_{t -> 0+} (F(xbar + t u) - F(xbar) - t fdd) / (t^2 / 2)``.

    ``fdd`` is the caller's value of ``F°(xbar, u)``. When the restriction of
    ``F`` to the ray is an unambiguous polynomial ``a0 + a1 t + a2 t^2 + ...``
    the limit is ``2 a2`` if ``fdd`` equals ``a1`` (within ``tau``) and
    ``-inf`` / ``+inf`` if ``fdd`` is larger / smaller.
    """
    cfg = cfg or SamplingConfig()
    xbar = _as_vec(xbar, "xbar")
    u = _as_vec(u, "u")
    if u.shape != xbar.shape:
        raise ValueError("dimension mismatch between xbar and u")
    if isinstance(fdd, DerivEstimate):
        fdd_val, fdd_method = fdd.value, fdd.method
    else:
        fdd_val, fdd_method = float(fdd), EXACT
    common = dict(t0=cfg.t0, rho=cfg.rho, K=cfg.K, tail_start=cfg.tail_start, c=cfg.c, seed=cfg.seed,
                  fdd=fdd_val, fdd_method=fdd_method)
    if not np.any(u):
        return DerivEstimate(0.0, EXACT, samples=0, **common)
    try:
        coef = ex.restriction_poly(F, xbar, u, kappa)
    except ex.AmbiguousBranch:
        coef = None
    if coef is not None:
        a1 = coef[1] if coef.size > 1 else 0.0
        a2 = coef[2] if coef.size > 2 else 0.0
        if abs(a1 - fdd_val) <= tau:
            val = 2.0 * a2
        else:
            val = -math.inf if fdd_val > a1 else math.inf
        return DerivEstimate(float(val), EXACT, samples=0, **common)
    t = cfg.levels
    d = ex.delta(F, xbar, t[:, None] * u[None, :])
    q = (d - t * fdd_val) / (0.5 * t * t)
    return DerivEstimate(float(q.max()), SAMPLED, samples=int(t.size), **common)
