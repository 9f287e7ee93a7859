"""Derivative-free compass search used by the membership and witness searches."""

from __future__ import annotations

from typing import Callable

import numpy as np


def compass_search(
    fun: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    step: float,
    *,
    max_evals: int = 200,
    min_step: float = 1e-9,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    target: float | None = None,
) -> tuple[np.ndarray, float, int]:
    """Minimize ``fun`` from ``x0`` by polling ``x +- step e_i``.

    ``fun`` maps a batch ``(N, n)`` to ``(N,)`` values. The best poll point is
    taken when it improves; otherwise the step is halved. ``project`` maps a
    batch back onto the admissible set. Stops early once ``fun <= target``.
    Returns ``(x_best, f_best, evals)``.
    """
    x = np.array(x0, dtype=float)
    if project is not None:
        x = project(x[None, :])[0]
    fx = float(fun(x[None, :])[0])
    evals = 1
    n = x.shape[0]
    eye = np.eye(n)
    dirs = np.vstack([eye, -eye])
    while evals < max_evals and step >= min_step:
        if target is not None and fx <= target:
            break
        cand = x[None, :] + step * dirs
        if project is not None:
            cand = project(cand)
        room = max_evals - evals
        cand = cand[:room]
        vals = fun(cand)
        evals += cand.shape[0]
        k = int(np.argmin(vals))
        if vals[k] < fx:
            x, fx = cand[k], float(vals[k])
        else:
            step *= 0.5
    return x, fx, evals


def project_ball(center: np.ndarray, radius: float):
    def proj(batch: np.ndarray) -> np.ndarray:
        d = batch - center[None, :]
        nr = np.linalg.norm(d, axis=1, keepdims=True)
        scale = np.where(nr > radius, radius / np.maximum(nr, 1e-300), 1.0)
        return center[None, :] + d * scale

    return proj


def project_sphere(radius: float = 1.0):
    def proj(batch: np.ndarray) -> np.ndarray:
        nr = np.linalg.norm(batch, axis=1, keepdims=True)
        nr = np.where(nr == 0, 1.0, nr)
        return radius * batch / nr

    return proj


def snapped(v: np.ndarray, scale: float) -> np.ndarray:
    """Copy of ``v`` with coordinates of magnitude ``<= scale`` set to exactly zero."""
    out = np.array(v, dtype=float)
    out[np.abs(out) <= scale] = 0.0
    return out
