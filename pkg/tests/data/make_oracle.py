"""Brute-force ground truth for the planted certificate corpus.

Derivatives are hand-derived closed forms at xbar = 0 (no use of the
library). Directions u run over an angular grid of the unit sphere, v over a
box grid; both systems are evaluated exactly on the grid. Run once and
commit the JSON output:

    python3 tests/data/make_oracle.py > tests/data/planted_oracle.json
"""

import json

import numpy as np

A = np.abs


def inst(n, objectives, constraints, fo_f, so_f, fo_g=(), so_g=(), active=None, target=None):
    return dict(n=n, objectives=objectives, constraints=constraints, fo_f=fo_f, so_f=so_f,
                fo_g=list(fo_g), so_g=list(so_g),
                active=list(range(len(constraints))) if active is None else active, target=target)


z = lambda u: 0.0 * u[..., 0]
c = lambda k: (lambda u: u[..., k])

CORPUS = {
    "P1": inst(1, ["x1"], [], [c(0)], [z], target="FirstOrder"),
    "P2": inst(2, ["x1", "x2"], ["x1 + abs(x2)"], [c(0), c(1)], [z, z],
               [lambda u: u[..., 0] + A(u[..., 1])], [z], target="FirstOrder"),
    "P3": inst(2, ["x1", "x2"], [], [c(0), c(1)], [z, z], target="StrongFirstOrder"),
    "P4": inst(2, ["abs(x1) + x2", "x1^2"], ["x2"],
               [lambda u: A(u[..., 0]) + u[..., 1], z], [z, lambda u: 2 * u[..., 0] ** 2],
               [c(1)], [z], target="StrongFirstOrder"),
    "P5": inst(2, ["x2 - x1^2"], ["-x2"], [c(1)], [lambda u: -2 * u[..., 0] ** 2],
               [lambda u: -u[..., 1]], [z], target="SecondOrderWeak"),
    "P6": inst(2, ["x2 - x1^2", "2*x2 - x1^2 + x1^4"], ["-x2"],
               [c(1), lambda u: 2 * u[..., 1]], [lambda u: -2 * u[..., 0] ** 2] * 2,
               [lambda u: -u[..., 1]], [z], target="SecondOrderWeak"),
    "P7": inst(2, ["abs(x1) - x2^2"], ["x1"], [lambda u: A(u[..., 0])], [lambda u: -2 * u[..., 1] ** 2],
               [c(0)], [z], target="SecondOrderWeak"),
    "P8": inst(3, ["x1 + x3", "-x1 - x2^2"], ["-x3"],
               [lambda u: u[..., 0] + u[..., 2], lambda u: -u[..., 0]], [z, lambda u: -2 * u[..., 1] ** 2],
               [lambda u: -u[..., 2]], [z], target="SecondOrderGeoffrion"),
    "P9": inst(2, ["x1", "-x1 - x2^2"], [], [c(0), lambda u: -u[..., 0]], [z, lambda u: -2 * u[..., 1] ** 2],
               target="SecondOrderGeoffrion"),
    "P10": inst(3, ["x3 - x1^2 - x2^2"], ["-x3", "x1 + x2 - 1"], [c(2)],
                [lambda u: -2 * (u[..., 0] ** 2 + u[..., 1] ** 2)],
                [lambda u: -u[..., 2], lambda u: u[..., 0] + u[..., 1]], [z, z], active=[0],
                target="SecondOrderWeak"),
}

TAU = 1e-9
RES = {2: 1e-2, 3: 5e-2}  # v-grid spacing
BOX = 2.0


def sphere_grid(n):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        k = int(round(2 * np.pi / 1e-2))
        th = np.linspace(0, 2 * np.pi, 4 * (k // 4), endpoint=False)
        U = np.stack([np.cos(th), np.sin(th)], 1)
    else:
        th = np.linspace(0, np.pi, 101)
        ph = np.linspace(0, 2 * np.pi, 200, endpoint=False)
        T, P = np.meshgrid(th, ph)
        U = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    U[np.abs(U) < 1e-12] = 0.0
    return np.unique(np.round(U, 15), axis=0)


def v_grid(n):
    if n == 1:
        return np.linspace(-BOX, BOX, 401)[:, None]
    h = RES[n]
    ax = np.round(np.arange(-BOX, BOX + h / 2, h), 12)
    return np.stack(np.meshgrid(*[ax] * n), -1).reshape(-1, n)


def excess(a1, a2):
    return np.where(a1 < -TAU, a1, np.where(a1 <= TAU, a2, a1))


def first_order(I, U, strong):
    F = np.stack([f(U) for f in I["fo_f"]], 1)
    G = np.stack([I["fo_g"][j](U) for j in I["active"]], 1) if I["active"] else np.zeros((len(U), 0))
    ok = (G <= TAU).all(1)
    if strong:
        ok &= (F <= TAU).all(1)
        m = (-F).max(1)
    else:
        m = (-F).min(1)
    m = np.where(ok, m, -np.inf)
    k = int(np.argmax(m))
    return float(m[k]), U[k].tolist(), None


def critical(I, U):
    F = np.stack([f(U) for f in I["fo_f"]], 1)
    G = np.stack([I["fo_g"][j](U) for j in I["active"]], 1) if I["active"] else np.zeros((len(U), 0))
    mask = (F <= TAU).all(1) & (np.abs(F) <= TAU).any(1) & (G <= TAU).all(1)
    return np.vstack([np.zeros((1, U.shape[1])), U[mask]])


def so_margins(I, u, V, geoffrion):
    """System margin at the fixed direction u for every v in V (-inf where infeasible)."""
    uu = u[None, :]
    Fp = [(float(I["fo_f"][i](uu)[0]), I["fo_f"][i](V) + float(I["so_f"][i](uu)[0])) for i in range(len(I["fo_f"]))]
    Gp = [(float(I["fo_g"][j](uu)[0]), I["fo_g"][j](V) + float(I["so_g"][j](uu)[0])) for j in I["active"]]
    Fe = np.stack([excess(a, b) * np.ones(len(V)) for a, b in Fp], 1)
    ok = np.ones(len(V), bool)
    for a, b in Gp:
        ok &= excess(a, b) <= TAU
    if geoffrion:
        Idir = [i for i, (a, _) in enumerate(Fp) if abs(a) <= TAU]
        if not Idir:
            return np.full(len(V), -np.inf)
        ok &= (Fe <= TAU).all(1)
        m = (-Fe[:, Idir]).max(1)
    else:
        m = (-Fe).min(1)
    return np.where(ok, m, -np.inf)


def second_order(I, U, V, geoffrion):
    best = (-np.inf, None, None)
    for u in critical(I, U):
        m = so_margins(I, u, V, geoffrion)
        k = int(np.argmax(m))
        if m[k] > best[0]:
            best = (float(m[k]), u.tolist(), V[k].tolist())
    return best


def main():
    out = {}
    for name, I in CORPUS.items():
        U, V = sphere_grid(I["n"]), v_grid(I["n"])
        res = {
            "FirstOrder": first_order(I, U, False),
            "StrongFirstOrder": first_order(I, U, True),
            "SecondOrderWeak": second_order(I, U, V, False),
            "SecondOrderGeoffrion": second_order(I, U, V, True),
        }
        out[name] = {
            "n": I["n"], "objectives": I["objectives"], "constraints": I["constraints"], "target": I["target"],
            "oracle": {k: {"exists": bool(m > 1e-6), "margin": m if np.isfinite(m) else None, "u": u, "v": v}
                       for k, (m, u, v) in res.items()},
        }
    print(json.dumps(out, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
