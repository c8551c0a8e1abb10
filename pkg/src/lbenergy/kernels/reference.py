"""Scalar reference kernels on logical (x, y, pop) data.

Plain Python loops with modular index wrapping and no halo; these are the
oracles the layout-aware kernels are checked against.
"""
from __future__ import annotations


def to_nested(arr) -> list:
    return arr.tolist()


def propagate(f: list, vectors) -> list:
    nx, ny, q = len(f), len(f[0]), len(f[0][0])
    out = [[[0.0] * q for _ in range(ny)] for _ in range(nx)]
    for x in range(nx):
        for y in range(ny):
            site = out[x][y]
            for p, (cx, cy) in enumerate(vectors):
                site[p] = f[(x - cx) % nx][(y - cy) % ny][p]
    return out


class FlopCounter:
    def __init__(self):
        self.mul_add_pairs = 0


def surrogate(f: list, coeffs, counter: FlopCounter | None = None) -> list:
    c0, rest = coeffs[0], coeffs[1:]
    out = []
    for col in f:
        ocol = []
        for site in col:
            osite = []
            for v in site:
                acc = c0
                for c in rest:
                    acc = acc * v + c
                osite.append(acc)
            ocol.append(osite)
        out.append(ocol)
    if counter is not None:
        counter.mul_add_pairs += len(rest) * sum(len(s) for col in f for s in col)
    return out


def bgk(f: list, vectors, weights, cs2: float, tau: float) -> list:
    """Single-relaxation-time collision with the second-order equilibrium."""
    out = []
    for col in f:
        ocol = []
        for site in col:
            rho = 0.0
            jx = 0.0
            jy = 0.0
            for (cx, cy), v in zip(vectors, site):
                rho += v
                jx += cx * v
                jy += cy * v
            ux, uy = jx / rho, jy / rho
            usq = ux * ux + uy * uy
            new = []
            for (cx, cy), w, v in zip(vectors, weights, site):
                cu = cx * ux + cy * uy
                feq = w * rho * (1.0 + cu / cs2 + cu * cu / (2.0 * cs2 * cs2) - usq / (2.0 * cs2))
                new.append(v - (v - feq) / tau)
            ocol.append(new)
        out.append(ocol)
    return out
