"""Pure numpy kernels with the same signatures and arithmetic order as ``_core``."""
import numpy as np

from ..layouts import LayoutIndexer, LayoutKind

_KINDS = {0: "AoS", 1: "SoA", 2: "CSoA", 3: "CAoSoA"}


def _indexer(lay, nx, ny, ny_pad, q, vl):
    kind = LayoutKind(_KINDS[lay], vl if lay >= 2 else 1)
    return LayoutIndexer(kind, nx, ny, q, ny_pad)


def propagate(src, lo, hi, dst, lay, nx, ny, ny_pad, q, vl, h, cx, cy, x0, x1):
    if x1 <= x0:
        return
    ix = _indexer(lay, nx, ny, ny_pad, q, vl)
    parts = [ix.to_logical(src)]
    if h:
        hix = _indexer(lay, h, ny, ny_pad, q, vl)
        parts = [hix.to_logical(lo), parts[0], hix.to_logical(hi)]
    ext = np.concatenate(parts, axis=0)  # column i holds x = i - h
    out = np.empty((x1 - x0, ny, q))
    for p in range(q):
        a = h + x0 - int(cx[p])
        out[:, :, p] = np.roll(ext[a : a + (x1 - x0), :, p], int(cy[p]), axis=1)
    ix.from_logical(dst, out, x0)


def collide_surrogate(buf, lay, nx, ny, ny_pad, q, vl, coeffs, x0, x1):
    if x1 <= x0:
        return
    ix = _indexer(lay, nx, ny, ny_pad, q, vl)
    v = ix.to_logical(buf, x0, x1)
    acc = np.full_like(v, coeffs[0])
    for c in coeffs[1:]:
        acc *= v
        acc += c
    ix.from_logical(buf, acc, x0)


def collide_bgk(buf, lay, nx, ny, ny_pad, q, vl, cx, cy, w, tau, a, b2, c2, x0, x1):
    if x1 <= x0:
        return
    ix = _indexer(lay, nx, ny, ny_pad, q, vl)
    f = ix.to_logical(buf, x0, x1)
    rho = f[:, :, 0].copy()
    jx = cx[0] * f[:, :, 0]
    jy = cy[0] * f[:, :, 0]
    for p in range(1, q):
        rho = rho + f[:, :, p]
        jx = jx + cx[p] * f[:, :, p]
        jy = jy + cy[p] * f[:, :, p]
    ux = jx / rho
    uy = jy / rho
    usq = ux * ux + uy * uy
    out = np.empty_like(f)
    for p in range(q):
        cu = cx[p] * ux + cy[p] * uy
        feq = w[p] * rho * (1.0 + cu * a + cu * cu * b2 - usq * c2)
        out[:, :, p] = f[:, :, p] - (f[:, :, p] - feq) / tau
    ix.from_logical(buf, out, x0)
