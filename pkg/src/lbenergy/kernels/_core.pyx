# cython: language_level=3
"""Compiled propagate / collide kernels.

Every entry point works on interior columns [x0, x1) only and releases the
GIL, so a caller may run disjoint column ranges on separate threads. The
arithmetic per (site, pop) is fixed and matches the numpy fallback exactly;
the extension is built with -ffp-contract=off so no FMA contraction occurs.
"""
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cdef enum:
    AOS = 0
    SOA = 1
    CSOA = 2
    CAOSOA = 3
    BLOCK = 32


cdef inline Py_ssize_t _addr(int lay, Py_ssize_t x, Py_ssize_t y, Py_ssize_t p,
                             Py_ssize_t nxb, Py_ssize_t ny, Py_ssize_t ny_pad,
                             Py_ssize_t q, Py_ssize_t vl) noexcept nogil:
    cdef Py_ssize_t H, lane, r, k
    if lay == AOS:
        return (x * ny + y) * q + p
    if lay == SOA:
        return p * nxb * ny + x * ny + y
    H = ny_pad // vl
    lane = y // H
    r = y - lane * H
    k = x * H + r
    if lay == CSOA:
        return p * nxb * ny_pad + k * vl + lane
    return (k * q + p) * vl + lane


cdef inline double* _source(Py_ssize_t xs, Py_ssize_t nx, Py_ssize_t h,
                            double* src, double* lo, double* hi,
                            Py_ssize_t* xl, Py_ssize_t* nxb) noexcept nogil:
    if xs < 0:
        xl[0] = xs + h
        nxb[0] = h
        return lo
    if xs >= nx:
        xl[0] = xs - nx
        nxb[0] = h
        return hi
    xl[0] = xs
    nxb[0] = nx
    return src


cdef void _propagate(double* src, double* lo, double* hi, double* dst, int lay,
                     Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad, Py_ssize_t q,
                     Py_ssize_t vl, Py_ssize_t h, const long long* cx, const long long* cy,
                     Py_ssize_t x0, Py_ssize_t x1) noexcept nogil:
    cdef Py_ssize_t x, y, p, r, ys, dy, xl, nxb, H, rs, ds, ss, rlo, rhi
    cdef double* b
    cdef double** bases
    cdef Py_ssize_t* dys
    cdef Py_ssize_t* xls
    H = ny_pad // vl if vl > 0 else ny

    if lay == AOS:
        bases = <double**> malloc(q * sizeof(double*))
        dys = <Py_ssize_t*> malloc(q * sizeof(Py_ssize_t))
        for p in range(q):
            dys[p] = ((cy[p] % ny) + ny) % ny
        for x in range(x0, x1):
            for p in range(q):
                b = _source(x - cx[p], nx, h, src, lo, hi, &xl, &nxb)
                bases[p] = b + xl * ny * q
            for y in range(ny):
                for p in range(q):
                    ys = y - dys[p]
                    if ys < 0:
                        ys = ys + ny
                    dst[(x * ny + y) * q + p] = bases[p][ys * q + p]
        free(bases)
        free(dys)
        return

    if lay == SOA:
        for p in range(q):
            dy = ((cy[p] % ny) + ny) % ny
            for x in range(x0, x1):
                b = _source(x - cx[p], nx, h, src, lo, hi, &xl, &nxb)
                b = b + p * nxb * ny + xl * ny
                ds = p * nx * ny + x * ny
                # rows [dy, ny) come from [0, ny - dy); rows [0, dy) wrap around
                memcpy(&dst[ds + dy], b, (ny - dy) * sizeof(double))
                if dy:
                    memcpy(&dst[ds], b + ny - dy, dy * sizeof(double))
        return

    # clustered layouts: one vl-lane run per (x, r, p). Rows whose source row
    # rs = r - cy stays inside [0, H) keep their lanes and copy whole runs;
    # the few rows that wrap across lanes (or any padded lattice) go lane by lane.
    bases = <double**> malloc(q * sizeof(double*))
    xls = <Py_ssize_t*> malloc(2 * q * sizeof(Py_ssize_t))
    for x in range(x0, x1):
        for p in range(q):
            bases[p] = _source(x - cx[p], nx, h, src, lo, hi, &xls[p], &xls[q + p])
        if lay == CSOA:
            for p in range(q):
                b = bases[p]
                xl = xls[p]
                nxb = xls[q + p]
                ds = p * nx * ny_pad + x * H * vl
                ss = p * nxb * ny_pad + xl * H * vl
                rlo = cy[p] if cy[p] > 0 else 0
                rhi = H + cy[p] if cy[p] < 0 else H
                if ny == ny_pad and rlo < rhi:
                    memcpy(&dst[ds + rlo * vl], &b[ss + (rlo - cy[p]) * vl], (rhi - rlo) * vl * sizeof(double))
                else:
                    rlo = rhi = 0
                for r in range(H):
                    if r < rlo or r >= rhi:
                        _gather_run(dst + ds + r * vl, b, lay, xl, r, p, cy[p], nxb, ny, ny_pad, q, vl, H)
        else:
            for r in range(H):
                ds = ((x * H + r) * q) * vl
                for p in range(q):
                    b = bases[p]
                    xl = xls[p]
                    nxb = xls[q + p]
                    rs = r - cy[p]
                    if ny == ny_pad and rs >= 0 and rs < H:
                        _copy_run(dst + ds + p * vl, b + ((xl * H + rs) * q + p) * vl, vl)
                    else:
                        _gather_run(dst + ds + p * vl, b, lay, xl, r, p, cy[p], nxb, ny, ny_pad, q, vl, H)
    free(bases)
    free(xls)


cdef inline void _copy_run(double* out, const double* src, Py_ssize_t vl) noexcept nogil:
    cdef Py_ssize_t l
    if vl == 8:
        for l in range(8):
            out[l] = src[l]
    else:
        for l in range(vl):
            out[l] = src[l]


cdef inline void _gather_run(double* out, double* b, int lay, Py_ssize_t xl, Py_ssize_t r, Py_ssize_t p,
                             Py_ssize_t cyp, Py_ssize_t nxb, Py_ssize_t ny, Py_ssize_t ny_pad,
                             Py_ssize_t q, Py_ssize_t vl, Py_ssize_t H) noexcept nogil:
    # lanes l with y = l*H + r < ny, each fetched from its wrapped source row
    cdef Py_ssize_t l, y, ys
    for l in range(vl):
        y = l * H + r
        if y >= ny:
            return
        ys = (y - cyp) % ny
        if ys < 0:
            ys = ys + ny
        out[l] = b[_addr(lay, xl, ys, p, nxb, ny, ny_pad, q, vl)]


def propagate(double[::1] src, double[::1] lo, double[::1] hi, double[::1] dst, int lay,
              Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad, Py_ssize_t q, Py_ssize_t vl,
              Py_ssize_t h, long long[::1] cx, long long[::1] cy, Py_ssize_t x0, Py_ssize_t x1):
    """Pull-scheme gather: dst(x, y, p) = src(x - cx_p, y - cy_p, p), Y wrapped, X via halo slabs."""
    cdef double* plo = &lo[0] if lo.shape[0] else NULL
    cdef double* phi = &hi[0] if hi.shape[0] else NULL
    if x1 <= x0:
        return
    with nogil:
        _propagate(&src[0], plo, phi, &dst[0], lay, nx, ny, ny_pad, q, vl, h,
                   &cx[0], &cy[0], x0, x1)


cdef inline void _horner_span(double* v, Py_ssize_t n, const double* c, Py_ssize_t F) noexcept nogil:
    # acc = c0; acc = acc*v + c_j for j = 1..F. Full blocks run BLOCK independent
    # chains with a fixed trip count so the lane loop vectorizes and pipelines.
    cdef double acc[BLOCK]
    cdef double val[BLOCK]
    cdef double cj
    cdef Py_ssize_t i, j, l, m
    i = 0
    while i + BLOCK <= n:
        for l in range(BLOCK):
            val[l] = v[i + l]
            acc[l] = c[0]
        for j in range(1, F + 1):
            cj = c[j]
            for l in range(BLOCK):
                acc[l] = acc[l] * val[l] + cj
        for l in range(BLOCK):
            v[i + l] = acc[l]
        i = i + BLOCK
    m = n - i
    for l in range(m):
        val[l] = v[i + l]
        acc[l] = c[0]
    for j in range(1, F + 1):
        for l in range(m):
            acc[l] = acc[l] * val[l] + c[j]
    for l in range(m):
        v[i + l] = acc[l]


cdef void _surrogate(double* buf, int lay, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad,
                     Py_ssize_t q, Py_ssize_t vl, const double* c, Py_ssize_t F,
                     Py_ssize_t x0, Py_ssize_t x1) noexcept nogil:
    cdef Py_ssize_t p, k, l, r, H, nlanes
    if lay == AOS:
        _horner_span(buf + x0 * ny * q, (x1 - x0) * ny * q, c, F)
        return
    if lay == SOA:
        for p in range(q):
            _horner_span(buf + p * nx * ny + x0 * ny, (x1 - x0) * ny, c, F)
        return
    H = ny_pad // vl
    if ny == ny_pad:
        if lay == CSOA:
            for p in range(q):
                _horner_span(buf + p * nx * ny_pad + x0 * H * vl, (x1 - x0) * H * vl, c, F)
        else:
            _horner_span(buf + x0 * H * q * vl, (x1 - x0) * H * q * vl, c, F)
        return
    # padded: only lanes l with l*H + r < ny hold data; they are a prefix of each run
    for k in range(x0 * H, x1 * H):
        r = k % H
        nlanes = (ny - r + H - 1) // H
        if nlanes > vl:
            nlanes = vl
        for p in range(q):
            if lay == CSOA:
                _horner_span(buf + p * nx * ny_pad + k * vl, nlanes, c, F)
            else:
                _horner_span(buf + (k * q + p) * vl, nlanes, c, F)


def collide_surrogate(double[::1] buf, int lay, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad,
                      Py_ssize_t q, Py_ssize_t vl, double[::1] coeffs, Py_ssize_t x0, Py_ssize_t x1):
    """In-place Horner polynomial on every interior value of columns [x0, x1)."""
    cdef Py_ssize_t F = coeffs.shape[0] - 1
    if x1 <= x0:
        return
    with nogil:
        _surrogate(&buf[0], lay, nx, ny, ny_pad, q, vl, &coeffs[0], F, x0, x1)


cdef void _bgk(double* buf, int lay, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad,
               Py_ssize_t q, Py_ssize_t vl, const double* cx, const double* cy, const double* w,
               double tau, double a, double b2, double c2, Py_ssize_t x0, Py_ssize_t x1) noexcept nogil:
    cdef Py_ssize_t x, y, p
    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(q * sizeof(Py_ssize_t))
    cdef double* f = <double*> malloc(q * sizeof(double))
    cdef double rho, jx, jy, ux, uy, usq, cu, feq
    for x in range(x0, x1):
        for y in range(ny):
            for p in range(q):
                idx[p] = _addr(lay, x, y, p, nx, ny, ny_pad, q, vl)
                f[p] = buf[idx[p]]
            rho = f[0]
            jx = cx[0] * f[0]
            jy = cy[0] * f[0]
            for p in range(1, q):
                rho = rho + f[p]
                jx = jx + cx[p] * f[p]
                jy = jy + cy[p] * f[p]
            ux = jx / rho
            uy = jy / rho
            usq = ux * ux + uy * uy
            for p in range(q):
                cu = cx[p] * ux + cy[p] * uy
                feq = w[p] * rho * (1.0 + cu * a + cu * cu * b2 - usq * c2)
                buf[idx[p]] = f[p] - (f[p] - feq) / tau
    free(idx)
    free(f)


def collide_bgk(double[::1] buf, int lay, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t ny_pad,
                Py_ssize_t q, Py_ssize_t vl, double[::1] cx, double[::1] cy, double[::1] w,
                double tau, double a, double b2, double c2, Py_ssize_t x0, Py_ssize_t x1):
    """In-place single-relaxation-time collision on columns [x0, x1).

    a = 1/cs2, b2 = 1/(2 cs2^2), c2 = 1/(2 cs2).
    """
    if x1 <= x0:
        return
    with nogil:
        _bgk(&buf[0], lay, nx, ny, ny_pad, q, vl, &cx[0], &cy[0], &w[0], tau, a, b2, c2, x0, x1)
