import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbenergy import kernels
from lbenergy.field import field_checksum, init_field, population_sums
from lbenergy.kernels import reference
from lbenergy.lattice import LatticeError, LatticeGeometry
from lbenergy.layouts import ALL_LAYOUTS, convert
from lbenergy.workers import WorkerPool

LAYOUTS_EXTRA = ALL_LAYOUTS + ("CSoA(4)", "CAoSoA(2)")


def fresh(vset, layout, nx=8, ny=8, seed=1):
    return init_field(LatticeGeometry.for_set(nx, ny, vset), vset.q, layout, ("random", seed))


def propagate_once(f, vset, backend=None):
    nxt = f.zeros_like()
    kernels.halo_exchange(f)
    kernels.propagate(f, nxt, vset, backend=backend)
    return nxt


def test_backends_listed():
    assert "python" in kernels.available_backends()
    assert kernels.BACKEND in kernels.available_backends()


def test_partition_covers():
    assert kernels.partition(10, 3) == [(0, 3), (3, 6), (6, 10)]
    assert kernels.partition(2, 4) == [(0, 0), (0, 1), (1, 1), (1, 2)]


# -- propagate ------------------------------------------------------------

def test_single_translation(d2q37, backend):
    p = d2q37.vectors.index((1, 0))
    f = init_field(LatticeGeometry.for_set(8, 8, d2q37), 37, "CSoA(8)", ("impulse", (2, 3), p, 4.0))
    out = propagate_once(f, d2q37, backend)
    assert out.read(3, 3, p) == 4.0
    assert field_checksum(out) == 4.0


@pytest.mark.parametrize("layout", LAYOUTS_EXTRA)
@pytest.mark.parametrize("shape", [(8, 8), (8, 12), (5, 16), (3, 7)])
def test_propagate_matches_oracle(d2q37, backend, layout, shape):
    f = fresh(d2q37, layout, *shape)
    expect = reference.propagate(f.logical().tolist(), d2q37.vectors)
    before = f.storage.copy()
    out = propagate_once(f, d2q37, backend)
    assert np.array_equal(out.logical(), np.asarray(expect))
    assert np.array_equal(f.storage, before)  # prv untouched


def test_propagate_is_permutation(d2q37):
    f = fresh(d2q37, "CAoSoA(8)", 8, 16, seed=5)
    out = propagate_once(f, d2q37)
    a, b = f.logical(), out.logical()
    for p in range(37):
        assert np.array_equal(np.sort(a[:, :, p].ravel()), np.sort(b[:, :, p].ravel()))
    assert population_sums(out) == population_sums(f)


def test_propagate_errors(d2q37, d2q9):
    f = fresh(d2q37, "AoS")
    with pytest.raises(LatticeError):
        kernels.propagate(f, f, d2q37)
    with pytest.raises(LatticeError):
        kernels.propagate(f, fresh(d2q37, "SoA").zeros_like(), d2q37)
    with pytest.raises(LatticeError):
        kernels.propagate(f, f.zeros_like(), d2q9)


def test_halo_exchange():
    g = LatticeGeometry(4, 4, halo=3)
    f = init_field(g, 9, "SoA", ("random", 2))
    kernels.halo_exchange(f)
    lo, hi = f.halo_logical()
    lg = f.logical()
    # halo column j of lo is x = j - 3, i.e. interior column (j - 3) mod 4
    assert np.array_equal(lo[2], lg[3])
    assert np.array_equal(lo[0], lg[1])
    assert np.array_equal(hi[0], lg[0])
    snap = (f.halo_lo.copy(), f.halo_hi.copy())
    kernels.halo_exchange(f)
    assert np.array_equal(snap[0], f.halo_lo) and np.array_equal(snap[1], f.halo_hi)


def test_edge_impulse_wraps(d2q37):
    p = d2q37.vectors.index((-3, -1))
    f = init_field(LatticeGeometry.for_set(6, 8, d2q37), 37, "CAoSoA(4)", ("impulse", (1, 0), p, 1.5))
    out = propagate_once(f, d2q37)
    assert out.read(4, 7, p) == 1.5


# -- surrogate ------------------------------------------------------------

def test_surrogate_identity(backend):
    f = init_field(LatticeGeometry(4, 8), 9, "CSoA(4)", ("random", 3))
    before = f.logical()
    kernels.collide_surrogate(f, kernels.SurrogateParams.explicit([1.0, 0.0]), backend=backend)
    assert np.array_equal(f.logical(), before)


def test_surrogate_affine(backend):
    f = init_field(LatticeGeometry(4, 4), 9, "SoA", ("random", 3))
    before = f.logical()
    kernels.collide_surrogate(f, kernels.SurrogateParams.explicit([0.5, 0.25]), backend=backend)
    assert np.array_equal(f.logical(), before * 0.5 + 0.25)


def test_surrogate_at_zero_hand_value(backend):
    # F=3 at f=0: Horner gives ((c0*0 + c1)*0 + c2)*0 + c3 = c3
    f = init_field(LatticeGeometry(2, 2), 3, "AoS", ("uniform", 0.0))
    kernels.collide_surrogate(f, kernels.SurrogateParams.explicit([0.3, -0.2, 0.1, 0.7]), backend=backend)
    assert np.all(f.logical() == 0.7)
    # at f=1: ((0.3 - 0.2) + 0.1) + 0.7 evaluated left to right
    g = init_field(LatticeGeometry(2, 2), 3, "AoS", ("uniform", 1.0))
    kernels.collide_surrogate(g, kernels.SurrogateParams.explicit([0.3, -0.2, 0.1, 0.7]), backend=backend)
    assert np.all(g.logical() == ((0.3 * 1.0 - 0.2) * 1.0 + 0.1) * 1.0 + 0.7)


@pytest.mark.parametrize("layout", LAYOUTS_EXTRA)
def test_surrogate_matches_oracle(d2q37, backend, layout):
    params = kernels.SurrogateParams(64, 2)
    f = fresh(d2q37, layout, 4, 12, seed=6)
    expect = np.asarray(reference.surrogate(f.logical().tolist(), params.coeffs))
    kernels.collide_surrogate(f, params, backend=backend)
    assert np.array_equal(f.logical(), expect)


def test_surrogate_leaves_padding_alone():
    f = init_field(LatticeGeometry(2, 5), 9, "CSoA(4)", ("uniform", 0.5))
    f.storage[:] = np.nan
    f.load_logical(np.full((2, 5, 9), 0.5))
    kernels.collide_surrogate(f, kernels.SurrogateParams(8, 1))
    assert np.isfinite(f.logical()).all()


def test_surrogate_flop_count():
    counter = reference.FlopCounter()
    f = np.random.default_rng(0).random((3, 4, 5)).tolist()
    reference.surrogate(f, kernels.SurrogateParams(17, 0).coeffs, counter)
    assert counter.mul_add_pairs == 5 * 12 * 17


def test_surrogate_params():
    p = kernels.SurrogateParams()
    assert p.fma_per_pop == 90 and len(p.coeffs) == 91
    assert sum(abs(c) for c in p.coeffs) == pytest.approx(0.999)
    assert kernels.SurrogateParams(90, 0) == p
    with pytest.raises(LatticeError):
        kernels.SurrogateParams(0)
    with pytest.raises(LatticeError):
        kernels.SurrogateParams(3, 0, (1.0, 2.0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5), st.integers(1, 40), st.integers(0, 1000))
def test_surrogate_stays_in_unit_interval(values, fma, seed):
    f = init_field(LatticeGeometry(1, 5), 1, "AoS", ("uniform", 0.0))
    f.load_logical(np.asarray(values).reshape(1, 5, 1))
    p = kernels.SurrogateParams(fma, seed)
    for _ in range(3):
        kernels.collide_surrogate(f, p)
    assert np.all(np.abs(f.logical()) <= 1.0)


# -- BGK ------------------------------------------------------------------

def test_bgk_equilibrium_fixed_point(d2q9, backend):
    f = init_field(LatticeGeometry.for_set(4, 8, d2q9), 9, "CAoSoA(4)", ("uniform", 0.0))
    f.load_logical(np.broadcast_to(np.asarray(d2q9.weights), (4, 8, 9)))
    before = f.logical()
    kernels.collide_bgk(f, d2q9, kernels.BgkParams(0.8), backend=backend)
    assert np.abs(f.logical() - before).max() <= 1e-15


@pytest.mark.parametrize("layout", LAYOUTS_EXTRA)
def test_bgk_matches_oracle(d2q9, backend, layout):
    f = fresh(d2q9, layout, 8, 8, seed=12)
    expect = np.asarray(reference.bgk(f.logical().tolist(), d2q9.vectors, d2q9.weights,
                                      d2q9.speed_of_sound_sq, 0.8))
    kernels.collide_bgk(f, d2q9, kernels.BgkParams(0.8), backend=backend)
    got = f.logical()
    # normwise: elementwise relative error is inflated on small outputs by cancellation
    assert np.max(np.abs(got - expect)) / np.max(np.abs(expect)) <= 1e-14


def test_bgk_local_conservation(d2q9):
    f = fresh(d2q9, "SoA", 8, 8, seed=4)
    lg0 = f.logical()
    kernels.collide_bgk(f, d2q9, kernels.BgkParams(0.7))
    lg1 = f.logical()
    c = np.asarray(d2q9.vectors, dtype=float)
    for a, b in ((lg0, lg1),):
        rho0, rho1 = a.sum(-1), b.sum(-1)
        assert np.allclose(rho0, rho1, rtol=1e-12, atol=0)
        assert np.allclose(a @ c, b @ c, rtol=1e-12, atol=1e-14)


def test_bgk_errors(d2q37, d2q9):
    with pytest.raises(LatticeError):
        kernels.BgkParams(0.5)
    with pytest.raises(LatticeError):
        kernels.collide_bgk(fresh(d2q37, "AoS"), d2q37, kernels.BgkParams(0.8))
    with pytest.raises(LatticeError):
        kernels.collide_bgk(fresh(d2q37, "AoS"), d2q9, kernels.BgkParams(0.8))


# -- step / cross-backend / threads ----------------------------------------

def test_step_pure_translation(d2q37):
    g = LatticeGeometry.for_set(16, 16, d2q37)
    f = init_field(g, 37, "SoA", ("uniform", 0.0))
    for p in range(37):
        f.write(5, 5, p, 1.0 + p)
    buf = kernels.StepBuffers.around(f)
    for _ in range(4):
        kernels.step(buf, d2q37, None)
    for p, (cx, cy) in enumerate(d2q37.vectors):
        assert buf.prv.read((5 + 4 * cx) % 16, (5 + 4 * cy) % 16, p) == 1.0 + p


def test_step_aos_vs_caosoa(d2q37):
    params = kernels.SurrogateParams(16, 3)
    sums = []
    for layout in ("AoS", "CAoSoA(8)"):
        buf = kernels.StepBuffers.around(fresh(d2q37, layout, 16, 16, seed=8))
        for _ in range(5):
            kernels.step(buf, d2q37, params)
        sums.append(field_checksum(buf.prv))
    assert sums[0] == sums[1]


def test_step_bgk_mass(d2q9):
    buf = kernels.StepBuffers.around(fresh(d2q9, "CSoA(8)", 16, 16, seed=2))
    m0 = field_checksum(buf.prv)
    for _ in range(100):
        kernels.step(buf, d2q9, kernels.BgkParams(0.9))
    assert abs(field_checksum(buf.prv) - m0) <= 1e-10 * m0


@pytest.mark.skipif(len(kernels.available_backends()) < 2, reason="compiled extension not built")
@pytest.mark.parametrize("layout", ALL_LAYOUTS)
def test_backends_bit_identical(d2q9, d2q37, layout):
    out = {}
    for b in ("compiled", "python"):
        buf = kernels.StepBuffers.around(fresh(d2q37, layout, 8, 12, seed=3))
        for _ in range(3):
            kernels.step(buf, d2q37, kernels.SurrogateParams(12, 4), backend=b)
        bgk = fresh(d2q9, layout, 8, 12, seed=3)
        kernels.collide_bgk(bgk, d2q9, kernels.BgkParams(0.8), backend=b)
        out[b] = (buf.prv.logical(), bgk.logical())
    assert np.array_equal(out["compiled"][0], out["python"][0])
    assert np.array_equal(out["compiled"][1], out["python"][1])


@pytest.mark.parametrize("threads", [1, 2, 3, 4])
def test_thread_invariance(d2q37, threads):
    def run(pool):
        buf = kernels.StepBuffers.around(fresh(d2q37, "CSoA(8)", 7, 8, seed=9))
        for _ in range(2):
            kernels.step(buf, d2q37, kernels.SurrogateParams(8, 1), pool)
        return buf.prv.logical()

    with WorkerPool(threads, pin=False) as pool:
        assert np.array_equal(run(pool), run(None))


def test_convert_then_step_consistent(d2q37):
    a = fresh(d2q37, "AoS", 8, 8, seed=1)
    b = convert(a, "CSoA(8)")
    ba, bb = kernels.StepBuffers.around(a), kernels.StepBuffers.around(b)
    kernels.step(ba, d2q37, None)
    kernels.step(bb, d2q37, None)
    assert np.array_equal(ba.prv.logical(), bb.prv.logical())


def test_fallback_selected_at_import():
    import os
    import subprocess
    import sys

    env = dict(os.environ, LBENERGY_KERNELS="python")
    r = subprocess.run([sys.executable, "-c", "from lbenergy import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env, timeout=60)
    assert r.stdout.strip() == "python"


def test_get_impl_unknown():
    with pytest.raises(ValueError):
        kernels.get_impl("fortran")
