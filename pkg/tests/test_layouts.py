import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbenergy.field import field_checksum, init_field
from lbenergy.lattice import LatticeGeometry
from lbenergy.layouts import (
    ALL_LAYOUTS,
    LayoutError,
    LayoutKind,
    address,
    convert,
    make_indexer,
)


def test_parse_roundtrip():
    for text in ("AoS", "SoA", "CSoA(8)", "CAoSoA(4)"):
        assert str(LayoutKind.parse(text)) == text
    assert LayoutKind.parse("csoa").vl == 8
    with pytest.raises(LayoutError):
        LayoutKind.parse("AoSoA(8)")
    with pytest.raises(LayoutError):
        LayoutKind("CSoA", 0)


def test_aos_capacity_no_padding():
    assert make_indexer("AoS", LatticeGeometry(4, 4), 37).capacity == 592


def test_csoa_divisibility_rule():
    make_indexer("CSoA(8)", LatticeGeometry(4, 16), 9, pad=False)
    with pytest.raises(LayoutError):
        make_indexer("CSoA(8)", LatticeGeometry(4, 12), 9, pad=False)
    ix = make_indexer("CSoA(8)", LatticeGeometry(4, 12), 9)
    assert ix.ny_pad == 16 and ix.padded


def test_caosoa_capacity_and_alignment():
    ix = make_indexer("CAoSoA(4)", LatticeGeometry(2, 8), 9)
    assert ix.capacity == 144
    addrs = ix.all_addresses()
    # every run of lanes at fixed (x, r, p) starts at a multiple of vl
    assert all(int(a) % 4 == 0 for a in addrs.reshape(2, 4, 2, 9)[:, 0, :, :].ravel())


def test_hand_addresses():
    assert address(make_indexer("AoS", LatticeGeometry(4, 4), 37), (0, 3), 5) == 116
    assert address(make_indexer("SoA", LatticeGeometry(4, 4), 37), (0, 3), 5) == 83
    ix = make_indexer("CSoA(4)", LatticeGeometry(1, 8), 9)
    for p in range(9):
        assert address(ix, (0, 5), p) == p * 8 + 4 + 2


def test_address_range_checks():
    ix = make_indexer("SoA", LatticeGeometry(4, 4), 9)
    with pytest.raises(Exception):
        ix.address((4, 0), 0)
    with pytest.raises(Exception):
        ix.address((0, 0), 9)


layout_dims = st.tuples(
    st.sampled_from(ALL_LAYOUTS + ("CSoA(2)", "CAoSoA(4)", "CSoA(4)")),
    st.integers(1, 5),
    st.integers(1, 13),
    st.integers(1, 9),
)


@settings(max_examples=60, deadline=None)
@given(layout_dims)
def test_bijection_onto_capacity(dims):
    layout, nx, ny, q = dims
    ix = make_indexer(layout, LatticeGeometry(nx, ny), q)
    a = ix.all_addresses().ravel()
    assert len(np.unique(a)) == nx * ny * q
    assert a.min() >= 0 and a.max() < ix.capacity
    assert ix.capacity >= q * nx * ny
    # scalar and vectorized maps agree
    for x, y, p in [(0, 0, 0), (nx - 1, ny - 1, q - 1), (nx // 2, ny // 2, q // 2)]:
        assert ix.address((x, y), p) == ix.all_addresses()[x, y, p]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(["CSoA", "CAoSoA"]), st.sampled_from([2, 4, 8]), st.integers(1, 4), st.integers(1, 4),
       st.integers(1, 6))
def test_lane_locality_and_alignment(tag, vl, nx, h, q):
    ny = vl * h
    ix = make_indexer(f"{tag}({vl})", LatticeGeometry(nx, ny), q, pad=False)
    for x in range(nx):
        for r in range(h):
            for p in range(q):
                run = [ix.address((x, r + lane * h), p) for lane in range(vl)]
                assert run == list(range(run[0], run[0] + vl))
                assert run[0] % vl == 0


def test_convert_roundtrip_bitwise():
    g = LatticeGeometry(8, 8)
    f = init_field(g, 37, "AoS", ("random", 9))
    back = convert(convert(f, "SoA"), "AoS")
    assert np.array_equal(back.storage, f.storage)
    assert field_checksum(convert(f, "CAoSoA(8)")) == field_checksum(f)


def test_all_pairwise_conversions():
    g = LatticeGeometry(8, 8)
    ref = init_field(g, 37, "AoS", ("random", 4)).logical()
    fields = {lay: convert(init_field(g, 37, "AoS", ("random", 4)), lay) for lay in ALL_LAYOUTS}
    n = 0
    for a in ALL_LAYOUTS:
        for b in ALL_LAYOUTS:
            if a == b:
                continue
            assert np.array_equal(convert(fields[a], b).logical(), ref)
            n += 1
    assert n == 12


def test_padded_conversion_preserves_values():
    g = LatticeGeometry(3, 5)
    f = init_field(g, 9, "SoA", ("random", 2))
    c = convert(f, "CAoSoA(4)")
    assert c.indexer.ny_pad == 8
    assert np.array_equal(c.logical(), f.logical())
