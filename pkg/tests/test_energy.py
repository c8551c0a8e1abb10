import sys
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lbenergy.energy import (
    DEFAULT_COUNTER_MAX_UJ,
    EnergyBackendUnavailable,
    EnergyError,
    EnergyTrace,
    ManualClock,
    PowerDomain,
    RaplBackend,
    SyntheticBackend,
    SyntheticPowerModel,
    average_power,
    energy_to_solution,
    interval_energy,
    open_backend,
    session_record,
)
from lbenergy.validation import count_wraps, piecewise_model, synthetic_trace

PKG, DRAM = PowerDomain.PACKAGE, PowerDomain.DRAM
S = 10**9


def make_powercap(root, pkg_uj=1000, dram_uj=None, max_uj=262143328850):
    z = root / "intel-rapl:0"
    z.mkdir(parents=True)
    (z / "name").write_text("package-0\n")
    (z / "energy_uj").write_text(f"{pkg_uj}\n")
    (z / "max_energy_range_uj").write_text(f"{max_uj}\n")
    core = root / "intel-rapl:0:0"
    core.mkdir()
    (core / "name").write_text("core\n")
    (core / "energy_uj").write_text("5\n")
    (core / "max_energy_range_uj").write_text(f"{max_uj}\n")
    if dram_uj is not None:
        d = root / "intel-rapl:0:1"
        d.mkdir()
        (d / "name").write_text("dram\n")
        (d / "energy_uj").write_text(f"{dram_uj}\n")
        (d / "max_energy_range_uj").write_text("65712999613\n")
    return root


def test_synthetic_constant_delta():
    clock = ManualClock(0)
    b = SyntheticBackend(SyntheticPowerModel.constant(100.0), clock)
    clock.advance_s(3.0)
    a = b.read()[PKG][1]
    clock.advance_s(1.0)
    assert b.read()[PKG][1] - a == 100_000_000


def test_synthetic_wrap_decreases():
    m = SyntheticPowerModel.constant(1000.0)
    t_wrap = DEFAULT_COUNTER_MAX_UJ * 10**9 // (1000 * 10**6)
    assert m.counter_uj(t_wrap - 10**9, PKG) > m.counter_uj(t_wrap + 10**9, PKG)


def test_synthetic_model_validation():
    with pytest.raises(EnergyError):
        SyntheticPowerModel(((0, 1.0, 1.0),))
    with pytest.raises(EnergyError):
        SyntheticPowerModel(((10, -1.0, 1.0),))


def test_synthetic_holds_last_segment():
    m = piecewise_model()
    assert m.energy_exact_uj(5 * S, PKG) == 100_000_000 + 300_000_000 + 150_000_000


@pytest.mark.skipif(not sys.platform.startswith("linux"), reason="powercap is Linux only")
def test_rapl_fake_tree(tmp_path):
    root = make_powercap(tmp_path, pkg_uj=1234, dram_uj=99)
    b = RaplBackend(root)
    assert b.domains() == [PKG, DRAM]
    assert b.counter_max(PKG) == 262143328850
    assert b.counter_max(DRAM) == 65712999613
    r = b.read()
    assert r[PKG][1] == 1234 and r[DRAM][1] == 99
    assert b.flags == []


@pytest.mark.skipif(not sys.platform.startswith("linux"), reason="powercap is Linux only")
def test_rapl_without_dram_flags(tmp_path):
    b = RaplBackend(make_powercap(tmp_path))
    assert b.domains() == [PKG]
    assert "dram:unavailable" in b.flags


@pytest.mark.skipif(not sys.platform.startswith("linux"), reason="powercap is Linux only")
def test_rapl_session_reads_files(tmp_path):
    root = make_powercap(tmp_path, pkg_uj=10, dram_uj=0)
    b = RaplBackend(root)
    pkg_file = root / "intel-rapl:0" / "energy_uj"

    def body(mark):
        mark("a")
        pkg_file.write_text("5000010\n")
        time.sleep(0.03)
        mark("b")

    tr = session_record(b, 5.0, body)
    t, e = tr.series(PKG)
    assert e[0] == 10 and e[-1] == 5000010


def test_rapl_missing_root(tmp_path):
    with pytest.raises(EnergyBackendUnavailable):
        RaplBackend(tmp_path / "nope")


def test_rapl_non_linux(monkeypatch, tmp_path):
    monkeypatch.setattr(sys, "platform", "darwin")
    with pytest.raises(EnergyBackendUnavailable):
        RaplBackend(make_powercap(tmp_path))


def test_open_backend_auto_fallback(tmp_path):
    b = open_backend("auto", root=tmp_path / "none")
    assert b.kind == "synthetic"
    assert "energy:synthetic-fallback" in b.flags
    with pytest.raises(EnergyBackendUnavailable):
        open_backend("rapl", root=tmp_path / "none")
    with pytest.raises(EnergyError):
        open_backend("nvml")


def test_session_rate_real_clock():
    b = SyntheticBackend(SyntheticPowerModel.constant(50.0, 5.0))
    tr = session_record(b, 10.0, lambda mark: time.sleep(0.1))
    for dom in (PKG, DRAM):
        assert len(tr.series(dom)[0]) >= 9


def test_session_markers_ordered_and_bracketed():
    b = SyntheticBackend(SyntheticPowerModel.constant(50.0))

    def body(mark):
        mark("one")
        time.sleep(0.005)
        mark("two")

    tr = session_record(b, 1.0, body)
    assert [m.label for m in tr.markers] == ["one", "two"]
    assert tr.markers[0].t_ns <= tr.markers[1].t_ns
    t = tr.series(PKG)[0]
    assert t[0] <= tr.markers[0].t_ns and tr.markers[1].t_ns <= t[-1]


def test_marker_between_bracketing_samples():
    clock = ManualClock(0)
    b = SyntheticBackend(SyntheticPowerModel.constant(10.0), clock)

    def body(mark):
        clock.advance(25_000_000)
        mark("mid")
        clock.advance(25_000_000)

    tr = session_record(b, 10.0, body)
    t = list(tr.series(PKG)[0])
    m = tr.marker("mid").t_ns
    before = max(x for x in t if x <= m)
    after = min(x for x in t if x >= m)
    assert before <= m <= after and after - before <= 10_000_000


def test_session_period_bounds():
    b = SyntheticBackend(SyntheticPowerModel.constant(1.0))
    for bad in (0.5, 1001):
        with pytest.raises(EnergyError):
            session_record(b, bad, lambda mark: None)


def test_samples_equal_model_integral():
    m = piecewise_model()
    tr = synthetic_trace(m)
    for s in tr.samples:
        assert s.cumulative_uj == m.counter_uj(s.t_ns, s.domain)
    assert len([s for s in tr.samples if s.domain == PKG]) == 401


class FailingBackend(SyntheticBackend):
    def __init__(self, *a, fail_after=3, **kw):
        super().__init__(*a, **kw)
        self.n = 0
        self.fail_after = fail_after

    def read(self):
        self.n += 1
        if self.n > self.fail_after:
            raise OSError("counter vanished")
        return super().read()


def test_sampler_failure_flags_partial():
    b = FailingBackend(SyntheticPowerModel.constant(5.0))
    tr = session_record(b, 2.0, lambda mark: time.sleep(0.05))
    assert tr.partial
    assert len(tr.samples) >= 1


def test_interval_energy_examples():
    tr = synthetic_trace(piecewise_model())
    const = synthetic_trace(SyntheticPowerModel.constant(50.0), total_ns=2 * S)
    assert interval_energy(const, 0, 2 * S) == 100.0
    # 50 W for the last second of segment one plus 150 W for the first second of segment two
    assert interval_energy(tr, 1 * S, 3 * S) == pytest.approx(200.0, abs=1e-6)
    assert average_power(tr, 0, 4 * S) == pytest.approx(100.0, abs=1e-9)
    assert average_power(const, 0, 2 * S) == 50.0
    both = interval_energy(tr, 0, 4 * S, None)
    assert both == pytest.approx(interval_energy(tr, 0, 4 * S, PKG) + interval_energy(tr, 0, 4 * S, DRAM),
                                 rel=1e-12)
    assert interval_energy(tr, 0, 4 * S, "sum") == both


def test_interval_errors():
    tr = synthetic_trace(piecewise_model())
    with pytest.raises(EnergyError):
        interval_energy(tr, 2 * S, 2 * S)
    with pytest.raises(EnergyError):
        interval_energy(tr, 0, 5 * S)


def test_wrap_matches_unwrapped():
    plain = synthetic_trace(piecewise_model())
    wrapped = synthetic_trace(piecewise_model(30_000_000))
    assert count_wraps(wrapped, PKG) >= 10
    for dom in (PKG, DRAM):
        a = interval_energy(plain, 0, 4 * S, dom)
        b = interval_energy(wrapped, 0, 4 * S, dom)
        assert abs(a - b) <= 1e-6 * count_wraps(wrapped, dom) + 1e-12 * a


_ADDITIVITY_TRACE = synthetic_trace(piecewise_model(123_456_789))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 4 * S - 2), st.integers(1, 4 * S - 1), st.integers(1, 4 * S))
def test_additivity(a, b, c):
    t0, t1, t2 = sorted((a, b, c))
    if not (t0 < t1 < t2):
        return
    tr = _ADDITIVITY_TRACE
    whole = interval_energy(tr, t0, t2)
    parts = interval_energy(tr, t0, t1) + interval_energy(tr, t1, t2)
    assert parts == pytest.approx(whole, rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 500) .map(lambda k: k * 10**7), st.floats(0, 300), st.floats(0, 40)),
                min_size=1, max_size=4),
       st.integers(3_000_001, 10**9))
def test_wrap_correction_within_quantum(segments, cmax):
    # a 10 ms sample period at <= 300 W moves the counter by at most 3e6 uJ, so every wrap is observable
    m = SyntheticPowerModel(tuple(segments), cmax)
    total = sum(s[0] for s in segments)
    tr = synthetic_trace(m, total_ns=total, step_ns=10**7)
    for dom in (PKG, DRAM):
        exact = float(m.energy_exact_uj(total, dom)) * 1e-6
        got = interval_energy(tr, 0, total, dom)
        assert abs(got - exact) <= 1e-6 * (count_wraps(tr, dom) + 1)


def test_energy_to_solution():
    assert energy_to_solution(2.0, 100.0) == 200.0
    assert energy_to_solution(3.0, 0.0) == 0.0
    with pytest.raises(EnergyError):
        energy_to_solution(0.0, 1.0)
    tr = synthetic_trace(piecewise_model())
    p = average_power(tr, S // 2, 3 * S)
    assert energy_to_solution(2.5, p) == pytest.approx(interval_energy(tr, S // 2, 3 * S), rel=1e-3)


def test_trace_json_roundtrip():
    tr = synthetic_trace(piecewise_model(40_000_000), total_ns=S // 2)
    import json

    doc = json.loads(tr.to_json())
    assert set(doc) >= {"domains", "counter_max_uj", "samples", "markers"}
    back = EnergyTrace.from_json(tr.to_json())
    assert back.samples == tr.samples and back.markers == tr.markers
    assert back.counter_max_uj == tr.counter_max_uj


def test_wrap_corrected_deltas_nonnegative():
    tr = synthetic_trace(piecewise_model(7_000_000))
    for dom in (PKG, DRAM):
        _, e = tr.series(dom)
        assert all(b >= a for a, b in zip(e, e[1:]))
