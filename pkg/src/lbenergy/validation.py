"""Correctness suites run by ``lbenergy validate``.

Each suite returns a SuiteResult; none of them depends on timing except the
runtime bound of the cross-layout suite.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .energy import ManualClock, PowerDomain, SyntheticBackend, SyntheticPowerModel, interval_energy, session_record
from .field import field_checksum, init_field
from .harness import ExperimentConfig, propagate_bandwidth, run_experiment
from .kernels import reference
from .lattice import LatticeGeometry, build_velocity_set
from .layouts import ALL_LAYOUTS
from .workers import WorkerPool


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: list[str] = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.seconds:.2f} s)"


def _timed(fn):
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    return wrapper


def run_layout_steps(layout, seed, nx, ny, steps, vset, mode, pool=None, backend=None):
    g = LatticeGeometry.for_set(nx, ny, vset)
    f = init_field(g, vset.q, layout, ("random", seed))
    buf = kernels.StepBuffers.around(f)
    for _ in range(steps):
        kernels.step(buf, vset, mode, pool, backend)
    return buf.prv


def oracle_steps(seed, nx, ny, steps, vset, coeffs):
    g = LatticeGeometry.for_set(nx, ny, vset)
    f = init_field(g, vset.q, "AoS", ("random", seed)).logical().tolist()
    for _ in range(steps):
        f = reference.propagate(f, vset.vectors)
        f = reference.surrogate(f, coeffs)
    return f


@_timed
def cross_layout_suite(nx=32, ny=32, steps=10, fma=64, seeds=(1, 2, 3), time_limit_s=10.0) -> SuiteResult:
    res = SuiteResult("1 cross-layout equivalence", True)
    t0 = time.perf_counter()
    vset = build_velocity_set("D2Q37")
    for seed in seeds:
        params = kernels.SurrogateParams(fma, seed)
        expect = math.fsum(np.asarray(oracle_steps(seed, nx, ny, steps, vset, params.coeffs)).ravel().tolist())
        for layout in ALL_LAYOUTS:
            got = field_checksum(run_layout_steps(layout, seed, nx, ny, steps, vset, params))
            if got != expect:
                res.passed = False
                res.details.append(f"seed {seed} {layout}: checksum {got!r} != oracle {expect!r}")
    elapsed = time.perf_counter() - t0
    if elapsed >= time_limit_s:
        res.passed = False
        res.details.append(f"runtime {elapsed:.2f} s exceeds {time_limit_s} s")
    return res


@_timed
def translation_suite(n=16, t=7, start=(2, 3)) -> SuiteResult:
    """Every D2Q37 population carries one impulse; after t steps each sits at start + t*c (mod n)."""
    res = SuiteResult("2 propagate translation", True)
    vset = build_velocity_set("D2Q37")
    g = LatticeGeometry.for_set(n, n, vset)
    for layout in ALL_LAYOUTS:
        f = init_field(g, vset.q, layout, ("uniform", 0.0))
        for p in range(vset.q):
            f.write(start[0], start[1], p, float(p + 1))
        buf = kernels.StepBuffers.around(f)
        for _ in range(t):
            kernels.step(buf, vset, None)
        lg = buf.prv.logical()
        for p, (cx, cy) in enumerate(vset.vectors):
            x, y = (start[0] + t * cx) % n, (start[1] + t * cy) % n
            nz = np.argwhere(lg[:, :, p] != 0.0)
            if lg[x, y, p] != p + 1 or len(nz) != 1:
                res.passed = False
                res.details.append(f"{layout} pop {p} c=({cx},{cy}): expected impulse at ({x},{y})")
    return res


def global_moments(f, vset):
    lg = f.logical()
    mass = math.fsum(lg.ravel().tolist())
    cx = np.asarray(vset.cx, dtype=float)
    cy = np.asarray(vset.cy, dtype=float)
    jx = math.fsum((lg * cx).ravel().tolist())
    jy = math.fsum((lg * cy).ravel().tolist())
    return mass, jx, jy


@_timed
def bgk_suite(n=64, tau=0.8, steps=200, seed=11) -> SuiteResult:
    res = SuiteResult("3 BGK conservation", True)
    vset = build_velocity_set("D2Q9")
    params = kernels.BgkParams(tau)
    g = LatticeGeometry.for_set(n, n, vset)
    f = init_field(g, vset.q, "AoS", ("random", seed))
    m0, jx0, jy0 = global_moments(f, vset)
    buf = kernels.StepBuffers.around(f)
    for _ in range(steps):
        kernels.step(buf, vset, params)
    m1, jx1, jy1 = global_moments(buf.prv, vset)
    mass_drift = abs(m1 - m0) / abs(m0)
    mom_drift = max(abs(jx1 - jx0), abs(jy1 - jy0)) / abs(m0)
    res.details.append(f"mass drift {mass_drift:.3e}, momentum drift per unit mass {mom_drift:.3e}")
    if not (mass_drift <= 1e-10 and mom_drift <= 1e-10):
        res.passed = False
    # equilibrium at rest is a fixed point
    eq = init_field(g, vset.q, "AoS", ("uniform", 0.0))
    eq.load_logical(np.broadcast_to(np.asarray(vset.weights), (n, n, vset.q)))
    before = eq.logical()
    kernels.collide_bgk(eq, vset, params)
    dev = float(np.abs(eq.logical() - before).max())
    res.details.append(f"equilibrium deviation {dev:.3e}")
    if dev > 1e-15:
        res.passed = False
    return res


def piecewise_model(counter_max_uj=None) -> SyntheticPowerModel:
    segs = ((2 * 10**9, 50.0, 5.0), (2 * 10**9, 150.0, 10.0))
    return SyntheticPowerModel(segs) if counter_max_uj is None else SyntheticPowerModel(segs, counter_max_uj)


def synthetic_trace(model: SyntheticPowerModel, total_ns: int = 4 * 10**9, period_ms: float = 10.0, step_ns=10**6):
    clock = ManualClock(0)
    backend = SyntheticBackend(model, clock)

    def body(mark):
        mark("start")
        for _ in range(total_ns // step_ns):
            clock.advance(step_ns)
        mark("stop")

    return session_record(backend, period_ms, body)


# (domain, expected joules over [0, 4 s], counter modulus that forces exactly one wrap)
ENERGY_CASES = (
    (PowerDomain.PACKAGE, 400.0, 300_000_000),
    (PowerDomain.DRAM, 30.0, 20_000_000),
)


def count_wraps(trace, dom) -> int:
    vals = [s.cumulative_uj for s in trace.samples if s.domain == dom]
    return sum(1 for a, b in zip(vals, vals[1:]) if b < a)


@_timed
def energy_suite() -> SuiteResult:
    res = SuiteResult("4 energy integration oracle", True)
    for dom, joules, cmax in ENERGY_CASES:
        for cm in (None, cmax):
            trace = synthetic_trace(piecewise_model(cm))
            wraps = count_wraps(trace, dom)
            got = interval_energy(trace, 0, 4 * 10**9, dom)
            ok = abs(got - joules) <= 1e-6 * wraps + 1e-12 * joules
            if cm is not None and wraps != 1:
                ok = False
            res.details.append(f"{dom.value} modulus={cm}: {got!r} J (expect {joules}, wraps {wraps})")
            res.passed &= ok
    return res


@_timed
def metrics_suite() -> SuiteResult:
    res = SuiteResult("5 metric identities", True)
    bw = propagate_bandwidth(37, 10**6, 100, 1e9)
    res.details.append(f"bandwidth hand value {bw!r} GB/s")
    res.passed &= abs(bw - 59.2) <= 1e-9 * 59.2
    for mode in ("surrogate(16)", "bgk(0.8)", "none"):
        q_model = "D2Q9" if mode.startswith("bgk") else "D2Q37"
        cfg = ExperimentConfig(nx=16, ny=16, q_model=q_model, layout="CSoA(8)", threads=1, collide_mode=mode,
                               iterations=5, warmup_iterations=1, repetitions=3, backend="synthetic",
                               sampler_period_ms=5.0, pin=False)
        rec = run_experiment(cfg)
        problems = check_record_identities(rec)
        res.details.extend(f"{mode}: {p}" for p in problems)
        res.passed &= not problems
    return res


def check_record_identities(rec: dict) -> list[str]:
    """Empty list when every per-kernel metric identity holds for the record."""
    problems = []
    cfg = rec["config"]
    sites = cfg["nx"] * cfg["ny"]
    iters = cfg["iterations"]
    for k, m in rec["kernels"].items():
        wall_ns = m["wall_ns_total"]
        e_s = m["e_s_joules"]
        prod = wall_ns * 1e-9 * m["p_avg_w_sum"]
        if abs(e_s - prod) > 1e-9 * abs(e_s):
            problems.append(f"{k}: e_s {e_s!r} != wall*p_avg {prod!r}")
        if round(m["ns_per_site"] * sites * iters) != wall_ns:
            problems.append(f"{k}: ns_per_site*sites*iterations != wall_ns")
        if abs(m["e_s_per_site_j"] * sites * iters - e_s) > 1e-9 * abs(e_s):
            problems.append(f"{k}: per-site energy does not renormalize")
        if abs(m["p_avg_w_sum"] - math.fsum(m["p_avg_w"].values())) > 1e-12 * max(1.0, m["p_avg_w_sum"]):
            problems.append(f"{k}: summed power != sum of domains")
        if k == "propagate":
            bw = propagate_bandwidth(rec["q"], sites, iters, wall_ns)
            if m["bandwidth_gbs"] != bw:
                problems.append(f"{k}: bandwidth mismatch")
    return problems


@_timed
def thread_suite(n=24, steps=3, threads=(1, 2, 4)) -> SuiteResult:
    res = SuiteResult("7 thread-count determinism", True)
    cases = [
        ("D2Q37", kernels.SurrogateParams(16, 5)),
        ("D2Q9", kernels.BgkParams(0.8)),
    ]
    for model, mode in cases:
        vset = build_velocity_set(model)
        for layout in ALL_LAYOUTS:
            sums = set()
            for th in threads:
                with WorkerPool(th, pin=False) as pool:
                    f = run_layout_steps(layout, 3, n, n, steps, vset, mode, pool)
                sums.add(field_checksum(f))
            if len(sums) != 1:
                res.passed = False
                res.details.append(f"{model} {layout}: checksums differ across threads {threads}")
    return res


SUITES = {
    "1": cross_layout_suite,
    "2": translation_suite,
    "3": bgk_suite,
    "4": energy_suite,
    "5": metrics_suite,
    "7": thread_suite,
}


def run_all(selected=None) -> list[SuiteResult]:
    return [fn() for key, fn in SUITES.items() if selected is None or key in selected]
