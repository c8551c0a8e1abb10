"""Energy measurement: sampled cumulative counters, markers, interval queries.

Two backends: the Linux powercap tree (RAPL package and DRAM zones) and a
deterministic piecewise-constant synthetic power model. A session samples
every domain at a fixed period while a body runs; the body receives a
``mark(label)`` callable for time-correlating phases with the trace.
"""
from __future__ import annotations

import json
import logging
import math
import os
import queue
import sys
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

POWERCAP_ROOT = "/sys/class/powercap"
DEFAULT_PERIOD_MS = 50.0
# 2**32 counts of 2**-14 J
DEFAULT_COUNTER_MAX_UJ = 262_144_000_000


class PowerDomain(str, Enum):
    PACKAGE = "package"
    DRAM = "dram"


class EnergyError(RuntimeError):
    pass


class EnergyBackendUnavailable(EnergyError):
    """The requested backend cannot be used on this machine."""


@dataclass(frozen=True)
class EnergySample:
    t_ns: int
    domain: PowerDomain
    cumulative_uj: int


@dataclass(frozen=True)
class Marker:
    t_ns: int
    label: str


@dataclass
class EnergyTrace:
    domains: list[PowerDomain]
    counter_max_uj: dict[PowerDomain, int]
    samples: list[EnergySample] = field(default_factory=list)
    markers: list[Marker] = field(default_factory=list)
    partial: bool = False
    flags: list[str] = field(default_factory=list)

    def series(self, domain: PowerDomain) -> tuple[np.ndarray, np.ndarray]:
        """Timestamps and wrap-corrected cumulative energy (uJ) for one domain."""
        domain = PowerDomain(domain)
        if domain not in self.domains:
            raise EnergyError(f"domain {domain.value} not in trace")
        pts = [(s.t_ns, s.cumulative_uj) for s in self.samples if s.domain == domain]
        t = np.array([p[0] for p in pts], dtype=np.int64)
        raw = [p[1] for p in pts]
        modulus = self.counter_max_uj[domain]
        unwrapped = []
        offset = 0
        for i, v in enumerate(raw):
            if i and v < raw[i - 1]:
                offset += modulus
            unwrapped.append(v + offset)
        return t, np.array(unwrapped, dtype=np.float64)

    def marker(self, label: str) -> Marker:
        for m in self.markers:
            if m.label == label:
                return m
        raise EnergyError(f"no marker {label!r} in trace")

    def span(self, start_label: str, stop_label: str) -> tuple[int, int]:
        return self.marker(start_label).t_ns, self.marker(stop_label).t_ns

    def to_json(self) -> str:
        return json.dumps({
            "domains": [d.value for d in self.domains],
            "counter_max_uj": {d.value: v for d, v in self.counter_max_uj.items()},
            "samples": [[s.t_ns, s.domain.value, s.cumulative_uj] for s in self.samples],
            "markers": [[m.t_ns, m.label] for m in self.markers],
            "partial": self.partial,
            "flags": self.flags,
        })

    @classmethod
    def from_json(cls, text: str) -> "EnergyTrace":
        d = json.loads(text)
        return cls(
            domains=[PowerDomain(x) for x in d["domains"]],
            counter_max_uj={PowerDomain(k): int(v) for k, v in d["counter_max_uj"].items()},
            samples=[EnergySample(int(t), PowerDomain(dom), int(uj)) for t, dom, uj in d["samples"]],
            markers=[Marker(int(t), label) for t, label in d["markers"]],
            partial=bool(d.get("partial", False)),
            flags=list(d.get("flags", [])),
        )


# -- clocks ---------------------------------------------------------------

class MonotonicClock:
    driven = False

    def now_ns(self) -> int:
        return time.monotonic_ns()


class ManualClock:
    """A clock that only moves when ``advance`` is called.

    Callbacks registered with ``every`` fire at each period boundary the
    clock crosses, with the clock set exactly to that boundary.
    """

    driven = True

    def __init__(self, start_ns: int = 0):
        self._t = int(start_ns)
        self._period = None
        self._next = None
        self._callback = None

    def now_ns(self) -> int:
        return self._t

    def every(self, period_ns: int, callback: Callable[[], None]) -> None:
        self._period = int(period_ns)
        self._next = self._t + self._period
        self._callback = callback

    def stop(self) -> None:
        self._period = self._next = self._callback = None

    def advance(self, ns: int) -> None:
        target = self._t + int(ns)
        while self._next is not None and self._next <= target:
            self._t = self._next
            self._next += self._period
            self._callback()
        self._t = target

    def advance_s(self, seconds: float) -> None:
        self.advance(round(seconds * 1e9))


# -- backends -------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticPowerModel:
    """Piecewise-constant power: segments of (duration_ns, package_w, dram_w).

    The last segment's power holds after the model's total duration.
    """

    segments: tuple[tuple[int, float, float], ...]
    counter_max_uj: int = DEFAULT_COUNTER_MAX_UJ

    def __post_init__(self):
        if not self.segments:
            raise EnergyError("synthetic model needs at least one segment")
        for dur, pw, dw in self.segments:
            if dur <= 0:
                raise EnergyError("segment durations must be positive")
            if pw < 0 or dw < 0:
                raise EnergyError("segment powers must be non-negative")
        if self.counter_max_uj < 1:
            raise EnergyError("counter_max_uj must be positive")

    @classmethod
    def constant(cls, package_w: float, dram_w: float = 0.0, counter_max_uj: int = DEFAULT_COUNTER_MAX_UJ):
        return cls(((10**9, float(package_w), float(dram_w)),), counter_max_uj)

    def energy_exact_uj(self, t_ns: int, domain: PowerDomain) -> Fraction:
        """Integral of power from 0 to t_ns, in microjoules, as an exact fraction."""
        idx = 1 if PowerDomain(domain) == PowerDomain.PACKAGE else 2
        total = Fraction(0)
        t0 = 0
        for seg in self.segments:
            dur, w = seg[0], Fraction(seg[idx])
            if t_ns <= t0 + dur:
                return total + w * (t_ns - t0) / 1000
            total += w * dur / 1000
            t0 += dur
        return total + Fraction(self.segments[-1][idx]) * (t_ns - t0) / 1000

    def counter_uj(self, t_ns: int, domain: PowerDomain) -> int:
        return math.floor(self.energy_exact_uj(t_ns, domain)) % self.counter_max_uj


class SyntheticBackend:
    kind = "synthetic"

    def __init__(self, model: SyntheticPowerModel, clock=None):
        self.model = model
        self.clock = clock if clock is not None else MonotonicClock()
        self._origin = self.clock.now_ns()
        self.flags: list[str] = []

    def domains(self) -> list[PowerDomain]:
        return [PowerDomain.PACKAGE, PowerDomain.DRAM]

    def counter_max(self, domain: PowerDomain) -> int:
        return self.model.counter_max_uj

    def now_ns(self) -> int:
        return self.clock.now_ns()

    def read(self) -> dict[PowerDomain, tuple[int, int]]:
        t = self.clock.now_ns()
        rel = t - self._origin
        return {d: (t, self.model.counter_uj(rel, d)) for d in self.domains()}


def _read_text(path: Path) -> str:
    with open(path) as fh:
        return fh.read().strip()


class RaplBackend:
    """Package and DRAM energy from ``<root>/intel-rapl:<n>[:<m>]/energy_uj``."""

    kind = "rapl"

    def __init__(self, root: str | os.PathLike = POWERCAP_ROOT, package: int = 0, clock=None):
        if not sys.platform.startswith("linux"):
            raise EnergyBackendUnavailable(f"RAPL powercap interface requires Linux (platform {sys.platform})")
        self.clock = clock if clock is not None else MonotonicClock()
        root = Path(root)
        pkg = root / f"intel-rapl:{package}"
        if not pkg.is_dir():
            raise EnergyBackendUnavailable(f"no RAPL package zone at {pkg}")
        self.flags: list[str] = []
        self._files: dict[PowerDomain, Path] = {PowerDomain.PACKAGE: pkg / "energy_uj"}
        self._max: dict[PowerDomain, int] = {}
        dram = None
        for sub in sorted(root.glob(f"intel-rapl:{package}:*")):
            try:
                if "dram" in _read_text(sub / "name").lower():
                    dram = sub
                    break
            except OSError:
                continue
        if dram is not None:
            self._files[PowerDomain.DRAM] = dram / "energy_uj"
        else:
            self.flags.append("dram:unavailable")
        for dom, path in self._files.items():
            try:
                int(_read_text(path))
                self._max[dom] = int(_read_text(path.parent / "max_energy_range_uj"))
            except PermissionError as exc:
                raise EnergyBackendUnavailable(f"{path} is not readable ({exc.strerror})") from exc
            except (OSError, ValueError) as exc:
                raise EnergyBackendUnavailable(f"cannot read {path}: {exc}") from exc

    def domains(self) -> list[PowerDomain]:
        return list(self._files)

    def counter_max(self, domain: PowerDomain) -> int:
        return self._max[PowerDomain(domain)]

    def now_ns(self) -> int:
        return self.clock.now_ns()

    def read(self) -> dict[PowerDomain, tuple[int, int]]:
        out = {}
        for dom, path in self._files.items():
            value = int(_read_text(path))
            out[dom] = (self.clock.now_ns(), value)
        return out


def open_backend(kind: str = "auto", model: SyntheticPowerModel | None = None, root=POWERCAP_ROOT, clock=None):
    """Open ``"rapl"``, ``"synthetic"`` or ``"auto"`` (RAPL, else synthetic with a fallback flag)."""
    kind = kind.lower()
    if kind == "rapl":
        return RaplBackend(root, clock=clock)
    if kind == "synthetic":
        return SyntheticBackend(model or SyntheticPowerModel.constant(100.0, 10.0), clock)
    if kind == "auto":
        try:
            return RaplBackend(root, clock=clock)
        except EnergyBackendUnavailable as exc:
            log.warning("RAPL unavailable (%s); using synthetic power model", exc)
            b = SyntheticBackend(model or SyntheticPowerModel.constant(100.0, 10.0), clock)
            b.flags.append("energy:synthetic-fallback")
            return b
    raise EnergyError(f"unknown backend kind {kind!r}")


# -- sessions -------------------------------------------------------------

class _Recorder:
    def __init__(self, backend):
        self.backend = backend
        self.domains = backend.domains()
        self.samples: list[EnergySample] = []
        self._last = {d: None for d in self.domains}
        self.markers: queue.SimpleQueue = queue.SimpleQueue()
        self.error: BaseException | None = None

    def sample(self) -> None:
        for dom, (t, uj) in self.backend.read().items():
            if dom not in self._last:
                continue
            last = self._last[dom]
            if last is not None and t <= last:
                continue
            self._last[dom] = t
            self.samples.append(EnergySample(t, dom, uj))

    def mark(self, label: str) -> None:
        self.markers.put(Marker(self.backend.now_ns(), str(label)))


def session_record(backend, period_ms: float, body: Callable[[Callable[[str], None]], object]) -> EnergyTrace:
    """Run ``body(mark)`` while sampling all domains every ``period_ms``.

    A sample is taken immediately before and after the body so the trace
    brackets it. With a ManualClock the body drives time and samples land
    exactly on period boundaries.
    """
    if not 1.0 <= period_ms <= 1000.0:
        raise EnergyError(f"sampling period must be in [1, 1000] ms, got {period_ms}")
    rec = _Recorder(backend)
    period_ns = int(round(period_ms * 1e6))
    clock = getattr(backend, "clock", None)
    partial = False

    rec.sample()
    if getattr(clock, "driven", False):
        clock.every(period_ns, rec.sample)
        try:
            body(rec.mark)
        finally:
            clock.stop()
    else:
        stop = threading.Event()

        def sampler():
            nonlocal partial
            nxt = time.monotonic_ns() + period_ns
            while not stop.wait(max(0.0, (nxt - time.monotonic_ns()) / 1e9)):
                try:
                    rec.sample()
                except Exception as exc:  # keep what we have, flag the trace
                    log.warning("energy sampler failed: %s", exc)
                    rec.error = exc
                    partial = True
                    return
                nxt += period_ns
                now = time.monotonic_ns()
                if nxt < now:
                    nxt = now + period_ns

        th = threading.Thread(target=sampler, name="energy-sampler", daemon=True)
        th.start()
        try:
            body(rec.mark)
        finally:
            stop.set()
            th.join()
    try:
        rec.sample()
    except Exception as exc:
        rec.error = exc
        partial = True

    markers = []
    while not rec.markers.empty():
        markers.append(rec.markers.get())
    markers.sort(key=lambda m: m.t_ns)
    samples = sorted(rec.samples, key=lambda s: (s.t_ns, s.domain.value))
    return EnergyTrace(
        domains=list(rec.domains),
        counter_max_uj={d: backend.counter_max(d) for d in rec.domains},
        samples=samples,
        markers=markers,
        partial=partial,
        flags=list(getattr(backend, "flags", [])),
    )


# -- queries --------------------------------------------------------------

def _domains_for(trace: EnergyTrace, domain) -> list[PowerDomain]:
    if domain is None or (isinstance(domain, str) and domain.lower() in ("sum", "total")):
        return list(trace.domains)
    return [PowerDomain(domain)]


def interval_energy(trace: EnergyTrace, t0_ns: int, t1_ns: int, domain=PowerDomain.PACKAGE) -> float:
    """Joules consumed in [t0, t1], with cumulative energy interpolated linearly between samples.

    ``domain=None`` (or "sum") adds all domains in the trace.
    """
    if not t0_ns < t1_ns:
        raise EnergyError(f"empty interval [{t0_ns}, {t1_ns}]")
    total = 0.0
    for dom in _domains_for(trace, domain):
        t, e = trace.series(dom)
        if len(t) < 2 or t0_ns < t[0] or t1_ns > t[-1]:
            raise EnergyError(f"interval [{t0_ns}, {t1_ns}] outside sampled range of {dom.value}")
        base = t[0]
        tt = (t - base).astype(np.float64)
        e0, e1 = np.interp([float(t0_ns - base), float(t1_ns - base)], tt, e)
        total += (e1 - e0) * 1e-6
    return float(total)


def average_power(trace: EnergyTrace, t0_ns: int, t1_ns: int, domain=PowerDomain.PACKAGE) -> float:
    return interval_energy(trace, t0_ns, t1_ns, domain) / ((t1_ns - t0_ns) * 1e-9)


def energy_to_solution(t_s: float, p_avg: float) -> float:
    if not t_s > 0:
        raise EnergyError("time-to-solution must be positive")
    if p_avg < 0:
        raise EnergyError("average power must be non-negative")
    return t_s * p_avg
