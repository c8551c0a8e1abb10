"""Experiment runner: configs, timed per-kernel phases, normalized metrics, sweeps."""
from __future__ import annotations

import dataclasses
import datetime as _dt
import itertools
import json
import logging
import os
import platform
import re
import statistics
from dataclasses import dataclass, field

from . import kernels
from .energy import (
    DEFAULT_PERIOD_MS,
    EnergyError,
    SyntheticPowerModel,
    average_power,
    energy_to_solution,
    open_backend,
    session_record,
)
from .field import PopulationField, field_checksum, init_field
from .lattice import LatticeError, LatticeGeometry, build_velocity_set
from .layouts import LayoutKind, make_indexer
from .memory import MemoryTarget, bound_allocations, check_target, numa_nodes
from .workers import WorkerPool, available_cpus

log = logging.getLogger(__name__)

KERNELS = ("propagate", "collide")


class ConfigError(ValueError):
    pass


_MODE_RE = re.compile(r"^\s*(none|bgk|surrogate)\s*(?:\(\s*([0-9.eE+-]+)\s*\))?\s*$", re.IGNORECASE)


def parse_collide_mode(text: str, seed: int = 0):
    """``"none"``, ``"bgk(0.8)"`` or ``"surrogate(90)"`` -> None / BgkParams / SurrogateParams."""
    m = _MODE_RE.match(str(text))
    if not m:
        raise ConfigError(f"cannot parse collide mode {text!r}")
    kind, arg = m.group(1).lower(), m.group(2)
    if kind == "none":
        return None
    if kind == "bgk":
        return kernels.BgkParams(float(arg) if arg else 0.8)
    return kernels.SurrogateParams(int(arg) if arg else 90, seed)


@dataclass
class ExperimentConfig:
    nx: int = 256
    ny: int = 256
    q_model: str = "D2Q37"
    layout: str = "AoS"
    threads: int = 1
    memory_target: str = "default"
    collide_mode: str = "surrogate(90)"
    iterations: int = 10
    warmup_iterations: int = 1
    repetitions: int = 3
    sampler_period_ms: float = DEFAULT_PERIOD_MS
    backend: str = "auto"
    seed: int = 1
    pad: bool = True
    pin: bool = True
    kernel_backend: str = "auto"
    synthetic_package_w: float = 100.0
    synthetic_dram_w: float = 10.0
    memory_mode: str = "unspecified"

    def __post_init__(self):
        self.layout = str(LayoutKind.parse(self.layout))
        self.memory_target = str(MemoryTarget.parse(self.memory_target))

    def validate(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("nx and ny must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.warmup_iterations < 0:
            raise ConfigError("warmup_iterations must be >= 0")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.kernel_backend not in ("auto", "compiled", "python"):
            raise ConfigError(f"unknown kernel backend {self.kernel_backend!r}")
        vset = build_velocity_set(self.q_model)
        mode = parse_collide_mode(self.collide_mode, self.seed)
        if isinstance(mode, kernels.BgkParams) and vset.weights is None:
            raise ConfigError(f"BGK collision needs a weighted velocity set, {self.q_model} has none")
        make_indexer(self.layout, LatticeGeometry(self.nx, self.ny, vset.reach), vset.q, pad=self.pad)

    @property
    def sites(self) -> int:
        return self.nx * self.ny

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def propagate_bandwidth(q: int, sites: int, iterations: int, wall_ns: float) -> float:
    """GB/s for one read and one write of every float64 population value per iteration."""
    nbytes = 2 * q * 8 * sites * iterations
    return nbytes / wall_ns


def machine_metadata() -> dict:
    cpu_model = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu_model = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {
        "cpu_model": cpu_model,
        "logical_cpus": os.cpu_count(),
        "usable_cpus": len(available_cpus()),
        "numa_nodes": numa_nodes(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "hostname": platform.node(),
    }


def _first_touch(f: PopulationField) -> None:
    for arr in (f.storage, f.halo_lo, f.halo_hi):
        arr += 0.0


def _kernel_metrics(trace, start: str, stop: str, q: int, sites: int, iterations: int, kernel: str) -> dict:
    t0, t1 = trace.span(start, stop)
    wall_ns = t1 - t0
    if wall_ns <= 0:
        raise EnergyError(f"{kernel}: non-positive timed span")
    p_dom = {d.value: average_power(trace, t0, t1, d) for d in trace.domains}
    p_sum = sum(p_dom.values())
    e_s = energy_to_solution(wall_ns * 1e-9, p_sum)
    out = {
        "wall_ns_total": wall_ns,
        "ns_per_site": wall_ns / (sites * iterations),
        "p_avg_w": p_dom,
        "p_avg_w_sum": p_sum,
        "e_s_joules": e_s,
        "e_s_per_site_j": e_s / (sites * iterations),
    }
    if kernel == "propagate":
        out["bandwidth_gbs"] = propagate_bandwidth(q, sites, iterations, wall_ns)
    return out


def _median_rep(reps: list[dict]) -> dict:
    """The repetition with the median wall time (lower middle for even counts), plus spread."""
    ordered = sorted(reps, key=lambda r: r["wall_ns_total"])
    chosen = dict(ordered[(len(ordered) - 1) // 2])
    walls = [r["wall_ns_total"] for r in reps]
    chosen["wall_ns_min"] = min(walls)
    chosen["wall_ns_max"] = max(walls)
    chosen["wall_ns_median"] = statistics.median(walls)
    chosen["repetitions"] = len(reps)
    return chosen


def run_experiment(cfg: ExperimentConfig, backend=None) -> dict:
    """Run one configuration and return its RunRecord (a JSON-ready dict).

    ``backend`` overrides the energy backend named in the config (tests pass a
    synthetic backend on a manual clock this way).
    """
    cfg.validate()
    vset = build_velocity_set(cfg.q_model)
    geometry = LatticeGeometry.for_set(cfg.nx, cfg.ny, vset)
    mode = parse_collide_mode(cfg.collide_mode, cfg.seed)
    target = MemoryTarget.parse(cfg.memory_target)
    check_target(target)
    kb = None if cfg.kernel_backend == "auto" else cfg.kernel_backend
    kernel_backend = kernels.BACKEND if kb is None else kb
    if backend is None:
        model = SyntheticPowerModel.constant(cfg.synthetic_package_w, cfg.synthetic_dram_w)
        backend = open_backend(cfg.backend, model=model)

    warnings: list[str] = []
    with WorkerPool(cfg.threads, pin=cfg.pin) as pool:
        if pool.report.warning:
            warnings.append(f"affinity: {pool.report.warning}")
        with bound_allocations(target):
            prv = init_field(geometry, vset.q, cfg.layout, ("random", cfg.seed), pad=cfg.pad)
            nxt = prv.zeros_like()
            _first_touch(prv)
            _first_touch(nxt)
        buf = kernels.StepBuffers(prv, nxt)

        for _ in range(cfg.warmup_iterations):
            kernels.step(buf, vset, mode, pool, kb)

        def body(mark):
            mark("propagate:start")
            for _ in range(cfg.iterations):
                kernels.halo_exchange(buf.prv)
                kernels.propagate(buf.prv, buf.nxt, vset, pool, kb)
                buf.swap()
            mark("propagate:stop")
            if mode is not None:
                mark("collide:start")
                for _ in range(cfg.iterations):
                    kernels.collide(buf.prv, vset, mode, pool, kb)
                mark("collide:stop")

        reps: dict[str, list[dict]] = {k: [] for k in KERNELS}
        partial = False
        for _ in range(cfg.repetitions):
            trace = session_record(backend, cfg.sampler_period_ms, body)
            partial |= trace.partial
            reps["propagate"].append(
                _kernel_metrics(trace, "propagate:start", "propagate:stop", vset.q, cfg.sites, cfg.iterations, "propagate"))
            if mode is not None:
                reps["collide"].append(
                    _kernel_metrics(trace, "collide:start", "collide:stop", vset.q, cfg.sites, cfg.iterations, "collide"))
        checksum = field_checksum(buf.prv)
        affinity = pool.report.as_dict()

    flags = list(getattr(backend, "flags", []))
    if partial:
        flags.append("trace:partial")
    return {
        "status": "ok",
        "config": cfg.to_dict(),
        "kernels": {k: _median_rep(v) for k, v in reps.items() if v},
        "checksum": checksum,
        "sites": cfg.sites,
        "q": vset.q,
        "energy_backend": getattr(backend, "kind", "unknown"),
        "kernel_backend": kernel_backend,
        "flags": flags,
        "warnings": warnings,
        "affinity": affinity,
        "machine": machine_metadata(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


@dataclass
class SweepPlan:
    base: ExperimentConfig
    layouts: list[str] = field(default_factory=lambda: ["AoS", "SoA", "CSoA(8)", "CAoSoA(8)"])
    threads: list[int] = field(default_factory=lambda: [1])
    memory_targets: list[str] = field(default_factory=lambda: ["default"])

    def combinations(self):
        """Yield (config, skip_reason) for every point of the cartesian product."""
        for mem, layout, th in itertools.product(self.memory_targets, self.layouts, self.threads):
            reason = None
            try:
                cfg = dataclasses.replace(self.base, layout=layout, threads=int(th), memory_target=mem)
                cfg.validate()
            except (LatticeError, ConfigError, ValueError) as exc:
                cfg = None
                reason = str(exc)
            yield cfg, reason, {"layout": layout, "threads": th, "memory_target": mem}

    def __len__(self) -> int:
        return len(self.layouts) * len(self.threads) * len(self.memory_targets)


def append_record(path: str | os.PathLike, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def run_sweep(plan: SweepPlan, out_path: str | os.PathLike | None = None, backend_factory=None) -> list[dict]:
    """Run every combination one after another; failures become error/skipped records."""
    if len(plan) == 0:
        raise ConfigError("sweep plan is empty")
    records = []
    for cfg, reason, point in plan.combinations():
        if cfg is None:
            rec = {"status": "skipped", "reason": reason, "point": point, "config": None}
        else:
            try:
                rec = run_experiment(cfg, backend_factory() if backend_factory else None)
            except Exception as exc:
                log.exception("sweep point %s failed", point)
                rec = {"status": "error", "reason": f"{type(exc).__name__}: {exc}", "point": point,
                       "config": cfg.to_dict()}
        records.append(rec)
        if out_path is not None:
            append_record(out_path, rec)
    ok = [r for r in records if r["status"] == "ok"]
    if ok and not checksums_consistent(ok):
        log.warning("checksums differ across sweep points with identical seeds")
    return records


def checksums_consistent(records: list[dict]) -> bool:
    """True when all ok records sharing everything except layout/threads/memory agree on checksum."""
    groups: dict[str, set] = {}
    for r in records:
        if r.get("status") != "ok":
            continue
        cfg = dict(r["config"])
        for k in ("layout", "threads", "memory_target", "pin", "kernel_backend"):
            cfg.pop(k, None)
        groups.setdefault(json.dumps(cfg, sort_keys=True), set()).add(r["checksum"])
    return all(len(v) == 1 for v in groups.values())


def load_config(path: str | os.PathLike) -> tuple[ExperimentConfig, SweepPlan | None]:
    """Read a TOML config. Top-level keys are ExperimentConfig fields; an optional
    ``[sweep]`` table lists ``layouts``, ``threads`` and ``memory_targets``."""
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    sweep = doc.pop("sweep", None)
    base = ExperimentConfig.from_dict(doc)
    plan = None
    if sweep is not None:
        allowed = {"layouts", "threads", "memory_targets"}
        if set(sweep) - allowed:
            raise ConfigError(f"unknown sweep keys: {sorted(set(sweep) - allowed)}")
        plan = SweepPlan(
            base,
            layouts=list(sweep.get("layouts", [base.layout])),
            threads=list(sweep.get("threads", [base.threads])),
            memory_targets=list(sweep.get("memory_targets", [base.memory_target])),
        )
    return base, plan


def read_records(path: str | os.PathLike) -> list[dict]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc.msg})") from exc
    return out
