"""Worker threads with explicit CPU placement."""
from __future__ import annotations

import logging
import os
import queue
import threading
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

SYSFS_CPU = "/sys/devices/system/cpu"


class OversubscriptionError(RuntimeError):
    pass


@dataclass
class AffinityReport:
    requested: int
    planned: list[int]
    achieved: list[list[int]] = field(default_factory=list)
    supported: bool = True
    warning: str | None = None

    @property
    def honored(self) -> bool:
        return (self.supported and self.warning is None
                and len(self.achieved) == self.requested
                and all(a == [c] for a, c in zip(self.achieved, self.planned)))

    def as_dict(self) -> dict:
        return {
            "requested": self.requested,
            "planned": self.planned,
            "achieved": self.achieved,
            "supported": self.supported,
            "honored": self.honored,
            "warning": self.warning,
        }


def _read_int(path: str) -> int | None:
    try:
        with open(path) as fh:
            return int(fh.read().strip())
    except (OSError, ValueError):
        return None


def available_cpus() -> list[int]:
    if hasattr(os, "sched_getaffinity"):
        return sorted(os.sched_getaffinity(0))
    return list(range(os.cpu_count() or 1))


def placement_order(cpus: list[int], sysfs: str = SYSFS_CPU) -> list[int]:
    """Order CPUs so distinct physical cores come first, then their SMT siblings."""
    cores: dict[tuple, list[int]] = {}
    for cpu in cpus:
        pkg = _read_int(f"{sysfs}/cpu{cpu}/topology/physical_package_id")
        core = _read_int(f"{sysfs}/cpu{cpu}/topology/core_id")
        key = (pkg, core) if core is not None else ("cpu", cpu)
        cores.setdefault(key, []).append(cpu)
    groups = [sorted(v) for _, v in sorted(cores.items(), key=lambda kv: min(kv[1]))]
    order = []
    depth = max(len(g) for g in groups) if groups else 0
    for level in range(depth):
        order.extend(g[level] for g in groups if level < len(g))
    return order


def pin_workers(threads: int, cpus: list[int] | None = None) -> AffinityReport:
    """Plan one worker per distinct logical CPU, physical cores first.

    Raises OversubscriptionError when more workers than CPUs are requested.
    The plan is applied by WorkerPool; ``achieved`` is filled from readback.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    cpus = available_cpus() if cpus is None else sorted(cpus)
    if threads > len(cpus):
        raise OversubscriptionError(
            f"oversubscription refused: {threads} workers requested, {len(cpus)} logical CPUs available"
        )
    supported = hasattr(os, "sched_setaffinity")
    return AffinityReport(threads, placement_order(cpus)[:threads], supported=supported,
                          warning=None if supported else "affinity control unavailable on this platform")


class WorkerPool:
    """Exactly ``threads`` persistent worker threads, optionally pinned.

    ``run(fn, args_per_worker)`` calls ``fn(*args)`` on worker i with the i-th
    argument tuple and blocks until all workers finish (a per-call barrier).
    """

    def __init__(self, threads: int, pin: bool = True):
        if threads < 1:
            raise ValueError("threads must be >= 1")
        self.threads = threads
        self.report: AffinityReport
        try:
            self.report = pin_workers(threads) if pin else AffinityReport(threads, [], supported=False,
                                                                           warning="pinning disabled")
        except OversubscriptionError as exc:
            self.report = AffinityReport(threads, [], supported=False, warning=str(exc))
        self._queues: list[queue.SimpleQueue] = [queue.SimpleQueue() for _ in range(threads)]
        self._done: queue.SimpleQueue = queue.SimpleQueue()
        achieved: list = [None] * threads
        ready = threading.Barrier(threads + 1)
        self._threads = []
        for i in range(threads):
            cpu = self.report.planned[i] if i < len(self.report.planned) else None
            t = threading.Thread(target=self._loop, args=(i, cpu, achieved, ready),
                                 name=f"lb-worker-{i}", daemon=True)
            t.start()
            self._threads.append(t)
        ready.wait()
        if self.report.planned:
            self.report.achieved = [a for a in achieved]

    def _loop(self, i, cpu, achieved, ready):
        if cpu is not None and hasattr(os, "sched_setaffinity"):
            try:
                os.sched_setaffinity(0, {cpu})
                achieved[i] = sorted(os.sched_getaffinity(0))
            except OSError as exc:
                achieved[i] = []
                self.report.warning = f"sched_setaffinity failed: {exc}"
        ready.wait()
        q = self._queues[i]
        while True:
            item = q.get()
            if item is None:
                return
            fn, args = item
            try:
                fn(*args)
                self._done.put(None)
            except BaseException as exc:  # re-raised in the caller
                self._done.put(exc)

    def run(self, fn, args_per_worker) -> None:
        args_per_worker = list(args_per_worker)
        if len(args_per_worker) != self.threads:
            raise ValueError(f"expected {self.threads} argument tuples, got {len(args_per_worker)}")
        for q, args in zip(self._queues, args_per_worker):
            q.put((fn, args))
        errors = [self._done.get() for _ in range(self.threads)]
        for err in errors:
            if err is not None:
                raise err

    def close(self) -> None:
        for q in self._queues:
            q.put(None)
        for t in self._threads:
            t.join()
        self._threads = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
