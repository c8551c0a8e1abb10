"""NUMA memory targets.

On a flat-mode many-core part the high-bandwidth memory shows up as its own
NUMA node, so "which node" is the portable way to say DDR vs on-package.
"""
from __future__ import annotations

import contextlib
import ctypes
import ctypes.util
import os
import platform
import re
from dataclasses import dataclass

NODE_ROOT = "/sys/devices/system/node"

_MPOL_DEFAULT = 0
_MPOL_BIND = 2
_SYS_SET_MEMPOLICY = {"x86_64": 238, "aarch64": 237}


class MemoryTargetError(RuntimeError):
    pass


@dataclass(frozen=True)
class MemoryTarget:
    node: int | None = None

    @classmethod
    def parse(cls, text: "str | MemoryTarget | None") -> "MemoryTarget":
        if isinstance(text, MemoryTarget):
            return text
        if text is None or str(text).strip().lower() == "default":
            return cls(None)
        m = re.fullmatch(r"\s*numa(?:node)?[:(]\s*(\d+)\s*\)?\s*", str(text), re.IGNORECASE)
        if not m:
            raise MemoryTargetError(f"cannot parse memory target {text!r} (use 'default' or 'numa:<id>')")
        return cls(int(m.group(1)))

    def __str__(self) -> str:
        return "default" if self.node is None else f"numa:{self.node}"


def numa_nodes(root: str = NODE_ROOT) -> list[int]:
    try:
        names = os.listdir(root)
    except OSError:
        return [0]
    nodes = sorted(int(n[4:]) for n in names if re.fullmatch(r"node\d+", n))
    return nodes or [0]


def check_target(target: MemoryTarget, root: str = NODE_ROOT) -> None:
    if target.node is None:
        return
    nodes = numa_nodes(root)
    if len(nodes) < 2:
        raise MemoryTargetError(
            f"memory target {target} needs a multi-node machine; only node(s) {nodes} present"
        )
    if target.node not in nodes:
        raise MemoryTargetError(f"NUMA node {target.node} does not exist (nodes: {nodes})")


def _set_mempolicy(mode: int, node: int | None) -> None:
    nr = _SYS_SET_MEMPOLICY.get(platform.machine())
    if nr is None:
        raise MemoryTargetError(f"set_mempolicy not wired up for {platform.machine()}")
    libc = ctypes.CDLL(ctypes.util.find_library("c"), use_errno=True)
    if node is None:
        rc = libc.syscall(nr, mode, None, ctypes.c_ulong(0))
    else:
        words = node // 64 + 1
        mask = (ctypes.c_ulong * words)()
        mask[node // 64] = 1 << (node % 64)
        rc = libc.syscall(nr, mode, mask, ctypes.c_ulong(words * 64 + 1))
    if rc != 0:
        err = ctypes.get_errno()
        raise MemoryTargetError(f"set_mempolicy failed: {os.strerror(err)}")


@contextlib.contextmanager
def bound_allocations(target: MemoryTarget):
    """Bind pages first touched by this thread to the target node while inside."""
    if target.node is None:
        yield
        return
    check_target(target)
    _set_mempolicy(_MPOL_BIND, target.node)
    try:
        yield
    finally:
        _set_mempolicy(_MPOL_DEFAULT, None)
