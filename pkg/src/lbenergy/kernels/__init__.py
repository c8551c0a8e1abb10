"""Propagate and collide kernels over any layout.

The compiled core (``_core``) is used when it imports; otherwise, or when
``LBENERGY_KERNELS=python`` is set, the numpy fallback is used. Both produce
bit-identical results.
"""
from __future__ import annotations

import importlib
import os
from dataclasses import dataclass, field

import numpy as np

from ..field import PopulationField
from ..lattice import LatticeError, VelocitySet
from . import _fallback


def _load_core():
    if os.environ.get("LBENERGY_KERNELS", "").lower() == "python":
        return None
    try:
        return importlib.import_module("lbenergy.kernels._core")
    except ImportError:
        return None


_core = _load_core()
impl = _core if _core is not None else _fallback
BACKEND = "compiled" if _core is not None else "python"


def get_impl(name: str | None = None):
    """Kernel module by name ('compiled' or 'python'); None gives the active one."""
    if name is None:
        return impl
    if name == "python":
        return _fallback
    if name == "compiled":
        if _core is None:
            mod = importlib.import_module("lbenergy.kernels._core")
            return mod
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    try:
        get_impl("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


@dataclass(frozen=True)
class BgkParams:
    tau: float

    def __post_init__(self):
        if not self.tau > 0.5:
            raise LatticeError(f"BGK needs tau > 0.5, got {self.tau}")


@dataclass(frozen=True)
class SurrogateParams:
    """Degree-F polynomial applied to every population by Horner's rule.

    Coefficients are uniform draws in [-1, 1] rescaled so that sum |c| = 0.999;
    the polynomial then maps [-1, 1] into itself and repeated steps stay finite.
    ``coeffs`` may be given explicitly instead.
    """

    fma_per_pop: int = 90
    seed: int = 0
    coeffs: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.fma_per_pop < 1:
            raise LatticeError("fma_per_pop must be >= 1")
        if not self.coeffs:
            rng = np.random.default_rng(self.seed)
            c = rng.uniform(-1.0, 1.0, self.fma_per_pop + 1)
            c *= 0.999 / np.abs(c).sum()
            object.__setattr__(self, "coeffs", tuple(float(v) for v in c))
        elif len(self.coeffs) != self.fma_per_pop + 1:
            raise LatticeError(f"need {self.fma_per_pop + 1} coefficients, got {len(self.coeffs)}")

    @classmethod
    def explicit(cls, coeffs) -> "SurrogateParams":
        coeffs = tuple(float(c) for c in coeffs)
        return cls(len(coeffs) - 1, 0, coeffs)

    def coeff_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.float64)


def partition(nx: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous column ranges, one per worker (some may be empty)."""
    bounds = [nx * i // workers for i in range(workers + 1)]
    return list(zip(bounds[:-1], bounds[1:]))


def _dims(f: PopulationField):
    ix = f.indexer
    return f.layout.code, ix.nx, ix.ny, ix.ny_pad, f.q, f.layout.vl


def _dispatch(pool, nx, call):
    if pool is None:
        call(0, nx)
    else:
        pool.run(call, partition(nx, pool.threads))


def halo_exchange(field: PopulationField) -> None:
    """Fill the X halo slabs with the periodic images of interior columns."""
    h = field.geometry.halo
    if not h:
        return
    nx = field.geometry.nx
    ix, hix = field.indexer, field.indexer_halo
    ax = ix.x_axis
    src = ix.column_view(field.storage)
    lo_cols = [(nx - h + j) % nx for j in range(h)]
    hi_cols = [j % nx for j in range(h)]
    hix.column_view(field.halo_lo)[...] = np.take(src, lo_cols, axis=ax)
    hix.column_view(field.halo_hi)[...] = np.take(src, hi_cols, axis=ax)


def _check_pair(prv: PopulationField, nxt: PopulationField, vset: VelocitySet) -> None:
    if prv is nxt or np.shares_memory(prv.storage, nxt.storage):
        raise LatticeError("propagate buffers must not alias")
    if not prv.same_shape(nxt):
        raise LatticeError("propagate buffers differ in geometry, q or layout")
    if vset.q != prv.q:
        raise LatticeError(f"velocity set q={vset.q} does not match field q={prv.q}")
    prv.geometry.check_reach(vset)


def propagate(prv: PopulationField, nxt: PopulationField, vset: VelocitySet, pool=None, backend=None) -> None:
    """nxt(x, y, p) = prv(x - cx_p, y - cy_p, p) with periodic wrap. Halo of prv must be fresh."""
    _check_pair(prv, nxt, vset)
    k = get_impl(backend)
    lay, nx, ny, ny_pad, q, vl = _dims(prv)
    h = prv.geometry.halo
    cx = np.asarray(vset.cx, dtype=np.int64)
    cy = np.asarray(vset.cy, dtype=np.int64)

    def call(x0, x1):
        k.propagate(prv.storage, prv.halo_lo, prv.halo_hi, nxt.storage, lay, nx, ny, ny_pad, q, vl, h,
                    cx, cy, x0, x1)

    _dispatch(pool, nx, call)


def collide_surrogate(field: PopulationField, params: SurrogateParams, pool=None, backend=None) -> None:
    k = get_impl(backend)
    lay, nx, ny, ny_pad, q, vl = _dims(field)
    coeffs = params.coeff_array()

    def call(x0, x1):
        k.collide_surrogate(field.storage, lay, nx, ny, ny_pad, q, vl, coeffs, x0, x1)

    _dispatch(pool, nx, call)


def bgk_constants(vset: VelocitySet) -> tuple[float, float, float]:
    cs2 = vset.speed_of_sound_sq
    return 1.0 / cs2, 1.0 / (2.0 * cs2 * cs2), 1.0 / (2.0 * cs2)


def collide_bgk(field: PopulationField, vset: VelocitySet, params: BgkParams, pool=None, backend=None) -> None:
    if vset.weights is None or vset.speed_of_sound_sq is None:
        raise LatticeError(f"{vset.name} carries no weights; BGK collision needs a weighted set (D2Q9)")
    if vset.q != field.q:
        raise LatticeError(f"velocity set q={vset.q} does not match field q={field.q}")
    k = get_impl(backend)
    lay, nx, ny, ny_pad, q, vl = _dims(field)
    cx = np.asarray(vset.cx, dtype=np.float64)
    cy = np.asarray(vset.cy, dtype=np.float64)
    w = np.asarray(vset.weights, dtype=np.float64)
    a, b2, c2 = bgk_constants(vset)

    def call(x0, x1):
        k.collide_bgk(field.storage, lay, nx, ny, ny_pad, q, vl, cx, cy, w, float(params.tau), a, b2, c2, x0, x1)

    _dispatch(pool, nx, call)


@dataclass
class StepBuffers:
    prv: PopulationField
    nxt: PopulationField

    def __post_init__(self):
        if self.prv is self.nxt or np.shares_memory(self.prv.storage, self.nxt.storage):
            raise LatticeError("step buffers must not alias")

    @classmethod
    def around(cls, field: PopulationField) -> "StepBuffers":
        return cls(field, field.zeros_like())

    def swap(self) -> None:
        self.prv, self.nxt = self.nxt, self.prv


def collide(field: PopulationField, vset: VelocitySet, mode, pool=None, backend=None) -> None:
    """Apply ``mode``: a BgkParams, a SurrogateParams, or None (no collision)."""
    if mode is None:
        return
    if isinstance(mode, BgkParams):
        collide_bgk(field, vset, mode, pool, backend)
    elif isinstance(mode, SurrogateParams):
        collide_surrogate(field, mode, pool, backend)
    else:
        raise LatticeError(f"unknown collide mode {mode!r}")


def step(buffers: StepBuffers, vset: VelocitySet, mode=None, pool=None, backend=None) -> None:
    """halo exchange, propagate prv -> nxt, collide nxt in place, swap."""
    halo_exchange(buffers.prv)
    propagate(buffers.prv, buffers.nxt, vset, pool, backend)
    collide(buffers.nxt, vset, mode, pool, backend)
    buffers.swap()
