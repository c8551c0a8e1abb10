"""Population fields: layout-backed storage plus a logical (x, y, pop) view."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeError, LatticeGeometry, SiteCoord, VelocitySet
from .layouts import LayoutIndexer, LayoutKind, make_indexer


@dataclass(eq=False)
class PopulationField:
    """q float64 values per site in one of the four layouts.

    ``storage`` holds the interior (length ``indexer.capacity``). The periodic
    X halo lives in two slabs, ``halo_lo`` (columns -h..-1) and ``halo_hi``
    (columns nx..nx+h-1), each stored in the same layout as an h-column lattice.
    Y periodicity is resolved by index wrapping inside the kernels.
    """

    geometry: LatticeGeometry
    q: int
    layout: LayoutKind
    indexer: LayoutIndexer
    storage: np.ndarray
    indexer_halo: LayoutIndexer | None
    halo_lo: np.ndarray
    halo_hi: np.ndarray

    @classmethod
    def empty(cls, geometry: LatticeGeometry, q: int, layout: LayoutKind | str, pad: bool = True,
              alloc=np.zeros) -> "PopulationField":
        layout = LayoutKind.parse(layout)
        ix = make_indexer(layout, geometry, q, pad=pad)
        h = geometry.halo
        if h:
            hix = make_indexer(layout, LatticeGeometry(h, geometry.ny, 0), q, pad=pad)
            lo, hi = alloc(hix.capacity), alloc(hix.capacity)
        else:
            hix = None
            lo, hi = np.zeros(0), np.zeros(0)
        return cls(geometry, q, layout, ix, alloc(ix.capacity), hix, lo, hi)

    def zeros_like(self) -> "PopulationField":
        return PopulationField.empty(self.geometry, self.q, self.layout)

    def copy(self) -> "PopulationField":
        return PopulationField(self.geometry, self.q, self.layout, self.indexer, self.storage.copy(),
                               self.indexer_halo, self.halo_lo.copy(), self.halo_hi.copy())

    def read(self, x: int, y: int, pop: int) -> float:
        return float(self.storage[self.indexer.address((x, y), pop)])

    def write(self, x: int, y: int, pop: int, value: float) -> None:
        self.storage[self.indexer.address((x, y), pop)] = value

    def logical(self) -> np.ndarray:
        """Interior values as a fresh (nx, ny, q) array."""
        return self.indexer.to_logical(self.storage)

    def load_logical(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        expect = (self.geometry.nx, self.geometry.ny, self.q)
        if values.shape != expect:
            raise LatticeError(f"expected logical shape {expect}, got {values.shape}")
        self.indexer.from_logical(self.storage, values)

    def halo_logical(self) -> tuple[np.ndarray, np.ndarray]:
        if self.indexer_halo is None:
            empty = np.zeros((0, self.geometry.ny, self.q))
            return empty, empty
        return self.indexer_halo.to_logical(self.halo_lo), self.indexer_halo.to_logical(self.halo_hi)

    def same_shape(self, other: "PopulationField") -> bool:
        return (self.geometry == other.geometry and self.q == other.q
                and self.layout == other.layout and self.indexer == other.indexer)


def init_field(geometry: LatticeGeometry, q: int, layout: LayoutKind | str, pattern: tuple,
               pad: bool = True) -> PopulationField:
    """Allocate and fill a field.

    ``pattern`` is one of ``("uniform", v)``, ``("impulse", (x, y), pop, v)``
    or ``("random", seed)``; random values are uniform in [0, 1) and drawn in
    canonical (x, y, pop) order, so they do not depend on the layout.
    """
    f = PopulationField.empty(geometry, q, layout, pad=pad)
    kind = pattern[0].lower()
    shape = (geometry.nx, geometry.ny, q)
    if kind == "uniform":
        f.load_logical(np.full(shape, float(pattern[1])))
    elif kind == "impulse":
        _, site, pop, v = pattern
        site = site if isinstance(site, SiteCoord) else SiteCoord(*site)
        site.check(geometry)
        if not 0 <= pop < q:
            raise LatticeError(f"population {pop} out of range")
        f.write(site.x, site.y, pop, float(v))
    elif kind == "random":
        rng = np.random.default_rng(int(pattern[1]))
        f.load_logical(rng.random(shape))
    else:
        raise LatticeError(f"unknown init pattern {pattern[0]!r}")
    return f


def moments(field: PopulationField, vset: VelocitySet, site: SiteCoord | tuple[int, int]):
    """Density and momentum (sum f, sum c f) at one site."""
    if vset.q != field.q:
        raise LatticeError(f"velocity set has q={vset.q}, field has q={field.q}")
    x, y = (site.x, site.y) if isinstance(site, SiteCoord) else site
    f = [field.read(x, y, p) for p in range(field.q)]
    rho = math.fsum(f)
    jx = math.fsum(c[0] * v for c, v in zip(vset.vectors, f))
    jy = math.fsum(c[1] * v for c, v in zip(vset.vectors, f))
    return rho, (jx, jy)


def field_checksum(field: PopulationField) -> float:
    """Layout-independent sum over the interior in site-major, pop-minor order.

    Uses ``math.fsum`` (exactly rounded), so the result is bit-stable across
    layouts.
    """
    return math.fsum(field.logical().ravel().tolist())


def population_sums(field: PopulationField) -> list[float]:
    lg = field.logical()
    return [math.fsum(lg[:, :, p].ravel().tolist()) for p in range(field.q)]
