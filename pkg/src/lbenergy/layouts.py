"""Storage layouts: bijective (site, population) -> flat index maps.

With ``s = x*ny + y``, ``H = ny_pad // vl``, lane ``l = y // H``, ``r = y % H``
and cluster index ``k = x*H + r``:

    AoS          s*q + pop
    SoA          pop*S + s
    CSoA(vl)     pop*S + k*vl + l
    CAoSoA(vl)   (k*q + pop)*vl + l

Lanes are split along Y with stride H, so sites y, y+H, ..., y+(vl-1)H share
one vector and small Y shifts keep gathers lane-coherent. Clustered layouts
pad ny up to a multiple of vl; padded rows are storage only.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeError, LatticeGeometry, SiteCoord

AOS, SOA, CSOA, CAOSOA = 0, 1, 2, 3
_TAGS = {"AoS": AOS, "SoA": SOA, "CSoA": CSOA, "CAoSoA": CAOSOA}
_LAYOUT_RE = re.compile(r"^\s*(AoS|SoA|CSoA|CAoSoA)\s*(?:\(\s*(\d+)\s*\))?\s*$", re.IGNORECASE)

DEFAULT_VL = 8


class LayoutError(LatticeError):
    pass


@dataclass(frozen=True)
class LayoutKind:
    tag: str
    vl: int = 1

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise LayoutError(f"unknown layout {self.tag!r}")
        if self.clustered:
            if self.vl < 2 or self.vl & (self.vl - 1):
                raise LayoutError(f"vector length must be a power of two >= 2, got {self.vl}")
        elif self.vl != 1:
            raise LayoutError(f"{self.tag} takes no vector length")

    @property
    def code(self) -> int:
        return _TAGS[self.tag]

    @property
    def clustered(self) -> bool:
        return self.tag in ("CSoA", "CAoSoA")

    def __str__(self) -> str:
        return f"{self.tag}({self.vl})" if self.clustered else self.tag

    @classmethod
    def parse(cls, text: "str | LayoutKind") -> "LayoutKind":
        """Parse ``AoS``, ``SoA``, ``CSoA(8)``, ``CAoSoA`` (default vl=8)."""
        if isinstance(text, LayoutKind):
            return text
        m = _LAYOUT_RE.match(text)
        if not m:
            raise LayoutError(f"cannot parse layout {text!r}")
        tag = next(t for t in _TAGS if t.lower() == m.group(1).lower())
        if tag in ("CSoA", "CAoSoA"):
            return cls(tag, int(m.group(2)) if m.group(2) else DEFAULT_VL)
        if m.group(2):
            raise LayoutError(f"{tag} takes no vector length")
        return cls(tag)


ALL_LAYOUTS = (
    LayoutKind("AoS"),
    LayoutKind("SoA"),
    LayoutKind("CSoA", DEFAULT_VL),
    LayoutKind("CAoSoA", DEFAULT_VL),
)


@dataclass(frozen=True)
class LayoutIndexer:
    kind: LayoutKind
    nx: int
    ny: int
    q: int
    ny_pad: int
    capacity: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "capacity", self.q * self.nx * self.ny_pad)

    @property
    def sites(self) -> int:
        return self.nx * self.ny

    @property
    def vl(self) -> int:
        return self.kind.vl

    @property
    def lane_stride(self) -> int:
        return self.ny_pad // self.kind.vl

    @property
    def alignment_elems(self) -> int:
        return self.kind.vl if self.kind.clustered else 1

    @property
    def padded(self) -> bool:
        return self.ny_pad != self.ny

    def address(self, site: SiteCoord | tuple[int, int], pop: int) -> int:
        x, y = (site.x, site.y) if isinstance(site, SiteCoord) else site
        if not (0 <= x < self.nx and 0 <= y < self.ny):
            raise LayoutError(f"site ({x}, {y}) out of range")
        if not 0 <= pop < self.q:
            raise LayoutError(f"population {pop} out of range [0, {self.q})")
        return self._address(x, y, pop)

    def _address(self, x: int, y: int, pop: int) -> int:
        code = self.kind.code
        if code == AOS:
            return (x * self.ny + y) * self.q + pop
        if code == SOA:
            return pop * self.nx * self.ny + x * self.ny + y
        H = self.lane_stride
        vl = self.kind.vl
        lane, r = divmod(y, H)
        k = x * H + r
        if code == CSOA:
            return pop * self.nx * self.ny_pad + k * vl + lane
        return (k * self.q + pop) * vl + lane

    def all_addresses(self) -> np.ndarray:
        """Addresses of every logical value as an (nx, ny, q) int array (vectorized map)."""
        x = np.arange(self.nx)[:, None, None]
        y = np.arange(self.ny)[None, :, None]
        p = np.arange(self.q)[None, None, :]
        code = self.kind.code
        if code == AOS:
            a = (x * self.ny + y) * self.q + p
        elif code == SOA:
            a = p * self.sites + x * self.ny + y
        else:
            H, vl = self.lane_stride, self.kind.vl
            k = x * H + y % H
            lane = y // H
            if code == CSOA:
                a = p * self.nx * self.ny_pad + k * vl + lane
            else:
                a = (k * self.q + p) * vl + lane
        return np.broadcast_to(a, (self.nx, self.ny, self.q)).astype(np.int64)

    # Column views: every layout keeps x as a plain axis of the reshaped storage.
    @property
    def x_axis(self) -> int:
        return 0 if self.kind.code in (AOS, CAOSOA) else 1

    def column_view(self, storage: np.ndarray) -> np.ndarray:
        code = self.kind.code
        if code == AOS:
            return storage.reshape(self.nx, self.ny, self.q)
        if code == SOA:
            return storage.reshape(self.q, self.nx, self.ny)
        H, vl = self.lane_stride, self.kind.vl
        if code == CSOA:
            return storage.reshape(self.q, self.nx, H, vl)
        return storage.reshape(self.nx, H, self.q, vl)

    def to_logical(self, storage: np.ndarray, x0: int = 0, x1: int | None = None) -> np.ndarray:
        """Copy columns [x0, x1) out as a C-ordered (ncols, ny, q) array."""
        x1 = self.nx if x1 is None else x1
        v = self.column_view(storage)
        code = self.kind.code
        if code == AOS:
            out = v[x0:x1]
        elif code == SOA:
            out = v[:, x0:x1].transpose(1, 2, 0)
        elif code == CSOA:
            # [p, x, r, l] -> [x, l, r, p]
            out = v[:, x0:x1].transpose(1, 3, 2, 0).reshape(x1 - x0, self.ny_pad, self.q)[:, : self.ny]
        else:
            # [x, r, p, l] -> [x, l, r, p]
            out = v[x0:x1].transpose(0, 3, 1, 2).reshape(x1 - x0, self.ny_pad, self.q)[:, : self.ny]
        return np.ascontiguousarray(out)

    def from_logical(self, storage: np.ndarray, values: np.ndarray, x0: int = 0) -> None:
        """Write a (ncols, ny, q) logical block into columns starting at x0."""
        n = values.shape[0]
        v = self.column_view(storage)
        code = self.kind.code
        if code == AOS:
            v[x0 : x0 + n] = values
            return
        if code == SOA:
            v[:, x0 : x0 + n] = values.transpose(2, 0, 1)
            return
        H, vl = self.lane_stride, self.kind.vl
        if self.padded:
            full = np.array(self.to_logical_padded(storage, x0, x0 + n))
            full[:, : self.ny] = values
        else:
            full = values
        blk = full.reshape(n, vl, H, self.q)  # [x, l, r, p]
        if code == CSOA:
            v[:, x0 : x0 + n] = blk.transpose(3, 0, 2, 1)
        else:
            v[x0 : x0 + n] = blk.transpose(0, 2, 3, 1)

    def to_logical_padded(self, storage: np.ndarray, x0: int, x1: int) -> np.ndarray:
        v = self.column_view(storage)
        if self.kind.code == CSOA:
            out = v[:, x0:x1].transpose(1, 3, 2, 0)
        else:
            out = v[x0:x1].transpose(0, 3, 1, 2)
        return out.reshape(x1 - x0, self.ny_pad, self.q)


def make_indexer(kind: LayoutKind | str, geometry: LatticeGeometry, q: int, pad: bool = True) -> LayoutIndexer:
    kind = LayoutKind.parse(kind)
    if q < 1:
        raise LayoutError("q must be >= 1")
    ny_pad = geometry.ny
    if kind.clustered and geometry.ny % kind.vl:
        if not pad:
            raise LayoutError(
                f"{kind} needs ny divisible by {kind.vl}, got ny={geometry.ny} (padding disabled)"
            )
        ny_pad = -(-geometry.ny // kind.vl) * kind.vl
    return LayoutIndexer(kind, geometry.nx, geometry.ny, q, ny_pad)


def address(ix: LayoutIndexer, site: SiteCoord | tuple[int, int], pop: int) -> int:
    return ix.address(site, pop)


def convert(field, to: LayoutKind | str, pad: bool = True):
    """Return a copy of ``field`` stored under layout ``to``; logical content is unchanged."""
    from .field import PopulationField

    out = PopulationField.empty(field.geometry, field.q, to, pad=pad)
    out.indexer.from_logical(out.storage, field.logical())
    if field.geometry.halo:
        out.indexer_halo.from_logical(out.halo_lo, field.indexer_halo.to_logical(field.halo_lo))
        out.indexer_halo.from_logical(out.halo_hi, field.indexer_halo.to_logical(field.halo_hi))
    return out
