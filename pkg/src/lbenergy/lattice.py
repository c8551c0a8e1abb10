"""Lattice geometry and discrete velocity sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

D2Q37_SHELLS = (0, 1, 2, 4, 5, 8, 9, 10)
D2Q9_SHELLS = (0, 1, 2)

# second-order D2Q9 weights per shell (|c|^2 -> w)
_D2Q9_WEIGHTS = {0: Fraction(4, 9), 1: Fraction(1, 9), 2: Fraction(1, 36)}


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class VelocitySet:
    """Integer displacement vectors of a DdQq model, optionally with quadrature weights."""

    name: str
    vectors: tuple[tuple[int, int], ...]
    weights: tuple[float, ...] | None = None
    speed_of_sound_sq: float | None = None
    d: int = 2

    def __post_init__(self):
        vecs = set(self.vectors)
        if len(vecs) != len(self.vectors):
            raise LatticeError("velocity vectors must be pairwise distinct")
        for cx, cy in self.vectors:
            if (-cx, -cy) not in vecs:
                raise LatticeError(f"set not closed under negation: ({cx}, {cy})")
        if self.weights is not None:
            if len(self.weights) != len(self.vectors):
                raise LatticeError("one weight per vector required")
            if any(w <= 0 for w in self.weights):
                raise LatticeError("weights must be positive")
            if abs(math.fsum(self.weights) - 1.0) > 1e-14:
                raise LatticeError("weights must sum to 1")

    @property
    def q(self) -> int:
        return len(self.vectors)

    @property
    def reach(self) -> int:
        return max(max(abs(cx), abs(cy)) for cx, cy in self.vectors)

    @property
    def cx(self) -> list[int]:
        return [c[0] for c in self.vectors]

    @property
    def cy(self) -> list[int]:
        return [c[1] for c in self.vectors]


def shell_vectors(norm_sq: int) -> list[tuple[int, int]]:
    """All integer 2D vectors with squared length ``norm_sq``, ordered by angle."""
    r = math.isqrt(norm_sq)
    out = [
        (x, y)
        for x in range(-r, r + 1)
        for y in range(-r, r + 1)
        if x * x + y * y == norm_sq
    ]
    out.sort(key=lambda v: math.atan2(v[1], v[0]) % (2 * math.pi))
    return out


def build_velocity_set(model: str | Sequence[int]) -> VelocitySet:
    """Build ``"D2Q9"``, ``"D2Q37"``, or a custom set from a list of squared norms.

    Only D2Q9 carries weights (and c_s^2 = 1/3); other sets are
    geometry-only and support propagate plus the surrogate collision.
    """
    if isinstance(model, str):
        key = model.upper()
        if key == "D2Q9":
            vectors = [v for s in D2Q9_SHELLS for v in shell_vectors(s)]
            weights = tuple(float(_D2Q9_WEIGHTS[cx * cx + cy * cy]) for cx, cy in vectors)
            return VelocitySet("D2Q9", tuple(vectors), weights, 1.0 / 3.0)
        if key == "D2Q37":
            vectors = [v for s in D2Q37_SHELLS for v in shell_vectors(s)]
            return VelocitySet("D2Q37", tuple(vectors))
        raise LatticeError(f"unknown velocity model {model!r}")

    shells = sorted(set(int(s) for s in model))
    vectors = []
    for s in shells:
        if s < 0:
            raise LatticeError(f"negative squared norm {s}")
        vs = shell_vectors(s)
        if not vs:
            raise LatticeError(f"{s} is not a sum of two integer squares")
        vectors.extend(vs)
    if not vectors:
        raise LatticeError("shell list produces an empty velocity set")
    name = f"D2Q{len(vectors)}"
    return VelocitySet(name, tuple(vectors))


@dataclass(frozen=True)
class LatticeGeometry:
    nx: int
    ny: int
    halo: int = 3

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise LatticeError(f"lattice must be at least 1x1, got {self.nx}x{self.ny}")
        if self.halo < 0:
            raise LatticeError("halo width must be non-negative")

    @property
    def sites(self) -> int:
        return self.nx * self.ny

    @classmethod
    def for_set(cls, nx: int, ny: int, vset: VelocitySet) -> "LatticeGeometry":
        return cls(nx, ny, vset.reach)

    def check_reach(self, vset: VelocitySet) -> None:
        if self.halo < vset.reach:
            raise LatticeError(f"halo {self.halo} smaller than stencil reach {vset.reach}")


@dataclass(frozen=True)
class SiteCoord:
    x: int
    y: int

    def check(self, geometry: LatticeGeometry) -> None:
        if not (0 <= self.x < geometry.nx and 0 <= self.y < geometry.ny):
            raise LatticeError(f"site ({self.x}, {self.y}) outside {geometry.nx}x{geometry.ny}")
