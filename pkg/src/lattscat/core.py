"""Lattice geometry, admissible energies, and potential containers.

The operator under study acts on functions of the integer lattice Z^d,

    (H psi)(x) = -sum_{|x'-x|=1} psi(x') + v(x) psi(x),

with v supported on finitely many sites.  Everything downstream (dispersion
geometry, lattice Green's functions, scattering solves) builds on the small
value types defined here.

Energies are admissible when they lie in the spectral band [-2d, 2d] but
away from the finite singular set

    S0 = { +-(2d - 4j) : j = 0, 1, ..., floor(d/2) },

which contains the band edges and the interior energies where the level set
of the symbol loses a well-defined outward normal.  The asymptotic machinery
additionally needs the level set strictly convex, which holds exactly for
2d - 4 < |E| < 2d.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    InsideSupport,
    OutOfBand,
    SingularEnergy,
    ZeroOffset,
    ZeroPoint,
)

_SINGULAR_TOL = 1e-12


def singular_energies(dim: int) -> tuple[float, ...]:
    """Energies in [-2d, 2d] at which the level-set geometry degenerates."""
    vals = sorted({2.0 * dim - 4.0 * j for j in range(dim // 2 + 1)})
    return tuple(sorted({s for v in vals for s in (-v, v)}))


@dataclass(frozen=True, slots=True)
class Energy:
    """An admissible energy for a fixed lattice dimension.

    Instances are validated on construction; use :func:`check_energy` as the
    ergonomic entry point.
    """

    value: float
    dimension: int
    convex_regime: bool = field(default=False)

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError("energy must be finite")
        if abs(v) > 2.0 * self.dimension:
            raise OutOfBand(f"E={v} outside [-{2*self.dimension}, {2*self.dimension}]")
        for s in singular_energies(self.dimension):
            if abs(v - s) < _SINGULAR_TOL:
                raise SingularEnergy(f"E={v} is in the singular set for d={self.dimension}")
        object.__setattr__(self, "convex_regime", 2.0 * self.dimension - 4.0 < abs(v) < 2.0 * self.dimension)


def check_energy(value: float, dim: int) -> Energy:
    """Validate an energy and return it tagged with its regime.

    Raises OutOfBand outside the band, SingularEnergy on the singular set.
    """
    return Energy(value=float(value), dimension=int(dim))


@dataclass(frozen=True, slots=True)
class LatticePoint:
    """A point of Z^d stored as a tuple of Python ints."""

    coords: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.coords) == 0:
            raise ValueError("lattice point needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __add__(self, other: "LatticePoint") -> "LatticePoint":
        return LatticePoint(tuple(a + b for a, b in zip(self.coords, other.coords, strict=True)))

    def __sub__(self, other: "LatticePoint") -> "LatticePoint":
        return LatticePoint(tuple(a - b for a, b in zip(self.coords, other.coords, strict=True)))

    def __neg__(self) -> "LatticePoint":
        return LatticePoint(tuple(-a for a in self.coords))

    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.coords))

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.int64)

    def direction(self) -> "Direction":
        """Unit vector pointing at this (nonzero) point."""
        if self.is_zero():
            raise ZeroPoint("direction of the origin is undefined")
        n = self.norm()
        return Direction(tuple(c / n for c in self.coords))


@dataclass(frozen=True, slots=True)
class Direction:
    """A unit vector in R^d."""

    components: tuple[float, ...]

    def __post_init__(self) -> None:
        comps = tuple(float(c) for c in self.components)
        n = math.sqrt(sum(c * c for c in comps))
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"direction must have unit norm, got |omega|={n!r}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_vector(cls, vec: Sequence[float]) -> "Direction":
        v = np.asarray(vec, dtype=float)
        n = float(np.linalg.norm(v))
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return cls(tuple(v / n))

    @property
    def dim(self) -> int:
        return len(self.components)

    def as_array(self) -> np.ndarray:
        return np.array(self.components, dtype=float)

    def dot(self, other: Sequence[float]) -> float:
        return float(sum(a * float(b) for a, b in zip(self.components, other, strict=True)))


def int_point(xi: Sequence[float]) -> LatticePoint:
    """Nearest lattice point toward the origin: truncate each coordinate.

    Int(xi)_i = sign(xi_i) * floor(|xi_i|).
    """
    return LatticePoint(tuple(int(np.trunc(float(c))) for c in xi))


def measurement_points(s: float, omega: Direction, zeta: LatticePoint) -> tuple[LatticePoint, LatticePoint]:
    """Detector pair (x, y) = (Int(s*omega), Int(s*omega) + zeta).

    The offset zeta must be nonzero and both points must avoid the origin,
    otherwise the outgoing direction of one of them is undefined.
    """
    if zeta.dim != omega.dim:
        raise ValueError("zeta and omega must share a dimension")
    if zeta.is_zero():
        raise ZeroOffset("zeta must be a nonzero lattice vector")
    x = int_point(s * omega.as_array())
    y = x + zeta
    if x.is_zero() or y.is_zero():
        raise ZeroPoint(f"measurement point at the origin for s={s}")
    return x, y


class Potential:
    """Finitely supported potential v : Z^d -> C.

    Zero-valued records are dropped, so ``support`` is exactly the set of
    sites where v is nonzero.  Iteration order is lexicographic in the
    coordinates, which keeps everything downstream deterministic.
    """

    def __init__(self, dim: int, entries: Mapping[LatticePoint, complex] | Mapping[tuple, complex]):
        self.dim = int(dim)
        cleaned: dict[LatticePoint, complex] = {}
        for p, v in entries.items():
            pt = p if isinstance(p, LatticePoint) else LatticePoint(tuple(p))
            if pt.dim != self.dim:
                raise ValueError(f"point {pt.coords} has wrong dimension (want {self.dim})")
            val = complex(v)
            if val != 0:
                cleaned[pt] = val
        self._entries = dict(sorted(cleaned.items(), key=lambda kv: kv[0].coords))

    @property
    def support(self) -> tuple[LatticePoint, ...]:
        return tuple(self._entries.keys())

    @property
    def support_box(self) -> tuple[tuple[int, int], ...]:
        """Per-axis (lo, hi) bounds of the support; ((0,0),...) if empty."""
        if not self._entries:
            return tuple((0, 0) for _ in range(self.dim))
        arr = np.array([p.coords for p in self._entries], dtype=int)
        return tuple((int(lo), int(hi)) for lo, hi in zip(arr.min(axis=0), arr.max(axis=0)))

    @property
    def is_real(self) -> bool:
        return all(abs(v.imag) == 0.0 for v in self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[LatticePoint]:
        return iter(self._entries)

    def __getitem__(self, p: LatticePoint) -> complex:
        return self._entries.get(p, 0.0 + 0.0j)

    def __call__(self, p: LatticePoint) -> complex:
        return self._entries.get(p, 0.0 + 0.0j)

    def items(self):
        return self._entries.items()

    def values_array(self) -> np.ndarray:
        return np.array([v for v in self._entries.values()], dtype=complex)

    def points_array(self) -> np.ndarray:
        return np.array([p.coords for p in self._entries], dtype=np.int64).reshape(len(self._entries), self.dim)

    def contains(self, p: LatticePoint) -> bool:
        """True if p lies in the support box (the scatterer region D)."""
        return all(lo <= c <= hi for c, (lo, hi) in zip(p.coords, self.support_box, strict=True))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "records": [
                {"point": list(p.coords), "re": v.real, "im": v.imag}
                for p, v in self._entries.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Potential":
        if "dim" not in data or "records" not in data:
            raise ValueError("potential dict needs 'dim' and 'records' keys")
        entries = {
            tuple(rec["point"]): complex(rec.get("re", 0.0), rec.get("im", 0.0))
            for rec in data["records"]
        }
        return cls(int(data["dim"]), entries)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Potential":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Potential) and other.dim == self.dim and other._entries == self._entries

    def __repr__(self) -> str:
        return f"Potential(dim={self.dim}, sites={len(self)}, box={self.support_box})"


def make_random_potential(
    dim: int,
    halfwidth: int,
    amplitude: float,
    seed: int,
    *,
    complex_values: bool = False,
    density: float = 1.0,
) -> Potential:
    """Seeded random potential on the box [-halfwidth, halfwidth]^d.

    Values are uniform on [-amplitude, amplitude] (plus an independent
    imaginary part when requested).  ``density`` thins the box: each site
    is kept with that probability.  The same seed always reproduces the
    same potential.
    """
    rng = np.random.default_rng(seed)
    side = range(-int(halfwidth), int(halfwidth) + 1)
    pts = [p for p in _box_points(dim, side)]
    entries: dict[tuple, complex] = {}
    for p in pts:
        if density < 1.0 and rng.random() >= density:
            continue
        val = rng.uniform(-amplitude, amplitude)
        if complex_values:
            val = complex(val, rng.uniform(-amplitude, amplitude))
        entries[p] = val
    return Potential(dim, entries)


def _box_points(dim: int, side) -> Iterator[tuple]:
    if dim == 1:
        for a in side:
            yield (a,)
    else:
        for a in side:
            for rest in _box_points(dim - 1, side):
                yield (a,) + rest
