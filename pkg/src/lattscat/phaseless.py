"""Intensity-only measurements of the scattered wave.

A detector at lattice site x reports |psi(x)|^2 and nothing else.  The
scaled deviation from the incident intensity,

    a(x) = |x|^{(d-1)/2} (|psi(x)|^2 - 1),

stays bounded along outgoing rays and is the sole input of the phase
recovery stage.  Everything here reduces the complex field to that real
number as early as possible: downstream code never sees arg(psi), so a
constant phase on psi cannot influence any result.

Measurement geometry follows the two-detector layout: a base point
x = Int(s*omega) far out along a ray plus a companion y = x + zeta at a
fixed lattice offset.  Optional multiplicative noise models detector
gain error; it is seeded and exactly reproducible.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core import Direction, LatticePoint, measurement_points
from .errors import InsideSupport, ZeroPoint
from .forward import ScatteringSolution, evaluate_psi_many


@dataclass(frozen=True, slots=True)
class PhaselessSample:
    """One intensity reading, reduced to the real scaled deviation a."""

    x: LatticePoint
    a: float
    k: tuple[float, ...]
    s: float | None = None
    omega: tuple[float, ...] | None = None
    zeta: tuple[int, ...] | None = None
    eta: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.x.is_zero():
            raise ZeroPoint("intensity samples are taken away from the origin")
        object.__setattr__(self, "a", float(self.a))


def _radius(x: LatticePoint) -> float:
    return math.sqrt(sum(c * c for c in x.coords))


def _deviation(psi: complex, x: LatticePoint, dim: int) -> float:
    intensity = psi.real * psi.real + psi.imag * psi.imag
    return _radius(x) ** ((dim - 1) / 2.0) * (intensity - 1.0)


def sample_a(sol: ScatteringSolution, x, **meta) -> PhaselessSample:
    """Measure a(x) for one detector site."""
    pt = x if isinstance(x, LatticePoint) else LatticePoint(tuple(x))
    if pt.is_zero():
        raise ZeroPoint("intensity samples are taken away from the origin")
    psi = evaluate_psi_many(sol, [pt])[0]
    return PhaselessSample(x=pt, a=_deviation(complex(psi), pt, sol.dim),
                           k=sol.incident.k, **meta)


def sample_many(sol: ScatteringSolution, xs: Sequence, **meta) -> list[PhaselessSample]:
    """Batch form of sample_a; one green-function fetch for all sites."""
    pts = [x if isinstance(x, LatticePoint) else LatticePoint(tuple(x)) for x in xs]
    for p in pts:
        if p.is_zero():
            raise ZeroPoint("intensity samples are taken away from the origin")
    psi = evaluate_psi_many(sol, pts)
    return [PhaselessSample(x=p, a=_deviation(complex(ps), p, sol.dim),
                            k=sol.incident.k, **meta)
            for p, ps in zip(pts, psi)]


def sample_pair(sol: ScatteringSolution, s: float, omega: Direction,
                zeta: LatticePoint) -> tuple[PhaselessSample, PhaselessSample]:
    """Two-detector reading at x = Int(s*omega) and y = x + zeta.

    Both sites must lie outside the scatterer region; a detector inside
    the support would not measure a scattered far field at all.
    """
    x, y = measurement_points(s, omega, zeta)
    for p in (x, y):
        if sol.potential.contains(p):
            raise InsideSupport(f"measurement point {p.coords} is inside the support")
    psi = evaluate_psi_many(sol, [x, y])
    d = sol.dim
    zero = tuple(0 for _ in range(d))
    sx = PhaselessSample(x=x, a=_deviation(complex(psi[0]), x, d), k=sol.incident.k,
                         s=float(s), omega=omega.components, zeta=zero)
    sy = PhaselessSample(x=y, a=_deviation(complex(psi[1]), y, d), k=sol.incident.k,
                         s=float(s), omega=omega.components, zeta=zeta.coords)
    return sx, sy


def add_noise(sample: PhaselessSample, eta: float, seed: int) -> PhaselessSample:
    """Multiplicative gain error a -> a (1 + eta u), u uniform on [-1, 1].

    Seeded and deterministic; eta = 0 reproduces the sample exactly.
    """
    if eta < 0:
        raise ValueError("noise level must be non-negative")
    u = float(np.random.default_rng(seed).uniform(-1.0, 1.0))
    return replace(sample, a=sample.a * (1.0 + eta * u), eta=float(eta), seed=int(seed))


# -- CSV schema -------------------------------------------------------------
#
# columns: s, omega_1..omega_d, zeta_1..zeta_d, x_1..x_d, a, eta, seed
# floats are written with repr-faithful %.17g so rereading is lossless.


def _fmt(v: float) -> str:
    return "%.17g" % float(v)


def sample_header(dim: int) -> list[str]:
    cols = ["s"]
    cols += [f"omega_{i+1}" for i in range(dim)]
    cols += [f"zeta_{i+1}" for i in range(dim)]
    cols += [f"x_{i+1}" for i in range(dim)]
    cols += ["a", "eta", "seed"]
    return cols


def write_samples(fh, samples: Iterable[PhaselessSample]) -> None:
    rows = list(samples)
    if not rows:
        raise ValueError("no samples to write")
    dim = rows[0].x.dim
    out = csv.writer(fh, lineterminator="\n")
    out.writerow(sample_header(dim))
    for r in rows:
        omega = r.omega if r.omega is not None else tuple(0.0 for _ in range(dim))
        zeta = r.zeta if r.zeta is not None else tuple(0 for _ in range(dim))
        row = [_fmt(r.s if r.s is not None else 0.0)]
        row += [_fmt(c) for c in omega]
        row += [str(int(c)) for c in zeta]
        row += [str(int(c)) for c in r.x.coords]
        row += [_fmt(r.a), _fmt(r.eta), "" if r.seed is None else str(int(r.seed))]
        out.writerow(row)


def samples_to_csv(samples: Iterable[PhaselessSample]) -> str:
    buf = io.StringIO()
    write_samples(buf, samples)
    return buf.getvalue()


def read_samples(fh, k: Sequence[float]) -> list[PhaselessSample]:
    """Parse the schema above; k is not stored in the file and must be given."""
    rdr = csv.reader(fh)
    header = next(rdr)
    if not header or header[0] != "s":
        raise ValueError("not a phaseless-sample CSV (missing 's' column)")
    dim = sum(1 for c in header if c.startswith("omega_"))
    if dim == 0 or header != sample_header(dim):
        raise ValueError(f"unexpected sample CSV header: {header}")
    kt = tuple(float(c) for c in k)
    if len(kt) != dim:
        raise ValueError(f"wave vector has dimension {len(kt)}, file has {dim}")
    out = []
    for row in rdr:
        if not row:
            continue
        s = float(row[0])
        omega = tuple(float(c) for c in row[1:1 + dim])
        zeta = tuple(int(c) for c in row[1 + dim:1 + 2 * dim])
        x = LatticePoint(tuple(int(c) for c in row[1 + 2 * dim:1 + 3 * dim]))
        a = float(row[1 + 3 * dim])
        eta = float(row[2 + 3 * dim])
        seed_s = row[3 + 3 * dim]
        out.append(PhaselessSample(
            x=x, a=a, k=kt, s=s or None, omega=omega, zeta=zeta,
            eta=eta, seed=int(seed_s) if seed_s else None))
    return out
