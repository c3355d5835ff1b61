"""Recovery of the phased far-field amplitude from intensity-only data.

The scaled intensity deviation a(x) measured at a far detector mixes the
amplitude f and its conjugate:

    a(x) ~ e^{-i alpha(x)} f + e^{+i alpha(x)} conj(f),
    alpha(x) = k.x - m(x/|x|).x,

with k the incident wave vector and m(omega) the outgoing wave vector
along omega.  Two detectors x and y = x + zeta give a 2x2 linear system
whose determinant is D = 2i sin(alpha(y) - alpha(x)); solving it by
Cramer's rule is the whole phase-retrieval step.  D degenerates when the
argument hits a multiple of pi, which happens on a measure-zero set of
directions; everything here carries the determinant and its argument so
callers can screen or reject near-degenerate geometry.

In one dimension the same idea applies on the reflected side x < 0 with
the closed-form phases e^{2ikx}.  The two-point form needs |s21|^2 as an
extra input (the intensity offset); the three-point form eliminates it
and is self-contained.  The fixed-point iteration that feeds the
two-point form its own |s21|^2 is a heuristic with a limited contraction
domain, reported honestly via a convergence flag.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Direction, LatticePoint
from .dispersion import (
    d_asymptotic_argument,
    dist_to_pi_grid,
    lattice_phase,
    outgoing_gamma,
)
from .errors import DegenerateSeparation, NearSingularD
from .phaseless import PhaselessSample

DELTA_MIN = 1e-3
SEPARATION_TOL = 1e-6


@dataclass(frozen=True, slots=True)
class RecoveryResult:
    """Outcome of one pair recovery, with the determinant diagnostics.

    ``det_argument`` is the angle theta with det = 2i sin(theta);
    ``arg_distance`` is its distance to the nearest multiple of pi, the
    quantity the exceptional-set screen thresholds.  A rejected result
    carries ``f_plus = None`` and ``rejected = True`` instead of a value
    amplified by a near-zero determinant.
    """

    f_plus: complex | None
    det: complex
    det_argument: float
    arg_distance: float
    method: str
    s: float | None = None
    rejected: bool = False

    @property
    def det_modulus(self) -> float:
        return abs(self.det)


def _kvec(k) -> np.ndarray:
    if hasattr(k, "k_array"):
        return k.k_array()
    arr = np.asarray(k, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


def _turns(gauge, coords: Sequence[int]) -> int:
    if gauge is None:
        return 0
    z = [int(c) for c in gauge]
    if len(z) != len(coords):
        raise ValueError("gauge vector dimension does not match the point")
    return sum(zi * xi for zi, xi in zip(z, coords))


def _pair_angles(k: np.ndarray, x: LatticePoint, y: LatticePoint, E,
                 gauge=None) -> tuple[float, float, float]:
    """Phases alpha(x), alpha(y) and theta = alpha(y) - alpha(x).

    A gauge shift k -> k + 2 pi z (z integer) moves the whole wave-vector
    family at once; it enters as exact whole turns of each phase, never as
    a perturbed float wave vector.
    """
    m_x = outgoing_gamma(x.direction(), E)
    m_y = outgoing_gamma(y.direction(), E)
    t_x = _turns(gauge, x.coords)
    t_y = _turns(gauge, y.coords)
    alpha_x = lattice_phase(k, x.coords, t_x) - lattice_phase(m_x, x.coords, t_x)
    alpha_y = lattice_phase(k, y.coords, t_y) - lattice_phase(m_y, y.coords, t_y)
    return alpha_x, alpha_y, alpha_y - alpha_x


def pair_determinant(k, x: LatticePoint, y: LatticePoint, E, *, gauge=None) -> complex:
    """Determinant 2i sin(k.zeta + m(x^).x - m(y^).y) of the two-detector system."""
    _, _, theta = _pair_angles(_kvec(k), x, y, E, gauge)
    return complex(0.0, 2.0 * math.sin(theta))


def recover_pair(sample_x: PhaselessSample, sample_y: PhaselessSample, E, *,
                 delta_min: float = DELTA_MIN, gauge=None,
                 on_singular: str = "raise") -> RecoveryResult:
    """Phased amplitude from two intensity readings at x and y = x + zeta.

    Solves the conjugate-pair system by Cramer's rule,

        f = (e^{i alpha(y)} a(x) - e^{i alpha(x)} a(y)) / D,

    and refuses to divide when |D| < delta_min: with ``on_singular="raise"``
    that raises NearSingularD, with ``"reject"`` it returns a rejected
    result so batch callers can keep going.
    """
    if on_singular not in ("raise", "reject"):
        raise ValueError("on_singular must be 'raise' or 'reject'")
    x, y = sample_x.x, sample_y.x
    if x.dim < 2:
        raise ValueError("pair recovery is for d >= 2; use the two- or three-point forms in d = 1")
    if x.dim != y.dim:
        raise ValueError("samples live on lattices of different dimension")
    if x == y:
        raise ValueError("the two detectors must be distinct")
    if any(abs(a - b) > 1e-12 for a, b in zip(sample_x.k, sample_y.k)):
        raise ValueError("samples were taken with different incident wave vectors")

    k = _kvec(sample_x.k)
    alpha_x, alpha_y, theta = _pair_angles(k, x, y, E, gauge)
    det = complex(0.0, 2.0 * math.sin(theta))
    arg_dist = dist_to_pi_grid(theta)
    s = sample_x.s if sample_x.s is not None else math.sqrt(sum(c * c for c in x.coords))

    if abs(det) < delta_min:
        if on_singular == "raise":
            raise NearSingularD(
                f"|D| = {abs(det):.3e} < {delta_min:.1e}; geometry is near the exceptional set")
        return RecoveryResult(f_plus=None, det=det, det_argument=theta,
                              arg_distance=arg_dist, method="pair", s=s, rejected=True)

    num = cmath.exp(1j * alpha_y) * sample_x.a - cmath.exp(1j * alpha_x) * sample_y.a
    return RecoveryResult(f_plus=num / det, det=det, det_argument=theta,
                          arg_distance=arg_dist, method="pair", s=s)


def pair_components(sample_x: PhaselessSample, sample_y: PhaselessSample, E, *,
                    gauge=None) -> tuple[complex, complex]:
    """Both unknowns of the two-detector system via a dense linear solve.

    The second component should be the conjugate of the first whenever the
    a-inputs are real; comparing the two is a double-entry check on the
    Cramer route used by recover_pair.
    """
    x, y = sample_x.x, sample_y.x
    k = _kvec(sample_x.k)
    alpha_x, alpha_y, _ = _pair_angles(k, x, y, E, gauge)
    mat = np.array([
        [cmath.exp(-1j * alpha_x), cmath.exp(1j * alpha_x)],
        [cmath.exp(-1j * alpha_y), cmath.exp(1j * alpha_y)],
    ])
    sol = np.linalg.solve(mat, np.array([sample_x.a, sample_y.a], dtype=complex))
    return complex(sol[0]), complex(sol[1])


def gauge_shift_test(sample_x: PhaselessSample, sample_y: PhaselessSample, E,
                     z: Sequence[int], *, tol: float = 1e-12) -> bool:
    """Whether shifting the wave-vector family by 2 pi z leaves f unchanged.

    The shift multiplies every lattice plane wave by e^{2 pi i z.x} = 1, so
    the recovered amplitude must agree to roundoff; tol sets the bar.
    """
    base = recover_pair(sample_x, sample_y, E)
    shifted = recover_pair(sample_x, sample_y, E, gauge=z)
    return abs(base.f_plus - shifted.f_plus) <= tol


# -- one-dimensional forms --------------------------------------------------


def _check_left_points(*xs: int) -> None:
    for x in xs:
        if not isinstance(x, (int, np.integer)):
            raise ValueError("detector positions must be integers")
        if x >= 0:
            raise ValueError("one-dimensional recovery reads the reflected side x < 0")
    if len(set(int(x) for x in xs)) != len(xs):
        raise ValueError("detector positions must be distinct")


def _e2(k: float, x: int) -> complex:
    return cmath.exp(1j * lattice_phase((2.0 * k,), (x,)))


def recover_two_point_d1(a_x: float, a_y: float, x: int, y: int, k: float,
                         s21_sq: float) -> complex:
    """Reflection amplitude from two left-side intensities and |s21|^2.

    On the reflected side a(x) = |s21|^2 + 2 Re(s21 e^{-2ikx}); subtracting
    the supplied |s21|^2 leaves a two-unknown conjugate system solved in
    closed form.  Degenerates when 2k(y - x) hits pi Z.
    """
    _check_left_points(x, y)
    dd = y - x
    if abs(math.sin(2.0 * k * dd)) < SEPARATION_TOL:
        raise DegenerateSeparation(
            f"separation {dd} is congruent to 0 mod pi/(2k) for k = {k:.6f}")
    det = complex(0.0, 2.0 * math.sin(2.0 * k * dd))
    ex, ey = _e2(k, x), _e2(k, y)
    num = ey * a_x - ex * a_y + s21_sq * (ex - ey)
    return num / det


def recover_two_point_d1_iterated(a_x: float, a_y: float, x: int, y: int, k: float, *,
                                  s21_init: float = 0.0, max_iter: int = 30,
                                  tol: float = 1e-12) -> tuple[complex, int, bool]:
    """Fixed-point mode: feed the two-point form its own |s21|^2.

    Starts from s21_init, iterates q <- |recover(q)|^2, and stops when q
    moves by less than tol.  The map contracts only when |s21| is small
    compared to |cos(k(y-x))|, so the converged flag in the return value
    is part of the answer, not an error channel.
    """
    q = float(s21_init)
    s = recover_two_point_d1(a_x, a_y, x, y, k, q)
    for it in range(1, max_iter + 1):
        s = recover_two_point_d1(a_x, a_y, x, y, k, q)
        mod = abs(s)
        if not math.isfinite(mod) or mod > 1e3:
            # physical reflection never exceeds 1; a runaway iterate means
            # the map expands for this geometry, report instead of blowing up
            return s, it, False
        q_next = mod * mod
        if abs(q_next - q) < tol:
            return s, it, True
        q = q_next
    return s, max_iter, False


def recover_three_point_d1(a1: float, a2: float, a3: float,
                           x1: int, x2: int, x3: int, k: float) -> complex:
    """Reflection amplitude from three left-side intensities, no extra input.

    Differencing the readings eliminates the unknown |s21|^2 offset; the
    remaining 2x2 system has determinant

        D = 2i (sin 2k(x3-x2) + sin 2k(x2-x1) + sin 2k(x1-x3))
          = 8i sin k(x2-x3) sin k(x2-x1) sin k(x1-x3),

    and the product form shows exactly when it degenerates: some pair of
    detectors congruent mod pi/k.  Both forms are evaluated and must agree
    to roundoff; a mismatch means the implementation is broken, not the data.
    """
    _check_left_points(x1, x2, x3)
    pairs = ((x2, x3), (x2, x1), (x1, x3))
    sines = [math.sin(k * (p - q)) for p, q in pairs]
    for (p, q), sn in zip(pairs, sines):
        if abs(sn) < SEPARATION_TOL:
            raise DegenerateSeparation(
                f"positions {p} and {q} are congruent mod pi/k for k = {k:.6f}")
    det = complex(0.0, 2.0 * (math.sin(2.0 * k * (x3 - x2))
                              + math.sin(2.0 * k * (x2 - x1))
                              + math.sin(2.0 * k * (x1 - x3))))
    det_prod = 8j * sines[0] * sines[1] * sines[2]
    if abs(det - det_prod) > 1e-12 * max(1.0, abs(det)):
        raise ArithmeticError(
            f"determinant forms disagree: additive {det}, product {det_prod}")
    e1, e2_, e3 = _e2(k, x1), _e2(k, x2), _e2(k, x3)
    num = (e3 - e1) * (a2 - a1) + (e1 - e2_) * (a3 - a1)
    return num / det


# -- exceptional-direction screening ----------------------------------------


@dataclass(frozen=True, slots=True)
class ExceptionalSetReport:
    """Sampled distances to the degenerate-direction set and their tail.

    fractions[i] is the share of sampled directions whose determinant
    argument sits within deltas[i] of pi Z; monotone in delta by
    construction, and shrinking roughly linearly because the set itself
    has measure zero.
    """

    omegas: tuple[tuple[float, ...], ...]
    distances: np.ndarray
    deltas: tuple[float, ...]
    fractions: tuple[float, ...]

    def fraction_below(self, delta: float) -> float:
        return float(np.mean(self.distances < delta))


def exceptional_scan(k, zeta: LatticePoint, E, omegas: Sequence[Direction],
                     deltas: Sequence[float] = (1e-1, 1e-2, 1e-3)) -> ExceptionalSetReport:
    """Distance of each direction's determinant argument to pi Z."""
    kk = _kvec(k)
    dist = np.array([dist_to_pi_grid(d_asymptotic_argument(kk, w, zeta, E))
                     for w in omegas])
    fr = tuple(float(np.mean(dist < d)) for d in deltas)
    return ExceptionalSetReport(
        omegas=tuple(w.components for w in omegas), distances=dist,
        deltas=tuple(float(d) for d in deltas), fractions=fr)


def screen_directions(k, zeta: LatticePoint, E, omegas: Sequence[Direction],
                      delta: float) -> list[Direction]:
    """Directions whose determinant argument keeps distance >= delta from pi Z."""
    kk = _kvec(k)
    return [w for w in omegas
            if dist_to_pi_grid(d_asymptotic_argument(kk, w, zeta, E)) >= delta]


def circle_grid(n: int) -> list[Direction]:
    """n directions uniformly spaced on the unit circle."""
    if n < 1:
        raise ValueError("need at least one direction")
    out = []
    for j in range(n):
        th = 2.0 * math.pi * j / n
        out.append(Direction((math.cos(th), math.sin(th))))
    return out


def random_directions(dim: int, count: int, seed: int) -> list[Direction]:
    """Seeded uniform directions on the unit sphere in R^dim."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        v = rng.standard_normal(dim)
        nrm = float(np.linalg.norm(v))
        if nrm < 1e-6:
            continue
        out.append(Direction.from_vector(v / nrm))
    return out
