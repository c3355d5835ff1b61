"""Level-set geometry of the lattice symbol phi(k) = 2 sum_i cos(k_i).

For an admissible energy in the convex regime the level set

    Gamma(E) = { k in T^d : phi(k) = E }

bounds a strictly convex region, and every unit direction omega picks out a
unique point gamma(omega, E) on it with outward normal omega.  The phase
speed of the far field along a lattice ray x is governed by

    mu(omega, E) = gamma(omega, E) . omega,       omega = x/|x|,

and the exact identity mu(x/|x|, E) |x| = gamma(x/|x|, E) . x makes the
far-field phase computable without any rounding of directions.

Conventions.  For E > 0 the level set is taken symmetric about the origin,
inside (-pi, pi)^d.  For E < 0 (d >= 2) it is taken symmetric about the
all-pi point, inside [0, 2pi]^d, via gamma(omega, E) = pi*1 + gamma(omega, -E).
For d = 1 both signs use Gamma(E) = {+-arccos(E/2)}.

The plane waves that solve the free equation -Delta psi = E psi are
e^{ik.x} with phi(k) = -E, a shifted copy of Gamma(E).  The helpers
``outgoing_gamma`` / ``outgoing_phase`` return the representative of that
shifted set whose group velocity 2 sin(k) points along +omega; these are
the wave vectors the forward solver and the phase recovery actually use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .core import Direction, Energy, LatticePoint, check_energy
from .errors import NoConvergence, NonConvexRegime

_KKT_TOL = 1e-12
_KKT_ACCEPT = 1e-10
_MAX_NEWTON = 60


def phi(k: Sequence[float]) -> float:
    """Symbol of the pure hopping part: phi(k) = 2 sum_i cos(k_i)."""
    arr = np.asarray(k, dtype=float)
    return float(2.0 * np.cos(arr).sum(axis=-1))


@dataclass(frozen=True, slots=True)
class DispersionPoint:
    """Support point of Gamma(E) in a given direction, with diagnostics."""

    gamma: tuple[float, ...]
    omega: tuple[float, ...]
    energy: float
    mu: float
    kkt_residual: float
    iterations: int
    method: str

    def gamma_array(self) -> np.ndarray:
        return np.array(self.gamma, dtype=float)


def _energy_obj(E, dim: int) -> Energy:
    if isinstance(E, Energy):
        if E.dimension != dim:
            raise ValueError(f"energy was validated for d={E.dimension}, not d={dim}")
        return E
    return check_energy(float(E), dim)


def _radial_bracket_solve(omega: np.ndarray, E: float) -> np.ndarray:
    """Point of Gamma(E) on the ray r*omega, E > 2d-4 assumed."""
    rmax = math.pi / float(np.max(np.abs(omega)))

    def f(r: float) -> float:
        return phi(r * omega) - E

    lo, hi = 0.0, rmax
    # phi(r*omega) is strictly decreasing on [0, rmax] and crosses E there.
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * omega


def _kkt_residual(k: np.ndarray, lam: float, omega: np.ndarray, E: float) -> float:
    r1 = omega + 2.0 * lam * np.sin(k)
    r2 = phi(k) - E
    return float(max(np.max(np.abs(r1)), abs(r2)))


def _gamma_newton(omega: np.ndarray, E: float) -> tuple[np.ndarray, float, float, int]:
    """Damped Newton on the stationarity system for max k.omega on Gamma(E)."""
    d = omega.size
    k = _radial_bracket_solve(omega, E)
    s = np.sin(k)
    lam = -float(omega @ s) / (2.0 * float(s @ s))

    def F(k: np.ndarray, lam: float) -> np.ndarray:
        return np.concatenate([omega + 2.0 * lam * np.sin(k), [phi(k) - E]])

    fval = F(k, lam)
    for it in range(1, _MAX_NEWTON + 1):
        if np.max(np.abs(fval)) < _KKT_TOL:
            return k, lam, float(np.max(np.abs(fval))), it
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = np.diag(2.0 * lam * np.cos(k))
        J[:d, d] = 2.0 * np.sin(k)
        J[d, :d] = -2.0 * np.sin(k)
        try:
            step = np.linalg.solve(J, -fval)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        base = np.max(np.abs(fval))
        for _ in range(40):
            k_new = k + alpha * step[:d]
            lam_new = lam + alpha * step[d]
            f_new = F(k_new, lam_new)
            if np.max(np.abs(f_new)) < (1.0 - 1e-4 * alpha) * base:
                k, lam, fval = k_new, lam_new, f_new
                break
            alpha *= 0.5
        else:
            break
    res = float(np.max(np.abs(F(k, lam))))
    return k, lam, res, _MAX_NEWTON


def _gamma_direct_search(omega: np.ndarray, E: float) -> np.ndarray:
    """Fallback: maximize the support function over ray directions."""
    d = omega.size

    def support_point(u: np.ndarray) -> np.ndarray:
        u = u / np.linalg.norm(u)
        return _radial_bracket_solve(u, E)

    if d == 2:
        theta0 = math.atan2(omega[1], omega[0])

        def neg_h(theta: float) -> float:
            u = np.array([math.cos(theta), math.sin(theta)])
            return -float(support_point(u) @ omega)

        res = optimize.minimize_scalar(
            neg_h, bounds=(theta0 - 0.5 * math.pi, theta0 + 0.5 * math.pi), method="bounded",
            options={"xatol": 1e-14},
        )
        u = np.array([math.cos(res.x), math.sin(res.x)])
        return support_point(u)

    def neg_h_angles(ang: np.ndarray) -> float:
        th, ph = ang
        u = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
        if np.linalg.norm(u) < 1e-12:
            return 0.0
        return -float(support_point(u) @ omega)

    th0 = math.acos(min(1.0, max(-1.0, omega[2])))
    ph0 = math.atan2(omega[1], omega[0])
    res = optimize.minimize(neg_h_angles, np.array([th0, ph0]), method="Powell",
                            options={"xtol": 1e-13, "ftol": 1e-15, "maxiter": 4000})
    th, ph = res.x
    u = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
    return support_point(u)


_GAMMA_CACHE: dict[tuple, DispersionPoint] = {}


def gamma_cache_clear() -> None:
    _GAMMA_CACHE.clear()


def gamma_of_omega(omega: Direction, E) -> DispersionPoint:
    """Support point gamma(omega, E) of Gamma(E) with outward normal omega.

    Requires the convex regime 2d-4 < |E| < 2d for d >= 2.  For E < 0 the
    point is returned in the cube [0, 2pi]^d around the all-pi point.
    """
    en = _energy_obj(E, omega.dim)
    d = omega.dim
    if d >= 2 and not en.convex_regime:
        raise NonConvexRegime(f"|E|={abs(en.value)} not in ({2*d-4}, {2*d}) for d={d}")

    key = (d, round(en.value, 12), tuple(round(c, 9) for c in omega.components))
    hit = _GAMMA_CACHE.get(key)
    if hit is not None:
        return hit

    if d == 1:
        sgn = 1.0 if omega.components[0] > 0 else -1.0
        g = sgn * math.acos(en.value / 2.0)
        pt = DispersionPoint(
            gamma=(g,), omega=omega.components, energy=en.value,
            mu=g * omega.components[0], kkt_residual=0.0, iterations=0, method="closed-form",
        )
        _GAMMA_CACHE[key] = pt
        return pt

    w = omega.as_array()
    e_pos = abs(en.value)
    k, lam, res, iters = _gamma_newton(w, e_pos)
    method = "newton"
    if res > _KKT_ACCEPT or lam >= 0.0:
        k = _gamma_direct_search(w, e_pos)
        s = np.sin(k)
        lam = -float(w @ s) / (2.0 * float(s @ s))
        k, lam, res, iters = _gamma_newton_polish(k, lam, w, e_pos)
        method = "direct-search"
        if res > _KKT_ACCEPT:
            raise NoConvergence(f"gamma solve stalled at KKT residual {res:.3e}")

    if en.value < 0.0:
        k = np.pi + k
    mu = float(k @ w)
    pt = DispersionPoint(
        gamma=tuple(k), omega=omega.components, energy=en.value,
        mu=mu, kkt_residual=res, iterations=iters, method=method,
    )
    _GAMMA_CACHE[key] = pt
    return pt


def _gamma_newton_polish(k0: np.ndarray, lam0: float, omega: np.ndarray, E: float):
    d = omega.size
    k, lam = k0.copy(), lam0
    for it in range(1, 30):
        r1 = omega + 2.0 * lam * np.sin(k)
        r2 = phi(k) - E
        fval = np.concatenate([r1, [r2]])
        if np.max(np.abs(fval)) < _KKT_TOL:
            return k, lam, float(np.max(np.abs(fval))), it
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = np.diag(2.0 * lam * np.cos(k))
        J[:d, d] = 2.0 * np.sin(k)
        J[d, :d] = -2.0 * np.sin(k)
        try:
            step = np.linalg.solve(J, -fval)
        except np.linalg.LinAlgError:
            break
        k = k + step[:d]
        lam = lam + step[d]
    return k, lam, _kkt_residual(k, lam, omega, E), 30


def mu_of_omega(omega: Direction, E) -> float:
    """Phase speed mu(omega, E) = gamma(omega, E) . omega."""
    return gamma_of_omega(omega, E).mu


def phase_exponent(x: LatticePoint, E) -> float:
    """gamma(x/|x|, E) . x, the exact far-field phase at the lattice point x."""
    pt = gamma_of_omega(x.direction(), E)
    return float(np.dot(pt.gamma_array(), x.as_array()))


def outgoing_gamma(omega: Direction, E) -> np.ndarray:
    """Wave vector m with phi(m) = -E and group velocity 2 sin(m) along +omega.

    This is the representative of the free-wave level set used for incident
    waves and far-field phases: for E > 0 it is the reflection
    pi*sign(omega) - gamma(omega, E); for E < 0 it is gamma(omega, -E) itself.
    Components lie in [-pi, pi].
    """
    en = _energy_obj(E, omega.dim)
    d = omega.dim
    if d == 1:
        k = math.acos(-en.value / 2.0)
        return np.array([k if omega.components[0] > 0 else -k])
    if en.value < 0.0:
        return gamma_of_omega(omega, check_energy(-en.value, d)).gamma_array()
    g = gamma_of_omega(omega, en).gamma_array()
    sgn = np.where(np.asarray(omega.components) >= 0.0, 1.0, -1.0)
    return math.pi * sgn - g


def outgoing_phase(x: LatticePoint, E) -> float:
    """outgoing_gamma(x/|x|, E) . x; increases along every outgoing ray."""
    m = outgoing_gamma(x.direction(), E)
    return float(np.dot(m, x.as_array()))


def d_asymptotic_argument(k: Sequence[float], omega: Direction, zeta: LatticePoint, E) -> float:
    """Leading argument (k - m(omega)) . zeta of the recovery determinant.

    Here k is the incident wave vector and m(omega) = outgoing_gamma(omega, E)
    the far-field wave vector seen along omega; both lie on the same
    traveling-wave level set, so their difference is convention-free.  The
    determinant degenerates along directions where this argument is a
    multiple of pi, so its distance to pi*Z measures how safe the
    measurement geometry is.
    """
    m = outgoing_gamma(omega, E)
    return float(np.dot(np.asarray(k, dtype=float) - m, zeta.as_array()))


def dist_to_pi_grid(t: float) -> float:
    """Distance from t to the nearest integer multiple of pi."""
    return abs(t - math.pi * round(t / math.pi))


_PI_LONG = np.longdouble("3.141592653589793238462643383279502884")
_TWO_PI_LONG = np.longdouble(2) * _PI_LONG


def lattice_phase(k: Sequence[float], x: Sequence[int], turns: int = 0) -> float:
    """k . x reduced to [-pi, pi], accumulated in extended precision.

    Detectors sit at |x| up to ~1e3 lattice steps, where a plain double
    dot product already loses three digits of phase; reducing modulo 2*pi
    before any trig keeps the recovered amplitudes honest.  ``turns``
    adds 2*pi*turns, an exact no-op on the circle, so wave-vector shifts
    by full reciprocal-lattice periods can be fed through the same path.
    """
    kk = np.asarray(k, dtype=np.longdouble)
    xx = np.asarray(x, dtype=np.longdouble)
    phi = np.dot(kk, xx) + np.longdouble(turns) * _TWO_PI_LONG
    return float(phi - _TWO_PI_LONG * np.rint(phi / _TWO_PI_LONG))


@dataclass(frozen=True, slots=True)
class TangentialProjection:
    """Projector onto the hyperplane orthogonal to a direction."""

    omega: Direction

    def apply(self, vec: Sequence[float]) -> np.ndarray:
        v = np.asarray(vec, dtype=float)
        w = self.omega.as_array()
        return v - (v @ w) * w

    def basis(self) -> np.ndarray:
        """(d-1, d) orthonormal basis of the tangent hyperplane."""
        w = self.omega.as_array()
        d = w.size
        # columns of the identity minus the normal component, orthonormalized
        mats = np.eye(d) - np.outer(w, w)
        q, r = np.linalg.qr(mats)
        cols = [q[:, i] for i in range(d) if abs(r[i, i]) > 1e-10]
        basis = np.array(cols[: d - 1])
        if basis.shape[0] != d - 1:
            raise np.linalg.LinAlgError("tangent basis extraction failed")
        return basis
