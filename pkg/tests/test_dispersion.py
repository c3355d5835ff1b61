import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize, minimize_scalar

from lattscat.core import Direction, LatticePoint
from lattscat.dispersion import (
    TangentialProjection,
    d_asymptotic_argument,
    dist_to_pi_grid,
    gamma_of_omega,
    lattice_phase,
    mu_of_omega,
    outgoing_gamma,
    phi,
)
from lattscat.errors import NonConvexRegime


def _unit(vec):
    return Direction.from_vector(vec)


def brute_support_d2(omega, e_pos):
    """max k.omega on the set cos k1 + cos k2 = e_pos/2 by 1-d optimization.

    Independent of the constrained-Newton path: parametrizes the level set
    explicitly and hands the scalar problem to a bracketed minimizer.
    """
    c = e_pos / 2.0
    w1, w2 = omega.components
    lim = math.acos(max(c - 1.0, -1.0))
    s1 = 1.0 if w1 >= 0 else -1.0

    def neg(k2):
        t = c - math.cos(k2)
        t = min(1.0, max(-1.0, t))
        return -(w1 * s1 * math.acos(t) + w2 * k2)

    res = minimize_scalar(neg, bounds=(-lim, lim), method="bounded",
                          options={"xatol": 1e-12})
    return -res.fun


def brute_support_d3(omega, e_pos):
    c = e_pos / 2.0
    w = np.asarray(omega.components)
    s1 = 1.0 if w[0] >= 0 else -1.0

    def neg(k23):
        t = c - math.cos(k23[0]) - math.cos(k23[1])
        if abs(t) > 1.0:
            return 10.0
        return -(w[0] * s1 * math.acos(t) + w[1] * k23[0] + w[2] * k23[1])

    best = 10.0
    for seed in np.linspace(-0.8, 0.8, 5):
        r = minimize(neg, x0=[seed * w[1], seed * w[2]], method="Nelder-Mead",
                     options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, r.fun)
    return -best


def test_gamma_d1_closed_form():
    pt = gamma_of_omega(Direction((1.0,)), 1.2)
    assert pt.gamma[0] == pytest.approx(math.acos(0.6), abs=1e-15)
    assert pt.kkt_residual == 0.0
    neg = gamma_of_omega(Direction((-1.0,)), 1.2)
    assert neg.gamma[0] == pytest.approx(-math.acos(0.6), abs=1e-15)


def test_gamma_axis_direction_d2_closed_form():
    # along an axis the constrained maximum has the other coordinate at 0
    pt = gamma_of_omega(Direction((1.0, 0.0)), 2.5)
    assert pt.mu == pytest.approx(math.acos(0.25), abs=1e-12)
    assert pt.gamma[1] == pytest.approx(0.0, abs=1e-12)


def test_mu_matches_brute_force_d2():
    rng = np.random.default_rng(3)
    for e_pos in (2.5, 1.0, 3.2):
        for _ in range(12):
            w = _unit(rng.normal(size=2))
            mu = mu_of_omega(w, e_pos)
            assert mu == pytest.approx(brute_support_d2(w, e_pos), abs=1e-9)


def test_mu_matches_brute_force_d3():
    rng = np.random.default_rng(4)
    for _ in range(6):
        w = _unit(rng.normal(size=3))
        mu = mu_of_omega(w, 5.0)
        assert mu == pytest.approx(brute_support_d3(w, 5.0), abs=1e-7)


def test_mu_negative_energy_axis_value_d2():
    # support point for E < 0 sits in the shifted cube around (pi, pi)
    assert mu_of_omega(Direction((1.0, 0.0)), -2.0) == pytest.approx(
        1.5 * math.pi, abs=1e-12)


def test_gamma_kkt_residuals_small():
    rng = np.random.default_rng(5)
    for d, E in ((2, 2.5), (2, -1.7), (3, 5.0), (3, -4.4)):
        for _ in range(10):
            pt = gamma_of_omega(_unit(rng.normal(size=d)), E)
            assert pt.kkt_residual < 1e-10


def test_gamma_lies_on_level_set():
    rng = np.random.default_rng(6)
    for d, E in ((2, 2.5), (3, 5.0)):
        for _ in range(10):
            pt = gamma_of_omega(_unit(rng.normal(size=d)), E)
            assert phi(np.array(pt.gamma)) == pytest.approx(abs(E), abs=1e-10)


def test_gamma_antisymmetric_in_omega():
    rng = np.random.default_rng(7)
    for _ in range(8):
        w = _unit(rng.normal(size=2))
        neg = Direction(tuple(-c for c in w.components))
        a = np.array(gamma_of_omega(w, 2.5).gamma)
        b = np.array(gamma_of_omega(neg, 2.5).gamma)
        assert np.allclose(a, -b, atol=1e-10)


def test_outgoing_gamma_solves_free_equation():
    rng = np.random.default_rng(8)
    for d, E in ((1, 1.3), (1, -0.8), (2, 2.5), (2, -2.5), (3, 5.0), (3, -5.0)):
        for _ in range(8):
            w = _unit(rng.normal(size=d))
            m = outgoing_gamma(w, E)
            assert phi(m) == pytest.approx(-E, abs=1e-9)
            assert float(np.dot(2.0 * np.sin(m), w.as_array())) > 0.0


def test_nonconvex_energy_rejected_d3():
    with pytest.raises(NonConvexRegime):
        gamma_of_omega(_unit((1.0, 1.0, 1.0)), 1.5)


def test_dist_to_pi_grid_examples():
    assert dist_to_pi_grid(0.0) == 0.0
    assert dist_to_pi_grid(math.pi) == pytest.approx(0.0, abs=1e-15)
    assert dist_to_pi_grid(0.5 * math.pi) == pytest.approx(0.5 * math.pi)
    assert dist_to_pi_grid(-3.6 * math.pi) == pytest.approx(0.4 * math.pi)


def test_lattice_phase_matches_plain_dot_for_small_args():
    assert lattice_phase((0.3, -1.1), (2, 1)) == pytest.approx(-0.5, abs=1e-13)


def test_lattice_phase_reduces_to_principal_interval():
    val = lattice_phase((0.3, 0.3), (1000, 1000))
    assert -math.pi <= val <= math.pi
    assert val == pytest.approx(600.0 - 190 * math.pi, abs=1e-10)


def test_lattice_phase_turns_are_exact_noops():
    k = (0.29, -1.07, 0.55)
    x = (431, -217, 88)
    base = lattice_phase(k, x)
    for turns in (-3, 1, 7):
        assert lattice_phase(k, x, turns=turns) == pytest.approx(base, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=3),
       st.lists(st.integers(-2000, 2000), min_size=2, max_size=3))
def test_lattice_phase_agrees_with_fsum_reduction(kvals, xvals):
    n = min(len(kvals), len(xvals))
    k, x = kvals[:n], xvals[:n]
    got = lattice_phase(k, x)
    exact = math.fsum(ki * xi for ki, xi in zip(k, x))
    expect = math.remainder(exact, 2.0 * math.pi)
    assert got == pytest.approx(expect, abs=5e-10)


def test_tangential_basis_orthonormal_and_transverse():
    rng = np.random.default_rng(9)
    for d in (2, 3):
        for _ in range(10):
            w = _unit(rng.normal(size=d))
            b = TangentialProjection(w).basis()
            assert b.shape == (d - 1, d)
            assert np.allclose(b @ b.T, np.eye(d - 1), atol=1e-12)
            assert np.allclose(b @ w.as_array(), 0.0, atol=1e-12)


def test_tangential_apply_removes_normal_component():
    w = Direction((0.6, 0.8))
    out = TangentialProjection(w).apply((1.0, 0.0))
    assert out @ w.as_array() == pytest.approx(0.0, abs=1e-15)


def test_asymptotic_argument_is_screen_quantity():
    w = _unit((0.3, -0.9))
    zeta = LatticePoint((1, 1))
    k = outgoing_gamma(Direction((1.0, 0.0)), 2.5)
    got = d_asymptotic_argument(k, w, zeta, 2.5)
    expect = float(np.dot(k - outgoing_gamma(w, 2.5), zeta.as_array()))
    assert got == pytest.approx(expect, abs=1e-14)
