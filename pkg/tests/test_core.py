import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lattscat.core import (
    Direction,
    LatticePoint,
    Potential,
    check_energy,
    int_point,
    make_random_potential,
    measurement_points,
    singular_energies,
)
from lattscat.errors import OutOfBand, SingularEnergy


def test_energy_outside_band_rejected():
    for d, bad in ((1, 2.5), (2, -4.1), (3, 6.0001)):
        with pytest.raises(OutOfBand):
            check_energy(bad, d)


def test_singular_energies_rejected():
    for d in (1, 2, 3):
        for s in singular_energies(d):
            with pytest.raises(SingularEnergy):
                check_energy(s, d)


def test_energy_accepts_interior_values():
    assert check_energy(1.5, 1).value == 1.5
    assert check_energy(-2.5, 2).value == -2.5
    assert check_energy(5.0, 3).value == 5.0


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=4))
def test_lattice_point_add_sub_roundtrip(coords):
    p = LatticePoint(tuple(coords))
    q = LatticePoint(tuple(c + 1 for c in coords))
    assert (p + q) - q == p
    assert -(-p) == p


def test_lattice_point_norm():
    assert LatticePoint((3, 4)).norm() == 5.0
    assert LatticePoint((0, 0, 0)).norm() == 0.0


def test_lattice_point_dim_mismatch_rejected():
    with pytest.raises(ValueError):
        LatticePoint((1, 2)) + LatticePoint((1, 2, 3))


def test_direction_must_be_unit():
    with pytest.raises(ValueError):
        Direction((0.5, 0.5))
    with pytest.raises(ValueError):
        Direction.from_vector((0.0, 0.0))
    w = Direction.from_vector((3.0, 4.0))
    assert w.components == (0.6, 0.8)


def test_int_point_truncates_toward_origin():
    assert int_point((1.4, -2.6)).coords == (1, -2)
    assert int_point((0.0,)).coords == (0,)
    assert int_point((10.99, -0.99)).coords == (10, 0)


def test_measurement_points_offset_by_zeta():
    w = Direction.from_vector((1.0, 1.0))
    zeta = LatticePoint((1, 0))
    x, y = measurement_points(50.0, w, zeta)
    assert y == x + zeta
    assert abs(x.norm() - 50.0) < 1.5


def test_potential_drops_zero_entries():
    v = Potential(2, {(0, 0): 1.0, (1, 0): 0.0})
    assert len(v) == 1
    assert v[LatticePoint((1, 0))] == 0.0


def test_potential_support_sorted_deterministically():
    v = Potential(1, {(2,): 1.0, (-1,): 2.0, (0,): 3.0})
    assert tuple(p.coords[0] for p in v.support) == (-1, 0, 2)
    assert np.allclose(v.values_array(), [2.0, 3.0, 1.0])


def test_potential_contains_uses_support_box():
    v = Potential(2, {(-1, -1): 1.0, (1, 1): 2.0})
    assert v.contains(LatticePoint((0, 0)))
    assert not v.contains(LatticePoint((2, 0)))


def test_potential_save_load_roundtrip(tmp_path):
    v = make_random_potential(2, 1, 1.0, seed=4)
    path = tmp_path / "v.json"
    v.save(str(path))
    w = Potential.load(str(path))
    assert w == v
    data = json.loads(path.read_text())
    assert data["dim"] == 2


def test_random_potential_seed_reproducible():
    a = make_random_potential(3, 1, 0.7, seed=9)
    b = make_random_potential(3, 1, 0.7, seed=9)
    c = make_random_potential(3, 1, 0.7, seed=10)
    assert a == b
    assert a != c
    assert a.is_real


def test_random_potential_density_thins_support():
    full = make_random_potential(2, 2, 1.0, seed=1)
    thin = make_random_potential(2, 2, 1.0, seed=1, density=0.3)
    assert len(thin) < len(full)


def test_random_potential_complex_values():
    v = make_random_potential(2, 1, 1.0, seed=2, complex_values=True)
    assert not v.is_real
