"""Forward and phaseless inverse scattering for the lattice Schroedinger operator.

The package synthesizes near-field intensity data for a compactly
supported potential on Z^d (d = 1, 2, 3) and recovers the phased
scattering amplitude from it by explicit closed-form identities, with
no iteration in d >= 2 and a scalar fixed point or a three-site solve
in d = 1.
"""

from .core import (
    Direction,
    Energy,
    LatticePoint,
    Potential,
    check_energy,
    int_point,
    make_random_potential,
    measurement_points,
    singular_energies,
)
from .dispersion import (
    DispersionPoint,
    TangentialProjection,
    dist_to_pi_grid,
    d_asymptotic_argument,
    gamma_of_omega,
    lattice_phase,
    mu_of_omega,
    outgoing_gamma,
    outgoing_phase,
    phi,
)
from .errors import (
    BandEdge,
    ConfigError,
    DegenerateSeparation,
    ExtrapolationUnstable,
    InsideSupport,
    LattScatError,
    NearSingularD,
    NoConvergence,
    NonConvexRegime,
    OutOfBand,
    QuadratureNotConverged,
    SingularEnergy,
    SingularSystem,
    ZeroOffset,
    ZeroPoint,
)
from .forward import (
    FarField,
    FarFieldValue,
    IncidentWave,
    ScatteringSolution,
    evaluate_psi,
    evaluate_psi_many,
    extract_f_reference,
    far_field,
    scattered_field,
    solve_forward,
    transfer_matrix_d1,
)
from .green import GreenEvaluator
from .phaseless import (
    PhaselessSample,
    add_noise,
    read_samples,
    sample_a,
    sample_many,
    sample_pair,
    samples_to_csv,
    write_samples,
)
from .recover import (
    ExceptionalSetReport,
    RecoveryResult,
    circle_grid,
    exceptional_scan,
    gauge_shift_test,
    pair_components,
    pair_determinant,
    random_directions,
    recover_pair,
    recover_three_point_d1,
    recover_two_point_d1,
    recover_two_point_d1_iterated,
    screen_directions,
)

__version__ = "0.1.0"

import types as _types

__all__ = sorted(
    name for name, obj in dict(globals()).items()
    if not name.startswith("_") and not isinstance(obj, _types.ModuleType)
)
