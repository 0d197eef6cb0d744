"""Boundary time-crystal continuous sensors.

Simulation toolkit for driven collective-spin systems under collective
decay, in single and cascaded (sensor/decoder) configurations: Liouvillian
generators and stationary states, photocount statistics through tilted and
deformed dominant eigenvalues, Monte Carlo photocounting trajectories,
analytic dark states, Holstein-Primakoff oracles, and the resulting
parameter-estimation error and sensitivity bounds.
"""

__version__ = "0.1.0"

from .dark_state import (
    DarkState,
    build_dark_state,
    dark_state_observables,
    mean_field_magnetizations,
    verify_dark_state,
)
from .errors import (
    AmbiguousDominanceError,
    ConvergenceError,
    DarkStateError,
    DegenerateStationaryError,
    DimensionCapError,
    FlatSignalError,
    NumericalError,
    StencilError,
    ValidationError,
)
from .holstein_primakoff import (
    CascadedHp,
    HpPrediction,
    fluctuation_vacuum_coefficients,
    hp_cascaded,
    hp_deformed_eigenvalue,
    hp_error_prefactor,
    hp_qfi_rate,
    hp_scgf,
    hp_single,
)
from .liouville import (
    Generator,
    ModelParams,
    StationaryResult,
    build_btc_generator,
    build_cascaded_generator,
    deform,
    reduced_state,
    stationary_state,
    tilt,
)
from .sensing import (
    ProtocolResult,
    ScalingFit,
    fit_power_law,
    protocol1_error,
    protocol2_error,
    sensitivity_sweep,
)
from .spectral import (
    QfiResult,
    ScgfResult,
    dominant_eigenvalue,
    qfi_rate,
    scgf_curve,
)
from .spin_algebra import (
    CollectiveOperators,
    CoupledBasisMap,
    SpinSector,
    build_collective_ops,
    clebsch_gordan,
    coupled_basis_map,
    coupled_state,
)
from .trajectories import (
    CountRecord,
    IntensityStats,
    McEstimationResult,
    TrajectoryConfig,
    ensemble_stats,
    mc_estimation_error,
    run_ensemble,
    run_photocount_trajectory,
)
