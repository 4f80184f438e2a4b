"""Simulator for nonlinear phase transfer from quantum-well dipoles to a
driven, lossy THz cavity: mean-field chirping dynamics, full Lindblad
propagation, and FID phase-spectrum analysis.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    GridError,
    SolverError,
    TruncationError,
    ValidationError,
)
from .model import (
    CavityParams,
    CollectiveCoefficients,
    DipoleParams,
    Frame,
    PulseParams,
    SystemConfig,
    drive_amplitude,
    effective_decay,
    eigenenergy,
    envelope,
    format_config,
    level_spacing,
    load_config,
    parse_config,
    purcell_rate,
    save_config,
    set_config_value,
    to_collective,
    to_local,
)
from .meanfield import (
    MeanFieldState,
    MeanFieldTrajectory,
    PostPulseOracle,
    adiabatic_field,
    instantaneous_frequency,
    integrate,
    oracle_from_trajectory,
    post_pulse_analytic,
    rhs_identical,
    rhs_two_well,
    stationary_phase,
)
from .lindblad import (
    DensityMatrix,
    HilbertConfig,
    LindbladResult,
    OperatorMatrix,
    build_hamiltonian,
    build_operators,
    evolve,
    lindblad_rhs,
    read_checkpoints,
    second_level_population,
    vacuum_state,
    write_checkpoints,
)
from .spectral import (
    DelaySeries,
    EquivalenceReport,
    FidWindow,
    NonlinearPhaseResult,
    PhaseSpectrum,
    RelativePhase,
    SpectralPolicy,
    Spectrum,
    baseline_config,
    dipole_phase_equivalence,
    fid_time_span,
    fid_window,
    fit_alpha,
    fourier,
    nonlinear_phase_shift,
    phase_at,
    phase_pipeline,
    phase_spectrum,
    relative_phase,
    time_delay,
)

__all__ = [name for name in dir() if not name.startswith("_")]
