"""cpstab: 3D time-dependent Schrodinger solver for a hydrogen atom in an
intense circularly polarized laser pulse, with stabilization diagnostics."""

from .diagnostics import (
    DiagnosticsLog,
    axis_profile,
    find_profile_maxima,
    norm,
    overlap,
    slice_z0,
)
from .errors import ConfigurationError, NumericalError, OutputError
from .grid import GridSpec, WaveField, gaussian_packet, make_grid
from .physics import (
    FieldSample,
    PulseSpec,
    ResolutionReport,
    check_resolution,
    coulomb_potential,
    max_momentum,
    ponderomotive_energy,
    pulse_field,
    quiver_radius,
)
from .propagator import (
    AbsorberSpec,
    RelaxationResult,
    StepParams,
    apply_absorber,
    energy_expectation,
    imaginary_time_step,
    propagate_pulse,
    real_time_step,
    relax_ground_state,
)
from .runner import RunConfig, parse_config, run

__version__ = "0.1.0"

__all__ = [
    "AbsorberSpec",
    "ConfigurationError",
    "DiagnosticsLog",
    "FieldSample",
    "GridSpec",
    "NumericalError",
    "OutputError",
    "PulseSpec",
    "RelaxationResult",
    "ResolutionReport",
    "RunConfig",
    "StepParams",
    "WaveField",
    "apply_absorber",
    "axis_profile",
    "check_resolution",
    "coulomb_potential",
    "energy_expectation",
    "find_profile_maxima",
    "gaussian_packet",
    "imaginary_time_step",
    "make_grid",
    "max_momentum",
    "norm",
    "overlap",
    "parse_config",
    "ponderomotive_energy",
    "propagate_pulse",
    "pulse_field",
    "quiver_radius",
    "real_time_step",
    "relax_ground_state",
    "run",
    "slice_z0",
]
