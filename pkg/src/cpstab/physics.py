"""Potentials, the circularly polarized drive, and grid-sizing estimates.

The electron Hamiltonian in atomic units is

    H = -1/2 nabla^2 - 1/r + E(t) (x cos(w t) + y sin(w t))

with E(t) the sin^2 pulse envelope.  The drive rotates in the x-y plane
at constant magnitude (circular polarization); e_z is identically zero.

Grid sizing uses the high-harmonic cutoff law: the largest photon energy
is about |E0| + 3 U_p with U_p = F^2 / (4 w^2), so the fastest momentum
component to resolve is k_max = sqrt(2 (|E0| + 3 U_p)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec, make_grid

# exact hydrogen ground-state energy; a sizing heuristic only, the discrete
# grid energy is computed separately by the relaxation
HYDROGEN_E0 = -0.5


@dataclass(frozen=True)
class PulseSpec:
    """sin^2 pulse of a circularly polarized field.

    peak_field: envelope maximum F (a.u. of field strength)
    omega:      carrier angular frequency (a.u.)
    n_cycles:   pulse length in optical cycles; the envelope is
                F sin^2(pi t / (n_cycles tau)) over 0 <= t <= n_cycles tau
    """

    peak_field: float
    omega: float
    n_cycles: int = 6

    def __post_init__(self):
        if self.peak_field < 0:
            raise ConfigurationError(f"peak_field must be >= 0, got {self.peak_field}")
        if not self.omega > 0:
            raise ConfigurationError(f"omega must be > 0, got {self.omega}")
        if self.n_cycles < 1:
            raise ConfigurationError(f"n_cycles must be >= 1, got {self.n_cycles}")

    @property
    def period(self) -> float:
        """Optical cycle tau = 2 pi / omega."""
        return 2.0 * math.pi / self.omega

    @property
    def duration(self) -> float:
        return self.n_cycles * self.period


@dataclass(frozen=True)
class FieldSample:
    """Instantaneous field components; the drive has no z component."""

    e_x: float
    e_y: float

    @property
    def e_z(self) -> float:
        return 0.0

    @property
    def magnitude(self) -> float:
        return math.hypot(self.e_x, self.e_y)


def pulse_envelope(pulse: PulseSpec, t: float) -> float:
    """Envelope F sin^2(pi t / duration); exactly zero at the window ends
    and outside the pulse."""
    if t <= 0.0 or t >= pulse.duration:
        return 0.0
    s = math.sin(math.pi * t / pulse.duration)
    return pulse.peak_field * s * s


def pulse_field(pulse: PulseSpec, t: float) -> FieldSample:
    """Rotating field (E(t) cos wt, E(t) sin wt); zero outside the window."""
    env = pulse_envelope(pulse, t)
    if env == 0.0:
        return FieldSample(0.0, 0.0)
    return FieldSample(env * math.cos(pulse.omega * t), env * math.sin(pulse.omega * t))


def coulomb_potential(grid: GridSpec) -> np.ndarray:
    """-1/r on the lattice; finite everywhere thanks to the half offset."""
    r2 = make_grid(grid).radius_squared()
    return -1.0 / np.sqrt(r2)


def ponderomotive_energy(peak_field: float, omega: float) -> float:
    """U_p = F^2 / (4 w^2)."""
    if not omega > 0:
        raise ConfigurationError(f"omega must be > 0, got {omega}")
    return peak_field**2 / (4.0 * omega**2)


def max_momentum(peak_field: float, omega: float, e0: float = HYDROGEN_E0) -> float:
    """Largest wavenumber from the harmonic cutoff: sqrt(2 (|e0| + 3 U_p))."""
    u_p = ponderomotive_energy(peak_field, omega)
    return math.sqrt(2.0 * (abs(e0) + 3.0 * u_p))


def quiver_radius(peak_field: float, omega: float) -> float:
    """Classical excursion radius F / w^2 of a free electron in the CP field."""
    if not omega > 0:
        raise ConfigurationError(f"omega must be > 0, got {omega}")
    return peak_field / omega**2


@dataclass(frozen=True)
class ResolutionReport:
    """Nyquist check of the lattice against k_max."""

    passed: bool
    margin: float
    k_max: float
    spacing: float


def check_resolution(spacing: float, k_max: float) -> ResolutionReport:
    """Pass iff spacing <= pi / k_max; margin is (pi/k_max) / spacing."""
    if not spacing > 0:
        raise ConfigurationError(f"spacing must be > 0, got {spacing}")
    if not k_max > 0:
        raise ConfigurationError(f"k_max must be > 0, got {k_max}")
    limit = math.pi / k_max
    margin = limit / spacing
    return ResolutionReport(passed=spacing <= limit, margin=margin,
                            k_max=k_max, spacing=spacing)
