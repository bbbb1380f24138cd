"""Offset Cartesian lattice and the complex wave field living on it.

Conventions (atomic units throughout):

- Each axis with n points has coordinates x(i) = (i - n/2 + 1/2) * spacing,
  i.e. the lattice is shifted half a cell off the origin.  No point ever
  sits at a coordinate 0, so the closest approach to the nucleus is
  (sqrt(3)/2) * spacing and -1/r stays finite everywhere.
- Point counts are even so the half offset is symmetric: x(i) = -x(n-1-i).
- Amplitudes are stored C-ordered with shape (n_x, n_y, n_z): x is the
  outermost index, z the innermost.  Binary dumps inherit this order.
- The discrete norm is sum(|psi|^2) * spacing^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GridSpec:
    """Isotropic offset lattice: point counts per axis and one spacing."""

    n_x: int
    n_y: int
    n_z: int
    spacing: float

    def __post_init__(self):
        for name, n in (("n_x", self.n_x), ("n_y", self.n_y), ("n_z", self.n_z)):
            if n < 2:
                raise ConfigurationError(f"{name} must be >= 2, got {n}")
            if n % 2 != 0:
                raise ConfigurationError(
                    f"{name} must be even so the half offset is symmetric, got {n}"
                )
        if not self.spacing > 0:
            raise ConfigurationError(f"spacing must be > 0, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_z)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def box_half_width(self, axis: int) -> float:
        """Half extent of the box along an axis (outer cell edge, n*spacing/2)."""
        return self.shape[axis] * self.spacing / 2.0

    def axis_coords(self, axis: int) -> np.ndarray:
        """Coordinates (i - n/2 + 1/2) * spacing along one axis (0=x, 1=y, 2=z)."""
        n = self.shape[axis]
        return (np.arange(n) - n / 2 + 0.5) * self.spacing


@dataclass(frozen=True)
class GridCoordinates:
    """Coordinate accessor returned by make_grid: per-axis 1D arrays."""

    spec: GridSpec
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def position(self, i: int, j: int, k: int) -> tuple[float, float, float]:
        return (float(self.x[i]), float(self.y[j]), float(self.z[k]))

    def radius_squared(self) -> np.ndarray:
        """|r|^2 on the full lattice, shape (n_x, n_y, n_z)."""
        return (
            self.x[:, None, None] ** 2
            + self.y[None, :, None] ** 2
            + self.z[None, None, :] ** 2
        )


def make_grid(spec: GridSpec) -> GridCoordinates:
    """Build the index -> position mapping for an offset lattice.

    The minimum distance from the origin to any point is
    (sqrt(3)/2) * spacing, attained at the 8 innermost points.
    """
    coords = [spec.axis_coords(a) for a in range(3)]
    for c in coords:
        c.setflags(write=False)
    return GridCoordinates(spec, *coords)


@dataclass
class WaveField:
    """Complex amplitudes on a grid; mutated in place by the propagator."""

    grid: GridSpec
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.amplitudes.shape != self.grid.shape:
            raise ConfigurationError(
                f"amplitude shape {self.amplitudes.shape} does not match "
                f"grid shape {self.grid.shape}"
            )
        if self.amplitudes.dtype != np.complex128:
            self.amplitudes = self.amplitudes.astype(np.complex128)

    def copy(self) -> "WaveField":
        return WaveField(self.grid, self.amplitudes.copy())

    def norm(self) -> float:
        """Discrete norm sum(|psi|^2) * spacing^3."""
        a = self.amplitudes
        return float(np.sum(a.real**2 + a.imag**2) * self.grid.cell_volume)


def zero_field(spec: GridSpec) -> WaveField:
    return WaveField(spec, np.zeros(spec.shape, dtype=np.complex128))


def gaussian_packet(grid: GridSpec, sigma: float) -> WaveField:
    """Stationary Gaussian exp(-r^2 / (2 sigma^2)), zero phase, unit norm.

    Rejects grids that under-resolve the packet (spacing > sigma/3).
    """
    if not sigma > 0:
        raise ConfigurationError(f"sigma must be > 0, got {sigma}")
    if grid.spacing > sigma / 3.0:
        raise ConfigurationError(
            f"spacing {grid.spacing} under-resolves sigma={sigma} "
            f"(need spacing <= sigma/3 = {sigma / 3.0:.6g})"
        )
    r2 = make_grid(grid).radius_squared()
    amp = np.exp(-r2 / (2.0 * sigma**2)).astype(np.complex128)
    psi = WaveField(grid, amp)
    amp *= 1.0 / np.sqrt(psi.norm())
    return psi
