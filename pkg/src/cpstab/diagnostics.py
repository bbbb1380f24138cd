"""Observables: norms, overlaps, z=0 slices, x-axis profiles, maxima.

All reductions are read-only and use the discrete volume element
spacing^3 (spacing for 1D profiles).  Because of the half-offset
lattice neither the z=0 plane nor the x axis intersects grid points;
slices average the two nearest planes (z = +-spacing/2) and profiles
average the four nearest lines (y, z = +-spacing/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec, WaveField


def norm(psi: WaveField, region: str = "all", band_width: float = 0.0) -> float:
    """Discrete norm over the whole grid or the interior only.

    region="interior" excludes the absorber band: points within
    band_width of any box face.  With band_width=0 the two regions agree.
    """
    if region not in ("all", "interior"):
        raise ConfigurationError(f"unknown norm region {region!r}")
    a = psi.amplitudes
    if region == "interior" and band_width > 0.0:
        sel = _interior_slices(psi.grid, band_width)
        a = a[sel]
    return float(np.sum(a.real**2 + a.imag**2) * psi.grid.cell_volume)


def _interior_slices(grid: GridSpec, band_width: float) -> tuple[slice, slice, slice]:
    """Index ranges of points farther than band_width from every face."""
    out = []
    for axis in range(3):
        coords = grid.axis_coords(axis)
        inner = grid.box_half_width(axis) - band_width
        keep = np.nonzero(np.abs(coords) < inner)[0]
        if keep.size == 0:
            raise ConfigurationError(
                f"absorber band of width {band_width} leaves no interior "
                f"along axis {axis}"
            )
        out.append(slice(keep[0], keep[-1] + 1))
    return tuple(out)


def overlap(a: WaveField, b: WaveField) -> complex:
    """<a|b> = sum conj(a) b * spacing^3; conjugate-symmetric."""
    if a.grid != b.grid:
        raise ConfigurationError("overlap requires both fields on the same grid")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.cell_volume)


def slice_z0(psi: WaveField) -> np.ndarray:
    """|psi|^2 averaged over the two planes nearest z=0; shape (n_x, n_y)."""
    k = psi.grid.n_z // 2
    d = np.abs(psi.amplitudes[:, :, k - 1 : k + 1]) ** 2
    return d.mean(axis=2)


def axis_profile(psi: WaveField) -> tuple[np.ndarray, np.ndarray]:
    """|psi|^2 averaged over the four lines nearest the x axis.

    Returns (x_coordinates, density), each of length n_x.
    """
    j = psi.grid.n_y // 2
    k = psi.grid.n_z // 2
    d = np.abs(psi.amplitudes[:, j - 1 : j + 1, k - 1 : k + 1]) ** 2
    return psi.grid.axis_coords(0).copy(), d.mean(axis=(1, 2))


def find_profile_maxima(
    profile: np.ndarray,
    min_prominence: float = 0.02,
    coords: np.ndarray | None = None,
) -> list[tuple[float, float]]:
    """Strict local maxima filtered by topographic prominence.

    The prominence of a maximum is its height above the higher of the two
    bases found by walking outward until terrain at least as high is met
    (or the array ends).  Maxima with prominence below
    min_prominence * max(profile) are dropped.  Returns (coord, value)
    pairs ordered by position; coords defaults to the sample index.
    """
    p = np.asarray(profile, dtype=float)
    if p.ndim != 1 or p.size < 3:
        raise ConfigurationError("profile must be 1D with at least 3 samples")
    if coords is None:
        coords = np.arange(p.size, dtype=float)
    threshold = min_prominence * float(p.max()) if p.size else 0.0

    out: list[tuple[float, float]] = []
    for i in range(1, p.size - 1):
        if not (p[i - 1] < p[i] and p[i] > p[i + 1]):
            continue
        left = p[:i][::-1]
        stop = np.nonzero(left >= p[i])[0]
        left_base = left.min() if stop.size == 0 else left[: stop[0]].min()
        right = p[i + 1 :]
        stop = np.nonzero(right >= p[i])[0]
        right_base = right.min() if stop.size == 0 else right[: stop[0]].min()
        prominence = p[i] - max(left_base, right_base)
        if prominence > threshold:
            out.append((float(coords[i]), float(p[i])))
    return out


@dataclass
class SurvivalSample:
    t: float
    interior_norm: float
    total_norm: float


@dataclass
class FrameDump:
    """A slice or profile captured at one instant."""

    t: float
    data: np.ndarray
    coords: np.ndarray | None = None


@dataclass
class DiagnosticsLog:
    """Everything recorded during one pulse run."""

    survival: list[SurvivalSample] = field(default_factory=list)
    slices: list[FrameDump] = field(default_factory=list)
    profiles: list[FrameDump] = field(default_factory=list)
    final_overlap: float | None = None
    final_overlap_ratio: float | None = None

    def survival_array(self) -> np.ndarray:
        """Samples as an (n, 3) array of (t, interior, total)."""
        return np.array(
            [(s.t, s.interior_norm, s.total_norm) for s in self.survival], dtype=float
        )
