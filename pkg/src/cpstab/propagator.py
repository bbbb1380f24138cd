"""Time evolution: Cayley (Crank-Nicolson) ADI sweeps, boundary absorber,
imaginary-time relaxation, and the pulse driver.

One real-time step of size dt applies five one-dimensional Cayley sweeps
in the symmetric order x(dt/2), y(dt/2), z(dt), y(dt/2), x(dt/2).  Each
sweep solves, for every grid line along its axis,

    (1 + theta H_a) psi' = (1 - theta H_a) psi,     theta = i dt_a / 2,

where H_a = -1/2 d^2/da^2 (three-point stencil, Dirichlet walls) plus one
third of the full potential (Coulomb + dipole coupling frozen at the step
midpoint t + dt/2).  Every sweep is exactly unitary, so without the
absorber the discrete norm is conserved to round-off; the palindromic
sweep order makes the splitting defect O(dt^3) per step.  Each axis
advances by dt in total and the potential thirds add up to the full
potential once per step.

Imaginary time uses the same sweeps with theta = dt_im / 2 (real), the
drive off, and a renormalization after every step; the iteration damps
everything but the lowest discrete eigenstate.

The tridiagonal systems of one sweep are independent across grid lines.
They are solved by numba kernels parallelized over lines (thread count
via the CPSTAB_THREADS environment variable), one kernel per axis so the
state array never needs transposing; a pure numpy fallback covers
environments without numba.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, TYPE_CHECKING

import numpy as np

from .diagnostics import DiagnosticsLog, FrameDump, SurvivalSample, axis_profile, norm, overlap, slice_z0
from .errors import ConfigurationError, NumericalError
from .grid import GridSpec, WaveField, gaussian_packet
from .physics import PulseSpec, coulomb_potential, pulse_field

if TYPE_CHECKING:
    from .runner import RunConfig

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_AXES = {"x": 0, "y": 1, "z": 2}
_TILE = 48  # batch width per tridiagonal block; keeps scratch inside L2


def _configure_threads():
    if not HAVE_NUMBA:
        return
    requested = os.environ.get("CPSTAB_THREADS")
    if requested:
        try:
            n = max(1, int(requested))
        except ValueError:
            raise ConfigurationError(
                f"CPSTAB_THREADS must be an integer, got {requested!r}"
            ) from None
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


if HAVE_NUMBA:
    _configure_threads()

    @numba.njit(parallel=True, cache=True)
    def _sweep_x_numba(a, v3, per_point, per_line, theta, inv_h2, flag):
        """Cayley sweep along x: one tridiagonal solve per (y, z) line.

        per_point: dipole term along the sweep axis, here e_x x / 3
        per_line:  term constant on each line, here e_y y / 3
        Lines are batched in z-tiles so the Thomas scratch stays in cache.
        """
        nx, ny, nz = a.shape
        alpha = -0.5 * theta * inv_h2
        for iy in numba.prange(ny):
            shift = per_line[iy]
            cp = np.empty((nx, _TILE), np.complex128)
            rh = np.empty((nx, _TILE), np.complex128)
            for z0 in range(0, nz, _TILE):
                w = min(_TILE, nz - z0)
                for k in range(w):
                    iz = z0 + k
                    d = 1.0 + theta * (inv_h2 + v3[0, iy, iz] + shift + per_point[0])
                    if d == 0:
                        flag[0] = 1
                        d = 1.0
                    r = (2.0 - d) * a[0, iy, iz] - alpha * a[1, iy, iz]
                    cp[0, k] = alpha / d
                    rh[0, k] = r / d
                for i in range(1, nx):
                    pp = per_point[i]
                    last = i == nx - 1
                    for k in range(w):
                        iz = z0 + k
                        d = 1.0 + theta * (inv_h2 + v3[i, iy, iz] + shift + pp)
                        r = (2.0 - d) * a[i, iy, iz] - alpha * a[i - 1, iy, iz]
                        if not last:
                            r -= alpha * a[i + 1, iy, iz]
                        den = d - alpha * cp[i - 1, k]
                        if den == 0:
                            flag[0] = 1
                            den = 1.0
                        m = 1.0 / den
                        cp[i, k] = alpha * m
                        rh[i, k] = (r - alpha * rh[i - 1, k]) * m
                for k in range(w):
                    a[nx - 1, iy, z0 + k] = rh[nx - 1, k]
                for i in range(nx - 2, -1, -1):
                    for k in range(w):
                        iz = z0 + k
                        a[i, iy, iz] = rh[i, k] - cp[i, k] * a[i + 1, iy, iz]

    @numba.njit(parallel=True, cache=True)
    def _sweep_y_numba(a, v3, per_point, per_line, theta, inv_h2, flag):
        """Cayley sweep along y: per_point = e_y y / 3, per_line = e_x x / 3."""
        nx, ny, nz = a.shape
        alpha = -0.5 * theta * inv_h2
        for ix in numba.prange(nx):
            shift = per_line[ix]
            cp = np.empty((ny, _TILE), np.complex128)
            rh = np.empty((ny, _TILE), np.complex128)
            for z0 in range(0, nz, _TILE):
                w = min(_TILE, nz - z0)
                for k in range(w):
                    iz = z0 + k
                    d = 1.0 + theta * (inv_h2 + v3[ix, 0, iz] + shift + per_point[0])
                    if d == 0:
                        flag[0] = 1
                        d = 1.0
                    r = (2.0 - d) * a[ix, 0, iz] - alpha * a[ix, 1, iz]
                    cp[0, k] = alpha / d
                    rh[0, k] = r / d
                for j in range(1, ny):
                    pp = per_point[j]
                    last = j == ny - 1
                    for k in range(w):
                        iz = z0 + k
                        d = 1.0 + theta * (inv_h2 + v3[ix, j, iz] + shift + pp)
                        r = (2.0 - d) * a[ix, j, iz] - alpha * a[ix, j - 1, iz]
                        if not last:
                            r -= alpha * a[ix, j + 1, iz]
                        den = d - alpha * cp[j - 1, k]
                        if den == 0:
                            flag[0] = 1
                            den = 1.0
                        m = 1.0 / den
                        cp[j, k] = alpha * m
                        rh[j, k] = (r - alpha * rh[j - 1, k]) * m
                for k in range(w):
                    a[ix, ny - 1, z0 + k] = rh[ny - 1, k]
                for j in range(ny - 2, -1, -1):
                    for k in range(w):
                        iz = z0 + k
                        a[ix, j, iz] = rh[j, k] - cp[j, k] * a[ix, j + 1, iz]

    @numba.njit(parallel=True, cache=True)
    def _sweep_z_numba(a, v3, shift_x, shift_y, theta, inv_h2, flag):
        """Cayley sweep along z (contiguous lines); the drive has no z part,
        so the dipole term is constant per line: shift_x[ix] + shift_y[iy]."""
        nx, ny, nz = a.shape
        alpha = -0.5 * theta * inv_h2
        for ix in numba.prange(nx):
            cp = np.empty(nz, np.complex128)
            rh = np.empty(nz, np.complex128)
            for iy in range(ny):
                shift = shift_x[ix] + shift_y[iy]
                d = 1.0 + theta * (inv_h2 + v3[ix, iy, 0] + shift)
                if d == 0:
                    flag[0] = 1
                    d = 1.0
                cp[0] = alpha / d
                rh[0] = ((2.0 - d) * a[ix, iy, 0] - alpha * a[ix, iy, 1]) / d
                for k in range(1, nz):
                    d = 1.0 + theta * (inv_h2 + v3[ix, iy, k] + shift)
                    r = (2.0 - d) * a[ix, iy, k] - alpha * a[ix, iy, k - 1]
                    if k < nz - 1:
                        r -= alpha * a[ix, iy, k + 1]
                    den = d - alpha * cp[k - 1]
                    if den == 0:
                        flag[0] = 1
                        den = 1.0
                    m = 1.0 / den
                    cp[k] = alpha * m
                    rh[k] = (r - alpha * rh[k - 1]) * m
                a[ix, iy, nz - 1] = rh[nz - 1]
                for k in range(nz - 2, -1, -1):
                    a[ix, iy, k] = rh[k] - cp[k] * a[ix, iy, k + 1]


def _sweep_lines_numpy(lines, vc3, per_line, per_point, theta, inv_h2):
    """Reference solve, vectorized across lines; lines is axis-first
    (n, n_lines) and vc3 may be a strided view of the same layout."""
    n = lines.shape[0]
    alpha = -0.5 * theta * inv_h2
    diag = 1.0 + theta * (inv_h2 + vc3 + per_line[None, :] + per_point[:, None])
    rhs = (2.0 - diag) * lines
    rhs[:-1] -= alpha * lines[1:]
    rhs[1:] -= alpha * lines[:-1]
    cp = np.empty_like(diag)
    if np.any(diag[0] == 0):
        raise NumericalError("tridiagonal solve breakdown: zero pivot")
    cp[0] = alpha / diag[0]
    rhs[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - alpha * cp[i - 1]
        if np.any(den == 0):
            raise NumericalError("tridiagonal solve breakdown: zero pivot")
        m = 1.0 / den
        cp[i] = alpha * m
        rhs[i] = (rhs[i] - alpha * rhs[i - 1]) * m
    lines[n - 1] = rhs[n - 1]
    for i in range(n - 2, -1, -1):
        lines[i] = rhs[i] - cp[i] * lines[i + 1]
    return lines


@dataclass
class StepParams:
    """Per-run propagation state: time step, static potential, drive."""

    dt: float
    potential: np.ndarray
    pulse: PulseSpec | None
    grid: GridSpec

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.potential.shape != self.grid.shape:
            raise ConfigurationError(
                f"potential shape {self.potential.shape} does not match grid "
                f"{self.grid.shape}"
            )
        self._v3 = np.ascontiguousarray(self.potential / 3.0, dtype=np.float64)
        self._v3_lines: dict[int, np.ndarray] = {}
        self._coords = [self.grid.axis_coords(a) for a in range(3)]
        self._inv_h2 = 1.0 / self.grid.spacing**2
        self._flag = np.zeros(1, dtype=np.int64)

    def sweep(self, amps: np.ndarray, axis: int, theta: complex,
              ex3: float, ey3: float) -> np.ndarray:
        """Apply one Cayley sweep along an axis, in place."""
        x, y, z = self._coords
        theta = np.complex128(theta)
        if HAVE_NUMBA:
            if axis == 0:
                _sweep_x_numba(amps, self._v3, ex3 * x, ey3 * y,
                               theta, self._inv_h2, self._flag)
            elif axis == 1:
                _sweep_y_numba(amps, self._v3, ey3 * y, ex3 * x,
                               theta, self._inv_h2, self._flag)
            else:
                _sweep_z_numba(amps, self._v3, ex3 * x, ey3 * y,
                               theta, self._inv_h2, self._flag)
            if self._flag[0]:
                self._flag[0] = 0
                raise NumericalError("tridiagonal solve breakdown: zero pivot")
            return amps
        return self._sweep_numpy(amps, axis, theta, ex3, ey3)

    def _sweep_numpy(self, amps, axis, theta, ex3, ey3):
        nx, ny, nz = self.grid.shape
        x, y, z = self._coords
        if axis not in self._v3_lines:
            # axis-first layout of the potential third, built on first use
            perm = {0: (0, 1, 2), 1: (1, 0, 2), 2: (2, 0, 1)}[axis]
            self._v3_lines[axis] = np.ascontiguousarray(
                self._v3.transpose(perm)).reshape(self.grid.shape[axis], -1)
        vc3 = self._v3_lines[axis]
        if axis == 0:
            lines = amps.reshape(nx, -1)
            per_point, per_line = ex3 * x, np.repeat(ey3 * y, nz)
        elif axis == 1:
            lines = np.ascontiguousarray(amps.transpose(1, 0, 2)).reshape(ny, -1)
            per_point, per_line = ey3 * y, np.repeat(ex3 * x, nz)
        else:
            lines = np.ascontiguousarray(amps.transpose(2, 0, 1)).reshape(nz, -1)
            per_point = np.zeros(nz)
            per_line = ((ex3 * x)[:, None] + (ey3 * y)[None, :]).ravel()
        _sweep_lines_numpy(lines, vc3, per_line, per_point, theta, self._inv_h2)
        if axis == 1:
            amps[:] = lines.reshape(ny, nx, nz).transpose(1, 0, 2)
        elif axis == 2:
            amps[:] = lines.reshape(nz, nx, ny).transpose(1, 2, 0)
        return amps


def _strang_step(amps: np.ndarray, params: StepParams, theta_unit: complex,
                 ex3: float, ey3: float, axis_order: tuple[str, str, str]):
    """wing(dt/2) wing(dt/2) middle(dt) wing(dt/2) wing(dt/2) with
    theta_unit = theta per unit dt (i/2 real time, 1/2 imaginary time)."""
    try:
        a0, a1, a2 = (_AXES[a] for a in axis_order)
    except KeyError:
        raise ConfigurationError(f"axis_order must name x, y, z, got {axis_order}")
    if {a0, a1, a2} != {0, 1, 2}:
        raise ConfigurationError(f"axis_order must be a permutation, got {axis_order}")
    half = theta_unit * params.dt / 2.0
    full = theta_unit * params.dt
    params.sweep(amps, a0, half, ex3, ey3)
    params.sweep(amps, a1, half, ex3, ey3)
    params.sweep(amps, a2, full, ex3, ey3)
    params.sweep(amps, a1, half, ex3, ey3)
    params.sweep(amps, a0, half, ex3, ey3)


def real_time_step(psi: WaveField, params: StepParams, t: float,
                   axis_order: tuple[str, str, str] = ("x", "y", "z")) -> WaveField:
    """Advance psi in place from t to t + dt under H(t + dt/2)."""
    if psi.grid != params.grid:
        raise ConfigurationError("wave field and step parameters use different grids")
    if params.pulse is not None:
        e = pulse_field(params.pulse, t + params.dt / 2.0)
        ex3, ey3 = e.e_x / 3.0, e.e_y / 3.0
    else:
        ex3 = ey3 = 0.0
    _strang_step(psi.amplitudes, params, 0.5j, ex3, ey3, axis_order)
    return psi


def imaginary_time_step(psi: WaveField, params: StepParams,
                        axis_order: tuple[str, str, str] = ("x", "y", "z")) -> WaveField:
    """One diffusion step of size dt_im = params.dt, drive off, no renorm."""
    _strang_step(psi.amplitudes, params, 0.5, 0.0, 0.0, axis_order)
    return psi


@dataclass(frozen=True)
class AbsorberSpec:
    """cos^exponent mask over a band of the given width at every face."""

    width: float
    exponent: float = 0.125

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigurationError(f"absorber width must be > 0, got {self.width}")
        if not self.exponent > 0:
            raise ConfigurationError(
                f"absorber exponent must be > 0, got {self.exponent}"
            )


@lru_cache(maxsize=16)
def _axis_masks(grid: GridSpec, absorber: AbsorberSpec) -> tuple[np.ndarray, ...]:
    masks = []
    for axis in range(3):
        half = grid.box_half_width(axis)
        if not absorber.width < half:
            raise ConfigurationError(
                f"absorber width {absorber.width} must be smaller than the "
                f"box half extent {half} along axis {axis}"
            )
        depth = np.abs(grid.axis_coords(axis)) - (half - absorber.width)
        depth = np.clip(depth, 0.0, absorber.width)
        m = np.cos(0.5 * math.pi * depth / absorber.width) ** absorber.exponent
        m.setflags(write=False)
        masks.append(m)
    return tuple(masks)


def apply_absorber(psi: WaveField, absorber: AbsorberSpec | None) -> WaveField:
    """Multiply by the boundary mask, in place; skipped entirely when the
    band is narrower than one cell."""
    if absorber is None or absorber.width < psi.grid.spacing:
        return psi
    mx, my, mz = _axis_masks(psi.grid, absorber)
    a = psi.amplitudes
    a *= mx[:, None, None]
    a *= my[None, :, None]
    a *= mz[None, None, :]
    return psi


def apply_h0(amps: np.ndarray, potential: np.ndarray, spacing: float) -> np.ndarray:
    """Field-free Hamiltonian: central-difference Laplacian plus potential,
    Dirichlet beyond the lattice."""
    out = potential * amps
    inv_h2 = 1.0 / spacing**2
    out += 3.0 * inv_h2 * amps
    half = 0.5 * inv_h2
    out[1:] -= half * amps[:-1]
    out[:-1] -= half * amps[1:]
    out[:, 1:] -= half * amps[:, :-1]
    out[:, :-1] -= half * amps[:, 1:]
    out[:, :, 1:] -= half * amps[:, :, :-1]
    out[:, :, :-1] -= half * amps[:, :, 1:]
    return out


def energy_expectation(psi: WaveField, potential: np.ndarray) -> float:
    """<psi|H0|psi> / <psi|psi> with the discrete H0 above."""
    h_psi = apply_h0(psi.amplitudes, potential, psi.grid.spacing)
    num = np.vdot(psi.amplitudes, h_psi).real
    den = np.vdot(psi.amplitudes, psi.amplitudes).real
    return float(num / den)


@dataclass
class RelaxationResult:
    """Converged imaginary-time ground state."""

    energy: float
    state: WaveField
    residual: float
    steps: int


def relax_ground_state(grid: GridSpec, dt_im: float = 0.1, tol: float = 1e-10,
                       max_steps: int = 20000, trial_sigma: float = 1.5,
                       potential: np.ndarray | None = None) -> RelaxationResult:
    """Imaginary-time relaxation of a trial Gaussian to the discrete
    ground state of -1/2 lap - 1/r.

    Converged when the energy expectation changes by less than tol
    (relative) between consecutive steps.
    """
    if not dt_im > 0:
        raise ConfigurationError(f"dt_im must be > 0, got {dt_im}")
    if not tol > 0:
        raise ConfigurationError(f"tol must be > 0, got {tol}")
    if potential is None:
        potential = coulomb_potential(grid)
    params = StepParams(dt=dt_im, potential=potential, pulse=None, grid=grid)
    psi = gaussian_packet(grid, trial_sigma)
    energy = energy_expectation(psi, potential)
    residual = math.inf
    for step in range(1, max_steps + 1):
        imaginary_time_step(psi, params)
        n = psi.norm()
        if not (np.isfinite(n) and n > 0):
            raise NumericalError(f"imaginary-time norm diverged at step {step}")
        psi.amplitudes *= 1.0 / math.sqrt(n)
        new_energy = energy_expectation(psi, potential)
        residual = abs(new_energy - energy) / abs(new_energy)
        energy = new_energy
        if residual < tol:
            break
    else:
        raise NumericalError(
            f"imaginary-time relaxation did not reach tol={tol} within "
            f"{max_steps} steps (last energy {energy:.10f}, "
            f"residual {residual:.3e})"
        )
    if not energy < 0:
        raise NumericalError(
            f"relaxation converged to a non-bound energy {energy:.6f}"
        )
    psi.amplitudes *= 1.0 / math.sqrt(psi.norm())
    return RelaxationResult(energy=energy, state=psi, residual=residual, steps=step)


def propagate_pulse(config: "RunConfig", ground: WaveField | None = None,
                    progress: Callable[[int, int], None] | None = None) -> DiagnosticsLog:
    """Run one full pulse: Gaussian start, masked Cayley-ADI stepping,
    diagnostics at the configured cadence, final ground-state overlap.

    The nominal dt is rounded so an integer number of steps lands exactly
    on the end of the pulse window.
    """
    grid = config.grid
    pulse = config.pulse
    duration = pulse.duration
    n_steps = max(1, round(duration / config.dt))
    dt = duration / n_steps

    if ground is None:
        ground = relax_ground_state(
            grid, dt_im=config.relax_dt, tol=config.relax_tol,
            max_steps=config.relax_max_steps,
        ).state

    potential = coulomb_potential(grid)
    params = StepParams(dt=dt, potential=potential, pulse=pulse, grid=grid)
    psi = gaussian_packet(grid, config.sigma)

    band = config.absorber.width if config.absorber is not None else 0.0
    if band < grid.spacing:
        band = 0.0

    frame_steps = _frame_steps(config, n_steps, dt)
    log = DiagnosticsLog()
    _record_survival(log, psi, 0.0, band)

    for k in range(n_steps):
        real_time_step(psi, params, k * dt)
        apply_absorber(psi, config.absorber)
        done = k + 1
        t = done * dt
        if done % config.survival_every == 0 or done == n_steps:
            _record_survival(log, psi, t, band)
        if done in frame_steps:
            log.slices.append(FrameDump(t=t, data=slice_z0(psi)))
            xs, prof = axis_profile(psi)
            log.profiles.append(FrameDump(t=t, data=prof, coords=xs))
        if progress is not None:
            progress(done, n_steps)

    total_end = log.survival[-1].total_norm
    ov = abs(overlap(ground, psi)) ** 2
    log.final_overlap = ov
    log.final_overlap_ratio = ov / total_end if total_end > 0 else 0.0
    return log


def _frame_steps(config: "RunConfig", n_steps: int, dt: float) -> set[int]:
    steps: set[int] = set()
    interval = config.frame_interval_cycles
    if interval > 0:
        frame_dt = interval * config.pulse.period
        k = 1
        while k * frame_dt <= config.pulse.duration + 1e-9:
            steps.add(min(n_steps, max(1, round(k * frame_dt / dt))))
            k += 1
    for t in config.snapshot_times:
        steps.add(min(n_steps, max(0, round(t / dt))))
    return steps


def _record_survival(log: DiagnosticsLog, psi: WaveField, t: float, band: float):
    total = norm(psi, "all")
    interior = norm(psi, "interior", band) if band > 0 else total
    if not (np.isfinite(total) and -1e-9 <= total <= 1.0 + 1e-9):
        raise NumericalError(f"norm {total} out of range at t={t:.4f}")
    log.survival.append(SurvivalSample(t=t, interior_norm=interior, total_norm=total))
