"""Experiment orchestration: config parsing, run modes, output files.

Config files are plain-text key=value lines; '#' starts a comment and
unknown keys are rejected.  Unset keys fall back to the reference
experiment: a 240^3 box at spacing 0.1667 (half width 20 a.u.),
omega = 1.2, six-cycle sin^2 pulse, sigma = 1.5, field scan
{2.5, 3.0, 3.5, 4.0}, dt = 0.01, absorber width 5 with exponent 1/8.

Outputs (all deterministic, byte-identical for identical configs):
  survival_F*.csv          t,interior_norm,total_norm with %.17g floats
  slice_F*_t*.bin/.json    little-endian f64 density, row-major, + sidecar
  profile_F*_t*.bin/.json  same for x-axis profiles
  ground_*.bin/.json       cached complex ground state per grid
  manifest.json            every file listed with its record count
  relax_report.txt         relax-mode summary

Exit codes: 0 success, 1 configuration error, 2 numerical error, 3 I/O.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .diagnostics import DiagnosticsLog, find_profile_maxima
from .errors import ConfigurationError, NumericalError, OutputError
from .grid import GridSpec, WaveField
from .physics import (
    PulseSpec,
    check_resolution,
    max_momentum,
    ponderomotive_energy,
    quiver_radius,
)
from .propagator import AbsorberSpec, propagate_pulse, relax_ground_state

REFERENCE_FIELDS = (2.5, 3.0, 3.5, 4.0)
MODES = ("check", "relax", "pulse", "scan")


@dataclass(frozen=True)
class RunConfig:
    """Complete, validated description of one experiment."""

    grid: GridSpec
    pulse: PulseSpec
    sigma: float
    dt: float
    absorber: AbsorberSpec | None
    survival_every: int
    frame_interval_cycles: float
    snapshot_times: tuple[float, ...]
    mode: str
    scan_fields: tuple[float, ...]
    out_dir: str
    force: bool
    relax_dt: float
    relax_tol: float
    relax_max_steps: int
    min_prominence: float


_DEFAULTS: dict[str, object] = {
    "mode": "scan",
    "n_x": 240,
    "n_y": 240,
    "n_z": 240,
    "spacing": 0.1667,
    "omega": 1.2,
    "n_cycles": 6,
    "peak_field": 3.5,
    "scan_fields": REFERENCE_FIELDS,
    "sigma": 1.5,
    "dt": 0.01,
    "absorber_width": 5.0,
    "absorber_exponent": 0.125,
    "survival_every": 10,
    "frame_interval_cycles": 0.125,
    "snapshot_times": (),
    "out_dir": "out",
    "force": False,
    "relax_dt": 0.1,
    "relax_tol": 1e-10,
    "relax_max_steps": 20000,
    "min_prominence": 0.02,
}

_INT_KEYS = {"n", "n_x", "n_y", "n_z", "n_cycles", "survival_every", "relax_max_steps"}
_FLOAT_KEYS = {
    "spacing", "omega", "peak_field", "sigma", "dt", "absorber_width",
    "absorber_exponent", "frame_interval_cycles", "relax_dt", "relax_tol",
    "min_prominence",
}
_LIST_KEYS = {"scan_fields", "snapshot_times"}
_BOOL_KEYS = {"force"}
_STR_KEYS = {"mode", "out_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _LIST_KEYS | _BOOL_KEYS | _STR_KEYS


def _parse_value(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _LIST_KEYS:
            items = [s for s in (p.strip() for p in raw.split(",")) if s]
            return tuple(float(s) for s in items)
        if key in _BOOL_KEYS:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
    except ValueError as exc:
        raise ConfigurationError(f"config key {key!r}: {exc}") from None
    return raw


def parse_config(text: str, mode: str | None = None, out_dir: str | None = None,
                 force: bool | None = None) -> RunConfig:
    """Parse a key=value document into a validated RunConfig.

    mode/out_dir/force, when given, override the document (CLI flags).
    An empty document yields the full reference configuration.
    """
    values = dict(_DEFAULTS)
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {body!r}")
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "n":
            keys = ("n_x", "n_y", "n_z")
        elif key in _ALL_KEYS:
            keys = (key,)
        else:
            raise ConfigurationError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        parsed = _parse_value(key, raw)
        for k in keys:
            values[k] = parsed

    if mode is not None:
        values["mode"] = mode
    if out_dir is not None:
        values["out_dir"] = out_dir
    if force is not None:
        values["force"] = force
    return _build_config(values)


def _build_config(v: dict[str, object]) -> RunConfig:
    mode = str(v["mode"])
    if mode not in MODES:
        raise ConfigurationError(f"config key 'mode': must be one of {MODES}, got {mode!r}")

    grid = GridSpec(n_x=v["n_x"], n_y=v["n_y"], n_z=v["n_z"], spacing=v["spacing"])

    scan_fields = tuple(v["scan_fields"])
    if mode == "scan" and not scan_fields:
        raise ConfigurationError("config key 'scan_fields': scan mode needs >= 1 field")
    for f in scan_fields:
        if f < 0:
            raise ConfigurationError(f"config key 'scan_fields': field {f} is negative")

    pulse = _named("peak_field/omega/n_cycles", PulseSpec,
                   peak_field=v["peak_field"], omega=v["omega"], n_cycles=v["n_cycles"])

    sigma = float(v["sigma"])
    if not sigma > 0:
        raise ConfigurationError(f"config key 'sigma': must be > 0, got {sigma}")
    dt = float(v["dt"])
    if not dt > 0:
        raise ConfigurationError(f"config key 'dt': must be > 0, got {dt}")
    if not v["survival_every"] >= 1:
        raise ConfigurationError("config key 'survival_every': must be >= 1")

    width = float(v["absorber_width"])
    absorber = None
    if width > 0:
        absorber = _named("absorber_width/absorber_exponent", AbsorberSpec,
                          width=width, exponent=v["absorber_exponent"])

    config = RunConfig(
        grid=grid,
        pulse=pulse,
        sigma=sigma,
        dt=dt,
        absorber=absorber,
        survival_every=int(v["survival_every"]),
        frame_interval_cycles=float(v["frame_interval_cycles"]),
        snapshot_times=tuple(v["snapshot_times"]),
        mode=mode,
        scan_fields=scan_fields,
        out_dir=str(v["out_dir"]),
        force=bool(v["force"]),
        relax_dt=float(v["relax_dt"]),
        relax_tol=float(v["relax_tol"]),
        relax_max_steps=int(v["relax_max_steps"]),
        min_prominence=float(v["min_prominence"]),
    )
    _gate_resolution(config)
    return config


def _named(label: str, ctor, **kwargs):
    try:
        return ctor(**kwargs)
    except ConfigurationError as exc:
        raise ConfigurationError(f"config key '{label}': {exc}") from None


def _gate_resolution(config: RunConfig):
    """Refuse under-resolved pulse/scan runs unless force=true."""
    if config.mode not in ("pulse", "scan") or config.force:
        return
    fields = config.scan_fields if config.mode == "scan" else (config.pulse.peak_field,)
    for f in fields:
        report = check_resolution(config.grid.spacing, max_momentum(f, config.pulse.omega))
        if not report.passed:
            raise ConfigurationError(
                f"spacing {config.grid.spacing} cannot resolve k_max="
                f"{report.k_max:.4f} at F={f} (margin {report.margin:.3f}); "
                f"set force = true to run anyway"
            )


# ---------------------------------------------------------------------------
# output files


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_text(path: Path, text: str):
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _write_binary(path: Path, array: np.ndarray):
    try:
        path.write_bytes(np.ascontiguousarray(array).tobytes())
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def write_survival_csv(path: Path, log: DiagnosticsLog) -> int:
    lines = ["t,interior_norm,total_norm"]
    for s in log.survival:
        lines.append(f"{_fmt(s.t)},{_fmt(s.interior_norm)},{_fmt(s.total_norm)}")
    _write_text(path, "\n".join(lines) + "\n")
    return len(log.survival)


def _sidecar(path: Path, payload: dict):
    _write_text(path, json.dumps(payload, indent=1) + "\n")


def write_frame(out: Path, stem: str, kind: str, data: np.ndarray,
                grid: GridSpec, t: float, peak_field: float) -> dict:
    """Dump one slice/profile as f64-LE binary plus a JSON sidecar;
    returns the manifest entry."""
    arr = np.asarray(data, dtype="<f8")
    bin_path = out / f"{stem}.bin"
    _write_binary(bin_path, arr)
    if kind == "slice":
        axes = ["x", "y"]
        origin = [float(grid.axis_coords(0)[0]), float(grid.axis_coords(1)[0])]
    else:
        axes = ["x"]
        origin = [float(grid.axis_coords(0)[0])]
    _sidecar(out / f"{stem}.json", {
        "kind": kind,
        "shape": list(arr.shape),
        "dtype": "<f8",
        "order": "C",
        "axes": axes,
        "origin": origin,
        "spacing": grid.spacing,
        "time": t,
        "field": peak_field,
    })
    return {"path": f"{stem}.bin", "kind": kind, "field": peak_field,
            "time": t, "records": int(arr.size)}


_GROUND_DTYPE = "<c16"


def _ground_paths(out: Path, grid: GridSpec) -> tuple[Path, Path]:
    stem = f"ground_n{grid.n_x}x{grid.n_y}x{grid.n_z}_d{grid.spacing:.6g}"
    return out / f"{stem}.bin", out / f"{stem}.json"


def load_or_relax_ground(out: Path, config: RunConfig,
                         log_fn: Callable[[str], None] = lambda s: None):
    """Ground state for overlaps: load the per-grid cache or relax anew."""
    grid = config.grid
    bin_path, meta_path = _ground_paths(out, grid)
    if bin_path.exists() and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        if (meta.get("shape") == list(grid.shape)
                and meta.get("spacing") == grid.spacing):
            raw = np.frombuffer(bin_path.read_bytes(), dtype=_GROUND_DTYPE)
            state = WaveField(grid, raw.reshape(grid.shape).copy())
            log_fn(f"loaded cached ground state ({bin_path.name}, "
                   f"E={meta['energy']:.6f})")
            return state, meta["energy"], None
    result = relax_ground_state(grid, dt_im=config.relax_dt, tol=config.relax_tol,
                                max_steps=config.relax_max_steps)
    _write_binary(bin_path, result.state.amplitudes.astype(_GROUND_DTYPE))
    _sidecar(meta_path, {
        "kind": "ground_state",
        "shape": list(grid.shape),
        "dtype": _GROUND_DTYPE,
        "order": "C",
        "spacing": grid.spacing,
        "energy": result.energy,
        "residual": result.residual,
        "steps": result.steps,
    })
    log_fn(f"relaxed ground state: E={result.energy:.8f} "
           f"({result.steps} steps, residual {result.residual:.2e})")
    return result.state, result.energy, result


# ---------------------------------------------------------------------------
# run modes


def run(config: RunConfig, log_fn: Callable[[str], None] = print,
        progress: Callable[[int, int], None] | None = None) -> int:
    """Execute the configured mode; returns the process exit status."""
    try:
        if config.mode == "check":
            return _run_check(config, log_fn)
        out = Path(config.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output dir {out}: {exc}") from exc
        if config.mode == "relax":
            return _run_relax(config, out, log_fn)
        return _run_pulse_or_scan(config, out, log_fn, progress)
    except ConfigurationError as exc:
        log_fn(f"configuration error: {exc}")
        return 1
    except NumericalError as exc:
        log_fn(f"numerical error: {exc}")
        return 2
    except OutputError as exc:
        log_fn(f"output error: {exc}")
        return 3


def _run_check(config: RunConfig, log_fn) -> int:
    fields = config.scan_fields or (config.pulse.peak_field,)
    omega = config.pulse.omega
    all_pass = True
    for f in fields:
        k = max_momentum(f, omega)
        rep = check_resolution(config.grid.spacing, k)
        u_p = ponderomotive_energy(f, omega)
        r_q = quiver_radius(f, omega)
        status = "pass" if rep.passed else "FAIL"
        all_pass &= rep.passed
        log_fn(
            f"F={f:<4g} k_max={k:.15g} margin={rep.margin:.15g} "
            f"U_p={u_p:.15g} quiver_radius={r_q:.15g} [{status}]"
        )
    return 0 if all_pass else 1


def _run_relax(config: RunConfig, out: Path, log_fn) -> int:
    state, energy, result = load_or_relax_ground(out, config, log_fn)
    report = [
        f"grid = {config.grid.n_x} x {config.grid.n_y} x {config.grid.n_z}",
        f"spacing = {_fmt(config.grid.spacing)}",
        f"energy = {_fmt(energy)}",
    ]
    if result is not None:
        report += [
            f"residual = {_fmt(result.residual)}",
            f"steps = {result.steps}",
        ]
    _write_text(out / "relax_report.txt", "\n".join(report) + "\n")
    log_fn(f"ground-state energy: {energy:.8f}")
    return 0


def _run_pulse_or_scan(config: RunConfig, out: Path, log_fn, progress) -> int:
    fields = (config.scan_fields if config.mode == "scan"
              else (config.pulse.peak_field,))
    ground, ground_energy, _ = load_or_relax_ground(out, config, log_fn)
    gbin, gmeta = _ground_paths(out, config.grid)

    manifest: dict = {
        "format": "cpstab-manifest-v1",
        "mode": config.mode,
        "grid": {"shape": list(config.grid.shape), "spacing": config.grid.spacing},
        "pulse": {"omega": config.pulse.omega, "n_cycles": config.pulse.n_cycles},
        "ground_energy": ground_energy,
        "fields": list(fields),
        "files": [{"path": gbin.name, "kind": "ground_state",
                   "records": int(config.grid.size)}],
        "results": [],
    }

    for f in fields:
        run_cfg = replace(config, pulse=PulseSpec(
            peak_field=f, omega=config.pulse.omega, n_cycles=config.pulse.n_cycles))
        log_fn(f"running F={f:g} ...")
        log = propagate_pulse(run_cfg, ground=ground.copy(), progress=progress)
        tag = f"F{f:g}"

        csv_path = out / f"survival_{tag}.csv"
        records = write_survival_csv(csv_path, log)
        manifest["files"].append({"path": csv_path.name, "kind": "survival",
                                  "field": f, "records": records})

        for frame in log.slices:
            entry = write_frame(out, f"slice_{tag}_t{frame.t:.3f}", "slice",
                                frame.data, config.grid, frame.t, f)
            manifest["files"].append(entry)
        for frame in log.profiles:
            entry = write_frame(out, f"profile_{tag}_t{frame.t:.3f}", "profile",
                                frame.data, config.grid, frame.t, f)
            maxima = find_profile_maxima(frame.data, config.min_prominence,
                                         coords=frame.coords)
            entry["maxima"] = [[x, v] for x, v in maxima]
            manifest["files"].append(entry)

        end = log.survival[-1]
        manifest["results"].append({
            "field": f,
            "end_time": end.t,
            "end_survival_interior": end.interior_norm,
            "end_survival_total": end.total_norm,
            "ground_overlap": log.final_overlap,
            "ground_overlap_ratio": log.final_overlap_ratio,
        })
        log_fn(
            f"  end survival interior={end.interior_norm:.6f} "
            f"total={end.total_norm:.6f} overlap_ratio={log.final_overlap_ratio:.6f}"
        )

    _write_text(out / "manifest.json", json.dumps(manifest, indent=1) + "\n")
    log_fn(f"wrote {out / 'manifest.json'}")
    return 0


def main_run(argv: list[str] | None = None) -> int:  # pragma: no cover
    from .cli import main

    return main(argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main_run())
