"""Named sweep presets with frozen parameter sets.

Each preset pins the physics parameters of one published scan plus the
window and estimator choices used to reproduce it at desk scale. The
bath occupation is not quoted alongside most parameter sets; presets
use values from the stated operating range (0.1 for the single-trace
preset, 0.2 for the sweeps) and record them here so nothing is implicit.
Simulation windows: exponential-fit sweeps integrate for eight periods
of the largest golden-rule rate on the axis; inverse-lifetime sweeps use
a fixed window chosen inside the 16..100 oscillation range that the
hardware runs correspond to (stated per preset below).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model, propagation, rates
from .errors import ConfigError
from .model import ModelParams
from .propagation import TimeGrid
from .scan import ScanSpec, compare_fgr, run_scan

#: Parameters exactly as published; the preset-integrity test compares
#: built presets against this table.
CAPTION_PARAMS = {
    "fig1c": {"v_x": 0.18, "g": 1.0, "delta_E": 1.0, "gamma": 0.014,
              "gamma_z": 0.0013, "gamma_m": 0.0013},
    "fig3a": {"v_x": 0.056, "g": 1.4, "gamma": 0.06, "gamma_m": 0.001},
    "fig3d": {"v_x": 0.046, "g": 0.521, "gamma": 0.025, "gamma_m": 0.0005},
    "fig4a_set_a": {"v_x": 0.18, "g": 0.95, "gamma": 0.020,
                    "gamma_z": 0.0025, "gamma_m": 0.0013},
    "fig4a_set_b": {"v_x": 0.21, "g": 1.08, "gamma": 0.038,
                    "gamma_z": 0.0025, "gamma_m": 0.0013},
    "fig5": {"delta_E": 2.0, "g": 0.80, "gamma": 0.11,
             "gamma_z": 0.0013, "gamma_m": 0.0013},
    "figs4": {"v_x": 0.19, "g": 1.91, "gamma": 0.038, "nbar": 0.2,
              "gamma_m": 0.0013},
}

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FigurePreset:
    name: str
    kind: str  # 'scan' or 'evolve'
    description: str


PRESETS = {
    "fig1c": FigurePreset("fig1c", "evolve",
                          "donor population: unitary vs dissipative single traces"),
    "fig3a": FigurePreset("fig3a", "scan",
                          "nonadiabatic rate spectrum, strong spin-phonon coupling"),
    "fig3d": FigurePreset("fig3d", "scan",
                          "nonadiabatic rate spectrum, weaker coupling"),
    "fig4a": FigurePreset("fig4a", "scan",
                          "adiabatic gamma-scaled spectra, two parameter sets"),
    "fig5": FigurePreset("fig5", "scan",
                         "rate vs electronic coupling at fixed gap: optimal transfer"),
    "figs4": FigurePreset("figs4", "scan",
                          "steady-state phonon population vs gap"),
}


def _gap_axis() -> tuple[float, ...]:
    return tuple(np.round(np.arange(0.2, 4.5001, 0.05), 6))


def _fgr_window(base: ModelParams, axis) -> float:
    """Eight periods of the largest golden-rule rate along the axis."""
    peak = max(
        rates.fgr_rate(ModelParams(**{**base.to_dict(), "delta_E": float(v)}))
        for v in axis
    )
    return 8.0 * TWO_PI / peak


def build_scan_specs(name: str, workers: int = 1, seed: int = 0) -> list[ScanSpec]:
    """ScanSpecs for a sweep preset (one per tagged series)."""
    if name == "fig3a":
        base = ModelParams(delta_E=1.0, v_x=0.056, g=1.4, gamma=0.06, nbar=0.2,
                           gamma_z=0.0, gamma_m=0.001, ncut=20)
        axis = _gap_axis()
        return [ScanSpec(base=base, axis_name="delta_E", axis_values=axis,
                         t_sim=_fgr_window(base, axis), method="exp_fit",
                         n_samples=501, workers=workers, seed=seed)]
    if name == "fig3d":
        base = ModelParams(delta_E=1.0, v_x=0.046, g=0.521, gamma=0.025, nbar=0.2,
                           gamma_z=0.0, gamma_m=0.0005, ncut=15)
        axis = _gap_axis()
        return [ScanSpec(base=base, axis_name="delta_E", axis_values=axis,
                         t_sim=_fgr_window(base, axis), method="exp_fit",
                         n_samples=501, workers=workers, seed=seed)]
    if name == "fig4a":
        axis = tuple(np.round(np.arange(0.5, 3.5001, 0.25), 6))
        specs = []
        for tag, (v_x, g, gamma) in (("A", (0.18, 0.95, 0.020)), ("B", (0.21, 1.08, 0.038))):
            base = ModelParams(delta_E=1.0, v_x=v_x, g=g, gamma=gamma, nbar=0.2,
                               gamma_z=0.0025, gamma_m=0.0013, ncut=20)
            # window fixed in units of the relaxation time: gamma * t_sim = 8
            specs.append(ScanSpec(base=base, axis_name="delta_E", axis_values=axis,
                                  t_sim=8.0 / gamma, method="lifetime",
                                  n_samples=401, workers=workers, seed=seed, tag=tag))
        return specs
    if name == "fig5":
        base = ModelParams(delta_E=2.0, v_x=0.044, g=0.80, gamma=0.11, nbar=0.2,
                           gamma_z=0.0013, gamma_m=0.0013, ncut=15)
        axis = tuple(np.round(np.arange(0.4, 8.0001, 0.4), 6))
        # Window choice: 8 vibrational oscillations keeps k*t_sim of order
        # one across the whole sweep, where the k0-corrected estimator has a
        # nearly uniform bias. Longer (hardware-scale) windows let the
        # residual donor plateau dominate the time-weighted integral and
        # systematically suppress the strong-coupling side of the curve.
        return [ScanSpec(base=base, axis_name="vx_over_gamma", axis_values=axis,
                         t_sim=8.0 * TWO_PI, method="lifetime",
                         n_samples=401, workers=workers, seed=seed)]
    if name == "figs4":
        base = ModelParams(delta_E=0.0, v_x=0.19, g=1.91, gamma=0.038, nbar=0.2,
                           gamma_z=0.0, gamma_m=0.0013, ncut=30)
        axis = tuple(np.round(np.arange(0.0, 4.0001, 0.5), 6))
        return [ScanSpec(base=base, axis_name="delta_E", axis_values=axis,
                         t_sim=1.0, method="none", n_samples=3,
                         workers=workers, seed=seed)]
    raise ConfigError(f"{name!r} is not a scan preset")


def build_evolve_jobs(name: str) -> list[dict]:
    """Evolve-type presets: labelled single-trajectory jobs."""
    if name == "fig1c":
        t_end = 40.0 * TWO_PI
        common = dict(delta_E=1.0, v_x=0.18, g=1.0, nbar=0.1, ncut=20)
        unitary = ModelParams(gamma=0.0, gamma_z=0.0, gamma_m=0.0, **common)
        dissipative = ModelParams(gamma=0.014, gamma_z=0.0013, gamma_m=0.0013, **common)
        return [
            {"label": "unitary", "params": unitary, "t_end": t_end,
             "n_samples": 801, "include_dephasing": False},
            {"label": "dissipative", "params": dissipative, "t_end": t_end,
             "n_samples": 801, "include_dephasing": True},
        ]
    raise ConfigError(f"{name!r} is not an evolve preset")


def run_preset(name: str, workers: int = 1, seed: int = 0, fgr_overlay: bool | None = None):
    """Execute a preset.

    Scan presets return (kind='scan', merged table, specs); the gap
    sweeps also carry the golden-rule overlay column. Evolve presets
    return (kind='evolve', {label: Trajectory}, jobs).
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[name]
    if preset.kind == "scan":
        specs = build_scan_specs(name, workers=workers, seed=seed)
        table = []
        for spec in specs:
            part = run_scan(spec)
            overlay = fgr_overlay if fgr_overlay is not None else name in ("fig3a", "fig3d")
            if overlay:
                part = compare_fgr(part, spec)
            table.extend(part)
        return preset.kind, table, specs
    jobs = build_evolve_jobs(name)
    out = {}
    for job in jobs:
        p = job["params"]
        h = model.build_hamiltonian(p)
        dissipators = model.build_dissipators(p, include_dephasing=job["include_dephasing"])
        traj = propagation.evolve(
            model.initial_state(p),
            h,
            dissipators,
            TimeGrid(t_end=job["t_end"], n_samples=job["n_samples"]),
            tol=1e-9,
            omega=p.omega,
        )
        out[job["label"]] = traj
    return preset.kind, out, jobs
