"""Batch driver: parameter sweeps, rate extraction, and table emission.

A scan propagates one trajectory per sweep point, extracts a transfer
rate with the configured estimator, solves for the steady state, and
collects everything into an ordered table. Points run independently
(optionally across a process pool); rows are always ordered by sweep
value and the output is byte-stable for a fixed spec and seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, model, propagation, rates
from .errors import ConfigError, EtsimError
from .model import ModelParams
from .propagation import TimeGrid
from .rates import RateMethod

SWEEPABLE = tuple(model.PARAM_KEYS) + ("nbar0", "vx_over_gamma")

COLUMNS = (
    "sweep_name",
    "sweep_value",
    "set",
    "omega",
    "delta_E",
    "v_x",
    "g",
    "gamma",
    "nbar",
    "nbar0",
    "gamma_z",
    "gamma_m",
    "ncut",
    "t_sim",
    "method",
    "k_T",
    "stderr",
    "p_d_final",
    "p_d_ss",
    "n_ss",
    "fit_residual",
    "p_inf",
    "raw_ratio",
    "error",
)


@dataclass(frozen=True)
class ScanSpec:
    """One sweep: base parameters, axis, per-point window, extraction method."""

    base: ModelParams
    axis_name: str
    axis_values: tuple[float, ...]
    t_sim: float | tuple[float, ...]
    method: str = "lifetime"  # 'exp_fit' | 'lifetime' | 'none'
    n_samples: int = 401
    tol: float = 1e-8
    seed: int = 0
    workers: int = 1
    include_dephasing: bool = True
    compute_steady_state: bool = True
    tag: str = ""

    def __post_init__(self):
        if self.axis_name not in SWEEPABLE:
            raise ConfigError(f"axis {self.axis_name!r} not in {SWEEPABLE}")
        values = tuple(float(v) for v in self.axis_values)
        if not values or not all(math.isfinite(v) for v in values):
            raise ConfigError("axis values must be a nonempty finite list")
        object.__setattr__(self, "axis_values", values)
        if self.method not in ("exp_fit", "lifetime", "none"):
            raise ConfigError("method must be exp_fit, lifetime, or none")
        sims = self.t_sim if isinstance(self.t_sim, (tuple, list)) else (self.t_sim,)
        if any(t <= 0 for t in sims):
            raise ConfigError("t_sim must be positive")
        if isinstance(self.t_sim, (tuple, list)):
            if len(self.t_sim) != len(values):
                raise ConfigError("per-point t_sim must match axis length")
            object.__setattr__(self, "t_sim", tuple(float(t) for t in self.t_sim))

    def t_sim_at(self, index: int) -> float:
        if isinstance(self.t_sim, tuple):
            return self.t_sim[index]
        return float(self.t_sim)

    def params_at(self, value: float) -> ModelParams:
        base = self.base.to_dict()
        if self.axis_name == "vx_over_gamma":
            base["v_x"] = value * base["gamma"]
        else:
            base[self.axis_name] = value if self.axis_name != "ncut" else int(value)
        return ModelParams(**base)

    def canonical_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["base"] = self.base.to_dict()
        return out

    def content_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _empty_row(spec: ScanSpec, value: float, index: int) -> dict:
    p = spec.params_at(value)
    row = {c: float("nan") for c in COLUMNS}
    row.update(p.to_dict())
    row.update(
        sweep_name=spec.axis_name,
        sweep_value=value,
        set=spec.tag,
        t_sim=spec.t_sim_at(index),
        method=spec.method,
        error="",
    )
    return row


def scan_point(spec: ScanSpec, index: int) -> dict:
    """One sweep point: propagate, extract the rate, solve the steady state."""
    value = spec.axis_values[index]
    row = _empty_row(spec, value, index)
    try:
        p = spec.params_at(value)
        t_sim = spec.t_sim_at(index)
        h = model.build_hamiltonian(p)
        dissipators = model.build_dissipators(p, include_dephasing=spec.include_dephasing)
        if spec.method != "none":
            rho0 = model.initial_state(p)
            grid = TimeGrid(t_end=t_sim, n_samples=spec.n_samples)
            traj = propagation.evolve(rho0, h, dissipators, grid, tol=spec.tol, omega=p.omega)
            row["p_d_final"] = float(traj.p_donor[-1])
            if spec.method == "exp_fit":
                est = rates.fit_exponential(traj)
                row["fit_residual"] = est.diagnostics.get("fit_residual", float("nan"))
                row["p_inf"] = est.diagnostics.get("p_inf", float("nan"))
            else:
                est = rates.lifetime_rate(traj, t_sim)
                row["raw_ratio"] = est.diagnostics.get("raw_ratio", float("nan"))
            row["k_T"] = est.k_t
            row["stderr"] = est.stderr
        if spec.compute_steady_state:
            report = propagation.steady_state(h, dissipators, p, tol=min(spec.tol, 1e-8))
            row["p_d_ss"] = report.p_donor
            row["n_ss"] = report.n_mean
            row["n_ss_uncorr"] = report.n_uncorrelated
            row["n_ss_balance"] = report.n_from_balance
    except EtsimError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _scan_point_star(args) -> dict:
    return scan_point(*args)


def run_scan(spec: ScanSpec) -> list[dict]:
    """All sweep points, ordered by axis position regardless of scheduling."""
    jobs = [(spec, i) for i in range(len(spec.axis_values))]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_scan_point_star, jobs))
    else:
        rows = [scan_point(*job) for job in jobs]
    return rows


def compare_fgr(table: list[dict], spec: ScanSpec) -> list[dict]:
    """Overlay column: golden-rule rate evaluated at each sweep point."""
    for index, row in enumerate(table):
        p = spec.params_at(spec.axis_values[index])
        try:
            row["k_fgr"] = rates.fgr_rate(p)
        except EtsimError as exc:
            row["k_fgr"] = float("nan")
            if not row.get("error"):
                row["error"] = f"{type(exc).__name__}: {exc}"
    return table


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def table_columns(table: list[dict]) -> list[str]:
    cols = list(COLUMNS)
    extra = sorted({k for row in table for k in row} - set(cols))
    return cols + extra


def emit(
    table: list[dict],
    fmt: str,
    path,
    spec: ScanSpec | None = None,
    timestamp: bool = True,
) -> None:
    """Write the table as CSV (12 significant digits, LF) or JSON.

    The JSON flavor mirrors the columns and adds a metadata block with
    the spec hash, seed, and library versions; the timestamp is the only
    non-deterministic field and can be disabled.
    """
    if not table:
        raise ConfigError("refusing to emit an empty table")
    cols = table_columns(table)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in table:
                fh.write(",".join(_format_cell(row.get(c, float("nan"))) for c in cols) + "\n")
    elif fmt == "json":
        def clean(v):
            if isinstance(v, str):
                return v
            if v is None:
                return None
            if isinstance(v, (bool, np.bool_)):
                return bool(v)
            v = float(v) if not isinstance(v, (int, np.integer)) else int(v)
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        payload = {
            "metadata": {
                "spec_hash": spec.content_hash() if spec is not None else None,
                "seed": spec.seed if spec is not None else None,
                "package_version": __version__,
                "numpy_version": np.__version__,
            },
            "columns": cols,
            "rows": [[clean(row.get(c, float("nan"))) for c in cols] for row in table],
        }
        if spec is not None:
            payload["metadata"]["spec"] = spec.canonical_dict()
        if timestamp:
            payload["metadata"]["created_unix"] = time.time()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}")


def parse_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]
