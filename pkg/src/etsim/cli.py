"""Command-line driver.

Subcommands: evolve, scan, fgr, steady, oracle-bath, emulate, preset.
Configs are single JSON files with explicit physics parameters and a
mandatory ``"units": "omega"`` marker; nothing physical is defaulted.
Failures print a machine-readable JSON object to stderr and exit
nonzero. Environment overrides are limited to ETSIM_WORKERS and
ETSIM_OUTDIR.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, bath, fock, hardware, model, presets, propagation, rates, scan
from .errors import ConfigError, EtsimError
from .model import DephasingBasis, ModelParams
from .propagation import TimeGrid


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if cfg.get("units") != "omega":
        raise ConfigError('config must declare "units": "omega"')
    return cfg


def _params(cfg: dict) -> ModelParams:
    try:
        return ModelParams.from_dict(cfg["params"])
    except KeyError as exc:
        raise ConfigError(f"incomplete parameter block: {exc}") from exc


def _axis_values(axis_cfg: dict) -> tuple[str, tuple[float, ...]]:
    name = axis_cfg.get("name")
    if name is None:
        raise ConfigError("axis block needs a 'name'")
    if "values" in axis_cfg:
        values = tuple(float(v) for v in axis_cfg["values"])
    else:
        try:
            start, stop, step = axis_cfg["start"], axis_cfg["stop"], axis_cfg["step"]
        except KeyError as exc:
            raise ConfigError("axis needs 'values' or start/stop/step") from exc
        values = tuple(np.round(np.arange(start, stop + 0.5 * step, step), 10))
    return name, values


def _out_path(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    outdir = Path(os.environ.get("ETSIM_OUTDIR", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir / default_name


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get("ETSIM_WORKERS", "1"))


def _write_trajectory(traj, path, extra: dict | None = None) -> None:
    if not extra:
        traj.to_csv(path)
        return
    cols = list(traj.CSV_COLUMNS) + list(extra)
    rows = np.column_stack(
        [
            traj.times,
            traj.omega * traj.times / (2.0 * math.pi),
            traj.p_donor,
            traj.n_mean,
            traj.a_mean.real,
            traj.a_mean.imag,
            traj.corr.real,
            traj.corr.imag,
            traj.trace_defect,
        ]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            cells = [f"{v:.12g}" for v in row] + [str(v) for v in extra.values()]
            fh.write(",".join(cells) + "\n")


def _cmd_evolve(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    basis = DephasingBasis(cfg.get("dephasing_basis", "model_z"))
    h = model.build_hamiltonian(p)
    dissipators = model.build_dissipators(
        p, include_dephasing=cfg.get("include_dephasing", True), dephasing_basis=basis
    )
    grid = TimeGrid(t_end=float(cfg["t_end"]), n_samples=int(cfg.get("n_samples", 401)))
    traj = propagation.evolve(
        model.initial_state(p), h, dissipators, grid, tol=args.tol, omega=p.omega
    )
    path = _out_path(args, "evolve.csv")
    traj.to_csv(path)
    print(path)
    return 0


def _cmd_scan(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    name, values = _axis_values(cfg["axis"])
    spec = scan.ScanSpec(
        base=p,
        axis_name=name,
        axis_values=values,
        t_sim=cfg["t_sim"] if not isinstance(cfg["t_sim"], list) else tuple(cfg["t_sim"]),
        method=cfg.get("method", "lifetime"),
        n_samples=int(cfg.get("n_samples", 401)),
        tol=args.tol,
        seed=args.seed,
        workers=_workers(args),
        include_dephasing=cfg.get("include_dephasing", True),
        compute_steady_state=cfg.get("compute_steady_state", True),
    )
    table = scan.run_scan(spec)
    if cfg.get("fgr_overlay", False):
        table = scan.compare_fgr(table, spec)
    path = _out_path(args, f"scan_{name}.{args.format}")
    scan.emit(table, args.format, path, spec=spec)
    print(path)
    return 0


def _cmd_fgr(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    name, values = _axis_values(cfg["axis"])
    source = cfg.get("population_source", "nbar")
    rows = []
    for v in values:
        fields = p.to_dict()
        if name == "vx_over_gamma":
            fields["v_x"] = v * fields["gamma"]
        else:
            fields[name] = v
        point = ModelParams(**fields)
        rows.append(
            {
                "sweep_name": name,
                "sweep_value": v,
                **point.to_dict(),
                "k_fgr": rates.fgr_rate(point, population_source=source),
            }
        )
    path = _out_path(args, f"fgr_{name}.{args.format}")
    if args.format == "csv":
        cols = list(rows[0])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in rows:
                fh.write(",".join(scan._format_cell(row[c]) for c in cols) + "\n")
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"rows": rows}, fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(path)
    return 0


def _cmd_steady(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    basis = DephasingBasis(cfg.get("dephasing_basis", "model_z"))
    h = model.build_hamiltonian(p)
    dissipators = model.build_dissipators(
        p, include_dephasing=cfg.get("include_dephasing", True), dephasing_basis=basis
    )
    report = propagation.steady_state(
        h, dissipators, p, detect_degenerate=cfg.get("detect_degenerate", False)
    )
    payload = {
        "p_donor": report.p_donor,
        "n_mean": report.n_mean,
        "a_mean": [report.a_mean.real, report.a_mean.imag],
        "y_over_y0": report.y_over_y0,
        "corr": [report.corr.real, report.corr.imag],
        "n_from_balance": report.n_from_balance,
        "a_predicted": [report.a_predicted.real, report.a_predicted.imag],
        "y_predicted_over_y0": report.y_predicted_over_y0,
        "n_uncorrelated": report.n_uncorrelated,
        "residual": report.residual,
        "degenerate": report.degenerate,
        "balance_residual": propagation.phonon_number_balance_residual(report),
        "params": p.to_dict(),
    }
    path = _out_path(args, "steady.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(path)
    return 0


def _cmd_oracle_bath(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    bcfg = cfg["bath"]
    disc = bath.discretize_ohmic(
        gamma_target=float(bcfg["gamma_target"]),
        omega0=p.omega,
        n_modes=int(bcfg.get("n_modes", 7)),
        band=tuple(bcfg.get("band", (0.5, 1.5))),
        ncut_b=int(bcfg.get("ncut_b", 1)),
        omega_c=float(bcfg.get("omega_c", math.inf)),
    )
    grid = TimeGrid(t_end=float(cfg["t_end"]), n_samples=int(cfg.get("n_samples", 81)))
    rho0 = None
    if cfg.get("initial", "displaced") == "donor_vacuum":
        space = p.space()
        rho0 = fock.product_state(fock.DONOR_PROJECTOR, fock.fock_dm(0, space), space)
    report = bath.oracle_comparison(
        p,
        disc,
        grid,
        rho0_system=rho0,
        bath_nbar=float(cfg.get("bath_nbar", 0.0)),
        n_samples=int(cfg.get("thermal_samples", 64)),
        seed=args.seed,
        tol=args.tol,
        dim_cap=int(cfg.get("dim_cap", bath.DEFAULT_DIM_CAP)),
    )
    path = _out_path(args, "oracle_bath.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(path)
    return 0


def _cmd_emulate(args) -> int:
    cfg = _load_config(args.config)
    p = _params(cfg)
    plan_cfg = cfg.get("plan", {})
    plan = hardware.SequencePlan(
        t_sim=float(plan_cfg.get("t_sim", cfg.get("t_sim", 0.0))),
        n_samples=int(plan_cfg.get("n_samples", 161)),
        displacement=plan_cfg.get("displacement", "ideal"),
        measure=plan_cfg.get("measure", "donor"),
        include_dephasing=plan_cfg.get("include_dephasing", True),
    )
    out = hardware.emulate_sequence(
        plan,
        p,
        eta=float(cfg.get("eta", 0.1)),
        mu=float(cfg.get("mu", hardware.DEFAULT_MU)),
        tol=args.tol,
        n_shots=cfg.get("n_shots"),
        seed=args.seed,
    )
    base = _out_path(args, "emulate.csv")
    if out["trajectory"] is not None:
        _write_trajectory(out["trajectory"], base, extra={"path": out["path"]})
    payload = {k: v for k, v in out.items() if k != "trajectory"}
    payload = {
        k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in payload.items()
    }
    meas_path = Path(str(base) + ".measurement.json")
    with open(meas_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(base)
    print(meas_path)
    return 0


def _cmd_preset(args) -> int:
    if args.action == "list":
        for name in sorted(presets.PRESETS):
            preset = presets.PRESETS[name]
            print(f"{name:8s} [{preset.kind}] {preset.description}")
        return 0
    name = args.name
    if not name:
        raise ConfigError("preset run needs a name")
    outdir = Path(args.out or os.environ.get("ETSIM_OUTDIR", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    kind, payload, spec_info = presets.run_preset(
        name, workers=_workers(args), seed=args.seed
    )
    if kind == "scan":
        path = outdir / f"{name}.{args.format}"
        scan.emit(payload, args.format, path, spec=spec_info[0])
        print(path)
    else:
        for label, traj in payload.items():
            path = outdir / f"{name}_{label}.csv"
            traj.to_csv(path)
            print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etsim",
        description="dissipative spin-boson transfer simulator",
    )
    parser.add_argument("--version", action="version", version=f"etsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", default=None, help="output path")
        sp.add_argument("--format", default="csv", choices=("csv", "json"))
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=1e-8)

    common(sub.add_parser("evolve", help="propagate one trajectory"))
    common(sub.add_parser("scan", help="run a parameter sweep"))
    common(sub.add_parser("fgr", help="golden-rule rate table"))
    common(sub.add_parser("steady", help="steady-state report"))
    common(sub.add_parser("oracle-bath", help="discretized-bath comparison"))
    common(sub.add_parser("emulate", help="lab-frame protocol emulation"))
    preset_parser = sub.add_parser("preset", help="list or run named presets")
    preset_parser.add_argument("action", choices=("list", "run"))
    preset_parser.add_argument("name", nargs="?", default=None)
    common(preset_parser, needs_config=False)
    return parser


_DISPATCH = {
    "evolve": _cmd_evolve,
    "scan": _cmd_scan,
    "fgr": _cmd_fgr,
    "steady": _cmd_steady,
    "oracle-bath": _cmd_oracle_bath,
    "emulate": _cmd_emulate,
    "preset": _cmd_preset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except EtsimError as exc:
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr,
            sort_keys=True,
        )
        sys.stderr.write("\n")
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        json.dump(
            {"error": type(exc).__name__, "message": str(exc)},
            sys.stderr,
            sort_keys=True,
        )
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
