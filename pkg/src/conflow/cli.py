"""Batch front-end: configure, run, verify, sweep, and compare flows.

A run is described by one JSON document with sections
{grid, background, u0, f, time, outputs, checks}; see configs/ for worked
examples.  Outputs per run: series.csv (the logged diagnostics), snapshot
files for the initial and final conformal factor, trajectory.npz (all
logged snapshots, for verification and comparison), and summary.json.

Exit codes: run returns 0 when the flow reached its horizon or a stationary
state, 2 on blowup / positivity loss / f-domain violation, 1 on config
errors.  verify returns nonzero iff any non-inconclusive check fails.
Identical configs produce bit-identical CSV and summaries.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, fzoo
from .conformal import Background
from .flow import RECORD_COLUMNS, DtPolicy, RunConfig, Trajectory, run
from .grid import GridSpec, ScalarField, field_from_spec, write_field

_RUN_OK = ("time_reached", "stationary")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------

def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _resolve_field_spec(spec: str, base_dir: Path) -> str:
    if isinstance(spec, str) and spec.startswith("file:"):
        p = Path(spec[5:])
        if not p.is_absolute():
            return f"file:{(base_dir / p).resolve()}"
    return spec


def resolve_config_paths(cfg: dict, base_dir: Path) -> dict:
    """Pin relative file: field specs to the config's own directory, so the
    stored copy reloads from anywhere."""
    out = dict(cfg)
    for key in ("background", "u0"):
        if key in out:
            out[key] = _resolve_field_spec(out[key], base_dir)
    return out


def build_run_config(cfg: dict, base_dir: Path, seed: int | None = None) -> RunConfig:
    try:
        gspec = cfg["grid"]
        grid = GridSpec(
            ambient_n=int(gspec["ambient_n"]),
            active_dims=int(gspec.get("active_dims", len(gspec["points"]))),
            points=tuple(gspec["points"]),
            periods=tuple(gspec["periods"]),
        )
        bg = Background(field_from_spec(grid, _resolve_field_spec(cfg["background"], base_dir)),
                        n=grid.ambient_n)
        u0 = field_from_spec(grid, _resolve_field_spec(cfg["u0"], base_dir))
        f = fzoo.from_config(cfg["f"], seed=seed)
        tcfg = cfg.get("time", {})
        dt_cfg = tcfg.get("dt", {"policy": "adaptive"})
        if dt_cfg.get("policy", "adaptive") == "fixed":
            policy = DtPolicy.fixed(float(dt_cfg["dt"]))
        else:
            policy = DtPolicy.adaptive(float(dt_cfg.get("safety", 0.8)))
        return RunConfig(
            background=bg,
            f=f,
            u0=u0,
            T_final=float(tcfg.get("T_final", 1.0)),
            dt_policy=policy,
            stop_tol=float(tcfg.get("stop_tol", 1e-8)),
            renormalize_volume=bool(tcfg.get("renormalize_volume",
                                             tcfg.get("normalized", True))),
            log_cadence=int(tcfg.get("log_cadence", 10)),
            scheme=tcfg.get("scheme", "rk4"),
            normalized=bool(tcfg.get("normalized", True)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _default_out(cfg_path: Path, cfg: dict, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    if "outputs" in cfg and "dir" in cfg["outputs"]:
        return Path(cfg["outputs"]["dir"])
    root = os.environ.get("CONFLOW_OUT", "out")
    return Path(root) / cfg_path.stem


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_series_csv(path: Path, traj: Trajectory):
    with open(path, "w") as fh:
        fh.write(",".join(RECORD_COLUMNS) + "\n")
        cols = [traj.columns[k] for k in RECORD_COLUMNS]
        for i in range(traj.n_records):
            fh.write(",".join(_fmt(c[i]) for c in cols) + "\n")


def write_outputs(traj: Trajectory, out: Path, cfg: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(out / "series.csv", traj)
    write_field(out / "u_initial.field", ScalarField(traj.grid, traj.snapshots[0]))
    write_field(out / "u_final.field", ScalarField(traj.grid, traj.snapshots[-1]))
    np.savez_compressed(
        out / "trajectory.npz",
        snapshots=traj.snapshots,
        vol_pre=traj.vol_pre,
        kind=traj.kind,
        termination=traj.termination,
        notes=traj.notes,
        **{f"col_{k}": traj.columns[k] for k in RECORD_COLUMNS},
    )
    last = {k: float(traj.columns[k][-1]) for k in RECORD_COLUMNS}
    summary = {
        "kind": traj.kind,
        "termination": traj.termination,
        "notes": traj.notes,
        "n_records": traj.n_records,
        "final": last,
        "max_volume_drift": float(np.abs(traj.vol_pre - 1.0).max()),
        "case_tag": traj.config.background.case_tag if traj.config is not None else None,
        "config": cfg,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def load_trajectory(out: Path) -> tuple[Trajectory, dict]:
    summary = _load_json(out / "summary.json")
    cfg = summary.get("config")
    if cfg is None:
        raise ConfigError(f"{out}: summary.json carries no config")
    rc = build_run_config(cfg, out)
    data = np.load(out / "trajectory.npz")
    columns = {k: np.asarray(data[f"col_{k}"], dtype=float) for k in RECORD_COLUMNS}
    traj = Trajectory(
        kind=str(data["kind"]),
        termination=str(data["termination"]),
        columns=columns,
        snapshots=np.asarray(data["snapshots"], dtype=float),
        grid=rc.background.grid,
        n=rc.background.n,
        vol_pre=np.asarray(data["vol_pre"], dtype=float),
        config=rc,
        notes=str(data["notes"]),
    )
    return traj, cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg_path = Path(args.config)
    try:
        cfg = resolve_config_paths(_load_json(cfg_path), cfg_path.parent)
        rc = build_run_config(cfg, cfg_path.parent, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    traj = run(rc)
    out = _default_out(cfg_path, cfg, args.out)
    write_outputs(traj, out, cfg)
    print(f"{cfg_path.stem}: {traj.termination} after {traj.n_records} records"
          f" (t = {traj.times[-1]:.6g}); outputs in {out}")
    return 0 if traj.termination in _RUN_OK else 2


def _select_checks(args_checks, cfg: dict, case_tag: str) -> list[str]:
    if args_checks is not None:
        return [c for c in args_checks.split(",") if c]
    if "checks" in cfg:
        return list(cfg["checks"])
    return diagnostics.default_checks(case_tag)


def cmd_verify(args) -> int:
    target = Path(args.target)
    try:
        if target.is_dir():
            traj, cfg = load_trajectory(target)
            rc = traj.config
            out = Path(args.out) if args.out else target
        else:
            cfg = resolve_config_paths(_load_json(target), target.parent)
            rc = build_run_config(cfg, target.parent, seed=args.seed)
            traj = run(rc)
            out = _default_out(target, cfg, args.out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"verify: {exc}", file=sys.stderr)
        return 1
    names = _select_checks(args.checks, cfg, rc.background.case_tag)
    reports = diagnostics.run_checks(traj, rc.background, rc.f, names)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "background_caveat": diagnostics.BACKGROUND_CAVEAT,
        "reports": [r.to_dict() for r in reports],
    }
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    width = max((len(r.id) for r in reports), default=10)
    for r in reports:
        status = "PASS" if r.passed else ("INCONCLUSIVE" if r.passed is None else "FAIL")
        extra = f"  ({r.notes})" if r.notes else ""
        print(f"{r.id:<{width}}  {status}{extra}")
    failed = [r for r in reports if r.passed is False]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed or inconclusive;"
          f" report in {out / 'report.json'}")
    return 2 if failed else 0


def _sweep_worker(payload) -> tuple[str, int, str]:
    run_id, cfg, out_dir = payload
    try:
        rc = build_run_config(cfg, Path(out_dir))
    except ConfigError as exc:
        return run_id, 1, f"config error: {exc}"
    traj = run(rc)
    write_outputs(traj, Path(out_dir), cfg)
    return run_id, (0 if traj.termination in _RUN_OK else 2), traj.termination


def _merge(base: dict, overrides: dict) -> dict:
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in base.items()}
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **val}
        else:
            merged[key] = val
    return merged


def cmd_sweep(args) -> int:
    plan_path = Path(args.plan)
    try:
        plan = _load_json(plan_path)
        base = plan.get("base", {})
        if "base_path" in plan:
            base = _merge(_load_json(plan_path.parent / plan["base_path"]), base)
        runs = plan["runs"]
        ids = [r["id"] for r in runs]
        if len(set(ids)) != len(ids):
            raise ConfigError("sweep run ids must be unique")
    except (ConfigError, KeyError) as exc:
        print(f"sweep: {exc}", file=sys.stderr)
        return 1
    out_root = Path(args.out) if args.out else Path(
        plan.get("out", Path(os.environ.get("CONFLOW_OUT", "out")) / plan_path.stem))
    jobs = args.jobs or int(plan.get("jobs", 1))

    payloads = []
    for spec in runs:
        cfg = _merge(base, spec.get("overrides", spec.get("config", {})))
        payloads.append((spec["id"], resolve_config_paths(cfg, plan_path.parent),
                         str(out_root / spec["id"])))

    if jobs <= 1:
        results = [_sweep_worker(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, payloads))

    out_root.mkdir(parents=True, exist_ok=True)
    rows = []
    for (run_id, code, term), (_, cfg, out_dir) in zip(results, payloads):
        b_pred = b_fit = float("nan")
        if code != 1:
            try:
                traj, _ = load_trajectory(Path(out_dir))
                rc = traj.config
                b_fit = diagnostics.fit_decay(traj).B_fit
                if rc.background.case_tag == "negative":
                    b_pred, _c = diagnostics.predicted_decay_constants(rc.background, rc.f)
                case = rc.background.case_tag
            except (ConfigError, FileNotFoundError):
                case = "unknown"
        else:
            case = "invalid"
        rows.append((run_id, case, term, code, b_pred, b_fit))
    with open(out_root / "aggregate.csv", "w") as fh:
        fh.write("id,case,termination,exit,B_pred,B_fit\n")
        for rid, case, term, code, bp, bf in rows:
            fh.write(f"{rid},{case},{term},{code},{_fmt(bp)},{_fmt(bf)}\n")
    bad = [r for r in rows if r[3] != 0]
    print(f"sweep: {len(rows) - len(bad)}/{len(rows)} runs ok; table in {out_root / 'aggregate.csv'}")
    return 2 if bad else 0


SHIFT_TOL = 1e-10


def cmd_compare(args) -> int:
    try:
        traj_a, _ = load_trajectory(Path(args.run_a))
        traj_b, cfg_b = load_trajectory(Path(args.run_b))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return 1
    if args.mode == "shift":
        if traj_a.n_records != traj_b.n_records:
            print(f"compare: record counts differ ({traj_a.n_records} vs {traj_b.n_records})")
            return 2
        tgap = float(np.abs(traj_a.times - traj_b.times).max())
        ugap = float(np.abs(traj_a.snapshots - traj_b.snapshots).max())
        print(f"shift compare: max time gap {tgap:.3g}, max u gap {ugap:.3g}"
              f" (tolerance {SHIFT_TOL:g})")
        return 0 if (tgap <= 1e-12 and ugap <= SHIFT_TOL) else 2
    # rescale mode: run_a normalized, run_b non-normalized
    from .flow import hamilton_rescale
    if traj_b.kind != "non_normalized":
        print("compare: run_b must be a non-normalized run for rescale mode", file=sys.stderr)
        return 1
    f = traj_b.config.f
    try:
        rescaled = hamilton_rescale(traj_b, f)
    except ValueError as exc:
        print(f"compare: {exc}", file=sys.stderr)
        return 1
    gap, count = diagnostics.sup_deviation_on_times(
        traj_a.times, traj_a.snapshots, rescaled.times, rescaled.snapshots)
    full = count == traj_a.n_records
    print(f"rescale compare: sup gap {gap:.3g} over {count}/{traj_a.n_records} records"
          f" (tolerance {diagnostics.RESCALE_TOL:g})")
    return 0 if (gap <= diagnostics.RESCALE_TOL and full) else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conflow",
        description="run, verify and compare conformal curvature flows",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for the sampled monotonicity certification")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a flow described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run theorem checks on a config or a run directory")
    p_ver.add_argument("target", help="config JSON or a previous run's output directory")
    p_ver.add_argument("--checks", default=None,
                       help=f"comma list from: {', '.join(diagnostics.CHECK_NAMES)}")
    p_ver.add_argument("--out", default=None)
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="run a plan of config variations")
    p_sw.add_argument("plan")
    p_sw.add_argument("--jobs", type=int, default=None)
    p_sw.add_argument("--out", default=None)
    p_sw.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare two runs (shift or rescale equivalence)")
    p_cmp.add_argument("run_a")
    p_cmp.add_argument("run_b")
    p_cmp.add_argument("--mode", choices=("shift", "rescale"), required=True)
    p_cmp.set_defaults(func=cmd_compare)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
