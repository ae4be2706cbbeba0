"""Command-line front end: ``cpm-auth {calibrate,run,sweep,table,demo}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import (
    ConfigError,
    ScenarioConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config_data,
)
from .detector import calibrate_threshold
from .harness import (
    PACKET_CSV_HEADER,
    SWEEP_AXES,
    SweepRow,
    format_mic_table,
    read_packet_csv,
    run_calibration,
    run_scenario,
    sweep,
    write_packet_csv,
    write_reference_csv,
    write_summary_csv,
)

log = logging.getLogger("cpm_auth")


class CliError(RuntimeError):
    pass


def load_invocation_config(args) -> ScenarioConfig:
    data = load_config_data(args.config) if args.config else {}
    data = apply_overrides(data, args.set)
    if args.seed is not None:
        data["seed"] = args.seed
    return config_from_dict(data)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _clean(obj):
    """JSON-safe copy: NaN/inf floats become strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_manifest(out: Path, command: str, config: ScenarioConfig, outputs, extra) -> Path:
    manifest = {
        "command": command,
        "seed": config.seed,
        "effective_config": config_to_dict(config),
        "versions": {
            "cpm_auth": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "kernel_backend": BACKEND,
        },
        "outputs": {p.name: _sha256(p) for p in outputs},
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")
    return path


def _write_config_echo(out: Path, config: ScenarioConfig) -> Path:
    path = out / "config.yaml"
    path.write_text(dump_config(config))
    return path


def _check_csv(path: Path, header, rows: int):
    with path.open(newline="") as fh:
        content = list(csv.reader(fh))
    if not content or tuple(content[0]) != tuple(header) or len(content) - 1 != rows:
        raise CliError(f"{path}: output failed validation")


def cmd_calibrate(args) -> int:
    config = load_invocation_config(args)
    out = _out_dir(args)
    refset = run_calibration(config)
    e_th = calibrate_threshold(refset, config.detector.threshold_rule)
    ref_csv = write_reference_csv(refset, out / "reference.csv")
    _check_csv(ref_csv, ("k", "e_ab_ref", "e_ae_ref"), len(refset))
    echo = _write_config_echo(out, config)
    write_manifest(out, "calibrate", config, [ref_csv, echo], {
        "e_th": e_th,
        "reference": {"mean_e_ab": refset.mean_ab, "mean_e_ae": refset.mean_ae,
                      "size": len(refset), "skipped": refset.skipped},
    })
    print(f"e_th = {e_th:.6g}  mean(e_ab_ref) = {refset.mean_ab:.6g}  "
          f"mean(e_ae_ref) = {refset.mean_ae:.6g}")
    return 0


def cmd_run(args) -> int:
    config = load_invocation_config(args)
    out = _out_dir(args)
    report = run_scenario(config)
    packets = write_packet_csv(report, out / "packets.csv")
    if len(read_packet_csv(packets)) != config.num_packets:
        raise CliError(f"{packets}: output failed validation")
    _check_csv(packets, PACKET_CSV_HEADER, config.num_packets)
    row = SweepRow(math.nan, config.seed, report.bob_drop_rate, report.eve_drop_rate,
                   report.e_th_used)
    summary = write_summary_csv([row], out / "summary.csv")
    echo = _write_config_echo(out, config)
    extra = {
        "e_th": report.e_th_used,
        "bob_drop_rate": report.bob_drop_rate,
        "eve_drop_rate": report.eve_drop_rate,
        "sync_failures": report.sync_failures,
    }
    if report.reference is not None:
        extra["reference"] = {"mean_e_ab": report.reference.mean_ab,
                              "mean_e_ae": report.reference.mean_ae,
                              "size": len(report.reference),
                              "skipped": report.reference.skipped}
    write_manifest(out, "run", config, [packets, summary, echo], extra)
    print(f"bob_drop_rate = {report.bob_drop_rate:.4%}  eve_drop_rate = "
          f"{report.eve_drop_rate:.4%}  e_th = {report.e_th_used:.6g}")
    return 0


def _parse_floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse value list {text!r}") from None


def _parse_seeds(text: str):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise CliError("no seeds given")
    return seeds


def cmd_sweep(args) -> int:
    config = load_invocation_config(args)
    out = _out_dir(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [config.seed]
    result = sweep(config, args.axis, _parse_floats(args.values), seeds, workers=args.workers)
    summary = write_summary_csv(result.rows, out / "summary.csv")
    stats = out / "sweep_stats.csv"
    with stats.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("axis_value", "n", "bob_mean", "bob_std", "eve_mean", "eve_std"))
        for s in result.summary():
            w.writerow([repr(float(s[k])) if k != "n" else s[k]
                        for k in ("axis_value", "n", "bob_mean", "bob_std", "eve_mean", "eve_std")])
    echo = _write_config_echo(out, config)
    failures = [dataclasses.asdict(r) for r in result.rows if r.error]
    write_manifest(out, "sweep", config, [summary, stats, echo],
                   {"axis": args.axis, "seeds": seeds, "failed_cells": failures})
    for s in result.summary():
        print(f"{args.axis} = {s['axis_value']:<10g} bob {s['bob_mean']:.4f} +- {s['bob_std']:.4f}"
              f"   eve {s['eve_mean']:.4f} +- {s['eve_std']:.4f}")
    return 1 if failures else 0


def cmd_table(args) -> int:
    print(format_mic_table())
    return 0


DEMO_SETUPS = (("co-located (d_BE = 0 m)", 0.0), ("separated (d_BE = 0.10 m)", 0.10))


def cmd_demo(args) -> int:
    config = load_invocation_config(args)
    rows = []
    for label, d_be in DEMO_SETUPS:
        cfg = config.replace(geometry=dataclasses.replace(config.geometry, d_be=d_be))
        report = run_scenario(cfg)
        rows.append(SweepRow(d_be, cfg.seed, report.bob_drop_rate, report.eve_drop_rate,
                             report.e_th_used))
        print(f"{label:<28} bob drop rate {report.bob_drop_rate:7.2%}   "
              f"eve drop rate {report.eve_drop_rate:7.2%}   e_th {report.e_th_used:.4g}")
    if args.out:
        out = _out_dir(args)
        summary = write_summary_csv(rows, out / "summary.csv")
        echo = _write_config_echo(out, config)
        write_manifest(out, "demo", config, [summary, echo], {})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file (defaults apply if omitted)")
    common.add_argument("--out", default=None, help="output directory (created if absent)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. geometry.d_be=0.05 (repeatable)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="cpm-auth", description="Channel Profile Monitoring packet authentication")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", parents=[common], help="build a reference set and threshold")
    sub.add_parser("run", parents=[common], help="run one scenario")
    p = sub.add_parser("sweep", parents=[common], help="sweep one parameter over seeds")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--seeds", default=None, help="e.g. 0-9 or 1,2,5")
    p.add_argument("--workers", type=int, default=1)
    sub.add_parser("table", parents=[common], help="print the MIC overhead table")
    sub.add_parser("demo", parents=[common], help="run the co-located and separated setups")
    return parser


COMMANDS = {
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "table": cmd_table,
    "demo": cmd_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("calibrate", "run", "sweep") and not args.out:
        parser.error(f"{args.command} needs --out")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CliError, OSError) as exc:
        print(f"cpm-auth: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
