"""Command line interface.

Subcommands:
  run           simulate and write timeseries.csv, peers.json, summary.json,
                config.json and figures into the output directory
  sweep         repeat a run over several values of one config field,
                same seeds everywhere, and tabulate the summaries
  ilp solve     solve the reference assignment model for a scenario roster
  ilp check-unique   solve, then probe whether the optimal overlay counts
                are unique under randomized re-solves
  plot          re-render figures from a previously written run directory

The output directory is taken from --out-dir, else the SIM_OUT_DIR
environment variable, else the config's out_dir field.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import metrics, plots, refmodel, scenarios
from .config import MODES, PRESET_OVERRIDES, SCENARIOS, RunConfig
from .simulation import run_campaign


def _parse_flash(text):
    try:
        count, at = text.split("@", 1)
        return int(count), float(at)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected COUNT@TIME (e.g. 100@600), got {text!r}")


def _add_config_flags(parser):
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file with config fields (a config.json echo works)")
    parser.add_argument("--preset", choices=sorted(PRESET_OVERRIDES),
                        help="scaled-down base configuration")
    parser.add_argument("--scenario", choices=SCENARIOS)
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--runs", type=int)
    parser.add_argument("--duration", type=float)
    parser.add_argument("--n-peers", type=int, dest="n_peers")
    parser.add_argument("--flash-crowd", type=_parse_flash, metavar="COUNT@TIME",
                        dest="flash_crowd",
                        help="add a flash crowd of COUNT peers starting at TIME")
    parser.add_argument("--inherit-buffer", choices=("on", "off"),
                        dest="inherit_buffer")
    parser.add_argument("--out-dir", dest="out_dir")


_FLAG_FIELDS = ("scenario", "mode", "seed", "runs", "duration", "n_peers")


def build_config(args) -> RunConfig:
    merged = {}
    if getattr(args, "preset", None):
        merged.update(PRESET_OVERRIDES[args.preset])
    if getattr(args, "config", None):
        with open(args.config) as fh:
            merged.update(json.load(fh))
    for name in _FLAG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    flash = getattr(args, "flash_crowd", None)
    if flash is not None:
        merged["flash_n"], merged["flash_time"] = flash
    inherit = getattr(args, "inherit_buffer", None)
    if inherit is not None:
        merged["inherit_buffer"] = inherit == "on"
    if getattr(args, "out_dir", None):
        merged["out_dir"] = args.out_dir
    return RunConfig.from_dict(merged)


def resolve_out_dir(args, cfg):
    if getattr(args, "out_dir", None):
        return args.out_dir
    env = os.environ.get("SIM_OUT_DIR")
    if env:
        return env
    return cfg.out_dir


def _summary_scalars(summary):
    """Uniform row of headline values from a run or campaign summary."""
    if "satisfaction_frac_mean" in summary:
        return {
            "satisfaction_frac": summary["satisfaction_frac_mean"],
            "weighted_delivery": summary.get("weighted_delivery_mean"),
            "populations": summary["populations_mean"],
            "dr_mean": summary["dr_mean"],
        }
    return {
        "satisfaction_frac": summary["satisfaction_frac"],
        "weighted_delivery": summary["weighted_delivery"],
        "populations": summary["populations"],
        "dr_mean": summary["dr_mean"],
    }


def write_run_dir(result, out_dir, render=True):
    os.makedirs(out_dir, exist_ok=True)
    doc = result.cfg.to_dict()
    doc["seed"] = result.seed
    metrics.write_summary(os.path.join(out_dir, "config.json"), doc)
    result.log.write_csv(os.path.join(out_dir, "timeseries.csv"))
    result.log.write_peers(os.path.join(out_dir, "peers.json"))
    metrics.write_summary(os.path.join(out_dir, "summary.json"), result.summary)
    written = [os.path.join(out_dir, name)
               for name in ("config.json", "timeseries.csv", "peers.json",
                            "summary.json")]
    if render:
        written.extend(plots.render_all(result.log, out_dir))
    return written


def execute_runs(cfg, out_dir, render=True):
    """Run the campaign and write artifacts; returns (paths, headline dict)."""
    results = run_campaign(cfg)
    written = []
    if cfg.runs == 1:
        written.extend(write_run_dir(results[0], out_dir, render=render))
        headline = _summary_scalars(results[0].summary)
    else:
        os.makedirs(out_dir, exist_ok=True)
        doc = cfg.to_dict()
        metrics.write_summary(os.path.join(out_dir, "config.json"), doc)
        written.append(os.path.join(out_dir, "config.json"))
        for i, result in enumerate(results):
            sub = os.path.join(out_dir, f"run_{i:02d}")
            written.extend(write_run_dir(result, sub, render=render))
        aggregate = metrics.aggregate_runs([r.summary for r in results])
        metrics.write_summary(os.path.join(out_dir, "aggregate.json"), aggregate)
        written.append(os.path.join(out_dir, "aggregate.json"))
        headline = _summary_scalars(aggregate)
    return written, headline


def _print_headline(headline):
    sat = headline["satisfaction_frac"]
    dlv = headline["weighted_delivery"]
    dlv_text = f"{dlv:.4f}" if dlv is not None else "n/a"
    print(f"satisfaction {sat:.4f}  delivery {dlv_text}")


def cmd_run(args):
    cfg = build_config(args)
    out_dir = resolve_out_dir(args, cfg)
    written, headline = execute_runs(cfg, out_dir, render=not args.no_plots)
    for path in written:
        print(f"wrote {path}")
    _print_headline(headline)
    return 0


def cmd_sweep(args):
    cfg = build_config(args)
    field_names = {f.name for f in dataclasses.fields(RunConfig)}
    if args.param not in field_names:
        raise ValueError(f"unknown config field {args.param!r}")
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    if not values:
        raise ValueError("--values must list at least one number")
    out_dir = resolve_out_dir(args, cfg)
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    for value in values:
        point_cfg = dataclasses.replace(cfg, **{args.param: value}).validate()
        point_dir = os.path.join(out_dir, f"{args.param}_{value:g}")
        written, headline = execute_runs(point_cfg, point_dir,
                                         render=not args.no_plots)
        for path in written:
            print(f"wrote {path}")
        rows.append({"value": value, **headline})

    K = cfg.n_overlays
    table_path = os.path.join(out_dir, "sweep.csv")
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [args.param, "satisfaction_frac", "weighted_delivery"]
        header += [f"dr_{j}" for j in range(1, K + 1)]
        header += [f"n_{j}" for j in range(1, K + 1)]
        writer.writerow(header)
        for row in rows:
            line = [repr(row["value"]), repr(row["satisfaction_frac"])]
            dlv = row["weighted_delivery"]
            line.append("" if dlv is None else repr(dlv))
            for j in range(K):
                dr = row["dr_mean"][j]
                line.append("" if dr is None else repr(dr))
            for j in range(K):
                line.append(repr(float(row["populations"][j])))
            writer.writerow(line)
    metrics.write_summary(os.path.join(out_dir, "sweep.json"),
                          {"param": args.param, "points": rows})
    print(f"wrote {table_path}")
    print(f"wrote {os.path.join(out_dir, 'sweep.json')}")
    return 0


def _build_instance(cfg):
    roster = scenarios.expected_population(cfg)
    return refmodel.build_instance(
        [(p.upload, p.desired_rate) for p in roster],
        cfg.rates,
        tuple(cfg.server_capacity(j) for j in range(1, cfg.n_overlays + 1)),
    )


def cmd_ilp_solve(args):
    cfg = build_config(args)
    instance = _build_instance(cfg)
    assignment = refmodel.solve_max_satisfaction(instance)
    out_dir = resolve_out_dir(args, cfg)
    os.makedirs(out_dir, exist_ok=True)
    path = args.out or os.path.join(out_dir, "assignment.json")
    refmodel.save_assignment(path, instance, assignment)
    print(f"wrote {path}")
    print(f"satisfied {assignment.satisfied} of {instance.n_peers} "
          f"({assignment.satisfied / instance.n_peers:.4f})")
    print("overlay counts " + " ".join(str(c) for c in assignment.counts))
    return 0


def cmd_ilp_check_unique(args):
    cfg = build_config(args)
    instance = _build_instance(cfg)
    assignment = refmodel.solve_max_satisfaction(instance)
    report = refmodel.check_uniqueness(instance, resolves=args.resolves,
                                       seed=cfg.seed)
    out_dir = resolve_out_dir(args, cfg)
    os.makedirs(out_dir, exist_ok=True)
    path = args.out or os.path.join(out_dir, "assignment.json")
    refmodel.save_assignment(path, instance, assignment, report)
    print(f"wrote {path}")
    print(f"satisfied {assignment.satisfied} of {instance.n_peers}")
    print("overlay counts " + " ".join(str(c) for c in assignment.counts))
    verdict = "unique" if report.unique else "not unique"
    print(f"optimal overlay counts are {verdict} "
          f"across {len(report.resolve_counts)} randomized re-solves")
    return 0


def cmd_plot(args):
    run_dir = args.run_dir
    log = metrics.load_run(run_dir)
    for path in plots.render_all(log, run_dir):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="p2pdash",
        description="Simulator of multi-overlay P2P live streaming with "
                    "distributed rate switching, plus an exact assignment "
                    "reference model.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate and write artifacts")
    _add_config_flags(run_p)
    run_p.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    run_p.set_defaults(fn=cmd_run)

    sweep_p = sub.add_parser("sweep", help="vary one config field")
    _add_config_flags(sweep_p)
    sweep_p.add_argument("--param", required=True,
                         help="config field to vary (e.g. dr_thres)")
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values")
    sweep_p.add_argument("--no-plots", action="store_true")
    sweep_p.set_defaults(fn=cmd_sweep)

    ilp_p = sub.add_parser("ilp", help="reference assignment model")
    ilp_sub = ilp_p.add_subparsers(dest="ilp_command", required=True)
    solve_p = ilp_sub.add_parser("solve", help="solve one scenario roster")
    _add_config_flags(solve_p)
    solve_p.add_argument("--out", help="assignment JSON path")
    solve_p.set_defaults(fn=cmd_ilp_solve)
    unique_p = ilp_sub.add_parser("check-unique",
                                  help="probe optimal-count uniqueness")
    _add_config_flags(unique_p)
    unique_p.add_argument("--out", help="assignment JSON path")
    unique_p.add_argument("--resolves", type=int, default=10)
    unique_p.set_defaults(fn=cmd_ilp_check_unique)

    plot_p = sub.add_parser("plot", help="re-render figures for a run dir")
    plot_p.add_argument("--run-dir", required=True, dest="run_dir")
    plot_p.set_defaults(fn=cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
