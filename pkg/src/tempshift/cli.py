"""Command line entry point: ``tempshift {run,synth-gen,heatmap,compare,split-inspect}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataset as dsm
from . import drift
from .experiment import (
    RunFailure,
    atomic_write,
    compare_reports,
    load_dataset,
    raw_heatmap,
    run_experiment,
    scores_from_csv,
)
from .splitting import PRESETS, preset_split, verify_plan_relations
from .synth import generate

log = logging.getLogger("tempshift")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_CONFIG = 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="K=V", help="override a config key")
    p.add_argument("--drop-bad-rows", action="store_true", help="skip unparseable CSV rows")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempshift", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fit every (preset, seed) pair and write reports")
    _common(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")

    p = sub.add_parser("synth-gen", help="write a synthetic dataset and its config sidecar")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="CSV path; the sidecar goes next to it as .json")

    p = sub.add_parser("heatmap", help="raw-feature MMD heatmap, band profile and detected periods")
    _common(p)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--max-lag", type=int, default=None)

    p = sub.add_parser("compare", help="compare scores.csv files against a baseline")
    p.add_argument("scores", nargs="+", type=Path)
    p.add_argument("--baseline", help="label 'method/split' of the baseline (default: first)")
    p.add_argument("--out", type=Path, help="write the comparison as JSON")

    p = sub.add_parser("split-inspect", help="print split plans and their relation checks")
    _common(p)
    p.add_argument("--out", type=Path, help="directory for splitplan_<preset>.json files")
    return parser


def _raw(args) -> dict[str, str]:
    raw = cfgmod.load(args.config, args.set)
    if args.drop_bad_rows:
        raw["data.drop_bad_rows"] = "true"
    return raw


def cmd_run(args) -> int:
    raw = _raw(args)
    if args.out:
        raw["output.dir"] = str(args.out)
    cfg = cfgmod.experiment_config(raw)
    try:
        summary = run_experiment(cfg, jobs=args.jobs)
    except RunFailure as exc:
        log.error("%s", exc)
        return EXIT_RUN_FAILED
    except (ValueError, OSError) as exc:
        doc = {"errors": [{"preset": None, "seed": None, "error": type(exc).__name__, "message": str(exc)}]}
        atomic_write(Path(cfg.out_dir) / "errors.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUN_FAILED
    for preset, stats in summary["presets"].items():
        print(
            f"{preset:>8}  {summary['metric']} {stats['mean']:.4f} +- {stats['std']:.4f}  "
            f"vs {summary['baseline']}: {stats['pct_improvement']:+.2f}%"
        )
    return EXIT_OK


def cmd_synth_gen(args) -> int:
    scfg = cfgmod.synth_config(_raw(args))
    ds = generate(scfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dsm.write_csv(ds, args.out)
    sidecar = args.out.with_suffix(".json")
    atomic_write(sidecar, json.dumps(scfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {ds.n} rows to {args.out} (config {sidecar})")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    raw = _raw(args)
    cfg = cfgmod.experiment_config(raw)
    ds = load_dataset(cfg)
    H = raw_heatmap(ds, cfg.test_fraction, cfg.slice_width, cfg.heatmap_label)
    out = args.out or Path(cfg.out_dir)
    atomic_write(out / "heatmap_raw.csv", H.to_csv())
    if cfg.pgm:
        atomic_write(out / "heatmap_raw.pgm", H.to_pgm())
    max_lag = args.max_lag if args.max_lag is not None else min(H.size - 1, 60)
    profile = drift.band_profile(H, max_lag)
    print("lag,mean_mmd2")
    for lag, v in enumerate(profile):
        print(f"{lag},{v:.6g}")
    print("detected periods (slices):", drift.detect_periods(profile))
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for path in args.scores:
        reports.extend(scores_from_csv(path.read_text()))
    rows = compare_reports(reports, baseline=args.baseline)
    print(f"{'label':<24}{'imp%':>9}{'RS0%':>9}{'RS1%':>9}{'RS2%':>9}{'rank':>7}")
    for r in rows:
        print(
            f"{r['label']:<24}{r['pct_improvement']:>+9.2f}{r['rs0_improvement']:>+9.2f}"
            f"{r['rs1_improvement']:>+9.2f}{r['rs2_improvement']:>+9.2f}{r['rank']:>7.3f}"
        )
    if args.out:
        atomic_write(args.out, json.dumps(rows, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_split_inspect(args) -> int:
    raw = _raw(args)
    cfg = cfgmod.experiment_config(raw)
    ds = load_dataset(cfg)
    seed = cfg.seeds[0]
    presets = cfg.presets if "split.presets" in raw else PRESETS
    plans = [preset_split(p, ds, cfg.test_fraction, seed=seed) for p in presets]
    for plan in plans:
        d = plan.to_dict()
        c = d["counts"]
        print(
            f"{plan.name:>8}  train {c['train']:>7}  val {c['val']:>7}  test {c['test']:>7}  "
            f"unused {c['unused']:>7}  lag {plan.training_lag(ds.timestamps)}s"
        )
        if args.out:
            atomic_write(args.out / f"splitplan_{plan.name}.json", plan.to_json(cfg.save_indices) + "\n")
    report = verify_plan_relations(plans)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_RUN_FAILED


COMMANDS = {
    "run": cmd_run,
    "synth-gen": cmd_synth_gen,
    "heatmap": cmd_heatmap,
    "compare": cmd_compare,
    "split-inspect": cmd_split_inspect,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.seterr(over="ignore", under="ignore")
    try:
        return COMMANDS[args.command](args)
    except (cfgmod.ConfigError, KeyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_BAD_CONFIG
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
