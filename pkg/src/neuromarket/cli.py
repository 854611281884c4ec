"""Command-line front end: ``run``, ``properness`` and ``ablate``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import properness as lab
from .experiments import ExperimentConfig, path_average_weights, run_experiment
from .io import (
    ConfigError,
    append_jsonl,
    apply_env_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    parse_seeds,
    write_heatmap,
    write_weights_csv,
)

ABLATIONS = {
    "delay0": {"topology.delay": 0},
    "feedback-off": {"topology.feedback_plastic": False},
    "trace-off": {"dynamics.use_trace": False},
}
SUITES = ("lemma", "theorem", "fixed_point", "adversarial")


def aggregate(records: list[dict]) -> dict:
    """Mean, median and std of both headline metrics across seeds.

    Values are sorted first so the result does not depend on seed order.
    """
    out = {"n_seeds": len(records)}
    for key in ("percent_correct", "correct_per_1000_tics"):
        vals = np.sort([float(r[key]) for r in records])
        if vals.size:
            out[key] = {"mean": float(vals.mean()), "median": float(np.median(vals)),
                        "std": float(vals.std())}
        else:
            out[key] = {"mean": None, "median": None, "std": None}
    return out


def _mid_layers(cfg: ExperimentConfig) -> list[str]:
    return ["V"] + (["D"] if cfg.topology_params()["d"] else [])


def _one_seed(cfg: ExperimentConfig, seed: int, out: Path | None):
    result = run_experiment(cfg, seed)
    if out is not None:
        for tic, banks in result.snapshots:
            folder = out / "snapshots" / f"seed{seed}" / f"t{tic}"
            folder.mkdir(parents=True, exist_ok=True)
            for name, W in banks.items():
                write_weights_csv(folder / (name.replace("->", "_to_").replace(":", "_") + ".csv"), W)
    p = cfg.topology_params()
    maps = {}
    for via in _mid_layers(cfg):
        for area in range(p["areas"]):
            for direction in ("ff", "fb"):
                maps[(via, area, direction)] = path_average_weights(
                    result.network, via, area, direction, per_area=p["per_area"])
    return {"seed": seed, **result.metrics.to_record()}, maps


def run_seeds(cfg: ExperimentConfig, seeds, out: Path | None = None, jobs: int = 1):
    """Run every seed; returns per-seed metric records and seed-averaged heatmaps."""
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_seed, [cfg] * len(seeds), seeds, [out] * len(seeds)))
    else:
        results = [_one_seed(cfg, s, out) for s in seeds]
    records = [r for r, _ in results]
    heatmaps = {}
    for _, maps in results:
        for key, M in maps.items():
            heatmaps[key] = heatmaps.get(key, 0) + M / len(results)
    return records, heatmaps


def cmd_run(cfg: ExperimentConfig, seeds, out: Path, jobs: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=2, default=str))
    records, heatmaps = run_seeds(cfg, seeds, out, jobs)
    log = out / "metrics.jsonl"
    log.unlink(missing_ok=True)
    for rec in records:
        append_jsonl(log, rec)
    summary = aggregate(records)
    (out / "aggregate.json").write_text(json.dumps(summary, indent=2))
    hm = out / "heatmaps"
    hm.mkdir(exist_ok=True)
    for (via, area, direction), M in sorted(heatmaps.items()):
        write_heatmap(hm / f"{via}_area{area}_{direction}", M)
    return summary


def cmd_properness(out: Path, suites=SUITES, n: int | None = None, seed: int = 0) -> dict:
    """Run the properness suites; ``n`` overrides every suite's instance count."""
    out.mkdir(parents=True, exist_ok=True)
    runners = {
        "lemma": lambda: lab.lemma_suite(**_count(n, 50), seed=seed),
        "theorem": lambda: lab.theorem_suite(**_count(n, 30), seed=seed),
        "fixed_point": lambda: lab.fixed_point_suite(**_count(n, 20), seed=seed),
        "adversarial": lambda: lab.adversarial_suite(**_count(n, 10), seed=seed),
    }
    records, summary = [], {}
    for name in suites:
        recs = runners[name]()
        records.extend(recs)
        gaps = [r["score_gap"] for r in recs if "score_gap" in r]
        summary[name] = {
            "count": len(recs),
            "passed": sum(bool(r["verdict"]) for r in recs),
            "pass_rate": (sum(bool(r["verdict"]) for r in recs) / len(recs)) if recs else 1.0,
            "worst_score_gap": max(gaps) if gaps else None,
        }
    lab.write_report(records, out / "properness.jsonl")
    (out / "properness_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def _count(n, default):
    return {"n": default if n is None else n}


def cmd_ablate(cfg: ExperimentConfig, axis: str, seeds, out: Path, jobs: int = 1) -> dict:
    if axis not in ABLATIONS:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATIONS)}")
    out.mkdir(parents=True, exist_ok=True)
    base, _ = run_seeds(cfg, seeds, None, jobs)
    ablated, _ = run_seeds(cfg.replace(**ABLATIONS[axis]), seeds, None, jobs)
    rows = []
    for a, b in zip(base, ablated):
        rows.append({"seed": a["seed"],
                     "base_percent_correct": a["percent_correct"],
                     "ablated_percent_correct": b["percent_correct"],
                     "delta_percent_correct": b["percent_correct"] - a["percent_correct"],
                     "base_correct_per_1000_tics": a["correct_per_1000_tics"],
                     "ablated_correct_per_1000_tics": b["correct_per_1000_tics"],
                     "delta_correct_per_1000_tics":
                         b["correct_per_1000_tics"] - a["correct_per_1000_tics"]})
    table = {"axis": axis, "rows": rows, "base": aggregate(base), "ablated": aggregate(ablated)}
    (out / f"ablation_{axis}.json").write_text(json.dumps(table, indent=2))
    return table


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neuromarket", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", type=Path, help="YAML experiment config")
            p.add_argument("--task", choices=("tracker", "foveator"),
                           help="task when no config file is given")
            p.add_argument("--jobs", type=int, default=1, help="seeds run in parallel")
        p.add_argument("--seeds", help="a count N (seeds 0..N-1) or a comma list")
        p.add_argument("--out", type=Path, required=True, help="output directory")

    common(sub.add_parser("run", help="run experiments and aggregate across seeds"))
    p = sub.add_parser("properness", help="verify properness of the scoring rules")
    common(p, config=False)
    p.add_argument("--suite", action="append", choices=SUITES,
                   help="suite to run (repeatable; default all)")
    p.add_argument("--instances", type=int, help="instances per suite")
    p = sub.add_parser("ablate", help="paired runs with one mechanism switched off")
    common(p)
    p.add_argument("--ablate", required=True, metavar="AXIS",
                   help=f"one of {', '.join(sorted(ABLATIONS))}")
    return ap


def _experiment(args) -> tuple[ExperimentConfig, list[int]]:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict(apply_env_overrides({"task": args.task or "tracker"}))
    seeds = parse_seeds(args.seeds) if args.seeds is not None else list(cfg.seeds)
    return cfg, seeds


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "properness":
            seed = parse_seeds(args.seeds)[0] if args.seeds else 0
            summary = cmd_properness(args.out, tuple(args.suite or SUITES), args.instances, seed)
            print(json.dumps(summary, indent=2))
            return 0 if all(s["pass_rate"] == 1.0 for s in summary.values()) else 1
        cfg, seeds = _experiment(args)
        if args.command == "run":
            print(json.dumps(cmd_run(cfg, seeds, args.out, args.jobs), indent=2))
        else:
            table = cmd_ablate(cfg, args.ablate, seeds, args.out, args.jobs)
            print(f"{'seed':>6} {'d_pct':>9} {'d_per1k':>9}")
            for r in table["rows"]:
                print(f"{r['seed']:>6} {r['delta_percent_correct']:>9.2f} "
                      f"{r['delta_correct_per_1000_tics']:>9.2f}")
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
