"""Train a small Tracker network and export its path-average heatmaps.

    python3 demos/tracker_run.py [--tics 5000] [--out demo_out]

Prints the run's metrics and writes one ff and one fb heatmap per motor area
(PGM image, CSV twin, min/max sidecar) under ``--out``.
"""

import argparse
from pathlib import Path

from neuromarket.experiments import ExperimentConfig, path_average_weights, run_experiment
from neuromarket.io import write_heatmap


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tics", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("demo_out"))
    ap.add_argument("--m-only", action="store_true", help="freeze the V/D banks")
    args = ap.parse_args()

    cfg = ExperimentConfig(duration=args.tics, warmup=args.tics // 5)
    cfg = cfg.replace(**{"topology.feedback_plastic": not args.m_only})
    result = run_experiment(cfg, args.seed)
    rec = result.metrics.to_record()
    print(f"{rec['engagements']} engagements, {rec['percent_correct']:.1f}% correct, "
          f"{rec['correct_per_1000_tics']:.1f} correct per 1000 tics")

    args.out.mkdir(parents=True, exist_ok=True)
    for area in range(8):
        for direction in ("ff", "fb"):
            M = path_average_weights(result.network, "V", area, direction)
            rng = write_heatmap(args.out / f"V_area{area}_{direction}", M)
            print(f"area {area} {direction}: range [{rng['min']:.4f}, {rng['max']:.4f}]")


if __name__ == "__main__":
    main()
