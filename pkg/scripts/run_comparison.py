"""Desk-scale reward comparison on the bundled synthetic data.

Trains one classifier, then R_bin and R_prob agents for each seed, and prints
the comparison table. Use ``--episodes 40000 --seeds 0 1 2 3 4`` and
``--config`` with a CSV for the full protocol.
"""

import argparse
import time

from scfrl.config import ExperimentConfig, load_config
from scfrl.experiment import compare


def main():
    ap = argparse.ArgumentParser(description="R_bin vs R_prob comparison")
    ap.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    ap.add_argument("--episodes", type=int, default=3000)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/comparison")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.episodes, cfg.seeds, cfg.workers, cfg.out = args.episodes, args.seeds, args.workers, args.out
    start = time.perf_counter()
    compare(cfg)
    print((cfg.out_dir / "comparison.md").read_text(encoding="utf-8"))
    print(f"done in {time.perf_counter() - start:.1f}s, artifacts under {cfg.out_dir}")


if __name__ == "__main__":
    main()
