"""Command-line entry point: ``scfrl <subcommand> [--config PATH] ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment
from .config import ExperimentConfig, load_config
from .errors import DataError, SCFError, TrainingDivergence

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults if omitted")
    common.add_argument("--out", help="output directory (overrides config 'out')")
    common.add_argument("--episodes", type=int, help="training episodes per run")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="scfrl", description="Learn and audit sequential counterfactual policies.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("prepare", parents=[common], help="load or synthesize data, normalize, split")
    sub.add_parser("train-classifier", parents=[common], help="train the black-box classifier")
    for name, helptext in (("train-agent", "train one P-DQN agent"), ("evaluate", "evaluate one trained agent")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--variant", choices=("bin", "prob"), default="prob")
        sp.add_argument("--seed", type=int, default=0)
    cp = sub.add_parser("compare", parents=[common], help="full pipeline for both rewards over all seeds")
    cp.add_argument("--seed", type=int, action="append", dest="seeds",
                    help="restrict to this seed (repeatable)")
    cp.add_argument("--variant", choices=("bin", "prob"), action="append", dest="variants",
                    help="restrict to this reward variant (repeatable)")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out is not None:
        cfg.out = args.out
    if args.episodes is not None:
        if args.episodes < 0:
            raise _UsageError("--episodes must be >= 0")
        cfg.episodes = args.episodes
    if getattr(args, "seeds", None):
        cfg.seeds = list(args.seeds)
    if getattr(args, "variants", None):
        cfg.variants = list(dict.fromkeys(args.variants))
    return cfg


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command == "prepare":
            sp = experiment.prepare(cfg)
            print(f"wrote {len(sp.train)} train / {len(sp.test)} test rows to {experiment.data_dir(cfg)}")
        elif args.command == "train-classifier":
            clf = experiment.train_classifier_stage(cfg)
            print(f"classifier train accuracy {clf.train_accuracy:.3f} -> {experiment.classifier_path(cfg)}")
        elif args.command == "train-agent":
            _, training = experiment.train_agent_stage(cfg, args.variant, args.seed, cfg.episodes)
            print(f"{len(training)} episodes -> {experiment.run_dir(cfg, args.variant, args.seed)}")
        elif args.command == "evaluate":
            report = experiment.evaluate_stage(cfg, args.variant, args.seed)
            print(json.dumps(report.as_dict(), indent=2))
        elif args.command == "compare":
            experiment.compare(cfg)
            print((cfg.out_dir / "comparison.md").read_text(encoding="utf-8"))
    except _UsageError as e:
        print(f"scfrl: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, TypeError, json.JSONDecodeError) as e:
        # bad config values land here
        print(f"scfrl: error: {e}", file=sys.stderr)
        return EXIT_DATA if isinstance(e, DataError) else EXIT_USAGE
    except TrainingDivergence as e:
        print(f"scfrl: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, FileNotFoundError, SCFError) as e:
        print(f"scfrl: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
