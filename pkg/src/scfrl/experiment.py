"""Pipeline stages behind the command line.

Output layout under ``cfg.out``::

    data/          train.csv, test.csv (normalized), schema.json
    classifier/    classifier.npz, summary.json
    runs/<variant>-seed<seed>/
                   agent.npz, train_log.csv, report.json, sankey.json, traces.json
    comparison.json, comparison.md

Each JSON report carries its wall-clock time only in ``metadata.timestamp``;
everything else is a deterministic function of the config.
"""

from __future__ import annotations

import datetime as _dt
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import data as tab
from .agent import PdqnAgent
from .classifier import BlackBoxClassifier, train_classifier
from .config import ExperimentConfig, config_from_dict
from .env import SCFEnv
from .evaluation import (
    METRICS,
    MetricsReport,
    aggregate_seeds,
    compute_metrics,
    format_seed_rows,
    format_table,
    rollout,
    sankey_export,
)
from .io import atomic_path, read_json, write_json, write_text

log = logging.getLogger(__name__)


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def data_dir(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "data"


def classifier_path(cfg: ExperimentConfig) -> Path:
    return cfg.out_dir / "classifier" / "classifier.npz"


def run_dir(cfg: ExperimentConfig, variant: str, seed: int) -> Path:
    return cfg.out_dir / "runs" / f"{variant}-seed{seed}"


# -- prepare ----------------------------------------------------------------


def load_raw(cfg: ExperimentConfig) -> tab.Dataset:
    if cfg.data.uses_csv:
        for p in (cfg.data.csv, cfg.data.schema):
            if not Path(p).exists():
                raise FileNotFoundError(f"no such file: {p}")
        return tab.load_dataset(cfg.data.csv, cfg.data.schema)
    s = cfg.data.synthetic
    return tab.make_synthetic(s.n, s.k_cont, s.k_disc, s.k_immut, s.seed)


def prepare(cfg: ExperimentConfig) -> tab.SplitPair:
    """Load or synthesize, split, fit domains on train only, normalize, persist."""
    raw = load_raw(cfg)
    sp = tab.split(raw, cfg.split.ratio, cfg.split.seed)
    schema = tab.fit_domains(sp.train)
    train = tab.normalize(tab.apply_schema(sp.train, schema))
    test = tab.normalize(tab.apply_schema(sp.test, schema))
    out = data_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "schema.json", tab.schema_document(train))
    for name, d in (("train", train), ("test", test)):
        with atomic_path(out / f"{name}.csv") as tmp:
            tab.write_csv(d, tmp)
    log.info("prepared %d train / %d test rows, K=%d", len(train), len(test), train.n_mutable)
    return tab.SplitPair(train, test, cfg.split.seed, sp.train_index, sp.test_index)


def load_prepared(cfg: ExperimentConfig) -> tuple[tab.Dataset, tab.Dataset]:
    d = data_dir(cfg)
    if not (d / "schema.json").exists():
        raise FileNotFoundError(f"{d / 'schema.json'} missing; run 'prepare' first")
    return (tab.read_normalized_csv(d / "train.csv", d / "schema.json"),
            tab.read_normalized_csv(d / "test.csv", d / "schema.json"))


# -- classifier -------------------------------------------------------------


def train_classifier_stage(cfg: ExperimentConfig) -> BlackBoxClassifier:
    train, test = load_prepared(cfg)
    clf = train_classifier(train, cfg.classifier.train_config(), seed=cfg.classifier.seed)
    clf.save(classifier_path(cfg))
    p_test = clf.predict_proba(test.rows)
    summary = {
        "metadata": {"timestamp": _timestamp()},
        "train_accuracy": clf.train_accuracy,
        "test_accuracy": clf.accuracy(test),
        "threshold": clf.threshold,
        "target_class": clf.target_class,
        "n_train": len(train),
        "n_test": len(test),
        "test_non_target": int((p_test < clf.threshold).sum()),
    }
    write_json(classifier_path(cfg).with_name("summary.json"), summary)
    log.info("classifier train acc %.3f, test acc %.3f", summary["train_accuracy"], summary["test_accuracy"])
    return clf


def load_classifier(cfg: ExperimentConfig) -> BlackBoxClassifier:
    p = classifier_path(cfg)
    if not p.exists():
        raise FileNotFoundError(f"{p} missing; run 'train-classifier' first")
    return BlackBoxClassifier.load(p)


# -- agent ------------------------------------------------------------------


def make_env(cfg: ExperimentConfig, clf: BlackBoxClassifier, schema, variant: str) -> SCFEnv:
    return SCFEnv(clf, schema, cfg.reward.for_variant(variant))


def train_agent_stage(cfg: ExperimentConfig, variant: str, seed: int, episodes: int | None = None):
    train, _ = load_prepared(cfg)
    clf = load_classifier(cfg)
    env = make_env(cfg, clf, train.schema, variant)
    agent = PdqnAgent.for_env(env, cfg.agent, seed=seed)
    episodes = cfg.episodes if episodes is None else episodes
    training = agent.train(env, episodes, train.rows)
    out = run_dir(cfg, variant, seed)
    agent.save(out / "agent.npz")
    training.write_csv(out / "train_log.csv")
    log.info("trained %s seed %d for %d episodes (last-100 success %.2f)",
             variant, seed, episodes, training.success_rate(100) if episodes else float("nan"))
    return agent, training


def evaluate_stage(cfg: ExperimentConfig, variant: str, seed: int) -> MetricsReport:
    _, test = load_prepared(cfg)
    clf = load_classifier(cfg)
    out = run_dir(cfg, variant, seed)
    if not (out / "agent.npz").exists():
        raise FileNotFoundError(f"{out / 'agent.npz'} missing; run 'train-agent' first")
    agent = PdqnAgent.load(out / "agent.npz")
    env = make_env(cfg, clf, test.schema, variant)
    traces = rollout(agent, env, test.rows)
    report = compute_metrics(traces, env.K)
    write_json(out / "report.json", {
        "metadata": {"timestamp": _timestamp()},
        "variant": variant,
        "seed": seed,
        "K": env.K,
        "metrics": report.as_dict(),
    })
    write_json(out / "traces.json", [t.to_dict() for t in traces])
    if traces:
        write_json(out / "sankey.json", sankey_export(traces, [f.name for f in test.schema]))
    log.info("evaluated %s seed %d: %s", variant, seed,
             ", ".join(f"{m}={getattr(report, m):.3f}" for m in METRICS))
    return report


def _run_one(cfg_dict: dict, variant: str, seed: int) -> dict:
    cfg = config_from_dict(cfg_dict)
    train_agent_stage(cfg, variant, seed)
    return evaluate_stage(cfg, variant, seed).as_dict()


# -- compare ----------------------------------------------------------------


def compare_aggregates(a, b) -> dict:
    """Per-metric ``mean(b) - mean(a)``."""
    return {m: b.mean[m] - a.mean[m] for m in METRICS}


def compare(cfg: ExperimentConfig) -> dict:
    """Full pipeline for every (variant, seed) and a side-by-side report."""
    prepare(cfg)
    train_classifier_stage(cfg)
    jobs = [(v, s) for v in cfg.variants for s in cfg.seeds]
    cfg_dict = cfg.to_dict()
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, [cfg_dict] * len(jobs), *zip(*jobs)))
    else:
        results = [_run_one(cfg_dict, v, s) for v, s in jobs]
    per_variant = {}
    for (v, s), r in zip(jobs, results):
        per_variant.setdefault(v, []).append(MetricsReport(**r))
    aggs = {v: aggregate_seeds(reps, cfg.seeds) for v, reps in per_variant.items()}

    doc = {
        "metadata": {"timestamp": _timestamp()},
        "episodes": cfg.episodes,
        "seeds": list(cfg.seeds),
        "variants": {v: a.as_dict() for v, a in aggs.items()},
    }
    if "bin" in aggs and "prob" in aggs:
        doc["delta_prob_minus_bin"] = compare_aggregates(aggs["bin"], aggs["prob"])
        doc["entropy_prob_gt_bin"] = bool(aggs["prob"].mean["entropy"] > aggs["bin"].mean["entropy"])
    write_json(cfg.out_dir / "comparison.json", doc)
    write_text(cfg.out_dir / "comparison.md", comparison_markdown(cfg, aggs, doc))
    return doc


def comparison_markdown(cfg: ExperimentConfig, aggs: dict, doc: dict) -> str:
    names = {"bin": "P-DQN R_bin", "prob": "P-DQN R_prob"}
    parts = [
        f"# Reward comparison ({cfg.episodes} episodes, seeds {list(cfg.seeds)})",
        "",
        "Mean (population std) over seeds. Sparsity, distance and P() use successful episodes only.",
        "",
        format_table({names.get(v, v): a for v, a in aggs.items()}),
        "",
    ]
    for v, a in aggs.items():
        parts += [format_seed_rows(names.get(v, v), a), ""]
    if "entropy_prob_gt_bin" in doc:
        flag = "yes" if doc["entropy_prob_gt_bin"] else "no"
        parts.append(f"entropy(R_prob) > entropy(R_bin): **{flag}**")
        parts.append("")
    return "\n".join(parts)


def strip_timestamps(obj):
    """Copy of a report document without its ``metadata.timestamp``."""
    if isinstance(obj, dict):
        return {k: strip_timestamps(v) for k, v in obj.items()
                if not (k == "metadata" and isinstance(v, dict) and set(v) == {"timestamp"})}
    if isinstance(obj, list):
        return [strip_timestamps(v) for v in obj]
    return obj


def read_report(path) -> dict:
    return read_json(path)
