"""Greedy rollouts and the metrics reported for a trained policy.

Sparsity, distance and target probability are averaged over successful
traces only. Action entropy pools every feature change, including those in
failed episodes.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .agent import PdqnAgent
from .data import denormalize
from .env import FAILURE, SUCCESS, SCFEnv, distance
from .errors import AlreadyTarget, EmptyTraces, NoChanges, NoSuccesses

METRICS = ("satisfiability", "sparsity", "distance", "target_prob", "entropy")


@dataclass(frozen=True)
class TraceStep:
    t: int
    k: int
    feature: str
    value: float
    raw_value: object
    reward: float
    prob: float


@dataclass
class EpisodeTrace:
    instance_id: int
    steps: list
    terminal: str
    reason: Optional[str] = None
    final_distance: float = 0.0
    final_prob: float = 0.0

    @property
    def success(self) -> bool:
        return self.terminal == SUCCESS

    @property
    def features(self) -> list[int]:
        return [s.k for s in self.steps]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeTrace":
        d = dict(d)
        d["steps"] = [TraceStep(**s) for s in d["steps"]]
        return cls(**d)


def rollout(agent: PdqnAgent, env: SCFEnv, instances, ids: Optional[Sequence[int]] = None) -> list:
    """One greedy trace per instance not already classified as target."""
    instances = np.asarray(instances, dtype=np.float64)
    if instances.ndim == 1:
        instances = instances[None, :]
    ids = list(range(len(instances))) if ids is None else list(ids)
    traces = []
    for iid, x in zip(ids, instances):
        try:
            episode = agent.greedy_episode(env, x)
            steps = []
            last = None
            for action, out in episode:
                last = out
                if out.reason in ("reuse", "constraint"):
                    continue
                t = out.next.t
                steps.append(TraceStep(t, action.k, env.schema[action.k].name, float(out.next.x[action.k]),
                                       _raw(out.next.x[action.k], env.schema[action.k]), out.reward, out.prob_next))
        except AlreadyTarget:
            continue
        traces.append(EpisodeTrace(int(iid), steps, last.terminal, last.reason,
                                   distance(last.next, env.s0), last.prob_next))
    return traces


def _raw(v, f):
    r = denormalize(float(np.clip(v, -1.0, 1.0)), f)
    return r if isinstance(r, str) else float(r)


# -- metrics ----------------------------------------------------------------


def _successes(traces):
    ok = [t for t in traces if t.success]
    if not ok:
        raise NoSuccesses("no successful traces")
    return ok


def satisfiability(traces) -> float:
    if not traces:
        raise EmptyTraces("no traces")
    return sum(t.success for t in traces) / len(traces)


def sparsity(traces) -> float:
    return float(np.mean([len(t.steps) for t in _successes(traces)]))


def mean_distance(traces) -> float:
    return float(np.mean([t.final_distance for t in _successes(traces)]))


def mean_target_prob(traces) -> float:
    return float(np.mean([t.final_prob for t in _successes(traces)]))


def change_counts(traces) -> Counter:
    """Counts of (step, feature) cells over every trace."""
    return Counter((s.t, s.k) for tr in traces for s in tr.steps)


def action_entropy(traces, K: int) -> float:
    """Shannon entropy (bits) of the (step, feature) change distribution over log2(K^2).

    Defined as 0 when K == 1 (a single possible cell).
    """
    counts = change_counts(traces)
    total = sum(counts.values())
    if total == 0:
        raise NoChanges("no feature changes in traces")
    if K < 1:
        raise ValueError("K must be >= 1")
    if K == 1:
        return 0.0
    values = list(counts.values())
    if len(values) == K * K and len(set(values)) == 1:
        return 1.0  # uniform over every cell; avoids rounding just under 1
    p = np.array(values, dtype=np.float64) / total
    h = float(-(p * np.log2(p)).sum())
    return min(1.0, max(0.0, h / math.log2(K * K)))


@dataclass
class MetricsReport:
    satisfiability: float
    sparsity: float
    distance: float
    target_prob: float
    entropy: float
    n_traces: int = 0
    n_success: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(traces, K: int) -> MetricsReport:
    """All metrics at once; undefined ones (no successes / no changes) are NaN."""
    def guard(fn, *args):
        try:
            return fn(*args)
        except (NoSuccesses, NoChanges, EmptyTraces):
            return float("nan")
    return MetricsReport(
        satisfiability=guard(satisfiability, traces),
        sparsity=guard(sparsity, traces),
        distance=guard(mean_distance, traces),
        target_prob=guard(mean_target_prob, traces),
        entropy=guard(action_entropy, traces, K),
        n_traces=len(traces),
        n_success=sum(t.success for t in traces),
    )


@dataclass
class SeedAggregate:
    """Per-seed reports plus population mean and standard deviation per metric."""

    reports: list
    seeds: list = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "per_seed": [{"seed": s, **r.as_dict()} for s, r in zip(self.seeds, self.reports)],
            "mean": self.mean,
            "std": self.std,
            "std_kind": "population",
        }


def aggregate_seeds(reports: Sequence[MetricsReport], seeds: Optional[Iterable[int]] = None) -> SeedAggregate:
    if not reports:
        raise ValueError("need at least one report")
    reports = list(reports)
    seeds = list(range(len(reports))) if seeds is None else list(seeds)
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports], dtype=np.float64)
        vals = vals[np.isfinite(vals)]
        mean[m] = float(vals.mean()) if vals.size else float("nan")
        std[m] = float(vals.std()) if vals.size else float("nan")
    return SeedAggregate(reports, seeds, mean, std)


# -- Sankey export ----------------------------------------------------------


def sankey_export(traces, feature_names: Optional[Sequence[str]] = None) -> dict:
    """Flow graph of the policy: start -> (step, feature) nodes -> success/failure.

    Document layout::

        {"nodes": [{"id", "label", "timestep"}],
         "links": [{"source", "target", "weight"}],
         "meta":  {"n_traces", "n_success", "satisfiability"}}

    ``source``/``target`` are node ids. Terminal nodes sit one step after the
    longest trace.
    """
    if not traces:
        raise EmptyTraces("no traces")
    edges = Counter()
    steps_seen = set()
    for tr in traces:
        prev = "start"
        for s in tr.steps:
            node = (s.t, s.k)
            steps_seen.add(node)
            edges[(prev, _node_id(node))] += 1
            prev = _node_id(node)
        edges[(prev, SUCCESS if tr.success else FAILURE)] += 1

    def label(k):
        if feature_names is not None:
            return feature_names[k]
        for tr in traces:
            for s in tr.steps:
                if s.k == k:
                    return s.feature
        return f"f{k}"

    last = max((t for t, _ in steps_seen), default=0) + 1
    nodes = [{"id": "start", "label": "instances", "timestep": 0}]
    nodes += [{"id": _node_id(n), "label": label(n[1]), "timestep": n[0]} for n in sorted(steps_seen)]
    nodes += [{"id": SUCCESS, "label": "counterfactual found", "timestep": last},
              {"id": FAILURE, "label": "failure", "timestep": last}]
    order = {n["id"]: i for i, n in enumerate(nodes)}
    links = [{"source": a, "target": b, "weight": w}
             for (a, b), w in sorted(edges.items(), key=lambda e: (order[e[0][0]], order[e[0][1]]))]
    n_success = sum(t.success for t in traces)
    return {
        "nodes": nodes,
        "links": links,
        "meta": {"n_traces": len(traces), "n_success": n_success, "satisfiability": n_success / len(traces)},
    }


def _node_id(node) -> str:
    t, k = node
    return f"t{t}:f{k}"


def node_flows(doc: dict) -> dict:
    """``{node_id: (inflow, outflow)}`` for a Sankey document."""
    flows = {n["id"]: [0, 0] for n in doc["nodes"]}
    for link in doc["links"]:
        flows[link["source"]][1] += link["weight"]
        flows[link["target"]][0] += link["weight"]
    return {k: tuple(v) for k, v in flows.items()}


# -- report text ------------------------------------------------------------


def _fmt(mean, std=None):
    if mean is None or (isinstance(mean, float) and not math.isfinite(mean)):
        return "n/a"
    if std is None:
        return f"{mean:.3f}"
    return f"{mean:.3f} ({std:.3f})"


def format_table(rows: dict) -> str:
    """Markdown table; ``rows`` maps a method name to a :class:`SeedAggregate`."""
    head = "| Method | Satisfiability ↑ | Sparsity ↓ | distance ↓ | P() ↑ | entropy ↑ |"
    lines = [head, "|" + "---|" * 6]
    for name, agg in rows.items():
        cells = [_fmt(agg.mean[m], agg.std[m]) for m in METRICS]
        lines.append(f"| {name} | " + " | ".join(cells) + " |")
    return "\n".join(lines)


def format_seed_rows(name: str, agg: SeedAggregate) -> str:
    lines = [f"| {name} seed | " + " | ".join(METRICS) + " |", "|" + "---|" * 6]
    for seed, r in zip(agg.seeds, agg.reports):
        lines.append(f"| {seed} | " + " | ".join(_fmt(getattr(r, m)) for m in METRICS) + " |")
    return "\n".join(lines)
