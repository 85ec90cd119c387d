"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import continuous_schema, logistic_classifier
from scfrl.agent import AgentConfig, PdqnAgent, Transition
from scfrl.classifier import BlackBoxClassifier
from scfrl.cli import run
from scfrl.data import CONTINUOUS, DISCRETE, FeatureSchema
from scfrl.env import FAILURE, NONE, REUSE, SUCCESS, Action, RewardConfig, SCFEnv, State, reward_bin, reward_prob
from scfrl.evaluation import EpisodeTrace, TraceStep, action_entropy, node_flows
from scfrl.experiment import strip_timestamps
from scfrl.io import read_json
from scfrl.nn import NeuralNet, gradient_check

ALPHA, BETA, THR, POS, PEN = 10.0, 1.0, 0.5, 5.0, -10.0


def verdict(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\n[AC{n}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, detail


# -- 1: gradients --------------------------------------------------------------


def test_ac1_gradient_correctness(capsys):
    acts = ["relu", "tanh", "sigmoid", "identity"]
    start = time.perf_counter()
    errors = []
    for i in range(20):
        rng = np.random.default_rng(1000 + i)
        loss = "mse" if i % 2 == 0 else "bce"
        hidden = acts[(i // 2) % 4]
        out_act = "sigmoid" if loss == "bce" else acts[i % 4]
        sizes = [int(rng.integers(2, 6))] + [int(rng.integers(2, 7)) for _ in range(rng.integers(1, 3))] + [
            int(rng.integers(1, 4))]
        net = NeuralNet.build(sizes, hidden=hidden, output=out_act, rng=rng)
        for layer in net.layers:
            layer.b = rng.normal(scale=0.5, size=layer.b.shape)
        x = rng.normal(size=(int(rng.integers(2, 6)), sizes[0]))
        if loss == "bce":
            y = rng.integers(0, 2, size=(len(x), sizes[-1])).astype(float)
        else:
            y = rng.normal(size=(len(x), sizes[-1]))
        errors.append(gradient_check(net, x, y, loss))
    elapsed = time.perf_counter() - start
    worst = max(errors)
    verdict(capsys, 1, "gradient check", worst < 1e-4 and elapsed < 10.0,
            f"20 nets, max rel err {worst:.2e} (< 1e-4), {elapsed:.2f}s (< 10s)")


# -- 2: reward oracles ---------------------------------------------------------


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_ac2_reward_oracles(capsys):
    rng = np.random.default_rng(2)
    bin_cfg, prob_cfg = RewardConfig("bin"), RewardConfig("prob")
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 9))
        w = rng.normal(scale=2.0, size=d)
        bias = float(rng.normal())
        bb = logistic_classifier(w, bias)
        x0 = rng.uniform(-1, 1, size=d)
        x1 = rng.uniform(-1, 1, size=d)
        s0, s1 = State(x0, np.zeros(d, dtype=int)), State(x1, np.zeros(d, dtype=int))
        terminal = [NONE, SUCCESS, FAILURE][int(rng.integers(3))]

        delta = math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(x1, x0)))
        p0 = _sigmoid(sum(float(wi) * float(xi) for wi, xi in zip(w, x0)) + bias)
        p1 = _sigmoid(sum(float(wi) * float(xi) for wi, xi in zip(w, x1)) + bias)
        base = {SUCCESS: POS, FAILURE: PEN, NONE: 0.0}[terminal]
        want_bin = base - BETA * delta
        want_prob = want_bin if terminal != NONE else ALPHA * (p1 - p0) - BETA * delta

        worst = max(worst, abs(reward_bin(s0, s1, terminal, bin_cfg) - want_bin),
                    abs(reward_prob(s0, s1, terminal, prob_cfg, bb) - want_prob))
    verdict(capsys, 2, "reward oracles", worst <= 1e-12, f"1000 tuples, max abs err {worst:.1e} (<= 1e-12)")


# -- 3: entropy oracle ---------------------------------------------------------


def _trace(cells, success=True):
    steps = [TraceStep(t, k, f"f{k}", 0.0, 0.0, 0.0, 0.0) for t, k in cells]
    return EpisodeTrace(0, steps, SUCCESS if success else FAILURE)


def _brute_entropy(traces, K):
    cells = [(s.t, s.k) for tr in traces for s in tr.steps]
    total = len(cells)
    h = 0.0
    for t in range(1, K + 1):
        for k in range(K):
            c = cells.count((t, k))
            if c:
                h -= (c / total) * math.log2(c / total)
    return h / math.log2(K * K)


def test_ac3_entropy_oracle(capsys):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        K = int(rng.integers(2, 9))
        traces = []
        for _ in range(int(rng.integers(1, 30))):
            ks = rng.permutation(K)[: int(rng.integers(1, K + 1))]
            traces.append(_trace([(t + 1, int(k)) for t, k in enumerate(ks)], bool(rng.integers(2))))
        worst = max(worst, abs(action_entropy(traces, K) - _brute_entropy(traces, K)))
    zeros = [action_entropy([_trace([(1, 0)])] * 7, K) for K in range(2, 9)]
    ones = [action_entropy([_trace([(t, k)]) for t in range(1, K + 1) for k in range(K)] * 2, K)
            for K in range(2, 9)]
    ok = worst <= 1e-12 and all(z == 0.0 for z in zeros) and all(o == 1.0 for o in ones)
    verdict(capsys, 3, "entropy oracle", ok,
            f"200 sets, max abs err {worst:.1e}; degenerate={set(zeros)}, uniform={set(ones)}")


# -- 4: environment properties -------------------------------------------------


def _random_env(rng):
    d = int(rng.integers(2, 7))
    schema = []
    for i in range(d):
        mutable = i > 0 or rng.random() < 0.7
        if rng.random() < 0.3:
            n = int(rng.integers(2, 6))
            schema.append(FeatureSchema(f"d{i}", DISCRETE, mutable, categories=tuple(f"c{j}" for j in range(n))))
        else:
            schema.append(FeatureSchema(f"c{i}", CONTINUOUS, mutable, 0.0, 1.0))
    net = NeuralNet.build([d, 8, 1], hidden="tanh", output="sigmoid", rng=rng)
    net.layers[-1].b[:] = -1.0
    bb = BlackBoxClassifier(net, THR)
    variant = "bin" if rng.random() < 0.5 else "prob"
    return SCFEnv(bb, tuple(schema), RewardConfig(variant)), bb


def test_ac4_environment_properties(capsys):
    rng = np.random.default_rng(4)
    violations = []
    episodes = 0
    env, bb = _random_env(rng)
    while episodes < 10_000:
        if episodes % 50 == 0:
            env, bb = _random_env(rng)
        x = np.array([f.snap(v) for f, v in zip(env.schema, rng.uniform(-1, 1, size=env.n_features))])
        if bb.predict_proba(x) >= THR:
            continue
        episodes += 1
        s = env.reset(x)
        length = 0
        while True:
            k = int(rng.choice(env.mutable))
            was_used = s.b[k] > 0
            out = env.step(Action(k, float(rng.uniform(-1, 1))))
            length += 1
            n = out.next
            if was_used:
                if not (out.terminal == FAILURE and out.reason == REUSE):
                    violations.append(("reuse not failure", episodes))
            else:
                diff_x = np.flatnonzero(n.x != s.x)
                diff_b = np.flatnonzero(n.b != s.b)
                if diff_b.tolist() != [k] or not set(diff_x.tolist()) <= {k} or n.t != s.t + 1:
                    violations.append(("locality", episodes))
                p = float(bb.predict_proba(n.x))
                if (out.terminal == SUCCESS) != (p >= THR):
                    violations.append(("success iff P>=thr", episodes))
            if length > env.K:
                violations.append(("length > K", episodes))
            if out.done:
                break
            s = n
    verdict(capsys, 4, "environment properties", not violations,
            f"{episodes} random-policy episodes, {len(violations)} violations {violations[:3]}")


# -- 5: agent sanity -----------------------------------------------------------


def test_ac5_agent_sanity(capsys):
    agent = PdqnAgent(2, [0, 1], AgentConfig(gamma=0.0), seed=5)
    s = State([0.3, -0.2], [0, 0])
    s2 = State([0.3, 0.5], [0, 1], 1)
    agent.store(Transition(s, Action(1, 0.5), 3.0, s2, False, params=np.array([-0.1, 0.5])))
    batch = agent.replay.batch([0])
    for _ in range(2000):
        agent.train_iteration(batch)
    q = float(agent.q_net.forward(np.concatenate([batch[0][0], batch[2][0]]))[1])
    conv_err = abs(q - 3.0)

    rng = np.random.default_rng(5)
    bad = 0
    agents = [PdqnAgent(d, list(range(d)), AgentConfig(hidden=(16,)), seed=i) for i, d in enumerate((2, 3, 5, 8))]
    for i in range(10_000):
        a = agents[i % 4]
        d = a.n_features
        b = (rng.random(d) < 0.5).astype(int)
        if b.all():
            b[rng.integers(d)] = 0
        if i % 3 == 0:
            # make used features look best
            last = a.q_net.layers[-1]
            last.b[:] = np.where(b > 0, 100.0, 0.0)
        st = State(rng.uniform(-1, 1, size=d), b, int(b.sum()))
        if b[a.select_action(st, float(rng.uniform())).k] > 0:
            bad += 1
    verdict(capsys, 5, "agent sanity", conv_err < 1e-2 and bad == 0,
            f"|Q - r| = {conv_err:.2e} (< 1e-2); {bad}/10000 masked selections picked a used feature")


# -- 6-9: end-to-end comparison on the bundled synthetic data ------------------


def _compare(out):
    cfg = out.parent / f"{out.name}.json"
    cfg.write_text(json.dumps({"episodes": 3000, "seeds": [0, 1, 2], "out": out.name}))
    start = time.perf_counter()
    code = run(["compare", "--config", str(cfg)])
    return code, time.perf_counter() - start


@pytest.fixture(scope="module")
def comparison(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    code, elapsed = _compare(root / "first")
    assert code == 0
    return root, read_json(root / "first" / "comparison.json"), elapsed


def test_ac6_end_to_end_learning(comparison, capsys):
    root, doc, elapsed = comparison
    prob = doc["variants"]["prob"]
    sats = [r["satisfiability"] for r in prob["per_seed"]]
    mean = prob["mean"]["satisfiability"]
    per_seed_min = elapsed / 6 / 60
    verdict(capsys, 6, "end-to-end learning", mean >= 0.7,
            f"R_prob satisfiability per seed {sats}, mean {mean:.3f} (>= 0.7); ~{per_seed_min:.2f} min per run")


def test_ac7_entropy_direction(comparison, capsys):
    _, doc, _ = comparison
    e_prob = doc["variants"]["prob"]["mean"]["entropy"]
    e_bin = doc["variants"]["bin"]["mean"]["entropy"]
    verdict(capsys, 7, "entropy R_prob > R_bin", e_prob > e_bin,
            f"mean entropy prob {e_prob:.3f} vs bin {e_bin:.3f}")


def test_ac8_sankey_consistency(comparison, capsys):
    root, _, _ = comparison
    problems = []
    runs = sorted((root / "first" / "runs").iterdir())
    for rd in runs:
        sankey = read_json(rd / "sankey.json")
        report = read_json(rd / "report.json")["metrics"]
        flows = node_flows(sankey)
        for nid, (inflow, outflow) in flows.items():
            if nid not in ("start", SUCCESS, FAILURE) and inflow != outflow:
                problems.append(f"{rd.name}:{nid}")
        total = flows["start"][1]
        if flows[SUCCESS][0] / total != report["satisfiability"]:
            problems.append(f"{rd.name}: satisfiability")
    verdict(capsys, 8, "Sankey consistency", len(runs) == 6 and not problems,
            f"{len(runs)} evaluation runs, problems: {problems or 'none'}")


def _canonical_outputs(out):
    """Every artifact as bytes, JSON files re-serialized without timestamps."""
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_dir():
            continue
        rel = str(p.relative_to(out))
        if p.suffix == ".json":
            files[rel] = json.dumps(strip_timestamps(read_json(p)), sort_keys=True).encode()
        else:
            files[rel] = p.read_bytes()
    return files


def test_ac9_determinism(comparison, capsys):
    root, _, _ = comparison
    code, _ = _compare(root / "second")
    a, b = _canonical_outputs(root / "first"), _canonical_outputs(root / "second")
    differing = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = code == 0 and not differing and "comparison.json" in a
    verdict(capsys, 9, "determinism", ok, f"{len(a)} artifacts compared, differing: {differing or 'none'}")
