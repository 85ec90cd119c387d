"""Parameterized deep Q-network (P-DQN) agent.

The actor maps a state to one continuous value per mutable feature; the
Q-network scores every feature choice given the state and the full actor
output. The greedy action picks the best unused feature and writes the
actor's value for it.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .env import NONE, Action, SCFEnv, State
from .errors import AlreadyTarget, NoLegalAction, NonFiniteLoss
from .io import atomic_path
from .nn import NeuralNet, load_checkpoint, save_checkpoint


@dataclass
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 64
    replay_capacity: int = 50_000
    warmup: int = 500
    q_lr: float = 1e-3
    actor_lr: float = 1e-4
    tau: float = 0.005
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    hidden: tuple = (64, 64)

    def epsilon(self, episode: int, episodes: int) -> float:
        """Linear decay over the first ``eps_decay_fraction`` of training, then flat."""
        horizon = self.eps_decay_fraction * episodes
        if horizon <= 0:
            return self.eps_end
        frac = min(1.0, episode / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass(frozen=True)
class Transition:
    state: State
    action: Action
    reward: float
    next_state: State
    terminal: bool
    params: Optional[np.ndarray] = None  # full actor output the Q-network saw


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions stored as flat arrays."""

    def __init__(self, capacity: int, state_dim: int, n_params: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.j = np.zeros(capacity, dtype=np.int64)
        self.p = np.zeros((capacity, n_params))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.d = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, s, j, params, r, s2, done):
        i = self._next
        self.s[i], self.j[i], self.p[i], self.r[i], self.s2[i], self.d[i] = s, j, params, r, s2, float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._next) % self.capacity

    def batch(self, idx):
        return self.s[idx], self.j[idx], self.p[idx], self.r[idx], self.s2[idx], self.d[idx]

    def sample(self, n: int, rng: np.random.Generator):
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.batch(rng.integers(0, self._size, size=n))


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    length: int
    terminal: str
    reason: Optional[str]
    epsilon: float
    final_prob: float


@dataclass
class TrainingLog:
    episodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.episodes)

    def success_rate(self, last: Optional[int] = None) -> float:
        eps = self.episodes[-last:] if last else self.episodes
        return float(np.mean([e.terminal == "success" for e in eps])) if eps else float("nan")

    def write_csv(self, path):
        with atomic_path(path) as tmp:
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["episode", "return", "length", "terminal", "reason", "epsilon", "final_prob"])
                for e in self.episodes:
                    w.writerow([e.episode, repr(e.ret), e.length, e.terminal, e.reason or "",
                                repr(e.epsilon), repr(e.final_prob)])


Sampler = Union[np.ndarray, Sequence, Callable[[np.random.Generator], np.ndarray]]


class PdqnAgent:
    def __init__(self, n_features: int, mutable: Sequence[int], config: AgentConfig | None = None,
                 seed: int = 0):
        self.config = config or AgentConfig()
        self.n_features = int(n_features)
        self.mutable = np.asarray(mutable, dtype=np.int64)
        self.K = len(self.mutable)
        if self.K == 0:
            raise ValueError("agent needs at least one mutable feature")
        self._slot = {int(k): j for j, k in enumerate(self.mutable)}
        self.state_dim = 2 * self.n_features
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        h = list(self.config.hidden)
        self.actor = NeuralNet.build([self.state_dim, *h, self.K], "relu", "tanh", self.rng)
        self.q_net = NeuralNet.build([self.state_dim + self.K, *h, self.K], "relu", "identity", self.rng)
        self.actor_target = self.actor.copy()
        self.q_target = self.q_net.copy()
        self.replay = ReplayBuffer(self.config.replay_capacity, self.state_dim, self.K)
        self.iterations = 0

    @classmethod
    def for_env(cls, env: SCFEnv, config: AgentConfig | None = None, seed: int = 0) -> "PdqnAgent":
        return cls(env.n_features, env.mutable, config, seed)

    # -- acting -------------------------------------------------------------

    def legal(self, s: State) -> np.ndarray:
        return s.b[self.mutable] == 0

    def params_for(self, states: np.ndarray) -> np.ndarray:
        return self.actor.forward(states)

    def q_values(self, s: State, params: Optional[np.ndarray] = None) -> np.ndarray:
        sv = s.vector()
        if params is None:
            params = self.actor.forward(sv)
        return self.q_net.forward(np.concatenate([sv, params]))

    def select(self, s: State, epsilon: float = 0.0) -> tuple[Action, np.ndarray]:
        """Epsilon-greedy action plus the full parameter vector behind it."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        legal = self.legal(s)
        if not legal.any():
            raise NoLegalAction("every mutable feature has been used")
        if epsilon > 0 and self.rng.random() < epsilon:
            params = self.rng.uniform(-1.0, 1.0, size=self.K)
            j = int(self.rng.choice(np.flatnonzero(legal)))
        else:
            sv = s.vector()
            params = self.actor.forward(sv)
            q = self.q_net.forward(np.concatenate([sv, params]))
            j = int(np.argmax(np.where(legal, q, -np.inf)))
        u = float(np.clip(params[j], -1.0, 1.0))
        return Action(int(self.mutable[j]), u), params

    def select_action(self, s: State, epsilon: float = 0.0) -> Action:
        return self.select(s, epsilon)[0]

    # -- learning -----------------------------------------------------------

    def store(self, tr: Transition):
        params = tr.params
        if params is None:
            params = self.actor.forward(tr.state.vector())
            params = params.copy()
            params[self._slot[tr.action.k]] = tr.action.u
        self.replay.push(tr.state.vector(), self._slot[tr.action.k], params, tr.reward,
                         tr.next_state.vector(), tr.terminal)

    def q_targets(self, r, s2, done) -> np.ndarray:
        """``r + gamma * (1 - done) * max over unused k of Q_target(s2, actor_target(s2))``."""
        gamma = self.config.gamma
        y = np.asarray(r, dtype=np.float64).copy()
        live = np.asarray(done) < 0.5
        if gamma == 0 or not live.any():
            return y
        s2 = s2[live]
        u2 = self.actor_target.forward(s2)
        q2 = self.q_target.forward(np.concatenate([s2, u2], axis=1))
        legal = s2[:, self.n_features + self.mutable] == 0
        best = np.where(legal, q2, -np.inf).max(axis=1)
        best = np.where(legal.any(axis=1), best, 0.0)
        y[live] += gamma * best
        return y

    def train_iteration(self, batch) -> tuple[float, float]:
        s, j, params, r, s2, done = batch
        n = s.shape[0]
        if n < 1:
            raise ValueError("empty batch")
        cfg = self.config
        rows = np.arange(n)

        y = self.q_targets(r, s2, done)
        q, qc = self.q_net.forward(np.concatenate([s, params], axis=1), cache=True)
        err = q[rows, j] - y
        q_loss = float(np.mean(err ** 2))
        if not np.isfinite(q_loss):
            raise NonFiniteLoss(f"Q loss is {q_loss}")
        g = np.zeros_like(q)
        g[rows, j] = 2.0 * err / n
        self.q_net.apply_gradients(self.q_net.backward(qc, g)[0], cfg.q_lr)

        # actor ascends the summed Q over unused features; Q-net is held fixed
        legal = (s[:, self.n_features + self.mutable] == 0).astype(np.float64)
        u, ac = self.actor.forward(s, cache=True)
        qa, qac = self.q_net.forward(np.concatenate([s, u], axis=1), cache=True)
        objective = float(np.mean((qa * legal).sum(axis=1)))
        if not np.isfinite(objective):
            raise NonFiniteLoss(f"actor objective is {objective}")
        _, gin = self.q_net.backward(qac, -legal / n)
        self.actor.apply_gradients(self.actor.backward(ac, gin[:, self.state_dim:])[0], cfg.actor_lr)

        self.soft_update()
        self.iterations += 1
        return q_loss, objective

    def soft_update(self, tau: Optional[float] = None):
        tau = self.config.tau if tau is None else tau
        for main, target in ((self.actor, self.actor_target), (self.q_net, self.q_target)):
            for p, tp in zip(main.params(), target.params()):
                tp *= 1.0 - tau
                tp += tau * p

    def train(self, env: SCFEnv, episodes: int, sampler: Sampler, seed: Optional[int] = None,
              progress: Optional[Callable[[EpisodeLog], None]] = None) -> TrainingLog:
        """Run ``episodes`` epsilon-greedy episodes, one update per step after warm-up.

        ``sampler`` is either an array of candidate start instances (those
        already classified as target are skipped) or ``f(rng) -> instance``.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg = self.config
        log = TrainingLog()
        if episodes <= 0:
            return log
        draw = self._make_sampler(env, sampler)
        for ep in range(episodes):
            eps = cfg.epsilon(ep, episodes)
            s = env.reset(draw())
            ret, length = 0.0, 0
            while True:
                action, params = self.select(s, eps)
                out = env.step(action)
                self.store(Transition(s, action, out.reward, out.next, out.done, params))
                if len(self.replay) >= max(cfg.warmup, 1):
                    self.train_iteration(self.replay.sample(cfg.batch_size, self.rng))
                ret += out.reward
                length += 1
                s = out.next
                if out.done:
                    break
            entry = EpisodeLog(ep, ret, length, out.terminal, out.reason, eps, out.prob_next)
            log.episodes.append(entry)
            if progress is not None:
                progress(entry)
        return log

    def _make_sampler(self, env: SCFEnv, sampler: Sampler):
        if callable(sampler):
            def draw():
                while True:
                    x = np.asarray(sampler(self.rng), dtype=np.float64)
                    if env.classifier.predict_proba(x) < env.thr:
                        return x
            return draw
        pool = np.asarray(sampler, dtype=np.float64)
        if pool.ndim != 2 or len(pool) == 0:
            raise ValueError("sampler array must be a non-empty (n, d) matrix")
        pool = pool[env.classifier.predict_proba(pool) < env.thr]
        if len(pool) == 0:
            raise AlreadyTarget("no start instance is classified as non-target")
        return lambda: pool[self.rng.integers(len(pool))]

    # -- greedy policy ------------------------------------------------------

    def greedy_episode(self, env: SCFEnv, instance):
        """Roll out one greedy episode; yields ``(action, outcome)`` pairs."""
        s = env.reset(instance)
        while True:
            action = self.select_action(s, 0.0)
            out = env.step(action)
            yield action, out
            if out.terminal != NONE:
                return
            s = out.next

    # -- persistence --------------------------------------------------------

    def save(self, path):
        arrays = {}
        for name, net in self._nets().items():
            arrays.update(net.state_arrays(prefix=f"{name}/"))
        meta = {
            "kind": "pdqn-agent",
            "config": asdict(self.config),
            "n_features": self.n_features,
            "mutable": self.mutable.tolist(),
            "seed": self.seed,
            "iterations": self.iterations,
            "rng_state": self.rng.bit_generator.state,
            "nets": {name: net.meta() for name, net in self._nets().items()},
        }
        save_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "PdqnAgent":
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "pdqn-agent":
            raise ValueError(f"{path}: not an agent checkpoint")
        cfg = dict(meta["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        agent = cls(meta["n_features"], meta["mutable"], AgentConfig(**cfg), meta["seed"])
        for name in agent._nets():
            setattr(agent, name, NeuralNet.from_state(meta["nets"][name], arrays, prefix=f"{name}/"))
        agent.rng.bit_generator.state = meta["rng_state"]
        agent.iterations = meta["iterations"]
        return agent

    def _nets(self) -> dict:
        return {"actor": self.actor, "q_net": self.q_net,
                "actor_target": self.actor_target, "q_target": self.q_target}
