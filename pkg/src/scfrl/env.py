"""Sequential counterfactual MDP over a frozen classifier.

A state is the normalized instance ``x`` plus a per-feature usage vector
``b``. An action ``(k, u)`` overwrites feature ``k`` with the normalized value
``u``. An episode ends in success once the classifier's target probability
reaches the threshold, or in failure on feature re-use, an immutable-feature
action, or after all K mutable features were used without success.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classifier import BlackBoxClassifier
from .data import FeatureSchema
from .errors import AlreadyTarget, ImmutableFeature, TerminalState

NONE = "none"
SUCCESS = "success"
FAILURE = "failure"

REUSE = "reuse"
CONSTRAINT = "constraint"
STEP_LIMIT = "step-limit"


@dataclass(frozen=True)
class State:
    x: np.ndarray
    b: np.ndarray
    t: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        b = np.array(self.b, dtype=np.int64)
        if x.shape != b.shape or x.ndim != 1:
            raise ValueError("x and b must be 1-d vectors of equal length")
        if np.any(b < 0):
            raise ValueError("usage counts must be non-negative")
        x.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "b", b)

    def vector(self) -> np.ndarray:
        """Network input: ``x`` concatenated with ``b``."""
        return np.concatenate([self.x, self.b.astype(np.float64)])

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.t == other.t and np.array_equal(self.x, other.x) and np.array_equal(self.b, other.b)

    __hash__ = None


@dataclass(frozen=True)
class Action:
    k: int
    u: float

    def __post_init__(self):
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "u", float(self.u))
        if not -1.0 <= self.u <= 1.0:
            raise ValueError(f"action value {self.u} not in [-1, 1]")


@dataclass(frozen=True)
class StepOutcome:
    next: State
    reward: float
    terminal: str
    prob_next: float
    reason: Optional[str] = None

    @property
    def done(self) -> bool:
        return self.terminal != NONE


@dataclass(frozen=True)
class RewardConfig:
    """Reward constants. ``pos`` defaults to ``alpha * thr``, ``pen`` to ``-2 * pos``."""

    variant: str = "prob"
    alpha: float = 10.0
    beta: float = 1.0
    thr: float = 0.5
    pos: Optional[float] = None
    pen: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("bin", "prob"):
            raise ValueError(f"reward variant must be 'bin' or 'prob', got {self.variant!r}")
        if self.pos is None:
            object.__setattr__(self, "pos", self.alpha * self.thr)
        if self.pen is None:
            object.__setattr__(self, "pen", -2.0 * self.pos)
        if not self.pos > 0 > self.pen:
            raise ValueError("need pos > 0 > pen")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


def distance(a: State, b: State) -> float:
    return float(np.linalg.norm(a.x - b.x))


def terminal_value(terminal: str, cfg: RewardConfig) -> float:
    if terminal == SUCCESS:
        return cfg.pos
    if terminal == FAILURE:
        return cfg.pen
    return 0.0


def reward_bin(s0: State, nxt: State, terminal: str, cfg: RewardConfig) -> float:
    return terminal_value(terminal, cfg) - cfg.beta * distance(nxt, s0)


def reward_prob(s0: State, nxt: State, terminal: str, cfg: RewardConfig, bb: BlackBoxClassifier,
                p_next: Optional[float] = None, p0: Optional[float] = None) -> float:
    """Probability-shaped reward; terminals keep the Pos/Pen values of :func:`reward_bin`.

    ``p_next``/``p0`` may be passed to skip re-querying the classifier.
    """
    if terminal != NONE:
        return reward_bin(s0, nxt, terminal, cfg)
    if p_next is None:
        p_next = bb.predict_proba(nxt.x)
    if p0 is None:
        p0 = bb.predict_proba(s0.x)
    return cfg.alpha * (p_next - p0) - cfg.beta * distance(nxt, s0)


def apply_action(s: State, a: Action, schema: Sequence[FeatureSchema]) -> State:
    f = schema[a.k]
    if not f.mutable:
        raise ImmutableFeature(f"feature {a.k} ({f.name}) is immutable")
    x = s.x.copy()
    b = s.b.copy()
    x[a.k] = f.snap(a.u)
    b[a.k] += 1
    return State(x, b, s.t + 1)


class SCFEnv:
    """One episode at a time over a frozen classifier."""

    def __init__(self, classifier: BlackBoxClassifier, schema: Sequence[FeatureSchema],
                 reward: RewardConfig | None = None):
        self.classifier = classifier
        self.schema = tuple(schema)
        self.reward_cfg = reward or RewardConfig()
        if classifier.n_features != len(self.schema):
            raise ValueError("classifier input width does not match schema")
        self.mutable = np.array([j for j, f in enumerate(self.schema) if f.mutable], dtype=np.int64)
        self.K = len(self.mutable)
        if self.K == 0:
            raise ValueError("schema has no mutable features")
        self.state: Optional[State] = None
        self.s0: Optional[State] = None
        self.p0 = float("nan")
        self.p = float("nan")
        self.done = True

    @property
    def n_features(self) -> int:
        return len(self.schema)

    @property
    def thr(self) -> float:
        return self.reward_cfg.thr

    def proba(self, s: State) -> float:
        return self.classifier.predict_proba(s.x)

    def reset(self, instance) -> State:
        x = np.asarray(instance, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(f"instance must have {self.n_features} features")
        s = State(x, np.zeros(self.n_features, dtype=np.int64), 0)
        p = self.proba(s)
        if p >= self.thr:
            raise AlreadyTarget(f"instance already classified as target (p={p:.4f})")
        self.state = self.s0 = s
        self.p0 = self.p = p
        self.done = False
        return s

    def step(self, action: Action) -> StepOutcome:
        if self.done:
            raise TerminalState("episode has ended; call reset()")
        s = self.state
        if not 0 <= action.k < self.n_features:
            raise IndexError(f"feature index {action.k} out of range")
        reason = None
        if not self.schema[action.k].mutable:
            nxt, p, terminal, reason = s, self.p, FAILURE, CONSTRAINT
        elif s.b[action.k] > 0:
            nxt, p, terminal, reason = s, self.p, FAILURE, REUSE
        else:
            nxt = apply_action(s, action, self.schema)
            p = self.proba(nxt)
            if p >= self.thr:
                terminal = SUCCESS
            elif nxt.t >= self.K:
                terminal, reason = FAILURE, STEP_LIMIT
            else:
                terminal = NONE
        cfg = self.reward_cfg
        if cfg.variant == "bin":
            r = reward_bin(self.s0, nxt, terminal, cfg)
        else:
            r = reward_prob(self.s0, nxt, terminal, cfg, self.classifier, p_next=p, p0=self.p0)
        self.state, self.p = nxt, p
        self.done = terminal != NONE
        return StepOutcome(nxt, float(r), terminal, float(p), reason)

    def legal_mask(self, s: State) -> np.ndarray:
        """Boolean mask over the K mutable features that are still unused."""
        return s.b[self.mutable] == 0
