"""Sequential counterfactual policies with P-DQN and probability-shaped rewards."""

from .agent import AgentConfig, PdqnAgent, Transition
from .classifier import BlackBoxClassifier, ClassifierConfig, train_classifier
from .data import Dataset, FeatureSchema, load_dataset, make_synthetic, normalize, split
from .env import Action, RewardConfig, SCFEnv, State, StepOutcome
from .evaluation import EpisodeTrace, MetricsReport, action_entropy, rollout, sankey_export
from .nn import NeuralNet

__version__ = "0.1.0"
