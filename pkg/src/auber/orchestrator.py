"""Layer-wise pruning driven by a DQN agent.

For every layer (in forward or reverse order) a fresh agent is trained for
``episodes`` episodes. An episode starts from the layer with all heads live,
prunes one head per step, and ends on the quit action or once a single
head is left. The reward of a prune is the change in mini-validation
accuracy. After training, one greedy rollout is applied permanently, the
model is briefly fine-tuned on the mini-train split, and the next layer is
processed. A final early-stopped fine-tune on the full training set closes
the run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np

from auber.config import RunConfig, TrainerConfig
from auber.dqn import AgentConfig, DQNAgent, Transition
from auber.errors import PolicyError
from auber.state import LayerState, StateRecipe, layer_state, mark_pruned
from auber.trainer import (
    Dataset,
    Metrics,
    MetricsLog,
    early_stop_finetune,
    evaluate,
    fine_tune,
    split_mini,
)
from auber.transformer import EncoderModel, prune_head

log = logging.getLogger(__name__)

GATING_NOTE = "pruned heads are masked by a zero gate; weights are kept"


class PruneEnv(Protocol):
    num_heads: int

    def reset(self) -> LayerState: ...

    def step(self, action: int) -> tuple[Optional[LayerState], float]: ...

    def restore(self) -> None: ...


class RealEnv:
    """Prunes heads of one model layer; rewards are mini-val accuracy deltas.

    Accuracies are memoized on the layer's gate pattern, which is exact while
    the weights stay fixed (they do for the lifetime of one env).
    """

    def __init__(self, model: EncoderModel, layer: int, mini_val: Dataset,
                 recipe: StateRecipe = StateRecipe(), quit_reward: float = 0.0):
        self.model = model
        self.layer = layer
        self.mini_val = mini_val
        self.recipe = recipe
        self.quit_reward = quit_reward
        self.num_heads = model.config.num_heads
        self._acc_cache: dict[tuple[bool, ...], float] = {}
        self.restore()
        self.initial_state = layer_state(model, layer, recipe)
        self.original_accuracy = self.accuracy()
        self.prev_accuracy = self.original_accuracy
        self.state: Optional[LayerState] = None
        self.done = True

    def accuracy(self) -> float:
        key = tuple(bool(g) for g in self.model.layers[self.layer].gates)
        if key not in self._acc_cache:
            self._acc_cache[key] = evaluate(self.model, self.mini_val).accuracy
        return self._acc_cache[key]

    def restore(self) -> None:
        self.model.layers[self.layer].gates[:] = 1.0

    def reset(self) -> LayerState:
        self.restore()
        self.prev_accuracy = self.original_accuracy
        self.state = self.initial_state
        self.done = False
        return self.state

    def step(self, action: int) -> tuple[Optional[LayerState], float]:
        if self.done:
            raise PolicyError("step called on a finished episode; reset first")
        if action == self.num_heads:
            self.done = True
            return None, self.quit_reward
        prune_head(self.model, self.layer, action)
        current = self.accuracy()
        reward = current - self.prev_accuracy
        self.prev_accuracy = current
        self.state = mark_pruned(self.state, action)
        return self.state, reward


class MockEnv:
    """Table-driven env: pruning head ``i`` always pays ``rewards[i]``."""

    def __init__(self, rewards, quit_reward: float = 0.0, initial_values=None):
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.num_heads = len(self.rewards)
        self.quit_reward = quit_reward
        values = np.full(self.num_heads, 1.0 / self.num_heads) if initial_values is None else initial_values
        self.initial_state = LayerState(values=np.asarray(values, dtype=np.float64))
        self.state: Optional[LayerState] = None
        self.done = True

    def reset(self) -> LayerState:
        self.state = self.initial_state
        self.done = False
        return self.state

    def step(self, action: int) -> tuple[Optional[LayerState], float]:
        if self.done:
            raise PolicyError("step called on a finished episode; reset first")
        if action == self.num_heads:
            self.done = True
            return None, self.quit_reward
        self.state = mark_pruned(self.state, action)
        return self.state, float(self.rewards[action])

    def restore(self) -> None:
        pass


@dataclass
class LayerPolicy:
    layer: int
    pruned_heads: list[int]
    final_mini_val_accuracy: Optional[float]  # None for heuristic baselines
    original_mini_val_accuracy: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "layer": self.layer,
            "pruned_heads": list(self.pruned_heads),
            "final_mini_val_accuracy": self.final_mini_val_accuracy,
            "original_mini_val_accuracy": self.original_mini_val_accuracy,
        }


@dataclass
class PruneReport:
    method: str
    layer_policies: list[LayerPolicy]
    order: list[int]
    pre: Metrics
    post: Metrics
    seed: int
    config: dict = field(default_factory=dict)
    final_best_epoch: int = 0
    notes: str = GATING_NOTE

    @property
    def total_pruned(self) -> int:
        return sum(len(p.pruned_heads) for p in self.layer_policies)

    def pruned_set(self) -> set[tuple[int, int]]:
        return {(p.layer, h) for p in self.layer_policies for h in p.pruned_heads}

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "layer_policies": [p.as_dict() for p in self.layer_policies],
            "total_pruned": self.total_pruned,
            "pre": self.pre.as_dict(),
            "post": self.post.as_dict(),
            "order": list(self.order),
            "seed": self.seed,
            "final_best_epoch": self.final_best_epoch,
            "notes": self.notes,
        }


# ---------------------------------------------------------------------------
# episodes


def _rollout(env: PruneEnv, agent: DQNAgent, rng: np.random.Generator, greedy: bool) -> list[Transition]:
    s = env.reset()
    H = env.num_heads
    out = []
    while True:
        if s.num_pruned == H - 1:
            action = H  # forced quit: one head must survive
        else:
            action = agent.act(s.values, rng, greedy=greedy)
        s_next, reward = env.step(action)
        out.append(Transition(s.values, action, None if s_next is None else s_next.values, reward))
        if s_next is None:
            return out
        s = s_next


def run_episode(env: PruneEnv, agent: DQNAgent, rng: np.random.Generator) -> list[Transition]:
    """One exploratory episode; transitions go to replay, then one optimize call.

    The env is restored afterwards, so the model leaves with all gates of the
    layer live.
    """
    transitions = _rollout(env, agent, rng, greedy=False)
    for t in transitions:
        agent.remember(t)
    agent.optimize(rng)
    env.restore()
    return transitions


def train_agent(env: PruneEnv, cfg: AgentConfig, rng: np.random.Generator) -> DQNAgent:
    agent = DQNAgent(env.num_heads, cfg, rng)
    for _ in range(cfg.episodes):
        run_episode(env, agent, rng)
    env.restore()
    return agent


def greedy_policy(env: PruneEnv, agent: DQNAgent, rng: np.random.Generator) -> list[int]:
    """Prune actions of one eps=0 rollout. The env is left in its final pruned state."""
    return [t.a for t in _rollout(env, agent, rng, greedy=True) if t.s_next is not None]


def train_layer(model: EncoderModel, l: int, cfg: AgentConfig, mini_val: Dataset,
                rng: np.random.Generator, recipe: StateRecipe = StateRecipe()) -> DQNAgent:
    env = RealEnv(model, l, mini_val, recipe, quit_reward=cfg.quit_reward)
    return train_agent(env, cfg, rng)


def extract_policy(model: EncoderModel, l: int, agent: DQNAgent, mini_val: Dataset,
                   rng: Optional[np.random.Generator] = None,
                   recipe: StateRecipe = StateRecipe()) -> LayerPolicy:
    """Apply the agent's greedy rollout to layer ``l`` permanently."""
    env = RealEnv(model, l, mini_val, recipe, quit_reward=agent.cfg.quit_reward)
    pruned = greedy_policy(env, agent, rng if rng is not None else np.random.default_rng(0))
    return LayerPolicy(l, pruned, env.accuracy(), env.original_accuracy)


# ---------------------------------------------------------------------------
# full run


def layer_order(num_layers: int, order: str) -> list[int]:
    layers = list(range(num_layers))
    return layers[::-1] if order == "reverse" else layers


def method_name(cfg: RunConfig) -> str:
    name = "auber"
    if cfg.state != "value":
        name += f"-{cfg.state}"
    if cfg.order == "reverse":
        name += "-reverse"
    return name


def final_finetune(model: EncoderModel, train: Dataset, dev: Dataset, tcfg: TrainerConfig,
                   rng: np.random.Generator, log_rows: Optional[MetricsLog] = None):
    return early_stop_finetune(model, train, dev, tcfg.final_lr, rng, patience=tcfg.patience,
                               max_epochs=tcfg.max_epochs, batch_size=tcfg.batch_size,
                               log=log_rows, phase="final")


def run_auber(model: EncoderModel, cfg: RunConfig, train: Dataset, dev: Dataset,
              rng: np.random.Generator, log_rows: Optional[MetricsLog] = None
              ) -> tuple[PruneReport, EncoderModel]:
    """Prune ``model`` in place layer by layer, then early-stop fine-tune a copy.

    Returns the report and the final (best dev epoch) model.
    """
    recipe = StateRecipe.from_name(cfg.state)
    tcfg = cfg.trainer
    # The final fine-tune gets its own stream so every method sees the same batch order.
    rng, final_rng = rng.spawn(2)
    pre = evaluate(model, dev)
    order = layer_order(len(model.layers), cfg.order)
    policies = []
    for l in order:
        split = split_mini(train, rng, tcfg.small_part)
        agent = train_layer(model, l, cfg.agent, split.mini_val, rng, recipe)
        policy = extract_policy(model, l, agent, split.mini_val, rng, recipe)
        log.info("layer %d: pruned %s (mini-val %.4f -> %.4f)", l, policy.pruned_heads,
                 policy.original_mini_val_accuracy, policy.final_mini_val_accuracy)
        policies.append(policy)
        if tcfg.interlayer_epochs > 0:
            fine_tune(model, split.mini_train, tcfg.interlayer_lr, tcfg.interlayer_epochs, rng,
                      batch_size=tcfg.batch_size, log=log_rows, phase=f"interlayer_{l}")
    final = final_finetune(model, train, dev, tcfg, final_rng, log_rows)
    report = PruneReport(
        method=method_name(cfg),
        layer_policies=policies,
        order=order,
        pre=pre,
        post=evaluate(final.model, dev),
        seed=cfg.seed,
        config=cfg.to_dict(),
        final_best_epoch=final.best_epoch,
    )
    return report, final.model
