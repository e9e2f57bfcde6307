"""Deep Q-learning agent: Q-network, replay memory, epsilon-greedy, Bellman updates.

The Q-network is a 4-layer MLP, H -> 512 -> 512 -> 512 -> H+1, with leaky
ReLU (slope 0.01) after every layer but the last. Action ``H`` is "quit".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from auber.errors import PolicyError, ShapeError
from auber.trainer import OptimizerState, adam_step

LEAK = 0.01


@dataclass
class AgentConfig:
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: float = 256.0
    batch_size: int = 128
    gamma: float = 1.0
    lr: float = 1e-4
    tau_sync: int = 10
    episodes: int = 300
    memory_capacity: int = 5000
    hidden: int = 512
    quit_reward: float = 0.0

    def validate(self) -> None:
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.tau_sync < 1 or self.batch_size < 1 or self.memory_capacity < 1:
            raise ValueError("tau_sync, batch_size and memory_capacity must be >= 1")


@dataclass
class QNet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "QNet":
        return QNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_qnet(num_heads: int, rng: np.random.Generator, hidden: int = 512) -> QNet:
    """Uniform(+-1/sqrt(fan_in)) init for weights and biases."""
    dims = [num_heads, hidden, hidden, hidden, num_heads + 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return QNet(weights, biases)


def _forward(net: QNet, S: np.ndarray):
    acts = [S]
    pre = []
    x = S
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = x @ w + b
        if i < last:
            pre.append(z)
            x = np.where(z > 0, z, LEAK * z)
            acts.append(x)
        else:
            x = z
    return x, (acts, pre)


def qnet_forward_batch(net: QNet, S) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[1] != net.in_dim:
        raise ShapeError(f"state width {S.shape[1]} != network input {net.in_dim}")
    return _forward(net, S)[0]


def qnet_forward(net: QNet, s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != net.in_dim:
        raise ShapeError(f"state of shape {s.shape} does not match network input {net.in_dim}")
    return qnet_forward_batch(net, s[None])[0]


def epsilon_at(step: int, cfg: AgentConfig) -> float:
    return cfg.eps_end + (cfg.eps_start - cfg.eps_end) * math.exp(-step / cfg.eps_decay)


def valid_actions(values: np.ndarray) -> np.ndarray:
    """Mask over H+1 actions: live heads (nonzero entry) plus quit.

    When one live head remains only quit is allowed.
    """
    live = np.asarray(values) != 0
    mask = np.append(live, True)
    if live.sum() <= 1:
        mask[:-1] = False
    return mask


def select_action(net: QNet, s, eps: float, valid, rng: np.random.Generator) -> int:
    valid = np.asarray(valid, dtype=bool)
    if not valid.any():
        raise PolicyError("no valid action to choose from")
    if eps > 0 and rng.random() < eps:
        return int(rng.choice(np.flatnonzero(valid)))
    q = qnet_forward(net, s)
    return int(np.argmax(np.where(valid, q, -np.inf)))


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: int
    s_next: Optional[np.ndarray]  # None means terminal
    r: float

    def __post_init__(self):
        quit_action = len(self.s)
        if (self.a == quit_action) != (self.s_next is None):
            raise PolicyError("quit action and terminal next state must coincide")


@dataclass
class ReplayMemory:
    capacity: int = 5000
    buffer: list[Transition] = field(default_factory=list)
    cursor: int = 0

    def __len__(self) -> int:
        return len(self.buffer)

    def push(self, t: Transition) -> None:
        if len(self.buffer) < self.capacity:
            self.buffer.append(t)
        else:
            self.buffer[self.cursor] = t
        self.cursor = (self.cursor + 1) % self.capacity

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self.buffer), size=k, replace=False)
        return [self.buffer[i] for i in idx]


def push_transition(mem: ReplayMemory, t: Transition) -> None:
    mem.push(t)


def huber(x, delta: float = 1.0):
    a = np.abs(x)
    return np.where(a <= delta, 0.5 * x * x, delta * (a - 0.5 * delta))


def bellman_targets(target: QNet, batch: list[Transition], gamma: float) -> np.ndarray:
    """r for terminal transitions, else r + gamma * max over valid next actions."""
    y = np.array([t.r for t in batch], dtype=np.float64)
    live = [i for i, t in enumerate(batch) if t.s_next is not None]
    if live:
        S_next = np.stack([batch[i].s_next for i in live])
        q = qnet_forward_batch(target, S_next)
        masks = np.stack([valid_actions(s) for s in S_next])
        y[live] += gamma * np.where(masks, q, -np.inf).max(axis=1)
    return y


def optimize_step(
    policy: QNet,
    target: QNet,
    mem: ReplayMemory,
    cfg: AgentConfig,
    rng: np.random.Generator,
    opt: OptimizerState,
) -> Optional[float]:
    """One Adam step on the mean Huber loss of a uniform replay batch; no-op while memory is short."""
    if len(mem) < cfg.batch_size:
        return None
    batch = mem.sample(cfg.batch_size, rng)
    y = bellman_targets(target, batch, cfg.gamma)
    S = np.stack([t.s for t in batch])
    a = np.array([t.a for t in batch])
    q, (acts, pre) = _forward(policy, S)
    rows = np.arange(len(batch))
    resid = q[rows, a] - y
    loss = float(huber(resid).mean())

    dq = np.zeros_like(q)
    dq[rows, a] = np.clip(resid, -1.0, 1.0) / len(batch)
    gw, gb = [None] * len(policy.weights), [None] * len(policy.weights)
    delta = dq
    for i in reversed(range(len(policy.weights))):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(0)
        if i > 0:
            delta = (delta @ policy.weights[i].T) * np.where(pre[i - 1] > 0, 1.0, LEAK)
    adam_step(policy.parameters(), [g for pair in zip(gw, gb) for g in pair], opt)
    return loss


def sync_target(policy: QNet, target: QNet, calls: int, cfg: AgentConfig) -> bool:
    """Copy policy parameters into target when ``calls`` is a multiple of tau."""
    if calls % cfg.tau_sync != 0:
        return False
    for dst, src in zip(target.parameters(), policy.parameters()):
        if dst.shape != src.shape:
            raise ShapeError(f"target {dst.shape} vs policy {src.shape}")
        dst[...] = src
    return True


class DQNAgent:
    """Policy/target networks, replay memory and counters for one layer."""

    def __init__(self, num_heads: int, cfg: AgentConfig, rng: np.random.Generator):
        cfg.validate()
        self.num_heads = num_heads
        self.cfg = cfg
        self.policy = init_qnet(num_heads, rng, cfg.hidden)
        self.target = self.policy.copy()
        self.memory = ReplayMemory(cfg.memory_capacity)
        self.opt = OptimizerState.for_params(self.policy.parameters(), cfg.lr)
        self.steps_done = 0
        self.optimize_calls = 0
        self.losses: list[float] = []

    def act(self, s: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> int:
        eps = 0.0 if greedy else epsilon_at(self.steps_done, self.cfg)
        if not greedy:
            self.steps_done += 1
        return select_action(self.policy, s, eps, valid_actions(s), rng)

    def remember(self, t: Transition) -> None:
        self.memory.push(t)

    def optimize(self, rng: np.random.Generator) -> Optional[float]:
        loss = optimize_step(self.policy, self.target, self.memory, self.cfg, rng, self.opt)
        self.optimize_calls += 1
        sync_target(self.policy, self.target, self.optimize_calls, self.cfg)
        if loss is not None:
            self.losses.append(loss)
        return loss
