"""Mini-batch Q-learning with experience replay and a cloned target network.

The network maps the 5-dim customer state (plus the continuous action
attribute in mixed mode) to one value per discrete action. Targets are
r + gamma * max_a' Q_target(s', a'); the loss gradient flows only through the
output neuron of the action actually taken. Model selection keeps the
parameters with the best matched-group mean reward on the validation set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import policy_eval
from .action_space import ActionSpec, ContOptConfig, maximize_continuous_batch
from .nn_core import (
    ConfigError,
    LayerSpec,
    Mlp,
    RmspropState,
    TrainingError,
    backward_batch,
    forward_batch,
    init_mlp,
    rmsprop_step,
)

N_ACTIONS = 12
HIDDEN = (40, 15)

MODES = ("discrete_only", "mixed")


class TrainingDiverged(TrainingError):
    def __init__(self, epoch, step, loss):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass
class TrainConfig:
    gamma: float = 0.9
    lr0: float = 0.001
    lr_decay_per_epoch: float = 0.99
    batch_size: int = 200
    epochs: int = 100
    target_clone_period: int = 10000  # in gradient steps
    seed: int = 0
    mode: str = "discrete_only"

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must be in [0,1), got {self.gamma}")
        if self.lr0 <= 0 or not 0 < self.lr_decay_per_epoch <= 1:
            raise ConfigError("bad learning-rate settings")
        if self.batch_size < 1 or self.epochs < 0 or self.target_clone_period < 1:
            raise ConfigError("bad batch/epoch/clone settings")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")


def network_spec(mode: str):
    n_in = 5 if mode == "discrete_only" else 6
    return [
        LayerSpec(n_in, HIDDEN[0], "relu"),
        LayerSpec(HIDDEN[0], HIDDEN[1], "relu"),
        LayerSpec(HIDDEN[1], N_ACTIONS, "linear"),
    ]


class ReplayBuffer:
    """Uniform-with-replacement sampler over stored transitions, FIFO beyond capacity."""

    def __init__(self, seed: int = 0, capacity: int = 1_000_000):
        self._tuples = []
        self._start = 0  # ring-buffer head once full
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)

    def add(self, tup):
        if len(self._tuples) < self.capacity:
            self._tuples.append(tup)
        else:
            self._tuples[self._start] = tup
            self._start = (self._start + 1) % self.capacity

    def extend(self, tuples):
        for t in tuples:
            self.add(t)

    def __len__(self):
        return len(self._tuples)

    def sample(self, n: int):
        idx = self.rng.integers(0, len(self._tuples), size=n)
        return [self._tuples[i] for i in idx]


def clone_target(net: Mlp) -> Mlp:
    return net.copy()


def _inputs_for(states, aconts, mode):
    if mode == "mixed":
        return np.concatenate([states, np.asarray(aconts)[:, None]], axis=1)
    return np.asarray(states)


def max_next_q(next_states, target_net, cfg, action_spec=None, cont_cfg=None,
               inaction_acont: float = 0.0):
    """max_a' Q_target(s', a') for a batch of next states."""
    next_states = np.atleast_2d(next_states)
    if cfg.mode == "discrete_only":
        q, _ = forward_batch(target_net, next_states)
        return q.max(axis=1)
    spec = action_spec or ActionSpec(continuous_dims=1)
    cont = cont_cfg or ContOptConfig()
    n = next_states.shape[0]
    best = np.empty((n, spec.n_discrete))
    q0, _ = forward_batch(target_net, _inputs_for(next_states, np.full(n, inaction_acont), "mixed"))
    best[:, 0] = q0[:, 0]
    for a in range(1, spec.n_discrete):
        _, best[:, a] = maximize_continuous_batch(target_net, next_states, a, spec, cont)
    return best.max(axis=1)


def bellman_target(tup, target_net: Mlp, cfg: TrainConfig, action_spec=None,
                   cont_cfg=None, inaction_acont: float = 0.0) -> float:
    """y = r + gamma * max_a' Q_target(s', a') for one transition."""
    m = max_next_q(
        tup.next_state.to_array()[None, :], target_net, cfg, action_spec, cont_cfg, inaction_acont
    )
    return float(tup.reward + cfg.gamma * m[0])


def td_step(batch, net: Mlp, target_net: Mlp, opt: RmspropState, cfg: TrainConfig,
            lr=None, action_spec=None, cont_cfg=None, inaction_acont: float = 0.0):
    """One gradient step on a batch. Returns the batch mean squared TD error.

    Only the output neuron of the taken action receives loss gradient.
    """
    if not batch:
        raise ConfigError("empty training batch")
    arrs = _batch_arrays(batch)
    return td_step_arrays(arrs, net, target_net, opt, cfg, lr, action_spec, cont_cfg, inaction_acont)


def _batch_arrays(batch):
    return {
        "states": np.array([t.state.to_array() for t in batch]),
        "actions": np.array([t.action for t in batch], dtype=np.int64),
        "aconts": np.array([t.acont for t in batch]),
        "next_states": np.array([t.next_state.to_array() for t in batch]),
        "rewards": np.array([t.reward for t in batch]),
    }


def td_step_arrays(arrs, net, target_net, opt, cfg, lr=None, action_spec=None,
                   cont_cfg=None, inaction_acont: float = 0.0):
    lr = cfg.lr0 if lr is None else lr
    n = len(arrs["rewards"])
    y = arrs["rewards"] + cfg.gamma * max_next_q(
        arrs["next_states"], target_net, cfg, action_spec, cont_cfg, inaction_acont
    )
    x = _inputs_for(arrs["states"], arrs["aconts"], cfg.mode)
    q, cache = forward_batch(net, x)
    taken = q[np.arange(n), arrs["actions"]]
    err = taken - y
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        raise TrainingDiverged(-1, -1, loss)
    output_grads = np.zeros_like(q)
    output_grads[np.arange(n), arrs["actions"]] = 2.0 * err / n
    grads = backward_batch(net, cache, output_grads)
    rmsprop_step(net, grads, opt, lr)
    return loss


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_response_rate: float
    val_mean_reward: float
    lr: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "val_response_rate", "val_mean_reward", "lr"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.loss), repr(r.val_response_rate),
                                 repr(r.val_mean_reward), repr(r.lr)])


def train(train_set, validation_set, cfg: TrainConfig, action_spec=None, cont_cfg=None,
          inaction_acont: float = 0.0, net: Mlp = None):
    """Train a DQN on logged transitions. Returns (best net, TrainHistory).

    An epoch is ceil(N / batch_size) uniform replay draws, so each sample is
    expected once per epoch; the learning rate decays per epoch and the target
    net is cloned on a fixed gradient-step schedule.
    """
    if not train_set:
        raise ConfigError("empty training set")
    if net is None:
        net = init_mlp(network_spec(cfg.mode), cfg.seed)
    history = TrainHistory()
    if cfg.epochs == 0:
        return net, history
    buffer = ReplayBuffer(seed=cfg.seed)
    buffer.extend(train_set)
    target = clone_target(net)
    opt = RmspropState.init_like(net)
    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    lr = cfg.lr0
    best_net = clone_target(net)
    best_reward = -np.inf
    global_step = 0
    for epoch in range(cfg.epochs):
        losses = np.empty(steps_per_epoch)
        for step in range(steps_per_epoch):
            batch = buffer.sample(cfg.batch_size)
            try:
                losses[step] = td_step(batch, net, target, opt, cfg, lr,
                                       action_spec, cont_cfg, inaction_acont)
            except TrainingDiverged as exc:
                raise TrainingDiverged(epoch, global_step, float("nan")) from exc
            global_step += 1
            if global_step % cfg.target_clone_period == 0:
                target = clone_target(net)
        report = policy_eval.evaluate(
            validation_set, net, cfg.mode,
            action_spec or ActionSpec(continuous_dims=1 if cfg.mode == "mixed" else 0),
            cont_cfg or ContOptConfig(), baseline_seed=cfg.seed,
            inaction_acont=inaction_acont,
        )
        val_rate = report.matched.response_rate
        val_reward = report.matched.mean_reward
        history.records.append(EpochRecord(epoch, float(losses.mean()),
                                           val_rate, val_reward, lr))
        score = val_reward if math.isfinite(val_reward) else -np.inf
        if score > best_reward:
            best_reward = score
            best_net = clone_target(net)
        lr *= cfg.lr_decay_per_epoch
    return best_net, history


# ---------------------------------------------------------------------------
# Checkpoint sidecar: NormStats + TrainConfig in a key=value text file


def write_sidecar(path, cfg: TrainConfig, norm_stats):
    lines = {
        "mode": cfg.mode,
        "gamma": repr(cfg.gamma),
        "lr0": repr(cfg.lr0),
        "lr_decay_per_epoch": repr(cfg.lr_decay_per_epoch),
        "batch_size": str(cfg.batch_size),
        "epochs": str(cfg.epochs),
        "target_clone_period": str(cfg.target_clone_period),
        "seed": str(cfg.seed),
        "state_mean": ",".join(repr(float(v)) for v in norm_stats.state_mean),
        "state_std": ",".join(repr(float(v)) for v in norm_stats.state_std),
        "acont_mean": repr(float(norm_stats.acont_mean)),
        "acont_std": repr(float(norm_stats.acont_std)),
    }
    with open(path, "w", encoding="utf-8") as f:
        for k, v in lines.items():
            f.write(f"{k}={v}\n")


def read_sidecar(path):
    from .rfmi import NormStats

    kv = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and "=" in line:
                k, v = line.split("=", 1)
                kv[k] = v
    cfg = TrainConfig(
        gamma=float(kv["gamma"]),
        lr0=float(kv["lr0"]),
        lr_decay_per_epoch=float(kv["lr_decay_per_epoch"]),
        batch_size=int(kv["batch_size"]),
        epochs=int(kv["epochs"]),
        target_clone_period=int(kv["target_clone_period"]),
        seed=int(kv["seed"]),
        mode=kv["mode"],
    )
    stats = NormStats(
        state_mean=np.array([float(v) for v in kv["state_mean"].split(",")]),
        state_std=np.array([float(v) for v in kv["state_std"].split(",")]),
        acont_mean=float(kv["acont_mean"]),
        acont_std=float(kv["acont_std"]),
    )
    return cfg, stats
