"""Action selection: discrete argmax and continuous-attribute maximization.

In mixed mode the network input is [state(5), acont]; the value of each
discrete action (output neuron) is maximized over acont by seeded multi-restart
projected ascent using the network's input gradients, with the state held
fixed. Ties always break toward the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn_core import ConfigError, Mlp, backward_batch, forward, forward_batch

N_ACTIONS_DEFAULT = 12  # 11 mailing types + inaction 0


@dataclass
class ActionSpec:
    n_discrete: int = N_ACTIONS_DEFAULT
    continuous_dims: int = 0  # 0 or 1
    bounds: tuple = (0.0, 1.0)  # closed interval in normalized units

    def __post_init__(self):
        if self.n_discrete < 1:
            raise ConfigError("n_discrete must be >= 1")
        if self.continuous_dims not in (0, 1):
            raise ConfigError("continuous_dims must be 0 or 1")
        if self.continuous_dims:
            lo, hi = self.bounds
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"degenerate bounds {self.bounds}")


@dataclass
class ContOptConfig:
    restarts: int = 8
    steps: int = 100
    step_size: float = 0.05  # in normalized acont units
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.steps < 1 or self.step_size <= 0:
            raise ConfigError("continuous optimizer settings must be positive")


@dataclass
class MixedAction:
    action: int
    acont: float  # meaningless for inaction
    q_value: float


def best_discrete(net: Mlp, state) -> MixedAction:
    """Argmax over output neurons; first index wins ties."""
    q, _ = forward(net, state)
    action = int(np.argmax(q))
    return MixedAction(action=action, acont=0.0, q_value=float(q[action]))


def maximize_continuous_batch(net: Mlp, states, action: int, spec: ActionSpec, cfg: ContOptConfig):
    """Per-state acont maximizing output neuron `action`, for a (n, 5) state batch.

    Each restart takes fixed-size steps in the sign of the acont gradient,
    projecting onto the bounds; the best point visited by any restart is kept
    and both bound endpoints are always evaluated. Restart r draws its starts
    from a (seed, r) stream, so a larger restart budget extends, never
    replaces, a smaller one.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    if net.input_dim != states.shape[1] + 1:
        raise ConfigError(
            f"mixed-mode net expects {net.input_dim} inputs, states have {states.shape[1]} dims"
        )
    lo, hi = spec.bounds

    def evaluate(points):
        x = np.concatenate([states, points[:, None]], axis=1)
        q, cache = forward_batch(net, x)
        return q[:, action], cache

    best_acont = np.full(n, lo)
    best_q = np.full(n, -np.inf)
    for endpoint in (lo, hi):
        q_end, _ = evaluate(np.full(n, endpoint))
        better = np.isfinite(q_end) & (q_end > best_q)
        best_q = np.where(better, q_end, best_q)
        best_acont = np.where(better, endpoint, best_acont)

    onehot = np.zeros((n, net.output_dim))
    onehot[:, action] = 1.0
    for r in range(cfg.restarts):
        rng = np.random.default_rng((cfg.seed, action, r))
        points = rng.uniform(lo, hi, size=n)
        q, cache = evaluate(points)
        alive = np.isfinite(q)
        better = alive & (q > best_q)
        best_q = np.where(better, q, best_q)
        best_acont = np.where(better, points, best_acont)
        for _ in range(cfg.steps):
            grads = backward_batch(net, cache, onehot)
            g = grads.input_grads[:, -1]
            points = np.clip(points + cfg.step_size * np.sign(g), lo, hi)
            q, cache = evaluate(points)
            alive &= np.isfinite(q)
            better = alive & (q > best_q)
            best_q = np.where(better, q, best_q)
            best_acont = np.where(better, points, best_acont)
    if not np.all(np.isfinite(best_q)):
        raise ConfigError("all continuous-action restarts diverged to NaN")
    return best_acont, best_q


def maximize_continuous(net: Mlp, state, action: int, spec: ActionSpec, cfg: ContOptConfig):
    """Single-state version; returns (acont, q)."""
    if action == 0:
        raise ConfigError("inaction has no continuous attribute to maximize")
    aconts, qs = maximize_continuous_batch(net, np.asarray(state)[None, :], action, spec, cfg)
    return float(aconts[0]), float(qs[0])


def best_mixed_batch(net: Mlp, states, spec: ActionSpec, cfg: ContOptConfig, inaction_acont: float = 0.0):
    """Vectorized best_mixed over a (n, 5) state batch.

    Returns (actions, aconts, qs) arrays. Inaction is evaluated at the supplied
    acont value (the normalized image of the raw-0 convention).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    per_action_q = np.empty((n, spec.n_discrete))
    per_action_acont = np.empty((n, spec.n_discrete))
    x0 = np.concatenate([states, np.full((n, 1), inaction_acont)], axis=1)
    q0, _ = forward_batch(net, x0)
    per_action_q[:, 0] = q0[:, 0]
    per_action_acont[:, 0] = inaction_acont
    for a in range(1, spec.n_discrete):
        aconts, qs = maximize_continuous_batch(net, states, a, spec, cfg)
        per_action_q[:, a] = qs
        per_action_acont[:, a] = aconts
    actions = np.argmax(per_action_q, axis=1)
    idx = np.arange(n)
    return actions, per_action_acont[idx, actions], per_action_q[idx, actions]


def best_mixed(net: Mlp, state, spec: ActionSpec, cfg: ContOptConfig, inaction_acont: float = 0.0) -> MixedAction:
    actions, aconts, qs = best_mixed_batch(net, np.asarray(state)[None, :], spec, cfg, inaction_acont)
    return MixedAction(action=int(actions[0]), acont=float(aconts[0]), q_value=float(qs[0]))
