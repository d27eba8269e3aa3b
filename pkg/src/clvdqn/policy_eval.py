"""Policy extraction, CLV estimation, and matched-vs-deviated evaluation.

The evaluation partitions logged transitions by whether the logged action
agreed with the model's recommendation and compares group response rates and
mean rewards against a seeded random baseline, the best single logged action,
and the dataset mean. This matched-group comparison is a biased off-policy
estimate (no importance weighting); the text report carries that caveat.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .action_space import ActionSpec, ContOptConfig, MixedAction, best_mixed_batch
from .nn_core import ConfigError, Mlp, forward, forward_batch
from .rfmi import STATE_DIMS, NormStats

BIAS_CAVEAT = (
    "matched/deviated comparison is a biased off-policy estimate (no importance weighting)"
)


@dataclass
class GroupStats:
    n: int
    response_rate: float  # nan when n = 0
    mean_reward: float  # nan when n = 0

    @property
    def defined(self) -> bool:
        return self.n > 0


def _group_stats(rewards) -> GroupStats:
    rewards = np.asarray(rewards)
    if rewards.size == 0:
        return GroupStats(n=0, response_rate=float("nan"), mean_reward=float("nan"))
    return GroupStats(
        n=int(rewards.size),
        response_rate=float(np.mean(rewards > 0)),
        mean_reward=float(rewards.mean()),
    )


@dataclass
class EvaluationReport:
    matched: GroupStats
    deviated: GroupStats
    random_baseline: GroupStats
    best_single_action: int
    best_single_action_stats: GroupStats
    dataset_mean: GroupStats


@dataclass
class ClvEstimate:
    values: np.ndarray  # per-action expected discounted cumulative reward
    aconts: np.ndarray  # maximizing acont per action (raw units), 0 in discrete mode

    @property
    def best_action(self) -> int:
        return int(np.argmax(self.values))

    @property
    def best_value(self) -> float:
        return float(self.values.max())


def recommend_batch(net: Mlp, states, mode: str, spec: ActionSpec, cfg: ContOptConfig,
                    inaction_acont: float = 0.0):
    """(actions, aconts, qs) arrays for a batch of normalized states."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if mode == "discrete_only":
        q, _ = forward_batch(net, states)
        actions = np.argmax(q, axis=1)
        return actions, np.zeros(len(states)), q[np.arange(len(states)), actions]
    return best_mixed_batch(net, states, spec, cfg, inaction_acont)


def extract_policy(net: Mlp, states, mode: str, spec: ActionSpec, cfg: ContOptConfig,
                   inaction_acont: float = 0.0):
    """One MixedAction per normalized state."""
    actions, aconts, qs = recommend_batch(net, states, mode, spec, cfg, inaction_acont)
    return [MixedAction(int(a), float(c), float(q)) for a, c, q in zip(actions, aconts, qs)]


def evaluate(transitions, net: Mlp, mode: str, spec: ActionSpec, cfg: ContOptConfig,
             baseline_seed: int = 0, norm_stats: NormStats = None,
             inaction_acont: float = 0.0) -> EvaluationReport:
    """Matched-vs-deviated report over logged transitions.

    Mixed mode matches on the discrete action and on the continuous attribute
    after rounding both sides to the nearest integer (in raw units when
    norm_stats is given, otherwise as stored).
    """
    if not transitions:
        raise ConfigError("cannot evaluate on empty transition list")
    states = np.array([t.state.to_array() for t in transitions])
    logged_actions = np.array([t.action for t in transitions], dtype=np.int64)
    logged_aconts = np.array([t.acont for t in transitions])
    rewards = np.array([t.reward for t in transitions])

    rec_actions, rec_aconts, _ = recommend_batch(net, states, mode, spec, cfg, inaction_acont)
    matched_mask = rec_actions == logged_actions
    if mode == "mixed":
        if norm_stats is not None:
            logged_raw = np.array([norm_stats.denormalize_acont(v) for v in logged_aconts])
            rec_raw = np.array([norm_stats.denormalize_acont(v) for v in rec_aconts])
        else:
            logged_raw, rec_raw = logged_aconts, rec_aconts
        acont_match = np.round(logged_raw) == np.round(rec_raw)
        matched_mask &= (rec_actions == 0) | acont_match  # inaction has no attribute

    rng = np.random.default_rng(baseline_seed)
    random_actions = rng.integers(0, spec.n_discrete, size=len(transitions))
    random_mask = random_actions == logged_actions

    best_action, best_stats = -1, GroupStats(0, float("nan"), float("nan"))
    for a in range(spec.n_discrete):
        stats = _group_stats(rewards[logged_actions == a])
        if stats.defined and (
            not best_stats.defined or stats.mean_reward > best_stats.mean_reward
        ):
            best_action, best_stats = a, stats

    return EvaluationReport(
        matched=_group_stats(rewards[matched_mask]),
        deviated=_group_stats(rewards[~matched_mask]),
        random_baseline=_group_stats(rewards[random_mask]),
        best_single_action=best_action,
        best_single_action_stats=best_stats,
        dataset_mean=_group_stats(rewards),
    )


def estimate_clv(net: Mlp, raw_state, norm_stats: NormStats, mode: str,
                 spec: ActionSpec, cfg: ContOptConfig) -> ClvEstimate:
    """Per-action Q-values for one raw (unnormalized) customer state.

    Q-outputs are already in reward currency units; only the inputs are
    normalized.
    """
    raw_state = np.asarray(raw_state, dtype=np.float64)
    if raw_state.shape != (5,):
        raise ConfigError(f"expected a 5-dim raw state, got shape {raw_state.shape}")
    if np.any(raw_state < 0):
        raise ConfigError("state components must be non-negative")
    state = norm_stats.normalize_state(raw_state)
    if mode == "discrete_only":
        q, _ = forward(net, state)
        return ClvEstimate(values=q.copy(), aconts=np.zeros(spec.n_discrete))
    inaction_acont = norm_stats.normalize_acont(0.0)
    values = np.empty(spec.n_discrete)
    aconts = np.empty(spec.n_discrete)
    from .action_space import maximize_continuous

    q0, _ = forward(net, np.concatenate([state, [inaction_acont]]))
    values[0] = q0[0]
    aconts[0] = 0.0
    for a in range(1, spec.n_discrete):
        acont, q = maximize_continuous(net, state, a, spec, cfg)
        values[a] = q
        aconts[a] = norm_stats.denormalize_acont(acont)
    return ClvEstimate(values=values, aconts=aconts)


# ---------------------------------------------------------------------------
# Value-curve export (Q against swept raw state dimensions)


@dataclass
class SweepSpec:
    dims: tuple  # 1 or 2 names from STATE_DIMS
    ranges: tuple  # matching (lo, hi) pairs, raw units
    resolution: int = 50
    reference: dict = field(default_factory=dict)  # fixed raw values for other dims

    def __post_init__(self):
        if not 1 <= len(self.dims) <= 2 or len(self.dims) != len(self.ranges):
            raise ConfigError("sweep needs 1 or 2 dims with matching ranges")
        for d in tuple(self.dims) + tuple(self.reference):
            if d not in STATE_DIMS:
                raise ConfigError(f"unknown state dimension {d!r}")


def export_value_curves(net: Mlp, sweep: SweepSpec, norm_stats: NormStats,
                        mode: str = "discrete_only", inaction_acont: float = 0.0):
    """Rows of (swept value(s), 12 Q-values) over a raw-unit grid.

    Unswept dimensions sit at sweep.reference values (default 0). In mixed
    mode the acont input is held at the inaction convention value.
    """
    base = np.zeros(5)
    for dim, val in sweep.reference.items():
        base[STATE_DIMS.index(dim)] = val
    axes = [np.linspace(lo, hi, sweep.resolution) for lo, hi in sweep.ranges]
    if len(sweep.dims) == 1:
        grid = axes[0][:, None]
    else:
        a, b = np.meshgrid(axes[0], axes[1], indexing="ij")
        grid = np.column_stack([a.ravel(), b.ravel()])
    raw_states = np.tile(base, (len(grid), 1))
    for j, dim in enumerate(sweep.dims):
        raw_states[:, STATE_DIMS.index(dim)] = grid[:, j]
    states = np.array([norm_stats.normalize_state(s) for s in raw_states])
    if mode == "mixed":
        states = np.concatenate([states, np.full((len(states), 1), inaction_acont)], axis=1)
    q, _ = forward_batch(net, states)
    return np.concatenate([grid, q], axis=1)


def write_curves_csv(rows, sweep: SweepSpec, path, n_actions: int = 12):
    header = list(sweep.dims) + [f"q{a}" for a in range(n_actions)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# Report formatting


def _fmt(stats: GroupStats):
    if not stats.defined:
        return "n=0 (rates undefined)"
    return f"rate={stats.response_rate:.4f} mean_reward={stats.mean_reward:.4f} n={stats.n}"


def report_text(report: EvaluationReport, timestamp: bool = True) -> str:
    lines = []
    if timestamp:
        lines.append(datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
    lines.append(f"# caveat: {BIAS_CAVEAT}")
    lines.append(f"matched               : {_fmt(report.matched)}")
    lines.append(f"deviated              : {_fmt(report.deviated)}")
    lines.append(f"random baseline       : {_fmt(report.random_baseline)}")
    lines.append(
        f"best single action ({report.best_single_action:>2}): "
        f"{_fmt(report.best_single_action_stats)}"
    )
    lines.append(f"dataset mean          : {_fmt(report.dataset_mean)}")
    return "\n".join(lines) + "\n"


def report_csv_rows(report: EvaluationReport):
    def row(name, stats, action=""):
        rate = repr(stats.response_rate) if stats.defined else ""
        mean = repr(stats.mean_reward) if stats.defined else ""
        return [name, str(action), str(stats.n), rate, mean]

    return [
        ["group", "action", "n", "response_rate", "mean_reward"],
        row("matched", report.matched),
        row("deviated", report.deviated),
        row("random_baseline", report.random_baseline),
        row("best_single_action", report.best_single_action_stats, report.best_single_action),
        row("dataset_mean", report.dataset_mean),
    ]


def write_report_csv(report: EvaluationReport, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        csv.writer(f).writerows(report_csv_rows(report))
