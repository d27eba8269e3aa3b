"""RFM-I state construction from customer timelines.

A timeline is one customer's per-period record of donation amounts and
marketing contacts. States summarize strictly the periods before the given
index; an event in period p-1 gives recency 1 at index p, and with no history
recency equals the number of elapsed periods. Action 0 is inaction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

STATE_DIMS = ("recency", "frequency", "monetary", "i_recency", "i_frequency")

TRANSITION_COLUMNS = (
    "r", "f", "m", "ir", "if", "a", "acont",
    "r2", "f2", "m2", "ir2", "if2", "reward",
)


class DataError(ValueError):
    """Malformed timeline or transition data."""


@dataclass(frozen=True)
class RfmiState:
    recency: float
    frequency: float
    monetary: float
    i_recency: float
    i_frequency: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.recency, self.frequency, self.monetary, self.i_recency, self.i_frequency]
        )

    @classmethod
    def from_array(cls, arr) -> "RfmiState":
        return cls(*(float(v) for v in arr))


@dataclass
class CustomerTimeline:
    customer_id: str
    amounts: np.ndarray  # (periods,) donation per period, 0 = none
    actions: np.ndarray  # (periods,) int, 0 = inaction
    aconts: np.ndarray  # (periods,) continuous attribute, 0 for inaction

    def __post_init__(self):
        self.amounts = np.asarray(self.amounts, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.aconts = np.asarray(self.aconts, dtype=np.float64)
        if not (len(self.amounts) == len(self.actions) == len(self.aconts)):
            raise DataError(f"timeline arrays differ in length for {self.customer_id}")
        if np.any(self.amounts < 0):
            raise DataError(f"negative amount in timeline {self.customer_id}")
        if np.any(self.actions < 0):
            raise DataError(f"negative action in timeline {self.customer_id}")

    @property
    def periods(self) -> int:
        return len(self.amounts)


@dataclass
class TransitionTuple:
    state: RfmiState
    action: int
    acont: float
    next_state: RfmiState
    reward: float


def compute_state(timeline: CustomerTimeline, period_index: int) -> RfmiState:
    """State at a period boundary, from the first `period_index` periods only."""
    if not 0 <= period_index <= timeline.periods:
        raise DataError(
            f"period_index {period_index} out of range [0, {timeline.periods}]"
        )
    amounts = timeline.amounts[:period_index]
    donated = np.nonzero(amounts > 0)[0]
    frequency = len(donated)
    if frequency:
        recency = period_index - 1 - donated[-1] + 1  # counted at the period's end
        monetary = float(amounts[donated].mean())
    else:
        recency = period_index
        monetary = 0.0
    contacted = np.nonzero(timeline.actions[:period_index] != 0)[0]
    i_frequency = len(contacted)
    i_recency = period_index - contacted[-1] if i_frequency else period_index
    return RfmiState(
        recency=float(recency),
        frequency=float(frequency),
        monetary=monetary,
        i_recency=float(i_recency),
        i_frequency=float(i_frequency),
    )


def build_transitions(timeline: CustomerTimeline) -> list:
    """One tuple per period after the first; reward co-occurs with the action."""
    if timeline.periods < 2:
        raise DataError(f"timeline {timeline.customer_id} needs >= 2 periods")
    states = [compute_state(timeline, p) for p in range(timeline.periods)]
    tuples = []
    for t in range(timeline.periods - 1):
        tuples.append(
            TransitionTuple(
                state=states[t],
                action=int(timeline.actions[t]),
                acont=float(timeline.aconts[t]),
                next_state=states[t + 1],
                reward=float(timeline.amounts[t]),
            )
        )
    return tuples


@dataclass
class NormStats:
    """Affine normalization: 5 state dims plus the continuous action attribute.

    Zero-variance dimensions keep std 0 in storage and divide by 1 when applied.
    """

    state_mean: np.ndarray
    state_std: np.ndarray
    acont_mean: float
    acont_std: float

    def _safe(self, std):
        return np.where(np.asarray(std) > 0, std, 1.0)

    def normalize_state(self, arr) -> np.ndarray:
        return (np.asarray(arr, dtype=np.float64) - self.state_mean) / self._safe(self.state_std)

    def denormalize_state(self, arr) -> np.ndarray:
        return np.asarray(arr, dtype=np.float64) * self._safe(self.state_std) + self.state_mean

    def normalize_acont(self, v: float) -> float:
        return (v - self.acont_mean) / (self.acont_std if self.acont_std > 0 else 1.0)

    def denormalize_acont(self, v: float) -> float:
        return v * (self.acont_std if self.acont_std > 0 else 1.0) + self.acont_mean

    @classmethod
    def identity(cls) -> "NormStats":
        return cls(np.zeros(5), np.ones(5), 0.0, 1.0)


def compute_norm_stats(tuples) -> NormStats:
    """Population moments over states and next states; acont over acted rows only."""
    if not tuples:
        raise DataError("cannot compute normalization stats from empty input")
    states = np.array(
        [t.state.to_array() for t in tuples] + [t.next_state.to_array() for t in tuples]
    )
    aconts = np.array([t.acont for t in tuples if t.action != 0])
    if aconts.size:
        acont_mean, acont_std = float(aconts.mean()), float(aconts.std())
    else:
        acont_mean, acont_std = 0.0, 0.0
    return NormStats(
        state_mean=states.mean(axis=0),
        state_std=states.std(axis=0),
        acont_mean=acont_mean,
        acont_std=acont_std,
    )


def apply_norm(stats: NormStats, tuples) -> list:
    out = []
    for t in tuples:
        out.append(
            TransitionTuple(
                state=RfmiState.from_array(stats.normalize_state(t.state.to_array())),
                action=t.action,
                acont=stats.normalize_acont(t.acont),
                next_state=RfmiState.from_array(stats.normalize_state(t.next_state.to_array())),
                reward=t.reward,
            )
        )
    return out


def normalize_states(tuples):
    """Returns (normalized tuples, NormStats). Rewards are left in currency units."""
    stats = compute_norm_stats(tuples)
    return apply_norm(stats, tuples), stats


# ---------------------------------------------------------------------------
# CSV interfaces


def read_timelines(path) -> list:
    """Timeline CSV: customer_id,period,amount,action,acont (empty action = inaction)."""
    per_customer = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        expected = ["customer_id", "period", "amount", "action", "acont"]
        if reader.fieldnames != expected:
            raise DataError(f"expected header {','.join(expected)}, got {reader.fieldnames}")
        for line_no, row in enumerate(reader, start=2):
            try:
                cid = row["customer_id"]
                period = int(row["period"])
                amount = float(row["amount"]) if row["amount"] else 0.0
                action = int(row["action"]) if row["action"] else 0
                acont = float(row["acont"]) if row["acont"] else 0.0
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: malformed row ({exc})") from None
            per_customer.setdefault(cid, {})[period] = (amount, action, acont)
    timelines = []
    for cid, rows in per_customer.items():
        periods = max(rows) + 1
        amounts = np.zeros(periods)
        actions = np.zeros(periods, dtype=np.int64)
        aconts = np.zeros(periods)
        for period, (amount, action, acont) in rows.items():
            amounts[period], actions[period], aconts[period] = amount, action, acont
        timelines.append(CustomerTimeline(cid, amounts, actions, aconts))
    return timelines


def write_timelines(timelines, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["customer_id", "period", "amount", "action", "acont"])
        for tl in timelines:
            for p in range(tl.periods):
                action = tl.actions[p]
                writer.writerow(
                    [
                        tl.customer_id,
                        p,
                        repr(float(tl.amounts[p])),
                        int(action) if action != 0 else "",
                        repr(float(tl.aconts[p])) if action != 0 else "",
                    ]
                )


def write_transitions(tuples, path):
    """13-column transition CSV in the fixed r..reward order, UTF-8, '.' decimals."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRANSITION_COLUMNS)
        for t in tuples:
            row = list(t.state.to_array()) + [t.action, t.acont] + list(
                t.next_state.to_array()
            ) + [t.reward]
            writer.writerow([repr(float(v)) if not isinstance(v, int) else v for v in row])


def read_transitions(path) -> list:
    tuples = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(TRANSITION_COLUMNS):
            raise DataError(f"expected header {','.join(TRANSITION_COLUMNS)}, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 13:
                raise DataError(f"{path}:{line_no}: expected 13 columns, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: malformed row ({exc})") from None
            tuples.append(
                TransitionTuple(
                    state=RfmiState.from_array(vals[0:5]),
                    action=int(vals[5]),
                    acont=vals[6],
                    next_state=RfmiState.from_array(vals[7:12]),
                    reward=vals[12],
                )
            )
    return tuples


def transitions_to_arrays(tuples):
    """Columnar view used by the training loop."""
    return {
        "states": np.array([t.state.to_array() for t in tuples]),
        "actions": np.array([t.action for t in tuples], dtype=np.int64),
        "aconts": np.array([t.acont for t in tuples]),
        "next_states": np.array([t.next_state.to_array() for t in tuples]),
        "rewards": np.array([t.reward for t in tuples]),
    }
