"""Command-line entry point.

Subcommands: build-transitions, train, evaluate, clv, simulate, curves.
Configuration is a flat key=value file; command-line flags win over config
values. All randomness is controlled by --seed. Exit codes: 0 success,
1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import env as env_mod
from . import policy_eval, qlearn, rfmi
from .action_space import ActionSpec, ContOptConfig
from .nn_core import ConfigError, load_mlp, save_mlp
from .qlearn import TrainConfig, TrainingDiverged

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    mode: str = "discrete_only"
    gamma: float = 0.9
    lr0: float = 0.001
    lr_decay_per_epoch: float = 0.99
    batch_size: int = 200
    epochs: int = 100
    target_clone_period: int = 10000
    seed: int = 0
    validation_fraction: float = 0.25
    # action space / continuous optimizer
    n_discrete: int = 12
    bounds_lo: float = -2.0
    bounds_hi: float = 2.0
    restarts: int = 8
    opt_steps: int = 100
    step_size: float = 0.05
    # simulator
    population: int = 500
    episodes: int = 300
    epsilon_floor: float = 0.05
    epsilon_decay: float = 0.995
    train_every: int = 5
    steps_per_burst: int = 400
    base_rate: float = 0.08
    fatigue_coeff: float = 0.0005
    recency_decay: float = 0.002
    thankyou_boost: float = 0.35
    thankyou_action: int = 7
    amount_mean: float = 10.0
    threads: int = 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            lr0=self.lr0,
            lr_decay_per_epoch=self.lr_decay_per_epoch,
            batch_size=self.batch_size,
            epochs=self.epochs,
            target_clone_period=self.target_clone_period,
            seed=self.seed,
            mode="mixed" if self.mode == "mixed" else "discrete_only",
        )

    def action_spec(self) -> ActionSpec:
        return ActionSpec(
            n_discrete=self.n_discrete,
            continuous_dims=1 if self.mode == "mixed" else 0,
            bounds=(self.bounds_lo, self.bounds_hi),
        )

    def cont_cfg(self) -> ContOptConfig:
        return ContOptConfig(
            restarts=self.restarts, steps=self.opt_steps,
            step_size=self.step_size, seed=self.seed,
        )

    def donor_model(self) -> env_mod.DonorModel:
        return env_mod.DonorModel(
            base_rate=self.base_rate,
            fatigue_coeff=self.fatigue_coeff,
            recency_decay=self.recency_decay,
            thankyou_boost=self.thankyou_boost,
            thankyou_action=self.thankyou_action,
            amount_mean=self.amount_mean,
            seed=self.seed,
        )

    def agent_config(self) -> env_mod.AgentConfig:
        return env_mod.AgentConfig(
            epsilon_floor=self.epsilon_floor,
            epsilon_decay=self.epsilon_decay,
            episodes=self.episodes,
            train_every=self.train_every,
            steps_per_burst=self.steps_per_burst,
            seed=self.seed,
        )

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for fld in fields(self):
                f.write(f"{fld.name}={getattr(self, fld.name)}\n")


def load_config(path) -> RunConfig:
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{line_no}: expected key=value", EXIT_USAGE)
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise CliError(f"{path}:{line_no}: unknown config key {key!r}", EXIT_USAGE)
            current = getattr(RunConfig(), key)
            try:
                setattr(cfg, key, type(current)(value))
            except ValueError:
                raise CliError(f"{path}:{line_no}: bad value for {key!r}", EXIT_USAGE) from None
    return cfg


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for name in (f.name for f in fields(RunConfig)):
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
    if getattr(args, "mode", None):
        cfg.mode = {"discrete": "discrete_only", "mixed": "mixed"}[args.mode]
    return cfg


def _split(transitions, fraction, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random(len(transitions)) < fraction
    train = [t for t, m in zip(transitions, mask) if not m]
    val = [t for t, m in zip(transitions, mask) if m]
    return train, val


# ---------------------------------------------------------------------------
# Subcommands


def cmd_build_transitions(args):
    cfg = _effective_config(args)
    del cfg  # no knobs used; kept for flag parity
    timelines = rfmi.read_timelines(args.timelines)
    if not timelines:
        raise CliError(f"no timelines found in {args.timelines}", EXIT_DATA)
    tuples = []
    for tl in timelines:
        tuples.extend(rfmi.build_transitions(tl))
    rfmi.write_transitions(tuples, args.out)
    print(f"wrote {len(tuples)} transitions to {args.out}")


def cmd_train(args):
    cfg = _effective_config(args)
    transitions = rfmi.read_transitions(args.transitions)
    if not transitions:
        raise CliError(f"no transitions in {args.transitions}", EXIT_DATA)
    train_set, val_set = _split(transitions, cfg.validation_fraction, cfg.seed)
    if not train_set or not val_set:
        raise CliError("train/validation split produced an empty side", EXIT_DATA)
    stats = rfmi.compute_norm_stats(train_set)
    train_norm = rfmi.apply_norm(stats, train_set)
    val_norm = rfmi.apply_norm(stats, val_set)
    tc = cfg.train_config()
    inaction = stats.normalize_acont(0.0)
    net, history = qlearn.train(
        train_norm, val_norm, tc, cfg.action_spec(), cfg.cont_cfg(), inaction_acont=inaction
    )
    save_mlp(net, args.checkpoint)
    qlearn.write_sidecar(args.checkpoint + ".meta", tc, stats)
    history.write_csv(args.history)
    print(f"wrote checkpoint {args.checkpoint} and history {args.history}")


def cmd_evaluate(args):
    cfg = _effective_config(args)
    transitions = rfmi.read_transitions(args.transitions)
    if not transitions:
        raise CliError(f"no transitions in {args.transitions}", EXIT_DATA)
    net = load_mlp(args.checkpoint)
    tc, stats = qlearn.read_sidecar(args.checkpoint + ".meta")
    cfg.mode = tc.mode
    normed = rfmi.apply_norm(stats, transitions)
    report = policy_eval.evaluate(
        normed, net, tc.mode, cfg.action_spec(), cfg.cont_cfg(),
        baseline_seed=cfg.seed, norm_stats=stats,
        inaction_acont=stats.normalize_acont(0.0),
    )
    text = policy_eval.report_text(report, timestamp=not args.no_timestamp)
    sys.stdout.write(text)
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as f:
            f.write(text)
    if args.csv_out:
        policy_eval.write_report_csv(report, args.csv_out)


def cmd_clv(args):
    cfg = _effective_config(args)
    net = load_mlp(args.checkpoint)
    tc, stats = qlearn.read_sidecar(args.checkpoint + ".meta")
    cfg.mode = tc.mode
    try:
        state = np.array([float(v) for v in args.state.split(",")])
    except ValueError:
        raise CliError(f"bad --state value {args.state!r}", EXIT_USAGE) from None
    if state.shape != (5,):
        raise CliError("--state needs 5 comma-separated values r,f,m,ir,if", EXIT_USAGE)
    est = policy_eval.estimate_clv(net, state, stats, tc.mode, cfg.action_spec(), cfg.cont_cfg())
    writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
    writer.writerow(["action", "clv", "acont"])
    for a in range(cfg.n_discrete):
        writer.writerow([a, repr(float(est.values[a])), repr(float(est.aconts[a]))])


def cmd_simulate(args):
    cfg = _effective_config(args)
    result = env_mod.run_autonomous(
        cfg.population, cfg.donor_model(), cfg.agent_config(), cfg.train_config()
    )
    env_mod.write_history_csv(result.history, args.history)
    save_mlp(result.net, args.checkpoint)
    qlearn.write_sidecar(args.checkpoint + ".meta", cfg.train_config(), result.norm_stats)
    print(f"simulated {cfg.episodes} episodes; wrote {args.history} and {args.checkpoint}")


def cmd_curves(args):
    cfg = _effective_config(args)
    net = load_mlp(args.checkpoint)
    tc, stats = qlearn.read_sidecar(args.checkpoint + ".meta")
    dims = tuple(args.dims.split(","))
    ranges = []
    for part in args.range.split(","):
        lo, _, hi = part.partition(":")
        try:
            ranges.append((float(lo), float(hi)))
        except ValueError:
            raise CliError(f"bad --range value {args.range!r}", EXIT_USAGE) from None
    reference = {}
    if args.reference:
        for part in args.reference.split(","):
            k, _, v = part.partition("=")
            reference[k] = float(v)
    try:
        sweep = policy_eval.SweepSpec(dims=dims, ranges=tuple(ranges),
                                      resolution=args.resolution, reference=reference)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    rows = policy_eval.export_value_curves(
        net, sweep, stats, mode=tc.mode, inaction_acont=stats.normalize_acont(0.0)
    )
    policy_eval.write_curves_csv(rows, sweep, args.out)
    print(f"wrote {len(rows)} curve rows to {args.out}")


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=["discrete", "mixed"], default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-timestamp", action="store_true")


def build_parser():
    parser = _Parser(prog="clvdqn", description="RFM-I deep Q-learning for direct marketing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-transitions", parents=[], help="timeline CSV -> transition CSV")
    p.add_argument("timelines")
    p.add_argument("out")
    _add_common(p)
    p.set_defaults(func=cmd_build_transitions)

    p = sub.add_parser("train", help="train a DQN on a transition CSV")
    p.add_argument("transitions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="matched-vs-deviated report for a checkpoint")
    p.add_argument("transitions")
    p.add_argument("checkpoint")
    p.add_argument("--report-out")
    p.add_argument("--csv-out")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("clv", help="per-action CLV for one raw state")
    p.add_argument("checkpoint")
    p.add_argument("--state", required=True, help="r,f,m,ir,if")
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_clv)

    p = sub.add_parser("simulate", help="run the autonomous loop on the synthetic population")
    p.add_argument("--history", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--population", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("curves", help="export Q-value curves over state sweeps")
    p.add_argument("checkpoint")
    p.add_argument("--dims", required=True, help="e.g. recency or recency,frequency")
    p.add_argument("--range", required=True, help="lo:hi per dim, comma separated")
    p.add_argument("--resolution", type=int, default=50)
    p.add_argument("--reference", help="dim=value pairs for the unswept dims")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (rfmi.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
