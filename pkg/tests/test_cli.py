import csv

import numpy as np
import pytest

from clvdqn.cli import RunConfig, load_config, main
from clvdqn.nn_core import init_mlp, load_mlp, save_mlp
from clvdqn.qlearn import TrainConfig, network_spec, write_sidecar
from clvdqn.rfmi import NormStats


def write_timelines(path, n_customers=20, periods=6, seed=0):
    rng = np.random.default_rng(seed)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["customer_id", "period", "amount", "action", "acont"])
        for c in range(n_customers):
            for p in range(periods):
                action = int(rng.integers(12))
                amount = round(float(rng.uniform(0, 30)), 2) if rng.random() < 0.4 else 0.0
                writer.writerow([f"c{c}", p, amount, action if action else "", 0.0])


@pytest.fixture
def transitions_csv(tmp_path):
    tl = tmp_path / "timelines.csv"
    out = tmp_path / "transitions.csv"
    write_timelines(tl)
    assert main(["build-transitions", str(tl), str(out)]) == 0
    return out


def zero_checkpoint(tmp_path, mode="discrete_only"):
    net = init_mlp(network_spec(mode), seed=0)
    for w in net.weights:
        w[:] = 0.0
    path = tmp_path / "zero.ckpt"
    save_mlp(net, path)
    write_sidecar(str(path) + ".meta", TrainConfig(mode=mode), NormStats.identity())
    return path


class TestBuildTransitions:
    def test_row_count(self, tmp_path, transitions_csv):
        # 20 customers x 6 periods -> 5 transitions each
        lines = transitions_csv.read_text().splitlines()
        assert lines[0] == "r,f,m,ir,if,a,acont,r2,f2,m2,ir2,if2,reward"
        assert len(lines) == 1 + 20 * 5

    def test_missing_input_is_data_error(self, tmp_path):
        assert main(["build-transitions", str(tmp_path / "nope.csv"),
                     str(tmp_path / "out.csv")]) == 2


class TestTrain:
    def test_epochs_zero_writes_artifacts(self, tmp_path, transitions_csv):
        ckpt = tmp_path / "model.ckpt"
        hist = tmp_path / "history.csv"
        code = main(["train", str(transitions_csv), "--checkpoint", str(ckpt),
                     "--history", str(hist), "--epochs", "0"])
        assert code == 0
        assert ckpt.exists() and (tmp_path / "model.ckpt.meta").exists()
        assert hist.read_text().splitlines() == [
            "epoch,loss,val_response_rate,val_mean_reward,lr"
        ]
        load_mlp(ckpt)  # round-trips

    def test_deterministic_artifacts(self, tmp_path, transitions_csv):
        outs = []
        for tag in ("a", "b"):
            ckpt = tmp_path / f"{tag}.ckpt"
            hist = tmp_path / f"{tag}.csv"
            code = main(["train", str(transitions_csv), "--checkpoint", str(ckpt),
                         "--history", str(hist), "--epochs", "2", "--seed", "7"])
            assert code == 0
            outs.append((ckpt.read_bytes(), hist.read_bytes(),
                         (tmp_path / f"{tag}.ckpt.meta").read_bytes()))
        assert outs[0] == outs[1]

    def test_empty_transitions_is_data_error(self, tmp_path):
        src = tmp_path / "empty.csv"
        src.write_text("r,f,m,ir,if,a,acont,r2,f2,m2,ir2,if2,reward\n")
        assert main(["train", str(src), "--checkpoint", str(tmp_path / "c"),
                     "--history", str(tmp_path / "h"), "--epochs", "1"]) == 2


class TestEvaluate:
    def test_report_and_csv(self, tmp_path, transitions_csv, capsys):
        ckpt = zero_checkpoint(tmp_path)
        report = tmp_path / "report.txt"
        rows = tmp_path / "report.csv"
        code = main(["evaluate", str(transitions_csv), str(ckpt), "--no-timestamp",
                     "--report-out", str(report), "--csv-out", str(rows)])
        assert code == 0
        text = report.read_text()
        assert text == capsys.readouterr().out
        assert "biased off-policy" in text
        csv_lines = rows.read_text().splitlines()
        assert csv_lines[0] == "group,action,n,response_rate,mean_reward"

    def test_deterministic_stdout(self, tmp_path, transitions_csv, capsys):
        ckpt = zero_checkpoint(tmp_path)
        argv = ["evaluate", str(transitions_csv), str(ckpt), "--no-timestamp"]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first


class TestClv:
    def test_zero_checkpoint_gives_zero_values(self, tmp_path, capsys):
        ckpt = zero_checkpoint(tmp_path)
        assert main(["clv", str(ckpt), "--state", "3,2,15,1,4"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "action,clv,acont"
        assert len(lines) == 13
        assert all(line.split(",")[1] == "0.0" for line in lines[1:])

    def test_bad_state_is_usage_error(self, tmp_path):
        ckpt = zero_checkpoint(tmp_path)
        assert main(["clv", str(ckpt), "--state", "1,2,3"]) == 1
        assert main(["clv", str(ckpt), "--state", "1,2,x,0,0"]) == 1

    def test_negative_state_is_usage_error(self, tmp_path):
        ckpt = zero_checkpoint(tmp_path)
        assert main(["clv", str(ckpt), "--state", "1,-2,3,0,0"]) == 1


class TestCurves:
    def test_export(self, tmp_path):
        ckpt = zero_checkpoint(tmp_path)
        out = tmp_path / "curves.csv"
        code = main(["curves", str(ckpt), "--dims", "recency", "--range", "0:10",
                     "--resolution", "9", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("recency,q0,")
        assert len(lines) == 10

    def test_unknown_dim_is_usage_error(self, tmp_path):
        ckpt = zero_checkpoint(tmp_path)
        assert main(["curves", str(ckpt), "--dims", "bogus", "--range", "0:1",
                     "--out", str(tmp_path / "c.csv")]) == 1


class TestSimulate:
    def test_small_run(self, tmp_path):
        hist = tmp_path / "sim.csv"
        ckpt = tmp_path / "sim.ckpt"
        code = main(["simulate", "--history", str(hist), "--checkpoint", str(ckpt),
                     "--population", "5", "--episodes", "3", "--seed", "1"])
        assert code == 0
        assert len(hist.read_text().splitlines()) == 4
        load_mlp(ckpt)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = RunConfig(gamma=0.8, epochs=7, mode="mixed", population=42)
        path = tmp_path / "run.cfg"
        cfg.dump(path)
        assert load_config(path) == cfg

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\n\nepochs=3\n")
        assert load_config(path).epochs == 3

    def test_unknown_key_is_usage_error(self, tmp_path, transitions_csv):
        path = tmp_path / "run.cfg"
        path.write_text("no_such_knob=1\n")
        assert main(["train", str(transitions_csv), "--checkpoint", str(tmp_path / "c"),
                     "--history", str(tmp_path / "h"), "--config", str(path)]) == 1

    def test_flag_overrides_config(self, tmp_path, transitions_csv):
        path = tmp_path / "run.cfg"
        path.write_text("epochs=50\n")
        ckpt = tmp_path / "model.ckpt"
        hist = tmp_path / "history.csv"
        code = main(["train", str(transitions_csv), "--config", str(path),
                     "--checkpoint", str(ckpt), "--history", str(hist), "--epochs", "1"])
        assert code == 0
        assert len(hist.read_text().splitlines()) == 2  # header + 1 epoch


class TestUsageErrors:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "x.csv"])
        assert exc.value.code == 1
