import csv
import io

import pytest

from osa_transfer.cli import main, parse_grid

TOY = "name: toy\nslot_ms: 1000\nchannels:\n  - {id: 1, rate_mbps: 1, p: 0.5}\n  - {id: 2, rate_mbps: 0.2, p: 0.95}\n"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return dict(line.split("\t", 1) for line in text.strip().splitlines())


def test_expected_time_channel(capsys):
    code, out, _ = run(capsys, "expected-time", "--scenario", "lossy", "--channel", "1", "--file-mb", "1")
    assert code == 0 and table(out)["static:1"] == "0.744444"


def test_expected_time_threshold(capsys):
    code, out, _ = run(capsys, "expected-time", "--scenario", "lossy", "--threshold")
    assert code == 0 and float(table(out)["threshold_H_mb"]) == pytest.approx(18.9)


def test_expected_time_dynamic_toy(capsys, tmp_path):
    path = tmp_path / "toy.yaml"
    path.write_text(TOY)
    code, out, _ = run(capsys, "expected-time", "--scenario", str(path), "--file-mb", "1.1", "--dynamic")
    row = table(out)["dynamic-opt"]
    assert code == 0 and row.startswith("2.552632") and "plan=1x1 2:" in row


def test_sweep_analytic_inset(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--scenario", "lossy", "--grid", "0.1:0.1:7", "--out", str(out_path))
    rows = list(csv.DictReader(out_path.open()))
    assert code == 0 and len(rows) == 70 * 4
    last = {r["policy"]: float(r["cumulative_ratio"]) for r in rows if r["F_mb"] == "7"}
    assert last["static-opt"] == pytest.approx(0.85, abs=0.03)
    assert last["dynamic-opt"] == pytest.approx(0.83, abs=0.03)


def test_sweep_static_curve_jumps_at_slot_multiples(capsys):
    # one channel: slope 1/r inside each slot, jump of slot*(1-p)/p just past each multiple of slot*r
    code, out, _ = run(capsys, "sweep", "--scenario", "lossy", "--grid", "0.01:0.01:0.6", "--policy", "static:1")
    rows = list(csv.DictReader(io.StringIO(out)))
    t = [float(r["analytic_s"]) for r in rows]
    steps = [b - a for a, b in zip(t, t[1:])]
    jumps = [i for i, s in enumerate(steps) if s > 0.01 / 1.5 + 1e-9]
    # sizes 0.15, 0.30, 0.45 are indices 14, 29, 44; the jump follows each
    assert jumps == [14, 29, 44]
    for i in jumps:
        assert steps[i] == pytest.approx(0.01 / 1.5 + 0.1 * 0.1 / 0.9, abs=1e-6)


def test_simulate_and_policy_csv(capsys, tmp_path):
    out_path = tmp_path / "ep.csv"
    code, _, err = run(capsys, "simulate", "--scenario", "lossy", "--file-mb", "2", "--reps", "100",
                       "--policy", "heuristic", "--seed", "4", "--out", str(out_path))
    first = out_path.read_text()
    run(capsys, "simulate", "--scenario", "lossy", "--file-mb", "2", "--reps", "100",
        "--policy", "heuristic", "--seed", "4", "--out", str(out_path))
    assert code == 0 and "mean=" in err and first == out_path.read_text()
    assert first.splitlines()[0] == "scenario,policy,F_mb,replication,seed,time_s,slots,switches"
    code, out, _ = run(capsys, "policy", "--scenario", "lossy", "--file-mb", "3.3")
    assert code == 0 and out.splitlines()[1].startswith("dynamic-opt,3.3,")


def test_online_smoke(capsys, tmp_path):
    out_path = tmp_path / "on.csv"
    code, _, err = run(capsys, "online", "--scenario", "gradual", "--episodes", "30", "--reps", "1",
                       "--seed", "2", "--policy", "heuristic", "--out", str(out_path))
    rows = list(csv.DictReader(out_path.open()))
    assert code == 0 and len(rows) == 30
    assert list(rows[0]) == ["replication", "episode", "F_mb", "policy_kind", "chosen_summary", "time_s",
                             "avg_ratio", "avg_throughput", "regret"]


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--scenario", "lossy", "--files", "3")
    assert code == 0 and "ordering\tok" in out


@pytest.mark.parametrize("argv,field", [
    (["policy", "--scenario", "lossy", "--file-mb", "-1"], "file-mb"),
    (["policy", "--scenario", "lossy", "--file-mb", "1", "--policy", "best"], "policy"),
    (["sweep", "--scenario", "lossy", "--grid", "1:2"], "grid"),
    (["policy", "--scenario", "lossy", "--file-mb", "1", "--switching-delay-ms", "200"], "switching-delay-ms"),
    (["online", "--scenario", "lossy", "--episodes", "5"], "episodes"),
    (["expected-time", "--scenario", "nowhere.yaml", "--file-mb", "1"], "scenario"),
])
def test_errors_name_the_field(capsys, argv, field):
    code, _, err = run(capsys, *argv)
    assert code == 2 and f"error: {field}:" in err


def test_config_field_error(capsys, tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("slot_ms: 100\nchannels:\n  - {id: 1, rate_mbps: 2, p: 1.5}\n")
    code, _, err = run(capsys, "expected-time", "--scenario", str(path), "--file-mb", "1")
    assert code == 2 and "channels[id=1].p" in err


def test_parse_grid():
    g = parse_grid("0.1:0.1:0.5")
    assert [float(x) for x in g] == [0.1, 0.2, 0.3, 0.4, 0.5]
