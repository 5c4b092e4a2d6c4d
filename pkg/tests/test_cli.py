import json
import math
from pathlib import Path

import numpy as np
import pytest

from disagg import load_library, simulate_device
from disagg.cli import main
from disagg.io import read_signal_csv, write_signal_csv
from disagg.synth import DeviceSpec, ScenarioSpec, generate


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def dir_bytes(path: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_simulate_writes_expected_files(tmp_path, capsys):
    code, out, _ = run(["simulate", "--out-dir", str(tmp_path / "sc"), "--seed", "1"], capsys)
    assert code == 0
    names = {p.name for p in (tmp_path / "sc").iterdir()}
    assert names == {"aggregate.csv", "truth.csv", "library.json", "scenario.json"}
    assert "true changepoints" in out


def test_simulate_reruns_byte_identical(tmp_path, capsys):
    args = ["simulate", "--seed", "7", "--horizon", "120", "--changes", "3"]
    run(args + ["--out-dir", str(tmp_path / "a")], capsys)
    run(args + ["--out-dir", str(tmp_path / "b")], capsys)
    assert dir_bytes(tmp_path / "a") == dir_bytes(tmp_path / "b")


def test_pipeline_simulate_disaggregate_evaluate(tmp_path, capsys):
    sc = tmp_path / "sc"
    out = tmp_path / "run"
    code, _, _ = run(["simulate", "--out-dir", str(sc), "--seed", "3",
                      "--horizon", "200", "--changes", "4"], capsys)
    assert code == 0
    code, text, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                         "--out-dir", str(out)], capsys)
    assert code == 0
    assert (out / "devices.csv").is_file()
    assert (out / "summary.json").is_file()
    assert (out / "plotdata.csv").is_file()
    code, report, _ = run(["evaluate", "--result-dir", str(out), "--truth-dir", str(sc),
                           "--csv", str(tmp_path / "report.csv")], capsys)
    assert code == 0
    assert "f1 1.0000" in report
    assert (tmp_path / "report.csv").read_text().count("\n") == 2


def test_disaggregate_reruns_byte_identical(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "5", "--horizon", "150",
         "--changes", "3"], capsys)
    for name in ("r1", "r2"):
        code, _, _ = run(["disaggregate", str(sc / "aggregate.csv"),
                          str(sc / "library.json"), "--out-dir", str(tmp_path / name)], capsys)
        assert code == 0
    assert dir_bytes(tmp_path / "r1") == dir_bytes(tmp_path / "r2")


def test_train_round_trips_generator_coefficients(tmp_path, capsys):
    scenario = generate(ScenarioSpec(
        devices=(DeviceSpec(name="kettle", order=2, coeffs=(40.0, 20.0, 10.0)),),
        horizon=400, num_changes=8, min_segment=20, noise_sigma=0.0, seed=2,
    ))
    trace_path = tmp_path / "kettle.csv"
    write_signal_csv(trace_path, scenario.device_signals[0])
    lib_path = tmp_path / "lib.json"
    # threshold above the turn-off decay tail (dc 70 minus first coeff 40)
    code, out, _ = run(["train", str(trace_path), "-o", str(lib_path),
                        "--threshold", "35", "--max-order", "5"], capsys)
    assert code == 0
    lib = load_library(lib_path)
    assert lib.names == ["kettle"]
    assert lib.models[0].order == 2
    assert np.max(np.abs(lib.models[0].coeffs - [40.0, 20.0, 10.0])) < 1e-6


def test_train_forced_order_skips_selection(tmp_path, capsys):
    scenario = generate(ScenarioSpec(
        devices=(DeviceSpec(name="fan", order=0, coeffs=(25.0,)),),
        horizon=200, num_changes=6, min_segment=10, noise_sigma=0.0, seed=4,
    ))
    trace_path = tmp_path / "fan.csv"
    write_signal_csv(trace_path, scenario.device_signals[0])
    code, out, _ = run(["train", str(trace_path), "-o", str(tmp_path / "lib.json"),
                        "--threshold", "5", "--order", "5"], capsys)
    assert code == 0
    assert load_library(tmp_path / "lib.json").models[0].order == 5


def test_train_missing_file_exits_2(tmp_path, capsys):
    code, _, err = run(["train", str(tmp_path / "nope.csv"), "-o", str(tmp_path / "l.json")], capsys)
    assert code == 2
    assert "nope.csv" in err


def test_train_unfittable_device_exits_1(tmp_path, capsys):
    trace_path = tmp_path / "idle.csv"
    write_signal_csv(trace_path, np.zeros(50))
    code, _, err = run(["train", str(trace_path), "-o", str(tmp_path / "l.json"),
                        "--threshold", "5"], capsys)
    assert code == 1
    assert "idle" in err


def test_oracle_cap_refusal_exits_2(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "1", "--horizon", "16",
         "--changes", "0", "--devices", "1", "--order", "1"], capsys)
    code, _, err = run(["oracle", str(sc / "aggregate.csv"), str(sc / "library.json")], capsys)
    assert code == 2
    assert "cap" in err


def test_oracle_matches_unpruned_disaggregate(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "6", "--horizon", "11",
         "--changes", "1", "--devices", "2", "--order", "1", "--min-segment", "4",
         "--sigma", "0.5", "--gain-min", "5", "--gain-max", "20"], capsys)
    code, oracle_out, _ = run(["oracle", str(sc / "aggregate.csv"), str(sc / "library.json"),
                               "--sigma2", "0.25"], capsys)
    assert code == 0
    code, dis_out, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                            "--out-dir", str(tmp_path / "run"), "--sigma2", "0.25",
                            "--prune-mode", "absolute", "--prune-thresh=-inf",
                            "--no-beam-cap"], capsys)
    assert code == 0
    line = {ln.split(":")[0]: ln.split(":", 1)[1].strip() for ln in oracle_out.splitlines()}
    dline = {ln.split(":")[0]: ln.split(":", 1)[1].strip() for ln in dis_out.splitlines() if ":" in ln}
    assert dline["changepoints"] == line["changepoints"]
    assert float(dline["log posterior"]) == pytest.approx(float(line["log posterior"]), abs=1e-9)


def test_oracle_full_table(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "1", "--horizon", "5",
         "--changes", "0", "--devices", "1", "--order", "0"], capsys)
    table = tmp_path / "table.csv"
    code, _, _ = run(["oracle", str(sc / "aggregate.csv"), str(sc / "library.json"),
                      "--sigma2", "1.0", "--full-table", str(table)], capsys)
    assert code == 0
    assert len(table.read_text().splitlines()) == 1 + 2 ** 6


def test_beam_cap_one_runs(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "2", "--horizon", "80",
         "--changes", "2"], capsys)
    code, _, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                      "--out-dir", str(tmp_path / "run"), "--beam-cap", "1"], capsys)
    assert code == 0


def test_config_file_with_flag_override(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "9", "--horizon", "100",
         "--changes", "2"], capsys)
    cfg = tmp_path / "params.json"
    cfg.write_text(json.dumps({"beam_cap": 4, "change_prob": 0.05, "sigma2": 1.0}))
    out_a = tmp_path / "a"
    code, _, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                      "--out-dir", str(out_a), "--config", str(cfg)], capsys)
    assert code == 0
    summary = json.loads((out_a / "summary.json").read_text())
    assert max(summary["bank_size_trace"]) <= 4
    # flag overrides the file
    out_b = tmp_path / "b"
    code, _, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                      "--out-dir", str(out_b), "--config", str(cfg), "--beam-cap", "1"], capsys)
    assert code == 0
    summary = json.loads((out_b / "summary.json").read_text())
    assert max(summary["bank_size_trace"]) == 1


def test_broken_library_exits_2(tmp_path, capsys):
    agg = tmp_path / "agg.csv"
    write_signal_csv(agg, np.zeros(5))
    bad = tmp_path / "lib.json"
    bad.write_text("{broken")
    code, _, err = run(["disaggregate", str(agg), str(bad), "--out-dir",
                        str(tmp_path / "out"), "--sigma2", "1.0"], capsys)
    assert code == 2
    assert "JSON" in err


def test_signal_csv_round_trip(tmp_path):
    values = np.array([0.0, 1.25, -3.5, 1e-17, 123456.789])
    path = tmp_path / "sig.csv"
    write_signal_csv(path, values)
    assert np.array_equal(read_signal_csv(path), values)


def test_devices_csv_matches_truth_on_clean_run(tmp_path, capsys):
    sc = tmp_path / "sc"
    run(["simulate", "--out-dir", str(sc), "--seed", "12", "--horizon", "150",
         "--changes", "2", "--sigma", "0.0"], capsys)
    code, _, _ = run(["disaggregate", str(sc / "aggregate.csv"), str(sc / "library.json"),
                      "--out-dir", str(tmp_path / "run"), "--sigma2", "1.0"], capsys)
    assert code == 0
    from disagg.io import read_result, read_scenario
    result = read_result(tmp_path / "run")
    truth = read_scenario(sc)
    assert result.changepoints == truth.changepoints
    # sub-milliwatt agreement on signals of hundreds of watts
    assert np.max(np.abs(result.per_device_signals - truth.device_signals)) < 1e-3
