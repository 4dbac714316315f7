import json

import pytest

from microcsi.cli import EXIT_DATA, EXIT_EVAL, EXIT_OK, EXIT_USAGE, load_config, main
from microcsi.io import read_csi_dataset, read_fingerprints, read_library, read_micro_csi


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--n-devices", "3", "--n-packets", "120", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_simulate(data_dir):
    enr = read_csi_dataset(data_dir / "enroll.jsonl")
    assert len(enr) == 360 and enr[0].n_rx == 4
    assert {m.device_id for m in enr} == {"dev00", "dev01", "dev02"}


def test_simulate_yaml_config(tmp_path):
    cfg = tmp_path / "sc.yaml"
    cfg.write_text("scenario:\n  n_devices: 2\n  n_packets: 10\n  n_rx: 1\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    ms = read_csi_dataset(tmp_path / "o" / "test.jsonl")
    assert len(ms) == 20 and ms[0].n_rx == 1


def test_extract(data_dir, tmp_path):
    out = tmp_path / "mc.jsonl"
    assert main(["extract", str(data_dir / "test.jsonl"), "--out", str(out)]) == EXIT_OK
    mc = read_micro_csi(out)
    assert len(mc) == 360 * 4
    assert (mc[5].packet_index, mc[5].chain_index) == (1, 1)


def test_fingerprint(data_dir, tmp_path):
    out = tmp_path / "fp.jsonl"
    assert main(["fingerprint", str(data_dir / "test.jsonl"), "--n-csi", "10", "--device", "dev01",
                 "--out", str(out)]) == 0
    fps = read_fingerprints(out)
    assert len(fps) == 12 and {f.device_claim for f in fps} == {"dev01"}


def test_enroll_and_auth(data_dir, tmp_path, capsys):
    lib_path = tmp_path / "lib.jsonl"
    assert main(["enroll", str(data_dir / "enroll.jsonl"), "--identity", "dev00", "--n-csi", "10",
                 "--out", str(lib_path)]) == 0
    lib, thr, metric = read_library(lib_path)
    assert (lib.identity, lib.size, lib.k, metric) == ("dev00", 12, 3, "manhattan")
    assert thr > 0
    res = tmp_path / "auth.json"
    capsys.readouterr()
    assert main(["auth", str(data_dir / "test.jsonl"), "--library", str(lib_path), "--out", str(res)]) == 0
    rows = json.loads(res.read_text())
    assert len(rows) == 36
    assert {r["source"] for r in rows} == {"dev00", "dev01", "dev02"}
    assert all(r["threshold"] == thr and r["claim"] == "dev00" for r in rows)
    assert all(r["accept"] == (r["distance"] <= thr) for r in rows)
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == 36 and all(l.split()[-1] in ("ACCEPT", "REJECT") for l in printed)


def test_enroll_needs_identity(data_dir):
    assert main(["enroll", str(data_dir / "enroll.jsonl")]) == EXIT_USAGE
    assert main(["enroll", str(data_dir / "enroll.jsonl"), "--identity", "nobody"]) == EXIT_DATA


def test_evaluate(data_dir, tmp_path, capsys):
    out = tmp_path / "report.json"
    rc = main(["evaluate", "--enroll", str(data_dir / "enroll.jsonl"), "--test", str(data_dir / "test.jsonl"),
               "--n-csi", "1", "10", "--far-target", "0", "0.01", "--out", str(out)])
    assert rc == 0
    table = capsys.readouterr().out
    assert "N_csi" in table and "manhattan" in table
    recs = json.loads(out.read_text())
    avgs = [r for r in recs if r["kind"] == "average"]
    assert {(r["n_csi"], r["far_target"]) for r in avgs} == {(1, 0.0), (1, 0.01), (10, 0.0), (10, 0.01)}


def test_evaluate_simulated_from_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"scenario": {"n_devices": 2, "n_packets": 60, "n_rx": 2},
                               "evaluation": {"n_csi_values": [10], "far_targets": [0.0]}}))
    assert main(["evaluate", "--config", str(cfg), "--seed", "3"]) == 0
    assert "10 manhattan" in " ".join(capsys.readouterr().out.split())


def test_sweep(data_dir, tmp_path, capsys):
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text("sweep:\n  n_p_values: [4, 8]\n  normalize: [true, false]\n  n_csi_values: [10]\n")
    out = tmp_path / "sweep.json"
    assert main(["sweep", "--config", str(cfg), "--enroll", str(data_dir / "enroll.jsonl"),
                 "--test", str(data_dir / "test.jsonl"), "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert len(rows) == 4
    assert {(r["n_p"], r["normalize"]) for r in rows} == {(4, True), (4, False), (8, True), (8, False)}


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["extract"],
    ["evaluate", "--metric", "cosine"],
    ["evaluate", "--enroll", "only.jsonl"],
])
def test_usage_errors(argv, capsys):
    try:
        rc = main(argv)
    except SystemExit as exc:
        rc = exc.code
    assert rc == EXIT_USAGE


def test_data_errors(tmp_path):
    assert main(["extract", str(tmp_path / "missing.jsonl")]) == EXIT_DATA
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"device_id": "a", "packet_index": 0, "chains": [[[1, 0]]]}\n')
    assert main(["fingerprint", str(bad)]) == EXIT_DATA
    assert main(["auth", str(bad), "--library", str(tmp_path / "none.jsonl")]) == EXIT_DATA


def test_eval_error(data_dir, tmp_path):
    one = tmp_path / "one.jsonl"
    lines = (data_dir / "enroll.jsonl").read_text().splitlines()
    one.write_text("\n".join(l for l in lines if '"dev00"' in l) + "\n")
    rc = main(["evaluate", "--enroll", str(one), "--test", str(data_dir / "test.jsonl")])
    assert rc == EXIT_EVAL


def test_bad_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("- just\n- a list\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE
    cfg.write_text("scenario: {n_devices: 2, warp: 9}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE
    assert load_config(None) == {}
