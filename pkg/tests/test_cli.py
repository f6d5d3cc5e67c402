import csv
import io
import json

import pytest

from qotp.cli import (EXIT_CONFIG, EXIT_LAW, EXIT_OK, ConfigError, ExperimentConfig, main,
                      parse_range)
from qotp.protocols import RUN_RECORD_FIELDS, RunRecord
from qotp.stats import binomial_ci


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_range():
    assert parse_range("3") == (3,)
    assert parse_range("1,2,4") == (1, 2, 4)
    assert parse_range("2:6") == (2, 3, 4, 5, 6)
    assert parse_range("6:2") == ()
    assert parse_range([1, 2]) == (1, 2)
    with pytest.raises(ConfigError):
        parse_range("a:b")


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(protocol="bogus")
    with pytest.raises(ConfigError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(s=())
    with pytest.raises(ConfigError):
        ExperimentConfig(attack="fixed_pauli:Q0")


def test_run_completeness(capsys):
    code, out, err = _run(capsys, "run", "--protocol", "sqas", "--m", "2", "--s", "4",
                          "--attack", "none", "--trials", "100", "--seed", "7")
    assert code == EXIT_OK
    summary = json.loads(out)
    assert summary["accept_rate"] == 1.0
    assert summary["audit"]["ok"]
    assert summary["mean_fidelity"] == pytest.approx(1.0, abs=1e-9)
    assert "100/100" in err  # progress goes to stderr only


def test_run_soundness_rate_within_ci(capsys):
    code, out, _ = _run(capsys, "run", "--protocol", "sqas", "--m", "2", "--s", "4",
                        "--attack", "fixed_pauli:X0", "--trials", "10000", "--seed", "7",
                        "--backend", "stabilizer")
    assert code == EXIT_OK
    summary = json.loads(out)
    lo, hi = summary["accept_ci"]
    assert summary["ci_level"] == 0.99
    assert (lo, hi) == binomial_ci(summary["accepted"], 10000, 0.99)
    assert lo <= 2 ** -4 <= hi


def test_run_output_files_deterministic_and_valid(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        path = tmp_path / name / "runs.jsonl"
        code, _, _ = _run(capsys, "run", "--protocol", "modified_qas", "--m", "1", "--s", "1",
                          "--attack", "entangling_probe:0", "--trials", "30", "--seed", "11",
                          "--output", str(path))
        assert code == EXIT_OK
        outs.append([path.read_bytes(), (tmp_path / name / "runs.jsonl.summary.json").read_bytes(),
                     (tmp_path / name / "runs.jsonl.ledger.csv").read_bytes()])
    assert outs[0] == outs[1]
    lines = outs[0][0].decode().splitlines()
    assert len(lines) == 30
    for line in lines:
        d = json.loads(line)
        assert tuple(d) == RUN_RECORD_FIELDS
        RunRecord.from_dict(d)
    assert b"\r\n" not in outs[0][2]


def test_jobs_do_not_change_output(tmp_path, capsys):
    blobs = []
    for jobs in ("1", "3"):
        path = tmp_path / f"j{jobs}.jsonl"
        assert _run(capsys, "run", "--protocol", "sqas", "--m", "1", "--s", "2",
                    "--attack", "random_pauli:0.2", "--trials", "40", "--seed", "5",
                    "--jobs", jobs, "--output", str(path))[0] == EXIT_OK
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("QOTP_SEED", "19")
    _, out, _ = _run(capsys, "run", "--protocol", "sqas", "--m", "1", "--s", "1",
                     "--attack", "random_pauli:0.3", "--trials", "50")
    assert json.loads(out)["seed"] == 19
    _, out2, _ = _run(capsys, "run", "--protocol", "sqas", "--m", "1", "--s", "1",
                      "--attack", "random_pauli:0.3", "--trials", "50", "--seed", "19")
    monkeypatch.delenv("QOTP_SEED")
    assert out == out2
    monkeypatch.setenv("QOTP_SEED", "x")
    assert _run(capsys, "run", "--trials", "1")[0] == EXIT_CONFIG


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"protocol": "teleport", "m": 1, "s": 1, "trials": 5, "seed": 3}))
    _, out, _ = _run(capsys, "run", "--config", str(cfg))
    d = json.loads(out)
    assert (d["protocol"], d["trials"], d["seed"]) == ("teleport", 5, 3)
    _, out, _ = _run(capsys, "run", "--config", str(cfg), "--trials", "7")
    assert json.loads(out)["trials"] == 7
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"protocl": "sqas"}))
    assert _run(capsys, "run", "--config", str(bad))[0] == EXIT_CONFIG
    assert _run(capsys, "run", "--config", str(tmp_path / "missing.json"))[0] == EXIT_CONFIG


def test_sweep_rows_and_trend(capsys):
    code, out, _ = _run(capsys, "sweep", "--protocol", "sqas", "--m", "2", "--s", "2:6",
                        "--attack", "fixed_pauli:X0", "--trials", "4000", "--seed", "1",
                        "--backend", "stabilizer")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["s"]) for r in rows] == [2, 3, 4, 5, 6]
    for r in rows:
        s = int(r["s"])
        assert float(r["ci_low"]) <= 2.0 ** -s <= float(r["ci_high"])
        assert r["audit_ok"] == "True"


def test_sweep_validation(capsys):
    code, _, err = _run(capsys, "sweep", "--m", "3:1", "--s", "1")
    assert code == EXIT_CONFIG and "nonempty" in err
    code, _, err = _run(capsys, "sweep", "--protocol", "sqas", "--m", "1,20", "--s", "3",
                        "--backend", "dense", "--attack", "steal_replace:0")
    assert code == EXIT_CONFIG and "22" in err
    assert _run(capsys, "run", "--m", "1,2", "--s", "1")[0] == EXIT_CONFIG
    assert _run(capsys, "run", "--protocol", "nope")[0] == EXIT_CONFIG
    assert _run(capsys)[0] == EXIT_CONFIG


def test_unwritable_output_fails_early(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = _run(capsys, "run", "--trials", "2", "--output", str(blocker / "out.jsonl"))
    assert code == EXIT_CONFIG and "out.jsonl" in err


def test_audit_clean_sweep_ledger(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    code, _, _ = _run(capsys, "sweep", "--protocol", "sqas", "--m", "1", "--s", "1:3",
                      "--attack", "random_pauli:0.5", "--trials", "40", "--output", str(path))
    assert code == EXIT_OK
    code, out, _ = _run(capsys, "audit", str(path) + ".ledger.csv")
    assert code == EXIT_OK and json.loads(out)["ok"]


def test_audit_violation_and_edge_cases(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("protocol,seed,delta_q,delta_m,delta_k\n"
                   "sqas,1,3,1,0\n"
                   "sqas,2,3,1,5\n")
    code, out, _ = _run(capsys, "audit", str(bad))
    report = json.loads(out)
    assert code == EXIT_LAW and not report["ok"]
    assert any(v["index"] == 1 for v in report["violations"])
    empty = tmp_path / "empty.csv"
    empty.write_text("protocol,seed,delta_q,delta_m,delta_k\n")
    assert _run(capsys, "audit", str(empty))[0] == EXIT_OK
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b\n1,2\n")
    assert _run(capsys, "audit", str(junk))[0] == EXIT_CONFIG
    assert _run(capsys, "audit", str(tmp_path / "nope.csv"))[0] == EXIT_CONFIG


@pytest.mark.parametrize("argv,key", [
    (["encryption", "--m", "2", "--samples", "10"], "max_trace_distance_to_mixed"),
    (["transpose_identity", "--m", "2", "--samples", "10"], "max_residual"),
    (["leftover_hash", "--j", "5", "--e", "1", "--t", "2"], "within_bound"),
    (["protect_entanglement", "--n", "2"], "ppt_min_eigenvalue"),
])
def test_analyze(capsys, argv, key):
    code, out, _ = _run(capsys, "analyze", *argv)
    assert code == EXIT_OK
    d = json.loads(out)
    assert key in d
    if key == "within_bound":
        assert d[key]
    elif key == "ppt_min_eigenvalue":
        assert d[key] >= -1e-12
    else:
        assert d[key] <= 1e-10
