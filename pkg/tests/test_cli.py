import json

import pytest

from narxfloat.cli import build_config, main, make_parser


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_identify_and_report(tmp_path, capsys):
    code, out, _ = run(["identify", "--system", "S3", "--algo", "oif", "--seed", "7",
                        "--xi-max", "8", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "outcome: ExactFitting" in out
    run_dir = tmp_path / "S3_oif_seed7"
    assert (run_dir / "outcome.json").exists()
    code, out, _ = run(["report", str(run_dir)], capsys)
    assert code == 0 and "ExactFitting" in out
    code, out, _ = run(["freq", "--sweep", str(run_dir), "--system", "S3", "--xi-star", "4"], capsys)
    assert code == 0 and "u(k-1)^3: stable from xi=4" in out


def test_sweep_table(tmp_path, capsys):
    code, out, _ = run(["sweep", "--system", "S2", "--algo", "osf", "--xi-min", "2",
                        "--xi-max", "5", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in out.splitlines() if l.strip()[:1].isdigit()]
    assert [int(l.split()[0]) for l in lines] == [2, 3, 4, 5]
    assert sum(l.endswith("*") for l in lines) == 1


def test_bad_interval_writes_nothing(tmp_path, capsys):
    out_dir = tmp_path / "runs"
    code, _, err = run(["sweep", "--system", "S3", "--xi-min", "9", "--xi-max", "4",
                        "--out", str(out_dir)], capsys)
    assert code == 2 and "xi_min" in err
    assert not out_dir.exists()


def test_divergent_seed_exit_code(tmp_path, capsys):
    code, out, _ = run(["identify", "--system", "S6", "--seed", "7", "--xi", "5",
                        "--out", str(tmp_path)], capsys)
    assert code == 3 and "FAILED" in out
    assert (tmp_path / "S6_oif_seed7" / "error.json").exists()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "d.csv", "algorithm": "osf", "xi_max": 12,
                               "seeds": [1, 2]}))
    args = make_parser().parse_args(["sweep", "--config", str(cfg), "--system", "S1",
                                     "--xi-max", "7"])
    config = build_config(args)
    assert config.system == "S1" and config.dataset is None
    assert config.xi_max == 7 and config.algorithm == "osf" and config.seeds == [1, 2]


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    code, _, err = run(["identify", "--config", str(cfg)], capsys)
    assert code == 2 and "config" in err


def test_simulate_then_identify_dataset(tmp_path, capsys):
    csv = tmp_path / "s3.csv"
    code, _, _ = run(["simulate", "--system", "S3", "--seed", "4", "--out", str(csv)], capsys)
    assert code == 0 and csv.exists() and csv.with_suffix(".json").exists()
    code, out, _ = run(["identify", "--data", str(csv), "--xi", "4", "--out",
                        str(tmp_path / "r")], capsys)
    assert code == 0 and "outcome: ExactFitting" in out


def test_classify(capsys):
    code, out, _ = run(["classify", "--found", "y(k-1),u(k-1),u(k-1)^2,u(k-1)^3,u(k-2)",
                        "--system", "S3"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["label"] == "OverFitting" and doc["spurious"] == ["u(k-2)"]
    code, _, _ = run(["classify", "--found", "u(k-1)"], capsys)
    assert code == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit):
        main(["train"])
