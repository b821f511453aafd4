import json
import math

import pytest

from hetcap import cli
from hetcap.cli import ConfigError, RunConfig, main, parse_config, run
from hetcap.errors import NumericalError


def _keys(exc):
    return [k for _, k, _ in exc.value.errors]


# ------------------------------------------------------------------ parsing


def test_minimal_capacity_config_is_valid():
    cfg = parse_config("command=capacity d=2 r=1 R=2.718281828")
    assert isinstance(cfg, RunConfig)
    assert cfg.command == "capacity"
    assert cfg.get("d") == 2
    assert cfg.get("R") == pytest.approx(2.718281828)
    assert cfg.seed == 0


def test_missing_d_names_the_key():
    with pytest.raises(ConfigError) as exc:
        parse_config("command=capacity r=1 R=2")
    assert "d" in _keys(exc)


def test_lambda_out_of_range():
    with pytest.raises(ConfigError) as exc:
        parse_config("command=claw d=2 lambda=1.5 eps=0.1")
    (line, key, reason), = exc.value.errors
    assert key == "lambda" and line == 1 and "[0, 1]" in reason


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config("command=capacity d=2 r=1 R=2 colour=blue")
    assert "colour" in _keys(exc)


def test_key_not_accepted_by_command():
    with pytest.raises(ConfigError) as exc:
        parse_config("command=capacity d=2 r=1 R=2 lambda=0.5")
    assert _keys(exc) == ["lambda"]


def test_every_error_is_reported_with_line_numbers():
    text = "command=claw\nd=2\nlambda=2\neps=0.1,0.2\nbogus=1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    found = {k: line for line, k, _ in exc.value.errors}
    assert found == {"lambda": 3, "eps": 4, "bogus": 5}


def test_comments_and_e_powers():
    cfg = parse_config("# header\ncommand=perforate d=2  # trailing\nlambda=0.5\neps=e^-3,e-4\n")
    assert cfg.get("eps") == pytest.approx([math.exp(-3), math.exp(-4)])


def test_overrides_win_over_document():
    cfg = parse_config("command=capacity d=2 r=1 R=2", ["R=3", "seed=9"])
    assert cfg.get("R") == 3.0 and cfg.seed == 9


@pytest.mark.parametrize("text,key", [
    ("command=capacity d=2 r=2 R=1", "R"),
    ("command=claw d=2 lambda=0.5 eps=0.1 z=0.5", "z"),
    ("command=mu d=2 lambda=0.5 eps=0.1,0.01", "eps"),
    ("command=phi d=3", "d"),
    ("command=claw d=3 lambda=0.5 eps=0.1 method=polar", "method"),
    ("command=capacity d=2 r=1 R=2 integrand=laminate c=2", "c"),
    ("command=verify d=2 low=2", "low"),
    ("command=verify d=2 integrand=nonsense", "integrand"),
    ("command=verify d=1", "d"),
    ("command=verify d=2 samples=abc", "samples"),
    ("command=claw d=2 lambda=0.5 eps=0.1,0.2", "eps"),
])
def test_semantic_errors_carry_the_key(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert key in _keys(exc)


def test_missing_command():
    with pytest.raises(ConfigError) as exc:
        parse_config("d=2")
    assert "command" in _keys(exc)


# ------------------------------------------------------------------ running


def test_capacity_artifacts(tmp_path):
    assert main(["capacity", "d=2", "r=1", "R=e^2", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "capacity.csv").read_text().splitlines()
    assert lines[0] == "r,R,minimum,analytic_unit,ratio"
    ratio = float(lines[1].split(",")[-1])
    assert abs(ratio - 1) < 0.01
    doc = json.loads((tmp_path / "capacity.json").read_text())
    assert doc["schema_version"] == 1
    assert doc["command"] == "capacity"
    assert doc["inputs"]["R"] == math.exp(2)
    assert doc["seed"] == 0
    assert set(doc) == {"schema_version", "command", "inputs", "seed", "results", "verdicts"}


def test_csv_uses_twelve_significant_digits(tmp_path):
    main(["capacity", "d=2", "r=1", "R=e^2", "--out", str(tmp_path)])
    row = (tmp_path / "capacity.csv").read_text().splitlines()[1].split(",")
    assert row[1] == f"{math.exp(2):.12g}"


def test_json_floats_round_trip(tmp_path):
    main(["capacity", "d=2", "r=1", "R=e^2", "--out", str(tmp_path)])
    doc = json.loads((tmp_path / "capacity.json").read_text())
    row = (tmp_path / "capacity.csv").read_text().splitlines()[1].split(",")
    assert f"{doc['results']['minimum']:.12g}" == row[2]


def test_config_file_and_seed_flag(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("command=verify\nd=2\nintegrand=sinusoidal\nsamples=20\n")
    out = tmp_path / "out"
    assert main(["--config", str(conf), "--out", str(out), "--seed", "4"]) == 0
    doc = json.loads((out / "verify.json").read_text())
    assert doc["seed"] == 4 and doc["inputs"]["integrand"] == "sinusoidal"


def test_verify_prints_counts(tmp_path, capsys):
    assert main(["verify", "d=2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    doc = json.loads((tmp_path / "verify.json").read_text())
    n_pass, n_fail = doc["results"]["passed"], doc["results"]["failed"]
    assert f"verify: {n_pass} passed, {n_fail} failed" in out
    assert n_fail == 0 and n_pass >= 10
    rows = (tmp_path / "verify.csv").read_text().splitlines()[1:]
    assert len(rows) == n_pass


def test_verify_failure_exits_one(tmp_path, monkeypatch):
    import hetcap.verify

    monkeypatch.setattr(hetcap.verify, "run_checks", lambda I, seed, samples: [("a", True, 0.0), ("b", False, 1.0)])
    assert main(["verify", "d=2", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "verify.json").read_text())["verdicts"]["all_passed"] is False


def test_config_error_exits_two(tmp_path, capsys):
    assert main(["capacity", "r=1", "R=2", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "d: missing required key" in err
    assert not (tmp_path / "capacity.csv").exists()


def test_unreadable_config_exits_two(tmp_path):
    assert main(["--config", str(tmp_path / "absent.conf")]) == 2


def test_bad_threads_exits_two(tmp_path):
    assert main(["verify", "d=2", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_numerical_failure_exits_one(tmp_path, monkeypatch):
    def boom(cfg):
        raise NumericalError("diverged")

    monkeypatch.setitem(cli.HANDLERS, "capacity", boom)
    cfg = parse_config("command=capacity d=2 r=1 R=2")
    cfg.out = str(tmp_path)
    assert run(cfg) == 1
    assert not (tmp_path / "capacity.csv").exists()


def test_claw_laminate_emits_sweep(tmp_path):
    args = ["claw", "d=2", "integrand=laminate", "lambda=0.5", "eps=e^-3,e^-4", "method=polar", "n_angular=64"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    lines = (tmp_path / "claw.csv").read_text().splitlines()
    assert lines[0] == "eps,delta,lambda,mu,rescaled,prediction"
    assert len(lines) == 3
    doc = json.loads((tmp_path / "claw.json").read_text())
    assert {"sandwiched", "approaching", "verdict"} <= set(doc["verdicts"])


def test_threads_do_not_change_output(tmp_path):
    args = ["phi", "d=2", "schedule=e^2,e^3,e^4", "per_log=8", "n_angular=32"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert (tmp_path / "a" / "phi.csv").read_bytes() == (tmp_path / "b" / "phi.csv").read_bytes()


def test_rerun_is_byte_identical(tmp_path):
    args = ["perforate", "d=2", "lambda=0.5", "eps=e^-3"]
    main(args + ["--out", str(tmp_path / "a"), "--seed", "2"])
    main(args + ["--out", str(tmp_path / "b"), "--seed", "2"])
    for name in ("perforate.csv", "perforate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
