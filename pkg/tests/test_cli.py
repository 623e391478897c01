import json
import subprocess
import sys

import pytest

from secquant.cli import main

FAST_TRAIN = ["--scheme", "sq", "--clients", "10", "--population", "50", "--rounds", "5"]


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def test_nmse_csv(tmp_path):
    code, out = run(tmp_path, "n.csv", "nmse", "--dim", "32", "--clients", "1", "4", "--trials", "2", "--self-check")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "scheme,scales,mode,d,n,trials,nmse_mean,nmse_stderr"
    assert len(lines) == 3


def test_nmse_sepagg_self_check(tmp_path):
    args = ["nmse", "--scheme", "ksq", "--scales", "local", "--approach", "III", "--dim", "64", "--clients", "1", "--trials", "2", "--self-check"]
    assert run(tmp_path, "s.json", *args, "--format", "json")[0] == 0


def test_train_and_defense(tmp_path):
    code, out = run(tmp_path, "t.csv", "train", *FAST_TRAIN, "--attack", "--defend", "--self-check")
    assert code == 0
    assert out.read_text().splitlines()[1].startswith("defended,1,")
    code, out = run(tmp_path, "d.json", "defense", *FAST_TRAIN, "--format", "json")
    assert code == 0
    assert {row["arm"] for row in json.loads(out.read_text())["rows"]} == {"clean", "attack", "defended"}


def test_cost_with_transcript(tmp_path):
    transcript = tmp_path / "t.jsonl"
    code, out = run(
        tmp_path, "c.csv", "cost", "--protocol", "approach3", "prio+", "--clients", "20", "100",
        "--dim", "4", "--transcript", str(transcript), "--self-check",
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 5
    record = json.loads(transcript.read_text().splitlines()[0])
    assert {"round", "phase", "from", "to", "bits", "tag"} <= set(record)


def test_config_file_and_overrides(tmp_path):
    config = tmp_path / "c.json"
    config.write_text(json.dumps({"experiment": {"dims": [16], "clients": [2], "trials": 2, "scheme": "hsq"}}))
    code, out = run(tmp_path, "o.csv", "nmse", "--config", str(config), "--scheme", "sq")
    assert code == 0
    assert out.read_text().splitlines()[1].startswith("sq,global,exact,16,2,2,")


def test_invalid_combination_exits_with_two(tmp_path, capsys):
    code, _ = run(tmp_path, "x.csv", "nmse", "--approach", "global", "--scales", "local")
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_choice_is_rejected():
    with pytest.raises(SystemExit):
        main(["nmse", "--scheme", "zq"])


@pytest.mark.parametrize(
    "args",
    [
        ["nmse", "--dim", "32", "--clients", "3", "--trials", "2", "--conversion", "approx"],
        ["train", *FAST_TRAIN, "--attack"],
        ["defense", *FAST_TRAIN],
        ["cost", "--clients", "5", "--dim", "3"],
    ],
)
def test_outputs_are_byte_identical(tmp_path, args):
    first = run(tmp_path, "a.out", *args)[1].read_bytes()
    second = run(tmp_path, "b.out", *args)[1].read_bytes()
    assert first == second


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "secquant.cli", "cost", "--clients", "2", "--out", str(out)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("protocol,mode,n,m_bits")
