import json
import subprocess
import sys

import pytest

from etale_lab.cli import main


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, out


def gen(tmp_path, capsys, *extra, name="inst.json"):
    path = tmp_path / name
    code, _ = run(["gen", "fixed-universe", "--rels", "P:1", "--n", "2", "--topology", "discrete", *extra, "--out", str(path)], capsys)
    assert code == 0
    return path


def test_gen_fixed_universe(tmp_path, capsys):
    data = json.loads(gen(tmp_path, capsys).read_text())
    assert data["kind"] == "instance"
    assert len(data["structure"]["base"]["points"]) == 4


def test_parse_empty_conjunction(capsys):
    code, out = run(["parse", "and()"], capsys)
    assert code == 0
    assert "and()" in out


def test_parse_error_exit_code(capsys):
    code, _ = run(["parse", "and(P(x)"], capsys)
    assert code == 1


def test_certify_needs_morleyization(tmp_path, capsys):
    plain = gen(tmp_path, capsys)
    code, out = run(["certify", "--in", str(plain)], capsys)
    assert code == 2
    assert json.loads(out)["complete"] is False

    morley = gen(tmp_path, capsys, "--morleyize", "negations", name="m.json")
    code, out = run(["certify", "--in", str(morley)], capsys)
    assert code == 0
    assert json.loads(out)["complete"] is True


def test_missing_input_file(tmp_path, capsys):
    code = main(["certify", "--in", str(tmp_path / "absent.json")])
    assert code == 1


def test_output_is_byte_deterministic(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.json"
        subprocess.run(
            [sys.executable, "-m", "etale_lab.cli", "gen", "up-to-size", "--rels", "P:1", "--n", "2", "--morleyize", "neq", "--out", str(path)],
            check=True,
        )
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_instance_round_trip(tmp_path, capsys):
    path = gen(tmp_path, capsys, "--morleyize", "negations")
    first = json.loads(path.read_text())
    code, out = run(["iso", "--in", str(path)], capsys)
    assert code == 0
    again = tmp_path / "again.json"
    again.write_text(json.dumps(first))
    assert main(["iso", "--in", str(again)]) == 0
    assert capsys.readouterr().out == out


@pytest.mark.parametrize("sub", ["axiomatize", "saturate"])
def test_subcommands_on_certified_instance(tmp_path, capsys, sub):
    path = gen(tmp_path, capsys, "--morleyize", "negations")
    code, out = run([sub, "--in", str(path)], capsys)
    assert code == 0
    assert json.loads(out)


def test_reconstruct_subcommand(capsys):
    code, out = run(["reconstruct", "--seed", "4"], capsys)
    assert code == 0
    assert json.loads(out)["functor"]["isomorphism"] is True


def test_selftest_quick():
    proc = subprocess.run(
        [sys.executable, "-m", "etale_lab.cli", "selftest", "--profile", "quick"], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    report = json.loads(proc.stdout)
    assert report["passed"] and len(report["criteria"]) == 12
