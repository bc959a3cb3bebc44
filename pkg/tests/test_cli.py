import argparse
import json
import subprocess
import sys

import numpy as np
import pytest

from capture_goldens import HELP_COMMANDS, help_name, help_text
from conftest import GOLDEN_DIR
from creasegen import cli
from creasegen.raster import read_gray, write_png


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def err_json(err: str) -> dict:
    lines = [l for l in err.splitlines() if l.strip()]
    payload = json.loads(lines[-1])
    assert set(payload) >= {"error", "message", "exit_code"}
    return payload


@pytest.mark.parametrize("words", HELP_COMMANDS, ids=lambda w: " ".join(w) or "root")
def test_help_text_golden(words):
    assert help_text(words) == (GOLDEN_DIR / "help" / help_name(words)).read_text()


def _option_strings(parser):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            for name, sub in a.choices.items():
                yield from ((name,) + k for k in _option_strings(sub))
        else:
            for o in a.option_strings:
                yield (o,)


def test_help_lists_every_flag():
    parser = cli.build_parser()
    for path in _option_strings(parser):
        *words, flag = path
        assert flag in help_text(list(words)), path


def test_generate_and_verify(tmp_path, capsys):
    out = tmp_path / "d"
    code, stdout, _ = run(capsys, "generate", "--variant", "vpd", "--ids", "2", "--seed", "7", "--out", str(out),
                          "--canvas", "96x96", "--thickness", "2", "--jobs", "1")
    assert code == 0
    assert json.loads(stdout)["images"] == 28
    assert len(list(out.rglob("*.png"))) == 28
    code, stdout, _ = run(capsys, "verify", "--manifest", str(out / "manifest.json"))
    assert code == 0 and json.loads(stdout)["ok"]
    png = next(out.rglob("*.png"))
    png.write_bytes(png.read_bytes()[:-10])
    code, stdout, err = run(capsys, "verify", "--manifest", str(out / "manifest.json"))
    assert code == 1 and len(json.loads(stdout)["mismatches"]) == 1
    assert err_json(err)["exit_code"] == 1


def test_seed_env_override(tmp_path, capsys, monkeypatch):
    common = ["generate", "--variant", "fc", "--ids", "1", "--samples", "1", "--canvas", "64x64", "--jobs", "1"]
    run(capsys, *common, "--seed", "3", "--out", str(tmp_path / "a"))
    monkeypatch.setenv("CREASE_SEED", "3")
    run(capsys, *common, "--seed", "999", "--out", str(tmp_path / "b"))
    a = (tmp_path / "a" / "manifest.json").read_text()
    b = (tmp_path / "b" / "manifest.json").read_text()
    assert a == b
    monkeypatch.setenv("CREASE_SEED", "banana")
    code, _, err = run(capsys, *common, "--out", str(tmp_path / "c"))
    assert code == 1 and "CREASE_SEED" in err_json(err)["message"]


def test_missing_seed_is_validation_error(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("CREASE_SEED", raising=False)
    code, _, err = run(capsys, "generate", "--variant", "fc", "--ids", "1", "--out", str(tmp_path))
    assert code == 1 and "--seed" in err_json(err)["message"]


@pytest.mark.parametrize("argv", [
    ["generate", "--variant", "xx", "--ids", "1", "--out", "x"],
    ["generate", "--variant", "fc", "--ids", "0", "--out", "x", "--seed", "1"],
    ["bridge-check", "--bogus"],
    ["nosuchcommand"],
    [],
    ["metrics", "tmr", "--scores", "s.csv", "--fmr", "2"],
])
def test_bad_flags_exit_1(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err_json(err)["exit_code"] == 1


def test_config_file(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("CREASE_SEED", raising=False)
    toml = tmp_path / "c.toml"
    toml.write_text(f'variant = "cpd"\nids = 1\nseed = 4\nout = "{tmp_path / "t"}"\ncanvas = [64, 64]\njobs = 1\n')
    code, stdout, _ = run(capsys, "--config", str(toml), "generate")
    assert code == 0 and json.loads(stdout)["variant"] == "CPD"
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"variant": "fc", "ids": 1, "seed": 4, "out": str(tmp_path / "j"), "jobs": 1,
                              "samples": 2, "canvas": "64x64"}))
    code, stdout, _ = run(capsys, "--config", str(js), "generate", "--ids", "2")
    assert code == 0 and json.loads(stdout)["images"] == 4
    js.write_text(json.dumps({"nope": 1}))
    code, _, err = run(capsys, "--config", str(js), "bridge-check")
    assert code == 1 and "nope" in err_json(err)["message"]
    js.write_text(json.dumps({"ids": "many"}))
    code, _, _ = run(capsys, "--config", str(js), "generate")
    assert code == 1
    code, _, _ = run(capsys, "--config", str(tmp_path / "missing.toml"), "bridge-check")
    assert code == 1


def test_edges_and_augment(tmp_path, capsys):
    src = tmp_path / "in"
    (src / "sub").mkdir(parents=True)
    ramp = np.tile(np.linspace(100, 230, 48), (48, 1))
    ramp[20:22] *= 0.4
    write_png(ramp.astype(np.uint8), src / "sub" / "face.png")
    code, stdout, _ = run(capsys, "edges", "--in", str(src), "--out", str(tmp_path / "e"), "--jobs", "1")
    assert code == 0
    edge = read_gray(tmp_path / "e" / "sub" / "face.png")
    assert set(np.unique(edge)) <= {0, 255}
    assert np.all(edge[20] == 0)

    code, stdout, _ = run(capsys, "augment", "--in", str(tmp_path / "e"), "--out", str(tmp_path / "a"),
                          "--seed", "5", "--only", "rotate_pm5,dropout_small", "--jobs", "1")
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "a" / "sub" / "face").iterdir())
    assert names == ["00_dropout_small.png", "01_rotate_pm5.png"]
    first = (tmp_path / "a" / "sub" / "face" / "01_rotate_pm5.png").read_bytes()
    run(capsys, "augment", "--in", str(tmp_path / "e"), "--out", str(tmp_path / "a2"),
        "--seed", "5", "--only", "rotate_pm5,dropout_small", "--jobs", "1")
    assert (tmp_path / "a2" / "sub" / "face" / "01_rotate_pm5.png").read_bytes() == first
    code, _, err = run(capsys, "augment", "--in", str(tmp_path / "e"), "--out", str(tmp_path / "a3"),
                       "--seed", "5", "--only", "nope")
    assert code == 1
    # grayscale input is not a binary prompt
    code, _, err = run(capsys, "augment", "--in", str(src), "--out", str(tmp_path / "a4"), "--seed", "1",
                       "--jobs", "1")
    assert code == 1
    code, stdout, _ = run(capsys, "augment", "--list", "--in", "x", "--out", "y")
    assert len(json.loads(stdout)) == 14


def test_edges_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, _, _ = run(capsys, "edges", "--in", str(tmp_path / "empty"), "--out", str(tmp_path / "o"))
    assert code == 1


def test_metrics_commands(tmp_path, capsys):
    scores = tmp_path / "s.csv"
    scores.write_text("label,score\ngenuine,0.9\ngenuine,0.8\ngenuine,0.4\nimpostor,0.7\nimpostor,0.3\n"
                      "impostor,0.2\n")
    code, stdout, _ = run(capsys, "metrics", "eer", "--scores", str(scores))
    assert code == 0 and json.loads(stdout)["value"] == pytest.approx(1 / 3)
    code, stdout, _ = run(capsys, "metrics", "tmr", "--scores", str(scores), "--fmr", "0.5")
    assert json.loads(stdout)["values"] == [{"fmr": 0.5, "tmr": 1.0}]
    code, stdout, _ = run(capsys, "metrics", "det", "--scores", str(scores), "--out", str(tmp_path / "d.csv"))
    assert code == 0 and (tmp_path / "d.csv").read_text().startswith("fmr,fnmr\n")

    empty = tmp_path / "empty.csv"
    empty.write_text("label,score\n")
    code, _, err = run(capsys, "metrics", "eer", "--scores", str(empty))
    assert code == 1 and err_json(err)["error"] == "ValidationError"
    code, _, err = run(capsys, "metrics", "eer", "--scores", str(tmp_path / "missing.csv"))
    assert code == 2

    f1, f2 = tmp_path / "f1.csv", tmp_path / "f2.csv"
    f1.write_text("id,f0\na,-1\na,1\nb,-1\nb,1\n")
    f2.write_text("id,f0\na,2\na,4\nb,2\nb,4\n")
    code, stdout, _ = run(capsys, "metrics", "fid", "--features1", str(f1), "--features2", str(f2))
    assert json.loads(stdout)["value"] == pytest.approx(9.0)
    code, stdout, _ = run(capsys, "metrics", "diversity", "--features", str(f1))
    assert json.loads(stdout)["value"] == 2.0
    code, _, _ = run(capsys, "metrics", "diversity")
    assert code == 1
    code, _, _ = run(capsys, "metrics", "ssim")
    assert code == 1


def test_metrics_on_dataset(tmp_path, capsys):
    out = tmp_path / "fc"
    run(capsys, "generate", "--variant", "fc", "--ids", "2", "--seed", "1", "--out", str(out), "--samples", "3",
        "--canvas", "64x64", "--jobs", "1")
    code, stdout, _ = run(capsys, "metrics", "ssim", "--manifest", str(out / "manifest.json"))
    assert code == 0 and json.loads(stdout)["value"] == 1.0
    code, stdout, _ = run(capsys, "metrics", "diversity", "--manifest", str(out / "manifest.json"))
    assert json.loads(stdout)["value"] == 0.0
    a, b = sorted(out.rglob("*.png"))[:2]
    code, stdout, _ = run(capsys, "metrics", "ssim", "--a", str(a), "--b", str(b))
    assert json.loads(stdout)["value"] == 1.0


def test_bridge_check(capsys):
    code, stdout, _ = run(capsys, "bridge-check", "--T", "1000", "--samples", "100000")
    assert code == 0
    lines = stdout.splitlines()
    assert len(lines) == 7 and all(l.startswith("PASS") for l in lines)
    assert any("variance_half" in l and "var=" in l for l in lines)
    code, _, _ = run(capsys, "bridge-check", "--T", "2")
    assert code == 1


def test_json_logging(tmp_path, capsys):
    code, _, err = run(capsys, "--log-level", "info", "generate", "--variant", "fc", "--ids", "1", "--seed", "0",
                       "--samples", "1", "--canvas", "64x64", "--jobs", "1", "--out", str(tmp_path / "x"))
    assert code == 0
    records = [json.loads(l) for l in err.splitlines() if l.strip()]
    assert records and all(r["level"] == "info" for r in records)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "creasegen", "metrics", "eer", "--scores", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["exit_code"] == 2


def test_writes_stay_inside_out(tmp_path, capsys):
    out = tmp_path / "only_here"
    before = set(tmp_path.iterdir())
    run(capsys, "generate", "--variant", "cpd", "--ids", "1", "--seed", "2", "--samples", "2", "--canvas", "64x64",
        "--jobs", "1", "--out", str(out))
    assert set(tmp_path.iterdir()) - before == {out}
