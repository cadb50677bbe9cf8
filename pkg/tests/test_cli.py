import json

import numpy as np
import pytest

from kernelevo.cli import main
from kernelevo.genome import Delete, dumps_patch
from kernelevo.vm import TestCase

QUICK = ["--pop", "8", "--generations", "3", "--seed", "1"]


def run_cli(*argv):
    return main([str(a) for a in argv])


def fitness_line(out):
    line = next(l for l in out.splitlines() if l.startswith("fitness: "))
    return json.loads(line[len("fitness: "):])


@pytest.fixture(scope="module")
def mini_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run_cli("run", "--bench", "hot-mini", "--out", out, *QUICK) == 0
    return out


def test_run_writes_outputs(mini_run):
    for name in ("log.csv", "report.json", "best.ir", "best.patch.json"):
        assert (mini_run / name).is_file()
    rep = json.loads((mini_run / "report.json").read_text())
    assert rep["kernel"] == "hot-mini" and rep["mode"] == "default"
    assert rep["config"]["tolerance"] == 0.0
    assert rep["best"]["default"]["fitness"]["cost"] <= rep["baseline"]["cost"]


def test_run_is_byte_identical(mini_run, tmp_path):
    assert run_cli("run", "--bench", "hot-mini", "--out", tmp_path, *QUICK) == 0
    for name in ("log.csv", "report.json", "best.ir", "best.patch.json"):
        assert (tmp_path / name).read_bytes() == (mini_run / name).read_bytes()


def test_replay_reproduces_reported_fitness(mini_run, capsys):
    capsys.readouterr()
    rc = run_cli("replay", "--bench", "hot-mini", "--patch", mini_run / "best.patch.json",
                 "--seed", "1")
    assert rc == 0
    out = capsys.readouterr().out
    assert "validate: ok" in out
    rep = json.loads((mini_run / "report.json").read_text())
    assert fitness_line(out) == rep["best"]["default"]["fitness"]
    assert "kernel hot_mini" in out


def test_replay_empty_patch_gives_baseline(mini_run, tmp_path, capsys):
    p = tmp_path / "empty.json"
    p.write_text(dumps_patch(()))
    capsys.readouterr()
    assert run_cli("replay", "--bench", "hot-mini", "--patch", p, "--seed", "1") == 0
    rep = json.loads((mini_run / "report.json").read_text())
    assert fitness_line(capsys.readouterr().out) == rep["baseline"]


def test_replay_inapplicable_patch_warns(mini_run, tmp_path, capsys, caplog):
    p = tmp_path / "bad.json"
    p.write_text(dumps_patch((Delete(9999), Delete(8888))))
    capsys.readouterr()
    assert run_cli("replay", "--bench", "hot-mini", "--patch", p, "--seed", "1") == 0
    captured = capsys.readouterr()
    rep = json.loads((mini_run / "report.json").read_text())
    assert fitness_line(captured.out) == rep["baseline"]
    assert "dropped 2 inapplicable edit(s)" in captured.err + caplog.text


def test_replay_invalid_patch_json(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert run_cli("replay", "--bench", "hot-mini", "--patch", p) == 1
    assert "invalid patch" in capsys.readouterr().err


def test_mo_mode_echoes_tolerance(tmp_path):
    assert run_cli("run", "--bench", "hot-mini", "--mode", "mo", "--tolerance", "0.01",
                   "--out", tmp_path, *QUICK) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["config"]["tolerance"] == 0.01 and rep["mode"] == "mo"
    assert "mo" in rep["best"]


def test_mo_mode_default_tolerance(tmp_path):
    assert run_cli("run", "--bench", "hot-mini", "--mode", "mo", "--out", tmp_path, *QUICK) == 0
    assert json.loads((tmp_path / "report.json").read_text())["config"]["tolerance"] == 0.01


def test_default_mode_forces_zero_tolerance(tmp_path):
    assert run_cli("run", "--bench", "hot-mini", "--tolerance", "0.05", "--out", tmp_path,
                   *QUICK) == 0
    assert json.loads((tmp_path / "report.json").read_text())["config"]["tolerance"] == 0.0


def test_missing_kernel_path(tmp_path, capsys):
    missing = tmp_path / "nope.ir"
    assert run_cli("run", "--kernel", missing, "--out", tmp_path / "o") == 1
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unknown_benchmark(capsys):
    assert run_cli("run", "--bench", "nope") == 1
    assert "unknown benchmark" in capsys.readouterr().err


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"bench": "hot-mini", "pop": 8, "generations": 2, "seed": 5,
                                "mode": "mo", "tolerance": 0.02}))
    assert run_cli("run", "--config", conf, "--tolerance", "0.03", "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["pop_size"] == 8 and rep["config"]["seed"] == 5
    assert rep["config"]["tolerance"] == 0.03


def test_bad_config_value(tmp_path, capsys):
    assert run_cli("run", "--bench", "hot-mini", "--pop", "6", "--out", tmp_path) == 1
    assert "pop_size" in capsys.readouterr().err


def _write_kernel_and_tests(tmp_path, body):
    k = tmp_path / "k.ir"
    k.write_text(f"kernel k(out: ptr<global> f32) threads=1 {{ entry: {body} }}")
    d = tmp_path / "tests"
    d.mkdir()
    z = np.zeros(1, dtype=np.float32)
    TestCase({"out": z}, oracle={"out": z}).save(d / "t0.json")
    return k, d


def test_init_failure_exit_code(tmp_path):
    k, d = _write_kernel_and_tests(tmp_path, "ret")
    assert run_cli("run", "--kernel", k, "--tests", d, "--pop", "4", "--generations", "1",
                   "--out", tmp_path / "o") == 2


def test_kernel_with_tests_dir(tmp_path):
    k, d = _write_kernel_and_tests(tmp_path, "%a = fadd f32 1.0, 2.0; store out[0], 0.0; ret")
    (d / "heldout").mkdir()
    z = np.zeros(1, dtype=np.float32)
    TestCase({"out": z}, oracle={"out": z}).save(d / "heldout" / "h0.json")
    assert run_cli("run", "--kernel", k, "--tests", d, "--pop", "8", "--generations", "4",
                   "--init-dist", "1", "--out", tmp_path / "o") == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["best"]["default"]["heldout"]["verdict"] == "ok"


def test_oracle_files_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("oracle", "--bench", "lud-store", "--seed", "3", "--count", "2", "--out", a) == 0
    assert run_cli("oracle", "--bench", "lud-store", "--seed", "3", "--count", "2", "--out", b) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == ["test-0000.json", "test-0001.json"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    t = TestCase.load(a / names[0])
    assert set(t.oracle) == {"out"}


def test_oracle_count_zero(tmp_path):
    assert run_cli("oracle", "--bench", "lud-store", "--count", "0", "--out", tmp_path / "o") == 0
    assert not (tmp_path / "o").exists()


def test_oracle_rejects_invalid_kernel(tmp_path, capsys):
    k = tmp_path / "bad.ir"
    k.write_text("kernel k(out: ptr<global> f32) threads=1 { entry: %a = const f32 1.0 }")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"buffers": {"out": {"type": "f32", "size": 1}}}))
    assert run_cli("oracle", "--kernel", k, "--spec", spec, "--out", tmp_path / "o") == 1
    assert "does not validate" in capsys.readouterr().err


def test_tests_from_oracle_feed_run(tmp_path):
    d = tmp_path / "t"
    assert run_cli("oracle", "--bench", "hot-mini", "--count", "2", "--out", d) == 0
    assert run_cli("run", "--bench", "hot-mini", "--tests", d, "--out", tmp_path / "o", *QUICK) == 0


def test_list(capsys):
    assert run_cli("list") == 0
    out = capsys.readouterr().out
    for name in ("nw-sync", "lud-store", "hot-branch", "bfs-load", "lud-unroll", "hot-memo"):
        assert name in out


def test_nw_sync_run_beats_baseline(tmp_path):
    assert run_cli("run", "--bench", "nw-sync", "--mode", "default", "--seed", "7",
                   "--generations", "30", "--pop", "64", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["best"]["default"]["fitness"]["cost"] < rep["baseline"]["cost"]
