import csv
import json
import shutil
import subprocess
import sys

import pydot
import pytest

from conftest import FIXTURES, free_port
from vui_modeler.cli import main
from vui_modeler.runner import TestReport


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["gen-corpus", "--seed", "3", "--count", "3", "--sizes", "5..7", "--variants", "2..3",
                 "--branching", "2..3", "--out", str(out)]) == 0
    return out


def test_gen_corpus_is_byte_identical(tmp_path, corpus):
    again = tmp_path / "again"
    main(["gen-corpus", "--seed", "3", "--count", "3", "--sizes", "5..7", "--variants", "2..3",
          "--branching", "2..3", "--out", str(again)])
    names = sorted(p.name for p in corpus.iterdir())
    assert names == ["skill_000.json", "skill_001.json", "skill_002.json"]
    for n in names:
        assert (corpus / n).read_bytes() == (again / n).read_bytes()


def test_test_command_writes_report(tmp_path, capsys):
    out = tmp_path / "r" / "report.json"
    code = main(["test", "--target", str(FIXTURES / "pet_walker.json"), "--backend", "noisy",
                 "--seed", "2", "--max-rounds", "25", "--out", str(out)])
    assert code == 0
    rep = TestReport.from_json(out.read_text())
    assert rep.stats["rounds"] == 25 and rep.config["gateway"]["backend"] == "noisy"
    assert "elevate: 25 rounds" in capsys.readouterr().out


def test_time_limit_only(tmp_path):
    out = tmp_path / "report.json"
    assert main(["test", "--target", str(FIXTURES / "local_target.json"), "--time-limit", "0.3",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["stats"]["stop_reason"] in ("wall_clock", "relaunch_cap")


def test_compare_command(tmp_path, corpus, capsys):
    out = tmp_path / "coverage.csv"
    code = main(["compare", "--corpus", str(corpus), "--modes", "elevate,chatbot,random,weighted",
                 "--rounds-match", "--out", str(out)])
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["round", "elevate", "chatbot", "random", "weighted"]
    assert len(rows) == 21
    assert all(0 < float(x) <= 1 for x in rows[-1][1:])
    assert "3 skills" in capsys.readouterr().out


def test_export_command(tmp_path):
    rep = tmp_path / "report.json"
    main(["test", "--target", str(FIXTURES / "pet_walker.json"), "--max-rounds", "20", "--out", str(rep)])
    dot, js = tmp_path / "model.dot", tmp_path / "model.json"
    assert main(["export", "--report", str(rep), "--dot", str(dot), "--json", str(js)]) == 0
    graphs = pydot.graph_from_dot_data(dot.read_text())
    assert graphs and graphs[0].get_edges()
    assert json.loads(js.read_text())["states"]


@pytest.mark.parametrize(
    "argv",
    [
        ["test", "--target", "/nonexistent/spec.json", "--max-rounds", "5", "--out", "x.json"],
        ["test", "--target", str(FIXTURES / "pet_walker.json"), "--out", "x.json"],
        ["test", "--target", str(FIXTURES / "pet_walker.json"), "--max-rounds", "5",
         "--backend", "remote", "--out", "x.json"],
        ["test", "--target", str(FIXTURES / "pet_walker.json"), "--max-rounds", "5",
         "--error-rate", "2", "--out", "x.json"],
        ["compare", "--corpus", "/nonexistent", "--out", "x.csv"],
        ["compare", "--corpus", str(FIXTURES), "--modes", "random,bogus", "--out", "x.csv"],
        ["export", "--report", "/nonexistent.json", "--dot", "x.dot"],
        ["export", "--report", str(FIXTURES / "pet_walker.json")],
    ],
)
def test_config_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_range_exits_2():
    with pytest.raises(SystemExit) as err:
        main(["gen-corpus", "--sizes", "9..3", "--out", "x"])
    assert err.value.code == 2


def test_unreachable_target_exits_3(tmp_path):
    code = main(["test", "--target", f"http://127.0.0.1:{free_port()}/", "--max-rounds", "5",
                 "--target-timeout", "2", "--out", str(tmp_path / "r.json")])
    assert code == 3


def test_unreachable_llm_exits_3(tmp_path):
    code = main(["test", "--target", str(FIXTURES / "pet_walker.json"), "--max-rounds", "5",
                 "--backend", "remote", "--endpoint", f"http://127.0.0.1:{free_port()}/v1",
                 "--out", str(tmp_path / "r.json")])
    assert code == 3


def test_server_mode_matches_in_process(tmp_path, live_service):
    local, remote = tmp_path / "local.json", tmp_path / "remote.json"
    args = ["test", "--target", str(FIXTURES / "pet_walker.json"), "--max-rounds", "15", "--seed", "1"]
    assert main([*args, "--out", str(local)]) == 0
    assert main(["--server", live_service, *args, "--out", str(remote)]) == 0
    assert json.loads(local.read_text())["transcript"] == json.loads(remote.read_text())["transcript"]
    gen = tmp_path / "gen"
    assert main(["--server", live_service, "gen-corpus", "--seed", "1", "--count", "1", "--out", str(gen)]) == 0
    assert (gen / "skill_000.json").exists()


def test_server_down_exits_3(tmp_path):
    code = main(["--server", f"http://127.0.0.1:{free_port()}", "gen-corpus", "--out", str(tmp_path)])
    assert code == 3


@pytest.mark.skipif(shutil.which("vui-modeler") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["vui-modeler", "gen-corpus", "--count", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "skill_000.json").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "vui_modeler.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-corpus" in proc.stdout
