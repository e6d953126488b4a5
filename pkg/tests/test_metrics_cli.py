import json
import subprocess
import sys

import pytest

from ics5gsim import cli, metrics, runner, scenario


@pytest.fixture(scope="module")
def gc_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = scenario.load(deployment="5g_gc", duration_s=30.0, operator_script=[], monitor={"enabled": True})
    _, m = runner.run(cfg, out)
    return out, m


def test_metrics_recomputed_from_files_match(gc_run):
    out, m = gc_run
    again = metrics.recompute(out)
    assert again == m
    on_disk = json.loads((out / "metrics.json").read_text())
    assert on_disk["delivered"] == m["delivered"]


def test_manifest_digests_cover_outputs(gc_run):
    out, _ = gc_run
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["file_digests"]) == {"events.jsonl", "plant.csv", "packets.jsonl", "spectrum.npy"}
    assert man["config_digest"] == scenario.from_dict(man["config"]).digest()


def test_packet_lines_follow_schema(gc_run):
    out, _ = gc_run
    with open(out / "packets.jsonl") as fh:
        row = json.loads(fh.readline())
    assert list(row) == ["v", "t_send", "t_recv", "src", "dst", "size", "fc", "dir", "msg_class", "tid", "retx",
                         "sinr", "dropped", "drop_reason", "seq", "attempt", "t_orig", "origin", "adu"]


def test_cli_run_uses_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    rc = cli.main(["run", "--deployment", "wired", "--duration", "5", "--seed", "3",
                   "--override", "operator_script=[]", "--name", "r"])
    assert rc == 0
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["seed"] == 3 and man["duration_s"] == 5.0


def test_cli_report_on_missing_directory_is_structured(tmp_path, capsys):
    rc = cli.main(["report", "--out", str(tmp_path / "nothing")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "missing_inputs" and err["missing"]


def test_cli_rejects_bad_override(tmp_path, capsys):
    rc = cli.main(["run", "--out", str(tmp_path), "--override", "channel.bogus=1"])
    assert rc == 2
    assert json.loads(capsys.readouterr().err)["error"] == "invalid_config"


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "ics5gsim.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("run", "matrix", "ids", "jam-sweep", "report"):
        assert sub in res.stdout
