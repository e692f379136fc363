import json

import pytest

from anchorcache.cli import main

SCHEDULE = {
    "d_model": 32,
    "prompts": [{"seed": 1}, {"seed": 2}],
    "boundaries": [12],
    "total_frames": 30,
}


@pytest.fixture
def schedule_file(tmp_path):
    path = tmp_path / "schedule.json"
    path.write_text(json.dumps(SCHEDULE))
    return str(path)


def _run(args):
    return main(args)


class TestRun:
    def test_writes_header_plus_one_line_per_frame(self, schedule_file, tmp_path):
        out = tmp_path / "trace.jsonl"
        assert _run(["run", "--schedule", schedule_file, "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 31
        header = json.loads(lines[0])
        assert header["type"] == "header"
        assert header["settings"]["strategy"] == "anchor"

    def test_sixty_frames_two_boundaries(self, tmp_path):
        doc = {
            "d_model": 32,
            "prompts": [{"seed": 1}, {"seed": 2}, {"seed": 3}],
            "boundaries": [20, 40],
            "total_frames": 60,
        }
        path = tmp_path / "long.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "long.jsonl"
        assert _run(["run", "--schedule", str(path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 61
        assert json.loads(lines[0])["type"] == "header"
        assert all(json.loads(line)["type"] == "frame" for line in lines[1:])

    def test_identical_invocations_byte_identical(self, schedule_file, tmp_path):
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        _run(["run", "--schedule", schedule_file, "--out", str(out1)])
        _run(["run", "--schedule", schedule_file, "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_stdout_when_no_out(self, schedule_file, capsys):
        assert _run(["run", "--schedule", schedule_file]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 31

    def test_bad_schedule_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(dict(SCHEDULE, boundaries=[99])))
        assert _run(["run", "--schedule", str(path)]) == 2
        assert "boundaries[0]" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path):
        assert _run(["run", "--schedule", str(tmp_path / "nope.json")]) == 2

    def test_unbounded_checked_exits_3_at_t22(self, schedule_file, capsys):
        code = _run(
            ["run", "--schedule", schedule_file, "--rope-mode", "unbounded", "--checked"]
        )
        assert code == 3
        err = capsys.readouterr().err
        assert "position-bound" in err and "t=22" in err

    def test_flag_overrides_land_in_header(self, schedule_file, tmp_path):
        out = tmp_path / "t.jsonl"
        _run(
            [
                "run", "--schedule", schedule_file, "--out", str(out),
                "--strategy", "flush", "--window", "7", "--seed", "5",
            ]
        )
        settings = json.loads(out.read_text().splitlines()[0])["settings"]
        assert settings["strategy"] == "flush"
        assert settings["window"] == 7
        assert settings["noise_seed"] == 5


class TestCheck:
    def test_round_trip_soundness(self, schedule_file, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        _run(["run", "--schedule", schedule_file, "--checked", "--out", str(out)])
        assert _run(["check", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert stdout.count("PASS") == 5
        assert "FAIL" not in stdout

    def test_unbounded_trace_fails_exit_3(self, schedule_file, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        _run(["run", "--schedule", schedule_file, "--rope-mode", "unbounded", "--out", str(out)])
        assert _run(["check", str(out)]) == 3
        assert "FAIL position-bound" in capsys.readouterr().out

    def test_tampered_trace_fails(self, schedule_file, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        _run(["run", "--schedule", schedule_file, "--out", str(out)])
        lines = out.read_text().splitlines()
        doc = json.loads(lines[28])
        doc["regions"][1]["pos"] = 19
        lines[28] = json.dumps(doc)
        out.write_text("\n".join(lines) + "\n")
        assert _run(["check", str(out)]) == 3

    def test_malformed_trace_exits_2_with_line(self, tmp_path, capsys):
        out = tmp_path / "trace.jsonl"
        out.write_text('{"type":"header","schedule":{},"settings":{}}\nnot json\n')
        assert _run(["check", str(out)]) == 2
        assert "line 2" in capsys.readouterr().err


class TestCompare:
    def test_retention_summary(self, schedule_file, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = _run(
            ["compare", "--schedule", schedule_file, "--out", str(report_path)]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "anchor" in stdout and "baseline" in stdout
        report = json.loads(report_path.read_text())
        assert report["per_strategy"]["anchor"]["retention"][0]["count"] == 3
        assert report["per_strategy"]["baseline"]["retention"][0]["count"] == 0

    def test_single_strategy_rejected(self, schedule_file):
        assert _run(["compare", "--schedule", schedule_file, "--strategies", "anchor"]) == 2


class TestEnvOverrides:
    def test_env_sets_defaults(self, schedule_file, tmp_path, monkeypatch):
        monkeypatch.setenv("ANCHORCACHE_STRATEGY", "flush")
        monkeypatch.setenv("ANCHORCACHE_WINDOW", "6")
        out = tmp_path / "trace.jsonl"
        _run(["run", "--schedule", schedule_file, "--out", str(out)])
        settings = json.loads(out.read_text().splitlines()[0])["settings"]
        assert settings["strategy"] == "flush"
        assert settings["window"] == 6

    def test_flag_beats_env(self, schedule_file, tmp_path, monkeypatch):
        monkeypatch.setenv("ANCHORCACHE_STRATEGY", "flush")
        out = tmp_path / "trace.jsonl"
        _run(["run", "--schedule", schedule_file, "--strategy", "anchor", "--out", str(out)])
        settings = json.loads(out.read_text().splitlines()[0])["settings"]
        assert settings["strategy"] == "anchor"
