import subprocess
import sys

import pytest

from depthfuzz.cli import main
from depthfuzz.codec import parse_spec


@pytest.fixture
def workspace(tmp_path):
    spec = tmp_path / "nested8.spec"
    corpus = tmp_path / "corpus"
    assert main(["spec-dump", "--target", "nested8", "--out", str(spec), "--corpus", str(corpus)]) == 0
    return tmp_path, spec, corpus


def run_args(tmp, spec, corpus, out="out", *extra):
    return [
        "run", "-i", str(corpus), "-o", str(tmp / out), "--spec", str(spec),
        "--target", "nested8", "--schedule", "depth", "--rng-seed", "7", "-q", *extra,
    ]


class TestRun:
    def test_happy_path(self, workspace):
        tmp, spec, corpus = workspace
        assert main(run_args(tmp, spec, corpus, "out", "--budget-execs", "20000")) == 0
        out = tmp / "out"
        assert (out / "plot_data.csv").exists()
        assert (out / "fuzzer_stats").exists()
        assert any((out / "queue").iterdir())

    def test_missing_spec(self, workspace, capsys):
        tmp, _, corpus = workspace
        code = main(["run", "-i", str(corpus), "-o", str(tmp / "o"), "--target", "nested8", "--budget-execs", "10"])
        assert code == 1
        assert "--spec" in capsys.readouterr().err

    def test_target_and_cmd_exclusive(self, workspace):
        tmp, spec, corpus = workspace
        args = run_args(tmp, spec, corpus, "o", "--budget-execs", "10", "--cmd", "true @@")
        assert main(args) == 1

    def test_bad_flag_is_usage_error(self):
        assert main(["run", "--no-such-flag"]) == 1
        assert main([]) == 1

    def test_bad_corpus_is_runtime_error(self, workspace, capsys):
        tmp, spec, corpus = workspace
        (corpus / "short").write_bytes(b"abc")
        assert main(run_args(tmp, spec, corpus, "o", "--budget-execs", "10")) == 2
        assert "short" in capsys.readouterr().err

    def test_logical_time_plot_is_byte_identical(self, workspace):
        tmp, spec, corpus = workspace
        for out in ("a", "b"):
            assert main(run_args(tmp, spec, corpus, out, "--budget-execs", "15000", "--logical-time")) == 0
        assert (tmp / "a" / "plot_data.csv").read_bytes() == (tmp / "b" / "plot_data.csv").read_bytes()

    def test_heartbeat_on_stderr(self, workspace):
        tmp, spec, corpus = workspace
        args = [a for a in run_args(tmp, spec, corpus, "hb", "--budget-seconds", "1.5") if a != "-q"]
        proc = subprocess.run(
            [sys.executable, "-m", "depthfuzz", *args], capture_output=True, text=True, timeout=60
        )
        assert proc.returncode == 0
        assert proc.stdout == ""
        assert "paths" in proc.stderr and "max depth" in proc.stderr

    def test_subprocess_target(self, tmp_path):
        script = tmp_path / "t.py"
        script.write_text("import sys\nd=open(sys.argv[1],'rb').read()\nprint('MF_DEPTH=%d' % (d[0] % 4))\n")
        spec = tmp_path / "s.spec"
        spec.write_text("len 2\na 0 8 fuzz\nb 8 8 keep\n")
        corpus = tmp_path / "c"
        corpus.mkdir()
        (corpus / "x").write_bytes(b"\x00\x00")
        code = main([
            "run", "-i", str(corpus), "-o", str(tmp_path / "out"), "--spec", str(spec),
            "--cmd", f"{sys.executable} {script} @@", "--budget-execs", "40", "-q",
            "--timeout-us", "5000000",
        ])
        assert code == 0
        names = [p.name for p in (tmp_path / "out" / "queue").iterdir()]
        assert len(names) > 1


class TestSpecCommands:
    def test_spec_check_ok(self, workspace, capsys):
        _, spec, _ = workspace
        assert main(["spec-check", "--spec", str(spec)]) == 0
        assert "ok" in capsys.readouterr().out

    def test_spec_check_overlap(self, tmp_path, capsys):
        bad = tmp_path / "bad.spec"
        bad.write_text("len 8\na 0 16 fuzz\nb 8 8 keep\n")
        assert main(["spec-check", "--spec", str(bad)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_spec_check_missing_file(self, tmp_path):
        assert main(["spec-check", "--spec", str(tmp_path / "nope")]) == 2

    def test_spec_dump_stdout(self, capsys):
        assert main(["spec-dump", "--target", "nested8"]) == 0
        spec = parse_spec(capsys.readouterr().out)
        assert spec.total_len_bytes == 64
        assert spec.fuzz_bits == 128


def test_eval_command(tmp_path, capsys):
    code = main([
        "eval", "--target", "magic32", "--schedules", "depth,afl", "--trials", "2",
        "--budget-execs", "3000", "--out", str(tmp_path / "e"),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "depth vs afl" in out
    assert (tmp_path / "e" / "summary.csv").exists()


def test_eval_bad_schedule():
    assert main(["eval", "--target", "nested8", "--schedules", "depth,fast"]) == 1
