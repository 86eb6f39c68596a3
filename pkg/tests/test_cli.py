import json
import shutil
import subprocess

import pytest

from pas.cli import main
from pas.scenario import bundled_path, default_scenario, dumps_scenario, scenario_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def short_scenario(tmp_path):
    doc = scenario_to_dict(default_scenario())
    doc["horizon_hours"] = 2.0
    doc["mean_invocations_per_hour"] = 200
    p = tmp_path / "short.json"
    p.write_text(json.dumps(doc))
    return p


class TestVerify:
    def test_depth1_violating(self, capsys):
        code, out, _ = run(capsys, "verify", "--engine", "rqv", "--config", "A=2;M=2;D=1")
        assert code == 0
        assert "0.0765895" in out and "18.64755" in out
        assert "Violating" in out and "7 states" in out

    def test_parametric_compliant_json(self, capsys):
        code, out, _ = run(capsys, "verify", "--engine", "rqv-parametric", "--config", "A=4,1;M=4,2;D=4,1", "--json")
        doc = json.loads(out)
        assert code == 0 and doc["verdict"] == "Compliant"
        assert doc["failure_probability"] == pytest.approx(0.0100223665, abs=1e-10)
        assert doc["interval"] is None

    def test_rsmc_seeded_is_deterministic(self, capsys):
        argv = ("verify", "--engine", "rsmc", "--strategy", "0.1,0.1", "--seed", "7", "--json")
        a = run(capsys, *argv)[1]
        b = run(capsys, *argv)[1]
        assert a == b
        doc = json.loads(a)
        assert doc["evidence"]["volume"] == 150
        lo, hi = doc["interval"]
        assert lo <= doc["failure_probability"] <= hi

    def test_seed_precedence(self, capsys, monkeypatch):
        argv = ("verify", "--engine", "rsmc", "--strategy", "0.1,0.1", "--json")
        monkeypatch.setenv("PAS_SEED", "7")
        env = run(capsys, *argv)[1]
        flag = run(capsys, *argv, "--seed", "7")[1]
        assert env == flag
        monkeypatch.setenv("PAS_SEED", "nope")
        assert run(capsys, *argv)[0] == 1


class TestExitCodes:
    def test_usage(self):
        with pytest.raises(SystemExit) as info:
            main(["verify", "--engine", "prism"])
        assert info.value.code == 1
        with pytest.raises(SystemExit) as info:
            main(["bench", "--out", "x", "--strategy", "0.05"])
        assert info.value.code == 1

    def test_strategy_with_exact_engine(self, capsys):
        code, _, err = run(capsys, "verify", "--engine", "rqv", "--strategy", "0.1,0.1")
        assert code == 1 and "--strategy" in err

    def test_invalid_scenario_names_field(self, capsys, tmp_path):
        doc = scenario_to_dict(default_scenario())
        doc["registry"][0]["cost"] = -1
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        code, _, err = run(capsys, "verify", "--scenario", str(p))
        assert code == 2 and "$.registry[0].cost" in err

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "verify", "--scenario", str(tmp_path / "none.json"))[0] == 2

    def test_unknown_service_in_config(self, capsys):
        code, _, err = run(capsys, "verify", "--config", "A=9;M=1;D=1")
        assert code == 2 and "Alarm:9" in err

    def test_runtime_failure(self, capsys, tmp_path):
        code, _, err = run(capsys, "report", "--out", str(tmp_path / "empty"))
        assert code == 2
        (tmp_path / "ro").write_text("not a directory")
        code, _, err = run(capsys, "bench", "--scenario", str(bundled_path("tas-default.json")), "--reps", "1",
                           "--engine", "rqv", "--out", str(tmp_path / "ro" / "sub"))
        assert code == 3 and "runtime failure" in err


class TestRunAndBench:
    def test_run_writes_trace_and_evidence(self, capsys, tmp_path, short_scenario):
        code, out, _ = run(capsys, "run", "--scenario", str(short_scenario), "--engine", "rqv",
                           "--out", str(tmp_path / "o"))
        assert code == 0
        trace = (tmp_path / "o" / "trace.jsonl").read_text().splitlines()
        assert json.loads(trace[0])["kind"] == "episode"
        evidence = (tmp_path / "o" / "evidence.jsonl").read_text().splitlines()
        assert len(evidence) >= 1
        verifications = [json.loads(x) for x in trace if json.loads(x)["kind"] == "verification"]
        assert len(verifications) >= 2

    def test_bench_and_report_round_trip(self, capsys, tmp_path, short_scenario):
        out = tmp_path / "b"
        code, _, _ = run(capsys, "bench", "--scenario", str(short_scenario), "--reps", "2",
                         "--strategy", "0.1,0.1", "--timing", "none", "--out", str(out))
        assert code == 0
        first = (out / "results.csv").read_text()
        assert len(first.splitlines()) == 1 + 2 * 2
        (out / "results.csv").rename(out / "kept.csv")
        shutil.copy(out / "kept.csv", out / "results.csv")
        assert run(capsys, "report", "--out", str(out))[0] == 0
        assert (out / "results.csv").read_text() == first

    def test_console_script(self):
        exe = shutil.which("pas")
        if exe is None:
            pytest.skip("console script not installed")
        res = subprocess.run([exe, "verify", "--config", "A=2;M=2;D=1"], capture_output=True, text=True)
        assert res.returncode == 0 and "Violating" in res.stdout


def test_bundled_scenario_serializes(tmp_path):
    assert dumps_scenario(default_scenario()) == bundled_path("tas-default.json").read_text()
