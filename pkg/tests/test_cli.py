import json
import subprocess
import sys
from pathlib import Path

import pytest

from hadprox.cli import (
    CSV_HEADER,
    EXIT_BUDGET,
    EXIT_CHECK,
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    RunConfig,
    main,
    output_paths,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, name="cfg.json", **cfg):
    cfg.setdefault("out", str(tmp_path / "trace.csv"))
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def run(tmp_path, **cfg):
    return main(["run", "--config", str(write_config(tmp_path, **cfg))])


def test_run_projection_exact(tmp_path):
    assert run(tmp_path, benchmark="projection_euclidean", schedule={"eps_rule": "zero", "eps0": 0.0}) == EXIT_OK
    csv_path, summary_path, iter_path = output_paths(tmp_path / "trace.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) >= 2
    summary = json.loads(summary_path.read_text())["summary"]
    assert summary["final_dist"] <= 1e-6
    assert set(summary) >= {"iterations", "final_residual", "final_dist", "budget_used"}
    assert len(iter_path.read_text().splitlines()) == summary["iterations"] + 1


def test_run_usage_errors(tmp_path, capsys):
    assert run(tmp_path, benchmark="no_such_benchmark") == EXIT_USAGE
    assert "unknown benchmark" in capsys.readouterr().err
    assert run(tmp_path, benchmark="skew_vip", schedule={"lambda_lo": 2.0, "lambda_hi": 1.0}) == EXIT_USAGE
    assert run(tmp_path, benchmark="skew_vip", colour="red") == EXIT_USAGE
    assert run(tmp_path, benchmark="skew_vip", seed=-1) == EXIT_USAGE
    assert run(tmp_path, problem={"chart": {"kind": "euclidean", "n": 2}}) == EXIT_USAGE
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--config", str(bad)]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_budget_exhaustion_exit(tmp_path):
    sched = {"eps_rule": "geometric", "eps0": 0.01, "eps_budget": 0.0}
    assert run(tmp_path, benchmark="projection_euclidean", schedule=sched) == EXIT_BUDGET
    sched = {"eps_rule": "constant", "eps0": 0.1}
    assert run(tmp_path, benchmark="frechet_hyperboloid", schedule=sched) == EXIT_BUDGET


def test_run_is_byte_deterministic(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert run(tmp_path, benchmark="frechet_spd", schedule={"eps_rule": "geometric"}, out=str(out)) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_shipped_configs(tmp_path):
    expected = {
        "projection_exact.json": EXIT_OK,
        "frechet_spd_inexact.json": EXIT_OK,
        "nonsummable.json": EXIT_BUDGET,
        "inline_problem.json": EXIT_OK,
    }
    assert sorted(p.name for p in CONFIGS.glob("*.json")) == sorted(expected)
    for name, code in expected.items():
        out = tmp_path / name.replace(".json", ".csv")
        assert main(["run", "--config", str(CONFIGS / name), "--out", str(out)]) == code, name


def test_run_config_roundtrip():
    cfg = RunConfig.from_dict({"benchmark": "skew_vip", "schedule": {"eps0": 0.02}, "R": 3.0})
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.build_schedule().budget == pytest.approx(0.04)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"benchmark": "skew_vip", "problem": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"benchmark": "skew_vip", "R": 0.0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"benchmark": "skew_vip", "stop": {"max_outer": 0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([1, 2])


def test_verify_geometry(capsys):
    assert main(["verify-geometry", "--chart", "euclidean:3", "--samples", "2000"]) == EXIT_OK
    assert main(["verify-geometry", "--chart", "hyperboloid:2", "--samples", "2000", "--seed", "4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out
    for chart in ("hyperboloid:2", "spd:2", "euclidean:2"):
        assert main(["verify-geometry", "--chart", chart, "--samples", "200", "--inject-corruption"]) == EXIT_INVARIANT
    assert main(["verify-geometry", "--chart", "sphere:2"]) == EXIT_USAGE
    assert main(["verify-geometry", "--samples", "0"]) == EXIT_USAGE


def test_verify_enlargement(capsys):
    assert main(["verify-enlargement", "--chart", "euclidean:2", "--algebra-cases", "20"]) == EXIT_OK
    assert main(["verify-enlargement", "--chart", "hyperboloid:2", "--samples", "2", "--algebra-cases", "20"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "inclusion strict or undetected" in out
    assert main(["verify-enlargement", "--chart", "spd:2", "--eps", "0"]) == EXIT_OK
    assert main(["verify-enlargement", "--eps", "a,b"]) == EXIT_USAGE
    assert main(["verify-enlargement", "--eps", "-1"]) == EXIT_USAGE


@pytest.fixture
def stored_trace(tmp_path):
    def make(benchmark, schedule):
        out = tmp_path / f"{benchmark}.csv"
        assert run(tmp_path, name=f"{benchmark}.json", benchmark=benchmark, schedule=schedule, out=str(out)) == EXIT_OK
        return out

    return make


def tamper(csv_path, k_from_end, fn):
    _, _, iter_path = output_paths(csv_path)
    recs = [json.loads(line) for line in iter_path.read_text().splitlines()]
    rec = recs[-1 - k_from_end]["point"]
    rec["coords"] = fn(rec["coords"])
    iter_path.write_text("".join(json.dumps(r) + "\n" for r in recs))


def test_report_exact_and_tampered(stored_trace, capsys):
    path = stored_trace("frechet_euclidean", {"eps_rule": "zero", "eps0": 0.0})
    assert main(["report", str(path)]) == EXIT_OK
    assert "VIOLATION" not in capsys.readouterr().out
    tamper(path, 1, lambda c: [c[0] + 0.1] + c[1:])
    code = main(["report", str(path)])
    assert code != EXIT_OK and code == EXIT_CHECK
    assert "VIOLATION" in capsys.readouterr().out


def test_report_inexact_trace(stored_trace):
    path = stored_trace("frechet_hyperboloid", {"eps_rule": "geometric"})
    assert main(["report", str(path)]) == EXIT_OK


def test_report_off_chart_iterate(stored_trace):
    path = stored_trace("frechet_hyperboloid", {"eps_rule": "zero", "eps0": 0.0})
    tamper(path, 0, lambda c: [1.01 * c[0]] + c[1:])
    assert main(["report", str(path)]) == EXIT_INVARIANT


def test_report_empty_or_missing(tmp_path, stored_trace):
    assert main(["report", str(tmp_path / "nothing.csv")]) == EXIT_USAGE
    path = stored_trace("projection_euclidean", {"eps_rule": "zero", "eps0": 0.0})
    _, _, iter_path = output_paths(path)
    iter_path.write_text("")
    assert main(["report", str(path)]) == EXIT_USAGE


def test_report_needs_reference(tmp_path):
    out = tmp_path / "inline.csv"
    assert main(["run", "--config", str(CONFIGS / "inline_problem.json"), "--out", str(out)]) == EXIT_OK
    assert main(["report", str(out)]) == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hadprox", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "hadprox" in res.stdout
