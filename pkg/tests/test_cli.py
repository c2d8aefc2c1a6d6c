import json
import subprocess
import sys

import pytest

from mvsr.analysis import records_from_csv
from mvsr.cli import main
from mvsr.experiment import ConfigError, ExperimentConfig, parse_sizes
from mvsr.expr import parse

TINY = {"benchmark": "f1_views", "population_size": 30, "evaluation_budget": 90,
        "max_size": 9, "inner_iterations": 20, "final_iterations": 50, "seeds": [0, 1]}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return path


def _results(out):
    return records_from_csv((out / "results.csv").read_text())


def test_run_is_byte_identical(tmp_path, config):
    for name in ("a", "b"):
        assert main(["run", "--config", str(config), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()
    recs = _results(tmp_path / "a")
    assert len(recs) == 2
    for r in recs:
        parse(r.expression)


def test_run_all_single_views(tmp_path, config):
    out = tmp_path / "o"
    assert main(["run", "--config", str(config), "--run-mode", "all_single_views",
                 "--seed", "3", "--out", str(out)]) == 0
    recs = _results(out)
    assert sorted(r.run_mode for r in recs) == [f"single_view({i})" for i in range(1, 5)]
    assert {r.seed for r in recs} == {3}


def test_missing_data_file_is_config_error(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["run", "--data", str(tmp_path / "nope.csv"), "--out", str(out)])
    assert code == 2
    assert not (out / "results.csv").exists()
    assert "missing data file" in capsys.readouterr().err


def test_bad_flags_and_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"populaton_size": 5}))
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 3
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"run_mode": "single_view(0)"})


def test_sweep_grid(tmp_path, config):
    out = tmp_path / "s"
    assert main(["sweep", "--config", str(config), "--noises", "0,0.1",
                 "--sizes", "5:9:2", "--seed", "0", "--out", str(out)]) == 0
    assert len(_results(out)) == 6
    cells = (out / "heatmap.csv").read_text().splitlines()
    assert cells[0] == "run_mode,noise,max_size,mean_clipped_mse,count"
    assert len(cells) == 1 + 6
    assert parse_sizes("5:25:2") == list(range(5, 26, 2))


def test_generate_then_score(tmp_path, capsys):
    out = tmp_path / "g"
    assert main(["generate", "--benchmark", "f1_views", "--noise", "0.1", "--out", str(out)]) == 0
    meta = json.loads((out / "f1_views_meta.json").read_text())
    assert meta["thetas"][0] == [2.0, 2.0, 0.0, 0.0]
    clean = ",".join(str(out / f"f1_views_view{i}_clean.csv") for i in range(1, 5))
    capsys.readouterr()
    assert main(["score", "--model", "p0 + p1*x0 + p2*square(x0) + p3*(x0*square(x0))",
                 "--data", clean]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[-2] == "n_params\t4"
    assert float(lines[-1].split("\t")[1]) < 1e-16
    assert main(["score", "--model", "x0 +", "--data", clean]) == 2


def test_rank(tmp_path, capsys):
    rows = ["function,run_mode,noise,max_size,seed,n_params,refit_mse,expression"]
    for seed in range(4):
        rows.append(f"f1_views,mvsr,0.0,15,{seed},4,0.0,x0")
        rows.append(f"f1_views,single_view(1),0.0,15,{seed},2,1.0,x0")
        rows.append(f"f1_views,single_view(2),0.0,15,{seed},7,1.0,x0")
    path = tmp_path / "r.csv"
    path.write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    assert main(["rank", "--results", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[:4] == ["method,average_rank", "mvsr,1.0", "single_view(1),2.0", "single_view(2),3.0"]
    assert out[4] == "friedman_chi2,8.0"


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mvsr.cli", "generate", "--benchmark",
                           "f1_partial", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "f1_partial_view4.csv").is_file()
