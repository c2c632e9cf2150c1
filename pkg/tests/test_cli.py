import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cachelattice.cli import main, run_compare
from cachelattice.config import config_hash, load_config
from cachelattice.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SKEW = CONFIGS / "skew512.json"
MATMUL4 = CONFIGS / "matmul4.json"


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_json(capsys, *argv):
    code = main([*argv, "--json"])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_analyze_skew_det(capsys):
    code, rep = run_json(capsys, "analyze", "--config", str(SKEW))
    assert code == 0
    assert rep["operands"][0]["det"] == 512


def test_tile_baseline_rect_csv(tmp_path, capsys):
    code = main(["tile", "--config", str(SKEW), "--baseline-rect", "--out", str(tmp_path)])
    assert code == 0
    capsys.readouterr()
    rows = list(csv.DictReader((tmp_path / "tile.csv").read_text().splitlines()))
    vols = {r["label"]: int(r["volume"]) for r in rows}
    assert vols["max_rect"] == 453 and vols["reference_rect"] == 416
    assert int(rows[0]["volume"]) == 512
    pct = {r["label"]: float(r["savings_pct"]) for r in rows}
    assert abs(pct["max_rect"] - 13) <= 1 and abs(pct["reference_rect"] - 24) <= 1
    rep = json.loads((tmp_path / "tile.json").read_text())
    assert rep["det"] == 512 and rep["max_rectangle"]["volume"] == 453


def test_simulate_empty_trace(tmp_path, capsys):
    trace = tmp_path / "empty.trace"
    trace.write_text("")
    code, rep = run_json(capsys, "simulate", "--config", str(MATMUL4), "--trace", str(trace))
    assert code == 0
    assert rep["records"] == 0
    assert rep["hits"] == rep["cold"] == rep["conflict"] == 0


def test_simulate_table_only_config_is_empty(capsys):
    code, rep = run_json(capsys, "simulate", "--config", str(SKEW))
    assert code == 0 and rep["records"] == 0 and rep["misses"] == 0


def test_exit_code_config_errors(tmp_path, capsys):
    assert main(["analyze", "--config", str(tmp_path / "missing.json")]) == 2
    bad = write_cfg(tmp_path, {"cache": {"capacity": 8, "line": 1, "assoc": 1}, "bogus": 1})
    assert main(["analyze", "--config", bad]) == 2
    bad = write_cfg(tmp_path, {"cache": {"capacity": 6, "line": 4, "assoc": 1}, "op": "dot",
                               "sizes": {"n": 4}})
    assert main(["analyze", "--config", bad]) == 2
    assert "error" in capsys.readouterr().err


def test_exit_code_infeasible(tmp_path, capsys):
    # a 2-element table cannot reach a second line of a 4-set cache
    cfg = write_cfg(tmp_path, {"cache": {"capacity": 64, "line": 4, "assoc": 1},
                               "tables": [{"name": "T", "dims": [2], "offset": 3}]})
    assert main(["analyze", "--config", cfg]) == 3
    assert "infeasible" in capsys.readouterr().err


def test_reports_reproducible(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["compare", "--config", str(MATMUL4), "--out", str(d)]) == 0
        outs.append((d / "compare.json").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]
    assert b"time" not in outs[0]


def test_hash_stable_across_key_order(tmp_path):
    a = {"cache": {"capacity": 4, "line": 1, "assoc": 2}, "op": "matmul", "sizes": {"n": 4}}
    b = {"sizes": {"n": 4}, "op": "matmul", "cache": {"assoc": 2, "line": 1, "capacity": 4}}
    assert config_hash(a) == config_hash(b)
    assert load_config(write_cfg(tmp_path, a, "a.json")).hash == \
        load_config(write_cfg(tmp_path, b, "b.json")).hash


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        load_config({"cache": {"capacity": 4, "line": 1, "assoc": 2, "ways": 3}, "op": "dot",
                     "sizes": {"n": 2}})
    with pytest.raises(ConfigError):
        load_config({"cache": {"capacity": 4, "line": 1, "assoc": 2}})


def test_whole_domain_tile_equals_untiled(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"cache": {"capacity": 2, "line": 1, "assoc": 2}, "op": "matmul",
                               "sizes": {"n": 5}, "sets": "all"})
    code, rep = run_json(capsys, "misses", "--config", cfg, "--tiled")
    assert code == 0
    assert rep["plan"]["kind"] == "rect" and rep["tiled"]["tiles"] == 1
    assert rep["tiled"]["total"] == rep["untiled"]["total"]


def test_single_set_model_counts_lines(tmp_path):
    # N=1 and K at least the number of lines touched: only cold misses
    cfg = load_config({"cache": {"capacity": 64, "line": 2, "assoc": 32}, "op": "matmul",
                       "sizes": {"n": 4}, "sets": "all"})
    rep = run_compare(cfg)
    lines = 3 * 16 // 2
    assert rep["untiled"]["model"]["total"] == lines
    assert rep["untiled"]["sim"]["cold"] == lines and rep["untiled"]["sim"]["conflict"] == 0


def test_compare_matmul4():
    rep = run_compare(load_config(str(MATMUL4)))
    u = rep["untiled"]
    assert u["direct_oracle"] == u["model"]["total"] == 144
    assert u["delta"] == u["model"]["total"] - u["sim_restricted"]["misses"]


def test_misses_per_set_flag(capsys):
    code, rep = run_json(capsys, "misses", "--config", str(MATMUL4), "--per-set")
    assert code == 0 and sum(rep["untiled"]["per_set"].values()) == rep["untiled"]["total"]
    code, rep = run_json(capsys, "misses", "--config", str(MATMUL4))
    assert "per_set" not in rep["untiled"]


def test_codegen_writes_c(tmp_path, capsys):
    code = main(["codegen", "--config", str(MATMUL4), "--out", str(tmp_path), "--parallel"])
    assert code == 0
    capsys.readouterr()
    src = (tmp_path / "cl_matmul.c").read_text()
    rep = json.loads((tmp_path / "codegen.json").read_text())
    assert rep["config_hash"] in src
    assert src.count("omp parallel") == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cachelattice", "analyze", "--config", str(SKEW),
                        "--json"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["operands"][0]["det"] == 512
