import json

import numpy as np
import pytest

from rmsequiv.cli import main

from conftest import OXIMETRY_M, OXIMETRY_SSE, OXIMETRY_YBAR


@pytest.fixture
def summary_csv(tmp_path):
    path = tmp_path / "po.csv"
    lines = ["m,mean"] + [f"{m},{y}" for m, y in zip(OXIMETRY_M, OXIMETRY_YBAR)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def last_json(stdout: str) -> dict:
    return json.loads(stdout.strip().splitlines()[-1])


# ---------------------------------------------------------------------------
# test command
# ---------------------------------------------------------------------------

def test_gt_on_summary_csv(capsys, summary_csv):
    code, out, _ = run_cli(capsys, "test", summary_csv, "--format", "summary",
                           "--sse", str(OXIMETRY_SSE), "--rho0", "3", "--alpha", "0.1",
                           "--method", "gt", "--B", "2000", "--seed", "123", "--json")
    assert code == 0
    assert "# rmsequiv test" in out and "seed=123" in out  # replayable header
    rec = last_json(out)
    assert rec["method"] == "GT"
    assert 0.0 < rec["p_value"] < 0.05
    assert rec["B"] == 2000 and rec["seed"] == 123


def test_zscore_on_summary_csv(capsys, summary_csv):
    code, out, _ = run_cli(capsys, "test", summary_csv, "--format", "summary",
                           "--sse", str(OXIMETRY_SSE), "--rho0", "3", "--alpha", "0.1",
                           "--method", "zscore", "--json")
    assert code == 0
    rec = last_json(out)
    assert rec["p_value"] == pytest.approx(0.010, abs=0.002)
    assert rec["ci_rho2"][0] < 0 < rec["ci_rho2"][1]
    assert "CI for rho^2" in out


def test_long_csv_matches_equivalent_summary(capsys, tmp_path, summary_csv):
    # build a long file, derive its exact summary, and check bitwise-equal p-values
    gen = np.random.Generator(np.random.Philox(key=3))
    rows = ["subject,value"]
    groups = {}
    for i in range(5):
        vals = gen.normal(0.2, 1.0, size=4)
        groups[f"s{i}"] = vals
        rows += [f"s{i},{float(v)!r}" for v in vals]
    long_path = tmp_path / "long.csv"
    long_path.write_text("\n".join(rows) + "\n")

    m = [4] * 5
    ybar = [float(np.mean(groups[f"s{i}"])) for i in range(5)]
    sse = sum(float(((groups[f"s{i}"] - np.mean(groups[f"s{i}"])) ** 2).sum())
              for i in range(5))
    sum_path = tmp_path / "sum.csv"
    sum_path.write_text("m,mean\n" + "\n".join(f"{mi},{yi!r}" for mi, yi in zip(m, ybar)) + "\n")

    code1, out1, _ = run_cli(capsys, "test", str(long_path), "--rho0", "2",
                             "--method", "gt", "--B", "1000", "--seed", "9", "--json")
    code2, out2, _ = run_cli(capsys, "test", str(sum_path), "--format", "summary",
                             "--sse", repr(sse), "--rho0", "2",
                             "--method", "gt", "--B", "1000", "--seed", "9", "--json")
    assert code1 == code2 == 0
    assert last_json(out1)["p_value"] == last_json(out2)["p_value"]
    assert last_json(out1)["ci_rho"] == last_json(out2)["ci_rho"]


def test_single_subject_long_csv_exits_3(capsys, tmp_path):
    path = tmp_path / "one.csv"
    path.write_text("subject,value\nA,1.0\nA,2.0\n")
    code, _, err = run_cli(capsys, "test", str(path), "--rho0", "2")
    assert code == 3
    assert "subject" in err.lower()


def test_bad_number_exits_2_with_line(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("subject,value\nA,1.0\nA,oops\nB,2.0\nB,3.0\n")
    code, _, err = run_cli(capsys, "test", str(path), "--rho0", "2")
    assert code == 2
    assert ":3:" in err and "oops" in err


def test_missing_sse_exits_2(capsys, summary_csv):
    code, _, err = run_cli(capsys, "test", summary_csv, "--format", "summary",
                           "--rho0", "3")
    assert code == 2
    assert "--sse" in err


def test_bad_parameters_exit_2(capsys, summary_csv):
    with pytest.raises(SystemExit) as exc:
        main(["test", summary_csv, "--format", "summary", "--sse", "221.037",
              "--rho0", "-1"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_wrong_header_exits_2(capsys, tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("id,val\nA,1\n")
    code, _, err = run_cli(capsys, "test", str(path), "--rho0", "2")
    assert code == 2
    assert "header" in err


# ---------------------------------------------------------------------------
# estimate command
# ---------------------------------------------------------------------------

def test_estimate_oximetry(capsys, summary_csv):
    code, out, _ = run_cli(capsys, "estimate", summary_csv, "--format", "summary",
                           "--sse", str(OXIMETRY_SSE), "--json")
    assert code == 0
    rec = last_json(out)
    assert rec["converged"] is True
    assert rec["estimates"]["rho"] == pytest.approx(1.836, abs=0.01)
    assert "neg2loglik" in rec


def test_estimate_zero_sse_exits_3(capsys, tmp_path):
    path = tmp_path / "const.csv"
    path.write_text("subject,value\nA,1.0\nA,1.0\nB,2.0\nB,2.0\n")
    code, _, err = run_cli(capsys, "estimate", str(path))
    assert code == 3
    assert "sse" in err


# ---------------------------------------------------------------------------
# simulate command
# ---------------------------------------------------------------------------

SMALL_CFG = """
title: smoke grid
defaults:
  nsim: 30
  B: 300
  seed: 11
  alpha: [0.05]
  methods: [gt, zscore]
scenarios:
  - id: cell
    n: 5
    m: 3
    mu: 0.3
    sigma_w: 1.0
    sigma_b: 0.5
    rho0: 1.6
"""


def test_simulate_runs_and_writes_outputs(capsys, tmp_path):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text(SMALL_CFG)
    out_path = tmp_path / "res.json"
    log_path = tmp_path / "log.jsonl"
    code, out, _ = run_cli(capsys, "simulate", str(cfg), "--out", str(out_path),
                           "--log", str(log_path), "--parallelism", "1")
    assert code == 0
    assert "total runtime" in out
    doc = json.loads(out_path.read_text())
    assert doc["results"][0]["id"] == "cell"
    lines = log_path.read_text().splitlines()
    assert len(lines) == 30 * 2  # nsim x methods
    json.loads(lines[0])


def test_simulate_parallelism_determinism(capsys, tmp_path):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text(SMALL_CFG)
    outs = []
    for par, name in ((1, "a.json"), (2, "b.json")):
        out_path = tmp_path / name
        code, _, _ = run_cli(capsys, "simulate", str(cfg), "--out", str(out_path),
                             "--parallelism", str(par))
        assert code == 0
        doc = json.loads(out_path.read_text())
        for res in doc["results"]:
            res.pop("runtime_sec")
        outs.append(doc)
    assert outs[0] == outs[1]


def test_simulate_invalid_config_exits_2(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL_CFG.replace("nsim: 30", "nsim: 0"))
    code, _, err = run_cli(capsys, "simulate", str(cfg))
    assert code == 2
    assert "nsim" in err


def test_simulate_missing_config_exits_2(capsys):
    code, _, err = run_cli(capsys, "simulate", "no-such-config.cfg")
    assert code == 2
    assert "not found" in err


def test_bundled_configs_resolve_and_parse():
    from rmsequiv.cli import _resolve_config
    from rmsequiv.sim import load_config

    for name in ("table1.cfg", "table2.cfg", "table3.cfg"):
        path = _resolve_config(name)
        title, scenarios = load_config(path)
        assert scenarios, name
    # table2 is the 9-cell balanced grid with layout metadata
    _, cells = load_config(_resolve_config("table2.cfg"))
    assert len(cells) == 9
    assert {sc.ratio for sc in cells} == {"1:3", "1:1", "3:1"}
