import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from rmsequiv.data import LmmParams
from rmsequiv.sim import (ConfigError, Scenario, ScenarioError, format_grid_tables,
                          generate_dataset, load_config, run_grid, run_scenario)
from rmsequiv.streams import RandomStream


PARAMS = LmmParams(mu=0.4, sigma_w2=1.1, sigma_b2=0.6)


def tiny_scenario(**kw):
    base = dict(id="tiny", n=6, m_spec=4, params=PARAMS, rho0=1.8,
                alphas=(0.05, 0.01), nsim=40, B=300, seed=17,
                methods=("gt", "zscore"))
    base.update(kw)
    return Scenario(**base)


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------

def test_generate_dataset_zero_between_variance_mean_spread():
    params = LmmParams(mu=0.0, sigma_w2=2.0, sigma_b2=0.0)
    reps = 100_000
    root = RandomStream(5)
    first = np.empty(reps)
    for r in range(reps):
        s = generate_dataset(2, 4, params, root.substream(r))
        first[r] = s.ybar[0]
    target = 2.0 / 4.0
    se = math.sqrt(2.0 / reps) * target  # SE of a chi-square-based variance estimate
    assert float(np.var(first, ddof=1)) == pytest.approx(target, abs=4.0 * se)


def test_generate_dataset_sse_moment():
    params = LmmParams(mu=0.3, sigma_w2=1.6, sigma_b2=0.4)
    reps = 100_000
    root = RandomStream(6)
    vals = np.empty(reps)
    n, m = 3, 3
    df = n * m - n
    for r in range(reps):
        s = generate_dataset(n, m, params, root.substream(r))
        vals[r] = s.sse / df
    se = params.sigma_w2 * math.sqrt(2.0 / (df * reps))
    assert float(np.mean(vals)) == pytest.approx(params.sigma_w2, abs=4.0 * se)


def test_generator_paths_distributionally_equivalent():
    reps = 30_000
    root = RandomStream(7)
    a = np.empty(reps)
    b = np.empty(reps)
    for r in range(reps):
        a[r] = generate_dataset(3, 4, PARAMS, root.substream(0, r), method="sufficient").ybar[0]
        b[r] = generate_dataset(3, 4, PARAMS, root.substream(1, r), method="raw").ybar[0]
    d, _ = stats.ks_2samp(a, b)
    critical = 1.628 * math.sqrt(2.0 / reps)  # two-sample KS at the 1% level
    assert d < critical


def test_raw_generator_summary_shape():
    s = generate_dataset(4, (2, 3, 4, 5), PARAMS, RandomStream(8), method="raw")
    assert s.m == (2, 3, 4, 5)
    assert s.total_n == 14


# ---------------------------------------------------------------------------
# scenario runs
# ---------------------------------------------------------------------------

def test_run_scenario_deterministic_across_parallelism():
    sc = tiny_scenario()
    r1 = run_scenario(sc, parallelism=1)
    r2 = run_scenario(sc, parallelism=2)
    assert r1.methods == r2.methods


def test_run_scenario_log_recomputes_aggregates():
    sc = tiny_scenario(methods=("gt",))
    sink = io.StringIO()
    res = run_scenario(sc, parallelism=1, log_sink=sink)
    records = [json.loads(line) for line in sink.getvalue().splitlines()]
    assert len(records) == sc.nsim
    reject = sum(rec["reject"]["0.05"] for rec in records)
    cover = sum(rec["cover"] for rec in records)
    ms = res.methods["gt"]
    assert reject / sc.nsim == pytest.approx(ms.rejection[0.05][0])
    assert cover / sc.nsim == pytest.approx(ms.coverage)
    widths = [rec["ci_hi"] - rec["ci_lo"] for rec in records]
    assert float(np.mean(widths)) == pytest.approx(ms.avg_ci_width)


def test_run_scenario_reports_binomial_se():
    res = run_scenario(tiny_scenario(methods=("gt",)), parallelism=1)
    ms = res.methods["gt"]
    rate, se = ms.rejection[0.05]
    assert se == pytest.approx(math.sqrt(rate * (1.0 - rate) / ms.n_ok))


def test_run_scenario_failure_threshold(monkeypatch):
    import rmsequiv.sim as simmod

    real = simmod.build_ensemble
    calls = {"k": 0}

    def flaky(*args, **kwargs):
        calls["k"] += 1
        if calls["k"] % 10 == 0:
            raise RuntimeError("synthetic failure")
        return real(*args, **kwargs)

    monkeypatch.setattr(simmod, "build_ensemble", flaky)
    with pytest.raises(ScenarioError):
        run_scenario(tiny_scenario(methods=("gt",)), parallelism=1)


def test_run_grid_empty():
    assert run_grid([]) == []


def test_scenario_validation():
    with pytest.raises(ValueError):
        tiny_scenario(nsim=0)
    with pytest.raises(ValueError):
        tiny_scenario(methods=("nope",))
    with pytest.raises(ValueError):
        tiny_scenario(m_spec=(2, 2))  # wrong length vs n
    with pytest.raises(ValueError):
        tiny_scenario(m_spec=1)  # no replication


# ---------------------------------------------------------------------------
# config loading and table formatting
# ---------------------------------------------------------------------------

def test_load_config_defaults_merge(tmp_path):
    cfg = tmp_path / "grid.yaml"
    cfg.write_text(
        "title: demo\n"
        "defaults:\n"
        "  nsim: 50\n"
        "  B: 300\n"
        "  seed: 4\n"
        "  alpha: [0.05]\n"
        "  methods: [gt]\n"
        "scenarios:\n"
        "  - id: a\n"
        "    n: 5\n"
        "    m: 3\n"
        "    mu: 0.2\n"
        "    sigma_w: 1.0\n"
        "    sigma_b: 0.5\n"
        "    rho0: 1.5\n"
        "  - id: b\n"
        "    n: 4\n"
        "    m_list: [2, 3, 4, 5]\n"
        "    mu: 0.0\n"
        "    sigma_w: 1.0\n"
        "    sigma_b: 0.0\n"
        "    rho0: 2.0\n"
        "    nsim: 25\n"
    )
    title, scenarios = load_config(str(cfg))
    assert title == "demo"
    assert len(scenarios) == 2
    assert scenarios[0].nsim == 50 and scenarios[1].nsim == 25
    assert scenarios[1].m_list() == (2, 3, 4, 5)
    assert scenarios[0].methods == ("gt",)


def test_load_config_collects_all_errors(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(
        "scenarios:\n"
        "  - id: a\n"
        "    n: 5\n"
        "    m: 3\n"
        "    mu: 0.2\n"
        "    sigma_w: 1.0\n"
        "    sigma_b: 0.5\n"
        "    rho0: 1.5\n"
        "    nsim: 0\n"
        "  - id: b\n"
        "    bogus_key: 1\n"
    )
    with pytest.raises(ConfigError) as exc:
        load_config(str(cfg))
    text = "\n".join(exc.value.errors)
    assert "nsim" in text
    assert "bogus_key" in text
    assert "missing" in text


def test_load_config_rejects_bad_yaml(tmp_path):
    cfg = tmp_path / "broken.yaml"
    cfg.write_text("scenarios: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(str(cfg))


def test_format_tables_flat_and_nested():
    flat = run_grid([tiny_scenario(methods=("gt",))])
    text = format_grid_tables(flat)
    assert "GT" in text and "reject@0.05" in text

    cells = [tiny_scenario(id=f"c{i}", frac=frac, ratio=ratio, nsim=10, methods=("gt",))
             for i, (frac, ratio) in enumerate([(0.2, "1:3"), (0.2, "1:1")])]
    nested = format_grid_tables(run_grid(cells))
    assert "1:3" in nested and "rejection rate @ alpha=0.05" in nested
