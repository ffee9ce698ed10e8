"""Deterministic parallel replication engine for operating-characteristic studies.

A :class:`Scenario` fixes the design (subject count, per-subject sizes,
generating parameters, threshold, test levels, replication counts, seed,
methods).  Replicate ``r`` derives every variate from the substream
``(scenario seed, r)``, so results are bit-identical for any worker count and
fully recomputable from a per-replicate log.

Scenario grids load from YAML config files shaped like::

    title: balanced size grid
    defaults: {nsim: 2000, B: 2000, seed: 1, alpha: [0.05, 0.01], methods: [gt, zscore]}
    scenarios:
      - id: cell-0.2-1to1
        n: 20
        m: 10                 # or m_list: [5, 6, ...]
        mu: 2.683281573
        sigma_w: 0.948683298
        sigma_b: 0.948683298
        rho0: 3.0
        frac: 0.2             # optional table-layout metadata
        ratio: "1:1"
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .data import LmmParams, SummaryStats, rms, summarize, GroupedSample
from .estimate import fit_mle
from .gt import build_ensemble
from .streams import RandomStream
from .ztests import z_score_test, z_wald_test

__all__ = [
    "METHODS",
    "Scenario",
    "MethodSummary",
    "ScenarioResult",
    "ScenarioError",
    "ConfigError",
    "generate_dataset",
    "run_scenario",
    "run_grid",
    "load_config",
    "format_grid_tables",
]

METHODS = ("gt", "gt-plain", "zscore", "zwald")
_METHOD_LABELS = {"gt": "GT", "gt-plain": "GT-plain-MC", "zscore": "Z-score", "zwald": "Z-Wald"}
_REPLICATE_CHUNK = 64
_MAX_FAILURE_FRACTION = 0.01


class ScenarioError(RuntimeError):
    """Raised when a scenario cannot produce a trustworthy result."""


class ConfigError(ValueError):
    """Raised on config parse/validation problems; ``.errors`` lists all of them."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class Scenario:
    """One simulation cell."""

    id: str
    n: int
    m_spec: int | tuple[int, ...]
    params: LmmParams
    rho0: float
    alphas: tuple[float, ...] = (0.05,)
    ci_level: float = 0.90
    nsim: int = 2000
    B: int = 2000
    seed: int = 0
    methods: tuple[str, ...] = ("gt", "zscore")
    generator: str = "sufficient"
    frac: float | None = None
    ratio: str | None = None

    def __post_init__(self):
        if self.nsim < 1:
            raise ValueError(f"nsim must be >= 1, got {self.nsim}")
        if self.B < 100:
            raise ValueError(f"B must be >= 100, got {self.B}")
        if not (self.rho0 > 0.0):
            raise ValueError(f"rho0 must be > 0, got {self.rho0!r}")
        if not all(0.0 < a < 1.0 for a in self.alphas):
            raise ValueError(f"alphas must lie in (0, 1), got {self.alphas!r}")
        if not (0.0 < self.ci_level < 1.0):
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level!r}")
        for meth in self.methods:
            if meth not in METHODS:
                raise ValueError(f"unknown method {meth!r}; choices: {METHODS}")
        if self.generator not in ("sufficient", "raw"):
            raise ValueError(f"generator must be 'sufficient' or 'raw', got {self.generator!r}")
        m = self.m_list()
        if len(m) != self.n:
            raise ValueError(f"m_spec yields {len(m)} subjects but n = {self.n}")
        if any(v < 1 for v in m):
            raise ValueError("all subject sizes must be >= 1")
        if sum(m) - self.n < 1:
            raise ValueError("design has no replication (N - n = 0)")

    def m_list(self) -> tuple[int, ...]:
        if isinstance(self.m_spec, int):
            return (self.m_spec,) * self.n
        return tuple(int(v) for v in self.m_spec)

    @property
    def true_rho(self) -> float:
        return rms(self.params)


def generate_dataset(n: int, m_spec, params: LmmParams, rng: RandomStream,
                     method: str = "sufficient") -> SummaryStats:
    """Draw one dataset from the one-way random-effects model.

    "sufficient" samples the summary statistics from their exact laws
    (subject means normal around mu, pooled sse a scaled chi-square);
    "raw" samples every measurement and reduces it.  The two paths are
    distributionally identical.
    """
    m = (m_spec,) * n if isinstance(m_spec, int) else tuple(int(v) for v in m_spec)
    if len(m) != n:
        raise ValueError(f"m_spec yields {len(m)} subjects but n = {n}")
    gen = rng.generator()
    marr = np.asarray(m, dtype=np.float64)
    N = int(marr.sum())
    sw = math.sqrt(params.sigma_w2)
    sb = math.sqrt(params.sigma_b2)
    if method == "sufficient":
        ybar = gen.normal(params.mu, np.sqrt(params.sigma_b2 + params.sigma_w2 / marr))
        sse = params.sigma_w2 * float(gen.chisquare(N - n))
        return SummaryStats(m=m, ybar=tuple(float(v) for v in ybar), sse=sse)
    if method == "raw":
        u = gen.normal(0.0, sb, size=n) if sb > 0 else np.zeros(n)
        eps = gen.normal(0.0, sw, size=N)
        groups = []
        pos = 0
        for i in range(n):
            vals = params.mu + u[i] + eps[pos:pos + m[i]]
            groups.append((f"s{i + 1}", tuple(float(v) for v in vals)))
            pos += m[i]
        return summarize(GroupedSample(groups))
    raise ValueError(f"unknown generator {method!r}")


def _run_replicates(sc: Scenario, r0: int, r1: int) -> list[dict]:
    """Replicates [r0, r1): pure function of (scenario, index)."""
    from .data import Hypothesis  # local import keeps worker pickling light

    records = []
    root = RandomStream(sc.seed)
    want_gt = "gt" in sc.methods
    want_plain = "gt-plain" in sc.methods
    want_z = "zscore" in sc.methods or "zwald" in sc.methods
    alpha_ci = 1.0 - sc.ci_level
    for r in range(r0, r1):
        rep = root.substream(r)
        summary = generate_dataset(sc.n, sc.m_spec, sc.params, rep.substream(0),
                                   method=sc.generator)
        out: dict = {"r": r, "methods": {}}
        ens = None
        if want_gt or want_plain:
            try:
                ens = build_ensemble(summary, sc.B, rep.substream(1), with_z=want_plain)
            except Exception as exc:
                for meth in ("gt", "gt-plain"):
                    if meth in sc.methods:
                        out["methods"][meth] = {"error": f"{type(exc).__name__}: {exc}"}
        if ens is not None and want_gt:
            try:
                lo, hi = ens.ci(alpha_ci)
                out["methods"]["gt"] = {"p": ens.pvalue(sc.rho0), "lo": lo, "hi": hi}
            except Exception as exc:
                out["methods"]["gt"] = {"error": f"{type(exc).__name__}: {exc}"}
        if ens is not None and want_plain:
            try:
                lo, hi = ens.ci_plain(alpha_ci)
                out["methods"]["gt-plain"] = {"p": ens.pvalue_plain(sc.rho0), "lo": lo, "hi": hi}
            except Exception as exc:
                out["methods"]["gt-plain"] = {"error": f"{type(exc).__name__}: {exc}"}
        if want_z:
            hyp = Hypothesis(rho0=sc.rho0, alpha=alpha_ci)
            try:
                fit = fit_mle(summary)
            except Exception as exc:
                msg = {"error": f"{type(exc).__name__}: {exc}"}
                for meth in ("zscore", "zwald"):
                    if meth in sc.methods:
                        out["methods"][meth] = dict(msg)
            else:
                if "zscore" in sc.methods:
                    try:
                        res = z_score_test(summary, hyp, unconstrained=fit)
                        lo, hi = res.ci_rho
                        out["methods"]["zscore"] = {"p": res.p_value, "lo": lo, "hi": hi}
                    except Exception as exc:
                        out["methods"]["zscore"] = {"error": f"{type(exc).__name__}: {exc}"}
                if "zwald" in sc.methods:
                    try:
                        res = z_wald_test(summary, hyp, unconstrained=fit)
                        lo, hi = res.ci_rho
                        out["methods"]["zwald"] = {"p": res.p_value, "lo": lo, "hi": hi}
                    except Exception as exc:
                        out["methods"]["zwald"] = {"error": f"{type(exc).__name__}: {exc}"}
        records.append(out)
    return records


@dataclass(frozen=True)
class MethodSummary:
    """Aggregated operating characteristics for one method in one scenario."""

    rejection: dict[float, tuple[float, float]]   # alpha -> (rate, binomial se)
    coverage: float
    coverage_se: float
    avg_ci_width: float
    failures: int
    n_ok: int


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    methods: dict[str, MethodSummary]
    runtime: float

    def to_dict(self) -> dict:
        sc = self.scenario
        return {
            "id": sc.id,
            "n": sc.n,
            "m": list(sc.m_list()),
            "mu": sc.params.mu,
            "sigma_w": sc.params.sigma_w,
            "sigma_b": sc.params.sigma_b,
            "true_rho": sc.true_rho,
            "rho0": sc.rho0,
            "alphas": list(sc.alphas),
            "ci_level": sc.ci_level,
            "nsim": sc.nsim,
            "B": sc.B,
            "seed": sc.seed,
            "frac": sc.frac,
            "ratio": sc.ratio,
            "runtime_sec": self.runtime,
            "methods": {
                name: {
                    "rejection": {str(a): {"rate": r, "se": se}
                                  for a, (r, se) in ms.rejection.items()},
                    "coverage": ms.coverage,
                    "coverage_se": ms.coverage_se,
                    "avg_ci_width": ms.avg_ci_width,
                    "failures": ms.failures,
                    "n_ok": ms.n_ok,
                }
                for name, ms in self.methods.items()
            },
        }


def _binomial_se(rate: float, count: int) -> float:
    if count <= 0:
        return float("nan")
    return math.sqrt(rate * (1.0 - rate) / count)


def run_scenario(sc: Scenario, parallelism: int = 1, log_sink=None) -> ScenarioResult:
    """Run all replicates of one scenario and aggregate.

    Replicates are processed in fixed index order; ``parallelism`` only
    distributes fixed chunks across worker processes, so the result is
    identical for any degree.  ``log_sink``, when given, receives one
    JSON line per (replicate, method).
    """
    t0 = time.perf_counter()
    spans = [(a, min(a + _REPLICATE_CHUNK, sc.nsim))
             for a in range(0, sc.nsim, _REPLICATE_CHUNK)]
    if parallelism > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            blocks = list(pool.map(_run_replicates, [sc] * len(spans),
                                   [a for a, _ in spans], [b for _, b in spans]))
    else:
        blocks = [_run_replicates(sc, a, b) for a, b in spans]

    records = [rec for block in blocks for rec in block]
    records.sort(key=lambda rec: rec["r"])

    rho_true = sc.true_rho
    summaries: dict[str, MethodSummary] = {}
    per_method: dict[str, dict] = {
        meth: {"rej": {a: 0 for a in sc.alphas}, "cover": 0, "width": 0.0,
               "ok": 0, "fail": 0}
        for meth in sc.methods
    }
    for rec in records:
        for meth in sc.methods:
            cell = rec["methods"].get(meth)
            acc = per_method[meth]
            if cell is None or "error" in cell:
                acc["fail"] += 1
                continue
            acc["ok"] += 1
            p, lo, hi = cell["p"], cell["lo"], cell["hi"]
            cover = lo <= rho_true <= hi
            acc["cover"] += cover
            acc["width"] += hi - lo
            for a in sc.alphas:
                acc["rej"][a] += p <= a
            if log_sink is not None:
                log_sink.write(json.dumps({
                    "scenario": sc.id, "replicate": rec["r"], "method": meth,
                    "p": p, "ci_lo": lo, "ci_hi": hi,
                    "reject": {str(a): bool(p <= a) for a in sc.alphas},
                    "cover": bool(cover),
                }, sort_keys=True) + "\n")

    for meth, acc in per_method.items():
        ok = acc["ok"]
        if acc["fail"] > _MAX_FAILURE_FRACTION * sc.nsim:
            raise ScenarioError(
                f"scenario {sc.id!r}: method {meth!r} failed on {acc['fail']}/{sc.nsim} replicates"
            )
        rejection = {}
        for a in sc.alphas:
            rate = acc["rej"][a] / ok if ok else float("nan")
            rejection[a] = (rate, _binomial_se(rate, ok))
        cov = acc["cover"] / ok if ok else float("nan")
        summaries[meth] = MethodSummary(
            rejection=rejection,
            coverage=cov,
            coverage_se=_binomial_se(cov, ok),
            avg_ci_width=acc["width"] / ok if ok else float("nan"),
            failures=acc["fail"],
            n_ok=ok,
        )
    return ScenarioResult(scenario=sc, methods=summaries,
                          runtime=time.perf_counter() - t0)


def run_grid(scenarios: list[Scenario], parallelism: int = 1,
             log_sink=None) -> list[ScenarioResult]:
    """Run a list of scenarios; replicates parallelize within each scenario."""
    return [run_scenario(sc, parallelism=parallelism, log_sink=log_sink)
            for sc in scenarios]


# ---------------------------------------------------------------------------
# config loading
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = {"id", "n", "m", "m_list", "mu", "sigma_w", "sigma_b", "rho0",
                  "alpha", "ci_level", "nsim", "B", "seed", "methods",
                  "generator", "frac", "ratio"}


def _as_alphas(value) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),)
    return tuple(float(v) for v in value)


def load_config(path: str) -> tuple[str, list[Scenario]]:
    """Parse and validate a YAML scenario-grid config.

    All problems are collected and raised together as :class:`ConfigError`.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"YAML parse error: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a mapping"])

    title = str(doc.get("title", ""))
    defaults = doc.get("defaults", {}) or {}
    if not isinstance(defaults, dict):
        raise ConfigError(["'defaults' must be a mapping"])
    raw_scenarios = doc.get("scenarios")
    if not isinstance(raw_scenarios, list) or not raw_scenarios:
        raise ConfigError(["'scenarios' must be a non-empty list"])

    errors: list[str] = []
    scenarios: list[Scenario] = []
    for i, raw in enumerate(raw_scenarios):
        where = f"scenarios[{i}]"
        if not isinstance(raw, dict):
            errors.append(f"{where}: must be a mapping")
            continue
        merged = {**defaults, **raw}
        unknown = set(merged) - _SCENARIO_KEYS
        if unknown:
            errors.append(f"{where}: unknown keys {sorted(unknown)}")
        missing = [k for k in ("n", "mu", "sigma_w", "sigma_b", "rho0") if k not in merged]
        if "m" not in merged and "m_list" not in merged:
            missing.append("m or m_list")
        if missing:
            errors.append(f"{where}: missing keys {missing}")
            continue
        try:
            m_spec = int(merged["m"]) if "m" in merged else tuple(int(v) for v in merged["m_list"])
            params = LmmParams(mu=float(merged["mu"]),
                               sigma_w2=float(merged["sigma_w"]) ** 2,
                               sigma_b2=float(merged["sigma_b"]) ** 2)
            sc = Scenario(
                id=str(merged.get("id", f"scenario-{i}")),
                n=int(merged["n"]),
                m_spec=m_spec,
                params=params,
                rho0=float(merged["rho0"]),
                alphas=_as_alphas(merged.get("alpha", 0.05)),
                ci_level=float(merged.get("ci_level", 0.90)),
                nsim=int(merged.get("nsim", 2000)),
                B=int(merged.get("B", 2000)),
                seed=int(merged.get("seed", 0)),
                methods=tuple(str(v) for v in merged.get("methods", ["gt", "zscore"])),
                generator=str(merged.get("generator", "sufficient")),
                frac=None if merged.get("frac") is None else float(merged["frac"]),
                ratio=None if merged.get("ratio") is None else str(merged["ratio"]),
            )
        except (TypeError, ValueError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        scenarios.append(sc)
    if errors:
        raise ConfigError(errors)
    return title, scenarios


# ---------------------------------------------------------------------------
# table emission
# ---------------------------------------------------------------------------

_RATIO_ORDER = ("1:3", "1:1", "3:1")


def _fmt_rate(rate: float) -> str:
    return f"{rate:.4f}"


def format_grid_tables(results: list[ScenarioResult]) -> str:
    """Render results as text tables.

    When every result carries (frac, ratio) metadata the layout nests ratio
    columns inside variance-fraction blocks, mirroring the usual presentation
    of balanced grids; otherwise one flat table is produced.
    """
    if results and all(r.scenario.frac is not None and r.scenario.ratio is not None
                       for r in results):
        return _format_nested(results)
    return _format_flat(results)


def _format_flat(results: list[ScenarioResult]) -> str:
    lines = []
    for res in results:
        sc = res.scenario
        lines.append(f"scenario {sc.id}  (n={sc.n}, rho0={sc.rho0:g}, true rho={sc.true_rho:.4f}, "
                     f"nsim={sc.nsim}, B={sc.B}, seed={sc.seed})")
        header = ["method"] + [f"reject@{a:g}" for a in sc.alphas] + \
                 [f"CP@{sc.ci_level:g}", "AW", "failures"]
        lines.append("  " + "  ".join(f"{h:>12s}" for h in header))
        for meth in sc.methods:
            ms = res.methods[meth]
            cells = [f"{_METHOD_LABELS[meth]:>12s}"]
            cells += [f"{_fmt_rate(ms.rejection[a][0]):>12s}" for a in sc.alphas]
            cells += [f"{ms.coverage:>12.4f}", f"{ms.avg_ci_width:>12.4f}",
                      f"{ms.failures:>12d}"]
            lines.append("  " + "  ".join(cells))
        lines.append("")
    return "\n".join(lines)


def _format_nested(results: list[ScenarioResult]) -> str:
    fracs = sorted({res.scenario.frac for res in results})
    by_cell = {(res.scenario.frac, res.scenario.ratio): res for res in results}
    ref = results[0].scenario
    methods = ref.methods
    lines = [f"columns: variance fraction blocks {fracs}, ratio order {list(_RATIO_ORDER)}"
             f"  (nsim={ref.nsim}, B={ref.B})"]
    head = f"{'':12s}" + "".join(f"{f'({frac:g}) ' + ratio:>10s}"
                                 for frac in fracs for ratio in _RATIO_ORDER)
    sections: list[tuple[str, callable]] = [
        (f"rejection rate @ alpha={a:g}",
         lambda ms, a=a: _fmt_rate(ms.rejection[a][0])) for a in ref.alphas
    ]
    sections.append((f"coverage of {ref.ci_level:g} CI", lambda ms: f"{ms.coverage:.4f}"))
    sections.append(("average CI width", lambda ms: f"{ms.avg_ci_width:.4f}"))
    for caption, extract in sections:
        lines.append(f"-- {caption}")
        lines.append(head)
        for meth in methods:
            row = [f"{_METHOD_LABELS[meth]:12s}"]
            for frac in fracs:
                for ratio in _RATIO_ORDER:
                    res = by_cell.get((frac, ratio))
                    row.append(f"{extract(res.methods[meth]) if res else '-':>10s}")
            lines.append("".join(row))
    lines.append("")
    return "\n".join(lines)
