"""Simulation benchmarks: sparse/dense SHD tables, variance perturbation sweep,
the non-faithful example and a population-level identifiability study.

Every replicate draws its model, data and search seeds from
``(master seed, scenario, p, n, a, replicate index)``, so results do not
depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Cpdag, shd, to_cpdag
from .score import CovarianceSummary, sample_covariance
from .search import SearchConfig, best_score_select, exhaustive_search, gds_eev
from .sem import (
    DENSE_EDGE_PROB,
    RandomModelConfig,
    nonfaithful_example,
    perturbation_edge_prob,
    population_covariance,
    random_model,
    sample,
    sparse_edge_prob,
)

SCENARIOS = ("sparse", "dense", "perturbation", "nonfaithful")
METHODS = ("gds_eev", "gds_pernode")
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)
DEFAULT_A_VALUES = tuple(round(0.1 * i, 1) for i in range(10))

_DEFAULTS = {
    "sparse": {"p": [5], "n": [1000], "a": [0.0]},
    "dense": {"p": [5], "n": [1000], "a": [0.0]},
    "perturbation": {"p": [10], "n": [500], "a": list(DEFAULT_A_VALUES)},
    "nonfaithful": {"p": [3], "n": [500], "a": [0.0]},
}


class SpecError(ValueError):
    def __init__(self, problems):
        self.problems = problems
        super().__init__("invalid benchmark spec: " + "; ".join(f"{k}: {v}" for k, v in problems.items()))


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("EEVDAG_JOBS", "1")))
    except ValueError:
        return 1


@dataclass
class BenchmarkSpec:
    scenario: str
    p: list = None
    n: list = None
    replicates: int = 100
    a: list = None
    seed: int = 0
    jobs: int = field(default_factory=default_jobs)

    def __post_init__(self):
        problems = {}
        if self.scenario not in SCENARIOS:
            problems["scenario"] = f"must be one of {', '.join(SCENARIOS)}"
            raise SpecError(problems)
        d = _DEFAULTS[self.scenario]
        self.p = list(d["p"] if self.p is None else self.p)
        self.n = list(d["n"] if self.n is None else self.n)
        self.a = list(d["a"] if self.a is None else self.a)
        if self.scenario == "nonfaithful" and self.p != [3]:
            problems["p"] = "the non-faithful example has exactly 3 variables"
        if not self.p or any(not isinstance(x, int) or x < 2 for x in self.p):
            problems.setdefault("p", "need a non-empty list of integers >= 2")
        if not self.n or any(not isinstance(x, int) or x < 2 for x in self.n):
            problems["n"] = "need a non-empty list of integers >= 2"
        if not self.a or any(not isinstance(x, (int, float)) or not 0 <= x < 1 for x in self.a):
            problems["a"] = "need a non-empty list of values in [0, 1)"
        if not isinstance(self.replicates, int) or self.replicates < 1:
            problems["replicates"] = "must be an integer >= 1"
        if not isinstance(self.seed, int) or self.seed < 0:
            problems["seed"] = "must be a non-negative integer"
        if not isinstance(self.jobs, int) or self.jobs < 1:
            problems["jobs"] = "must be an integer >= 1"
        if problems:
            raise SpecError(problems)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        allowed = {"scenario", "p", "n", "replicates", "a", "seed", "jobs"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise SpecError({k: "unknown key" for k in unknown})
        if "scenario" not in d:
            raise SpecError({"scenario": "required"})
        return cls(**d)

    def cells(self):
        for p in self.p:
            for n in self.n:
                for a in self.a:
                    yield p, n, float(a)


def replicate_entropy(seed, scenario, p, n, a, index):
    return (int(seed), zlib.crc32(scenario.encode()), int(p), int(n), int(round(a * 1000)), int(index))


def _edge_prob(scenario, p):
    if scenario == "sparse":
        return sparse_edge_prob(p)
    if scenario == "dense":
        return DENSE_EDGE_PROB
    return perturbation_edge_prob(p)


def run_replicate(scenario, p, n, a, index, seed) -> dict:
    """One simulated dataset scored by both methods; returns integer SHDs and scores."""
    ent = replicate_entropy(seed, scenario, p, n, a, index)
    if scenario == "nonfaithful":
        model = nonfaithful_example()
    else:
        model = random_model(RandomModelConfig(p, _edge_prob(scenario, p), variance_spread=a, seed=ent + (0,)))
    data = sample(model, n, ent + (1,))
    cov = sample_covariance(data)
    true_dag = model.dag
    true_cpdag = to_cpdag(true_dag)

    eev = gds_eev(cov, SearchConfig(seed=ent + (2,)))
    # per-node variances make Markov-equivalent DAGs tie, so biasing by residuals is meaningless
    base = gds_eev(cov, SearchConfig(seed=ent + (3,), score="pernode", bias_mix=1.0))

    eev_cpdag = to_cpdag(eev.best.dag)
    base_cpdag = to_cpdag(base.best.dag)
    out = {
        "gds_eev": {
            "shd_dag": shd(eev.best.dag, true_dag),
            "shd_cpdag": shd(eev_cpdag, true_cpdag),
            "recovered": eev.best.dag == true_dag,
            "bic": eev.best.bic,
        },
        # the baseline only identifies an equivalence class, so its estimate is its CPDAG
        "gds_pernode": {
            "shd_dag": shd(base_cpdag, Cpdag.from_dag(true_dag)),
            "shd_cpdag": shd(base_cpdag, true_cpdag),
            "recovered": base_cpdag == true_cpdag,
            "bic": base.best.bic,
        },
    }
    chosen = best_score_select([("gds_eev", eev.best), ("gds_pernode", base.best)])
    out["best_score"] = dict(out[chosen], chosen=chosen)
    return out


def _run_one(args):
    return run_replicate(*args)


def _summary(values):
    arr = np.asarray(values, dtype=float)
    return {
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
        "values": [int(v) for v in values],
    }


def run_benchmark(spec: BenchmarkSpec) -> dict:
    """Run every (p, n, a) cell of ``spec``; returns a JSON-ready report.

    Timing and environment details live under ``"meta"``; everything else is
    a deterministic function of the spec.
    """
    t0 = time.perf_counter()
    tasks = [(spec.scenario, p, n, a, i, spec.seed)
             for p, n, a in spec.cells() for i in range(spec.replicates)]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as ex:
            results = list(ex.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * spec.jobs))))
    else:
        results = [_run_one(t) for t in tasks]

    cells, selection = [], []
    pos = 0
    for p, n, a in spec.cells():
        reps = results[pos:pos + spec.replicates]
        pos += spec.replicates
        for method in METHODS + ("best_score",):
            cells.append({
                "scenario": spec.scenario, "p": p, "n": n, "a": a, "method": method,
                "replicates": len(reps),
                "shd_dag": _summary([r[method]["shd_dag"] for r in reps]),
                "shd_cpdag": _summary([r[method]["shd_cpdag"] for r in reps]),
                "recovery_rate": float(np.mean([r[method]["recovered"] for r in reps])),
            })
        chosen = [r["best_score"]["chosen"] for r in reps]
        selection.append({
            "p": p, "n": n, "a": a,
            "fractions": {m: chosen.count(m) / len(chosen) for m in METHODS},
        })
    return {
        "spec": {k: v for k, v in asdict(spec).items() if k != "jobs"},
        "cells": cells,
        "selection": selection,
        "meta": {
            "wall_clock_seconds": time.perf_counter() - t0,
            "jobs": spec.jobs,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "platform": platform.platform(),
        },
    }


def perturbation_sweep(spec: BenchmarkSpec) -> dict:
    if spec.scenario != "perturbation":
        raise SpecError({"scenario": "perturbation_sweep needs scenario 'perturbation'"})
    return run_benchmark(spec)


def cell(report, method, p=None, n=None, a=None) -> dict:
    """Look up a single cell of a report."""
    for c in report["cells"]:
        if c["method"] == method and all(
            want is None or c[key] == want for key, want in (("p", p), ("n", n), ("a", a))
        ):
            return c
    raise KeyError(f"no cell for method={method} p={p} n={n} a={a}")


def report_body(report) -> str:
    """Canonical JSON of the deterministic part of a report."""
    return json.dumps({k: v for k, v in report.items() if k != "meta"}, sort_keys=True)


def format_table(report) -> str:
    header = ["scenario", "p", "n", "a", "method", "reps", "SHD dag", "SHD cpdag", "recovery"]
    rows = []
    for c in report["cells"]:
        rows.append([
            c["scenario"], str(c["p"]), str(c["n"]), f"{c['a']:.1f}", c["method"], str(c["replicates"]),
            f"{c['shd_dag']['mean']:.2f} ({c['shd_dag']['sd']:.2f})",
            f"{c['shd_cpdag']['mean']:.2f} ({c['shd_cpdag']['sd']:.2f})",
            f"{c['recovery_rate']:.2f}",
        ])
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(x.ljust(w) for x, w in zip(r, widths)) for r in rows]
    lines.append("")
    lines.append("best-score selection fractions (equal-variance / per-node):")
    for s in report["selection"]:
        f = s["fractions"]
        lines.append(f"  p={s['p']} n={s['n']} a={s['a']:.1f}: {f['gds_eev']:.2f} / {f['gds_pernode']:.2f}")
    return "\n".join(lines) + "\n"


def quantile_csv(report, metric="shd_dag") -> str:
    """Box-plot quantiles per a-value and method: columns a, method, quantile, value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "method", "quantile", "value"])
    for c in report["cells"]:
        vals = np.asarray(c[metric]["values"], dtype=float)
        for q in QUANTILES:
            w.writerow([f"{c['a']:.1f}", c["method"], q, float(np.quantile(vals, q))])
    return buf.getvalue()


def recovery_oracle_study(p_values=(3, 4), models: int = 50, seed: int = 0, variance_spread: float = 0.0,
                          lam_pop: float = 1e-6, p_edge=None) -> dict:
    """Exhaustive search on population covariances of random models.

    With equal noise variances the true DAG should be the unique minimiser;
    with ``variance_spread > 0`` the recovery fraction is only recorded.
    ``p_edge`` defaults to the sparse rule 3/(2p-2).
    """
    out = {"lambda_pop": lam_pop, "variance_spread": variance_spread, "per_p": []}
    for p in p_values:
        prob = sparse_edge_prob(p) if p_edge is None else p_edge
        failures = []
        for i in range(models):
            model = random_model(RandomModelConfig(p, min(prob, 1.0), variance_spread=variance_spread,
                                                   seed=(seed, p, i)))
            cov = CovarianceSummary.population(population_covariance(model))
            est = exhaustive_search(cov, lam_pop).dag
            if est != model.dag:
                failures.append({"model": i, "true": model.dag.sorted_edges(), "found": est.sorted_edges()})
        out["per_p"].append({
            "p": p, "models": models,
            "recovery_fraction": (models - len(failures)) / models,
            "failures": failures,
        })
    return out
