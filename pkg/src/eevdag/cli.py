"""Command-line interface: ``eevdag {simulate,fit,oracle,score,shd,bench}``.

Randomised commands (simulate, fit, bench) need ``--seed N``; ``--seed auto``
draws a fresh seed and reports it on stderr. Identical flags and seed give
identical output files.

Exit codes: 0 success, 1 usage or input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

import numpy as np

from . import bench, graph, score, search, sem

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _seed(value, parser_name):
    if value is None:
        raise UsageError(f"{parser_name} is randomised and needs --seed N (or --seed auto)")
    if value == "auto":
        s = secrets.randbelow(2**31)
        print(f"seed: {s}", file=sys.stderr)
        return s
    try:
        s = int(value)
    except ValueError:
        raise UsageError(f"--seed must be a non-negative integer or 'auto', got {value!r}") from None
    if s < 0:
        raise UsageError("--seed must be non-negative")
    return s


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_alpha(path, p):
    text = Path(path).read_text().strip()
    try:
        vals = json.loads(text) if text.startswith("[") else [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{path}: alpha weights must be numbers") from None
    alpha = np.asarray(vals, dtype=float)
    if alpha.shape != (p,):
        raise UsageError(f"{path}: need {p} alpha weights, got {alpha.size}")
    return alpha


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    seed = _seed(args.seed, "simulate")
    if args.model:
        model = sem.read_model(args.model)
    elif args.nonfaithful:
        model = sem.nonfaithful_example()
    elif args.p is not None:
        if args.p_edge == "sparse":
            prob = sem.sparse_edge_prob(args.p)
        elif args.p_edge == "dense":
            prob = sem.DENSE_EDGE_PROB
        elif args.p_edge == "perturbation":
            prob = sem.perturbation_edge_prob(args.p)
        else:
            try:
                prob = float(args.p_edge)
            except ValueError:
                raise UsageError(f"--p-edge must be sparse, dense, perturbation or a number, "
                                 f"got {args.p_edge!r}") from None
        model = sem.random_model(sem.RandomModelConfig(
            args.p, prob, args.coef_low, args.coef_high, args.a, seed=(seed, 0)))
    else:
        raise UsageError("simulate needs one of --model, --nonfaithful or --p")
    data = sem.sample(model, args.n, (seed, 1))
    out = Path(args.out)
    model_out = Path(args.model_out) if args.model_out else out.with_suffix(".model.json")
    sem.write_csv(data, out)
    sem.write_model(model, model_out)
    print(f"wrote {out} ({data.n} x {data.p}) and {model_out}", file=sys.stderr)


def cmd_fit(args):
    seed = _seed(args.seed, "fit")
    data = sem.read_csv(args.data)
    cov = score.sample_covariance(data)
    alpha = _read_alpha(args.alpha, data.p) if args.alpha else None
    cfg = search.SearchConfig(
        k_schedule=args.k_schedule, lam=args.lam, seed=seed, score=args.score, alpha=alpha,
        bias_mix=args.bias_mix if args.bias_mix is not None else (0.1 if args.score == "equal" else 1.0),
    )
    result = search.gds_eev(cov, cfg)
    out = result.to_dict(verbose=args.verbose)
    out["names"] = list(data.names)
    _dump_json(out, args.out)
    if args.graph_out:
        Path(args.graph_out).write_text(graph.format_edge_list(result.best.dag, result.best.B_hat))
    if args.dot:
        Path(args.dot).write_text(graph.to_dot(result.best.dag, list(data.names)))


def cmd_oracle(args):
    if args.population:
        if not args.model:
            raise UsageError("--population needs --model FILE")
        model = sem.read_model(args.model)
        cov = score.CovarianceSummary.population(sem.population_covariance(model))
        lam = 1e-6 if args.lam is None else args.lam
        names = [f"X{j + 1}" for j in range(model.p)]
    else:
        if not args.data:
            raise UsageError("oracle needs a data CSV or --model FILE --population")
        data = sem.read_csv(args.data)
        cov = score.sample_covariance(data)
        lam = args.lam
        names = list(data.names)
    if cov.p > args.cap:
        raise UsageError(f"exhaustive search over {cov.p} variables exceeds the enumeration cap of "
                         f"{args.cap}; pass --cap to raise it (runtime grows super-exponentially)")
    fit = search.exhaustive_search(cov, lam, args.score, cap=args.cap)
    out = fit.to_dict()
    out["names"] = names
    _dump_json(out, args.out)
    if args.graph_out:
        Path(args.graph_out).write_text(graph.format_edge_list(fit.dag, fit.B_hat))


def cmd_score(args):
    data = sem.read_csv(args.data)
    dag = graph.read_dag(args.graph, data.p)
    cov = score.sample_covariance(data)
    alpha = _read_alpha(args.alpha, data.p) if args.alpha else None
    out = {"names": list(data.names)}
    fits = []
    if args.kind in ("both", "equal"):
        fits.append(("equal", score.equal_variance_bic(dag, cov, args.lam, alpha)))
    if args.kind in ("both", "pernode"):
        fits.append(("pernode", score.per_node_variance_bic(dag, cov, args.lam)))
    for label, fit in fits:
        out[label] = fit.to_dict()
    if len(fits) > 1:
        out["preferred"] = search.best_score_select(fits)
    _dump_json(out, args.out)


def cmd_shd(args):
    p = args.p
    with open(args.a) as fh:
        pa, ea, _ = graph.parse_edge_list(fh.read(), p)
    with open(args.b) as fh:
        pb, eb, _ = graph.parse_edge_list(fh.read(), p)
    if p is None:
        p = max(pa, pb)
    a, b = graph.Dag(p, frozenset(ea)), graph.Dag(p, frozenset(eb))
    if args.as_cpdag:
        print(graph.shd(graph.to_cpdag(a), graph.to_cpdag(b)))
    else:
        print(graph.shd(a, b))


def cmd_bench(args):
    if args.spec:
        try:
            d = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.spec}: invalid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise UsageError(f"{args.spec}: expected a JSON object")
        if args.seed is not None:
            d["seed"] = _seed(args.seed, "bench")
        elif "seed" not in d:
            raise UsageError("bench is randomised and needs a seed (in the spec file or --seed)")
        if args.jobs is not None:
            d["jobs"] = args.jobs
        spec = bench.BenchmarkSpec.from_dict(d)
    else:
        if not args.scenario:
            raise UsageError("bench needs --spec FILE or --scenario")
        kw = {"scenario": args.scenario, "replicates": args.reps, "seed": _seed(args.seed, "bench")}
        for key in ("p", "n", "a", "jobs"):
            if getattr(args, key) is not None:
                kw[key] = getattr(args, key)
        spec = bench.BenchmarkSpec(**kw)
    report = bench.run_benchmark(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.scenario}_report"
    _dump_json(report, out_dir / f"{stem}.json")
    table = bench.format_table(report)
    (out_dir / f"{stem}.txt").write_text(table)
    if spec.scenario == "perturbation":
        (out_dir / "perturbation_shd_dag.csv").write_text(bench.quantile_csv(report, "shd_dag"))
        (out_dir / "perturbation_shd_cpdag.csv").write_text(bench.quantile_csv(report, "shd_cpdag"))
    sys.stdout.write(table)


# -- parser ------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="eevdag", description=__doc__.splitlines()[0],
                epilog="Randomised subcommands are deterministic given --seed.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample data from a model (writes CSV + model JSON)")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--model", help="model JSON to sample from")
    src.add_argument("--nonfaithful", action="store_true", help="use the fixed 3-variable non-faithful model")
    src.add_argument("--p", type=int, help="draw a random model with this many variables")
    s.add_argument("--p-edge", default="sparse", help="sparse, dense, perturbation or a probability")
    s.add_argument("--a", type=float, default=0.0, help="noise variances uniform on [1-a, 1+a]")
    s.add_argument("--coef-low", type=float, default=0.1)
    s.add_argument("--coef-high", type=float, default=1.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", help="integer seed or 'auto'")
    s.add_argument("--out", required=True, help="data CSV path")
    s.add_argument("--model-out", help="model JSON path (default: <out>.model.json)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="greedy equal-variance DAG search on a data CSV")
    f.add_argument("data")
    f.add_argument("--seed", help="integer seed or 'auto'")
    f.add_argument("--lambda", dest="lam", type=float, help="penalty per edge (default log(n)/2)")
    f.add_argument("--k-schedule", type=_int_list, help="comma-separated neighbour budgets, one restart each")
    f.add_argument("--score", choices=("equal", "pernode"), default="equal")
    f.add_argument("--alpha", help="file with p known variance weights")
    f.add_argument("--bias-mix", type=float, help="probability of an unbiased move draw")
    f.add_argument("--out", help="result JSON (default stdout)")
    f.add_argument("--graph-out", help="write the best DAG as an edge list")
    f.add_argument("--dot", help="write the best DAG as Graphviz DOT")
    f.add_argument("--verbose", action="store_true", help="include per-restart score traces")
    f.set_defaults(func=cmd_fit)

    o = sub.add_parser("oracle", help="exhaustive search over all DAGs (small p)")
    o.add_argument("data", nargs="?")
    o.add_argument("--model", help="model JSON (with --population)")
    o.add_argument("--population", action="store_true", help="use the model's exact covariance, n = 1")
    o.add_argument("--lambda", dest="lam", type=float,
                   help="penalty per edge (default log(n)/2, or 1e-6 with --population)")
    o.add_argument("--score", choices=("equal", "pernode"), default="equal")
    o.add_argument("--cap", type=int, default=graph.ENUMERATION_CAP, help="maximum number of variables")
    o.add_argument("--out")
    o.add_argument("--graph-out")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("score", help="equal-variance and per-node-variance scores of a given graph")
    c.add_argument("data")
    c.add_argument("graph", help="edge list: 'parent child' per line")
    c.add_argument("--kind", choices=("both", "equal", "pernode"), default="both")
    c.add_argument("--alpha", help="file with p known variance weights (equal-variance score)")
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--out")
    c.set_defaults(func=cmd_score)

    h = sub.add_parser("shd", help="structural Hamming distance between two edge lists")
    h.add_argument("a")
    h.add_argument("b")
    h.add_argument("--as-cpdag", action="store_true", help="compare Markov equivalence classes")
    h.add_argument("--p", type=int, help="vertex count (default: from headers or largest index)")
    h.set_defaults(func=cmd_shd)

    b = sub.add_parser("bench", help="simulation benchmarks (JSON report, text table, CSV)")
    b.add_argument("--spec", help="JSON benchmark spec")
    b.add_argument("--scenario", choices=bench.SCENARIOS)
    b.add_argument("--p", type=_int_list)
    b.add_argument("--n", type=_int_list)
    b.add_argument("--a", type=_float_list)
    b.add_argument("--reps", type=int, default=100)
    b.add_argument("--seed", help="integer seed or 'auto'")
    b.add_argument("--jobs", type=int, help="worker processes (default $EEVDAG_JOBS or 1)")
    b.add_argument("--out-dir", default=".")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except search.SearchInvariantError as exc:
        print(f"eevdag: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (UsageError, graph.GraphError, sem.DataError, sem.ModelError, bench.SpecError,
            score.ScoreUndefined, ValueError, OSError) as exc:
        print(f"eevdag {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
