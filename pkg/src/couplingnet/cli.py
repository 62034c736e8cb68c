"""Command-line entry point: ``couplingnet <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import authors as authors_mod
from . import bcnet, cluster, ingest, metrics, report, stats, synth

logger = logging.getLogger("couplingnet")

# short names accepted on the command line for metrics-table columns
COLUMN_ALIASES = {"entropy": "pacs_entropy", "length": "ref_length", "L": "ref_length"}


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _window(text: str) -> tuple[int, int]:
    a, _, b = text.partition(":")
    return int(a), int(b or a)


def _column(table: dict, name: str) -> list:
    name = COLUMN_ALIASES.get(name, name)
    if name not in table:
        raise KeyError(f"unknown column {name!r}; available: {', '.join(table)}")
    return table[name]


def _csv_column(spec: str) -> np.ndarray:
    path, _, col = spec.rpartition(":")
    if not path:
        raise ValueError(f"expected <csv>:<column>, got {spec!r}")
    values = _column(metrics.read_table(path), col)
    return np.array([v for v in values if v is not None], dtype=float)


def _emit(payload: dict, csv_rows: list[dict], out: str | None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True, default=float)
    if out is None:
        print(text)
        return
    prefix = Path(out)
    prefix.with_suffix(".json").write_text(text + "\n")
    if csv_rows:
        with prefix.with_suffix(".csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(csv_rows[0]), lineterminator="\n")
            writer.writeheader()
            for row in csv_rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def cmd_synth(args):
    config = synth.SynthConfig.from_json(json.loads(Path(args.config).read_text())) if args.config else synth.SynthConfig()
    paths = synth.generate(config, args.out)
    for p in paths.values():
        print(p)


def cmd_ingest(args):
    corpus = ingest.load_corpus(args.citations, args.metadata)
    ingest.save_cache(corpus, args.out)
    rep = corpus.report
    print(json.dumps({
        "records": len(corpus.records),
        "citations": len(corpus.citations),
        "malformed_lines": rep.n_malformed,
        "self_citations": rep.self_citations,
        "duplicate_edges": rep.duplicate_edges,
    }, sort_keys=True))


def cmd_bcnet(args):
    corpus = ingest.load_cache(args.corpus)
    graph = bcnet.build_bc_graph(corpus, args.year, args.include_unknown_year_refs, args.min_weight)
    bcnet.write_graph(graph, args.out)
    print(json.dumps(graph.report, sort_keys=True))


def cmd_cluster(args):
    graph = bcnet.read_graph(args.graph)
    model = cluster.fit_graph(graph, k=args.k, seed=args.seed, restarts=args.restarts,
                              max_iter=args.max_iter, tol=args.tol)
    cluster.save_model(model, args.out)
    print(json.dumps({"k": model.k, "total_cost": model.total_cost, "n_iter": model.n_iter,
                      "median_distance": float(np.median(model.distance_array))}, sort_keys=True))


def cmd_metrics(args):
    graph = bcnet.read_graph(args.graph)
    model = cluster.load_model(args.model)
    corpus = ingest.load_cache(args.corpus)
    rows = metrics.assemble_metrics(graph, model, corpus, args.horizons, args.pacs_coverage,
                                    args.edge_length, args.pacs_depth, args.workers)
    metrics.write_metrics(rows, args.out, args.horizons)
    print(f"{len(rows)} rows -> {args.out}")


def cmd_stats_quantiles(args):
    table = metrics.read_table(args.metrics)
    x, y = _column(table, args.covariate), _column(table, args.response)
    pairs = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    qt = stats.quantile_bins([p[0] for p in pairs], [p[1] for p in pairs], args.bin, args.quantiles,
                             args.covariate, args.response)
    payload = qt.to_json()
    if len(qt.bins) >= 3 and 0.5 in qt.quantile_levels:
        # straight-line trend of the median across bins; a CI covering 0 means flat
        payload["q50_trend"] = stats.bin_trend(qt, 0.5)
    _emit(payload, qt.rows(), args.out)


def cmd_stats_wilcoxon(args):
    res = stats.wilcoxon_rank_sum(_csv_column(args.a), _csv_column(args.b), args.mode)
    payload = vars(res)
    _emit(payload, [payload], args.out)


def cmd_stats_extremes(args):
    table = metrics.read_table(args.metrics)
    x, y = _column(table, args.covariate), _column(table, args.response)
    pairs = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    low, high = stats.extreme_bins([p[0] for p in pairs], [p[1] for p in pairs], args.bin)
    res = stats.wilcoxon_rank_sum(low, high, "normal")
    payload = dict(vars(res), covariate=args.covariate, response=args.response, bin_size=args.bin)
    _emit(payload, [payload], args.out)


def cmd_stats_pearson(args):
    table = metrics.read_table(args.metrics)
    x, y = _column(table, args.x), _column(table, args.y)
    pairs = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    rho = stats.pearson([p[0] for p in pairs], [p[1] for p in pairs])
    payload = {"x": args.x, "y": args.y, "n": len(pairs), "pearson": rho}
    _emit(payload, [payload], args.out)


def cmd_stats_regress(args):
    table = metrics.read_table(args.metrics)
    names = [n for n in args.predictors.split(",") if n]
    adjust = [n for n in (args.adjust or "").split(",") if n]
    res = stats.ols_regress(
        _column(table, args.response),
        {n: _column(table, n) for n in names},
        {n: _column(table, n) for n in adjust},
        response_name=args.response,
    )
    _emit(res.to_json(), stats.regression_csv_rows(res), args.out)


def cmd_authors(args):
    corpus = ingest.load_cache(args.corpus)
    first, last = args.window
    graphs_dir = Path(args.graphs)
    per_year = {}
    for year in range(first, last + 1):
        g_path = graphs_dir / f"graph_{year}.csv"
        m_path = graphs_dir / f"model_{year}.json"
        if not g_path.exists() or not m_path.exists():
            raise FileNotFoundError(f"missing {g_path.name} or {m_path.name} in {graphs_dir}")
        per_year[year] = (bcnet.read_graph(g_path), cluster.load_model(m_path))
    records = authors_mod.build_author_table(corpus, (first, last), per_year, args.short_year, args.long_year)
    authors_mod.write_authors(records, args.out)
    print(f"{len(records)} authors -> {args.out}")


def cmd_report(args):
    for p in report.render_figures(args.metrics, args.figures, args.out, workers=args.workers):
        print(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="couplingnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted roles")
    p.add_argument("--config", help="JSON file with SynthConfig fields (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="load citation + metadata files into a corpus cache")
    p.add_argument("--citations", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("bcnet", help="build the coupling network of one year")
    p.add_argument("--corpus", required=True)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-weight", type=int, default=1)
    p.add_argument("--include-unknown-year-refs", action="store_true")
    p.set_defaults(func=cmd_bcnet)

    p = sub.add_parser("cluster", help="k-means on binarised adjacency rows")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, default=cluster.DEFAULT_K)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--restarts", type=int, default=cluster.DEFAULT_RESTARTS)
    p.add_argument("--max-iter", type=int, default=cluster.DEFAULT_MAX_ITER)
    p.add_argument("--tol", type=float, default=cluster.DEFAULT_TOL)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("metrics", help="per-paper metrics table")
    p.add_argument("--graph", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--horizons", type=_ints, default=list(metrics.DEFAULT_HORIZONS))
    p.add_argument("--pacs-coverage", type=float, default=metrics.DEFAULT_COVERAGE)
    p.add_argument("--pacs-depth", type=int, default=None)
    p.add_argument("--edge-length", choices=metrics.EDGE_LENGTHS, default="inverse")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("stats", help="statistics on a metrics table")
    ssub = p.add_subparsers(dest="stats_command", required=True)
    q = ssub.add_parser("quantiles")
    q.add_argument("--metrics", required=True)
    q.add_argument("--covariate", required=True)
    q.add_argument("--response", required=True)
    q.add_argument("--bin", type=int, default=stats.DEFAULT_BIN_SIZE)
    q.add_argument("--quantiles", type=_floats, default=list(stats.DEFAULT_QUANTILES))
    q.add_argument("--out", help="output prefix for .json and .csv (stdout JSON if omitted)")
    q.set_defaults(func=cmd_stats_quantiles)
    q = ssub.add_parser("wilcoxon")
    q.add_argument("--a", required=True, help="<csv>:<column>")
    q.add_argument("--b", required=True, help="<csv>:<column>")
    q.add_argument("--mode", choices=("auto", "normal", "exact"), default="auto")
    q.add_argument("--out")
    q.set_defaults(func=cmd_stats_wilcoxon)
    q = ssub.add_parser("extremes", help="Wilcoxon test between the lowest and highest covariate bins")
    q.add_argument("--metrics", required=True)
    q.add_argument("--covariate", required=True)
    q.add_argument("--response", required=True)
    q.add_argument("--bin", type=int, default=stats.DEFAULT_BIN_SIZE)
    q.add_argument("--out")
    q.set_defaults(func=cmd_stats_extremes)
    q = ssub.add_parser("pearson")
    q.add_argument("--metrics", required=True)
    q.add_argument("--x", required=True)
    q.add_argument("--y", required=True)
    q.add_argument("--out")
    q.set_defaults(func=cmd_stats_pearson)
    q = ssub.add_parser("regress")
    q.add_argument("--metrics", required=True)
    q.add_argument("--response", required=True)
    q.add_argument("--predictors", required=True)
    q.add_argument("--adjust", default="")
    q.add_argument("--out")
    q.set_defaults(func=cmd_stats_regress)

    p = sub.add_parser("authors", help="author-level aggregation over a window of years")
    p.add_argument("--corpus", required=True)
    p.add_argument("--window", type=_window, required=True, help="FIRST:LAST, e.g. 1981:1991")
    p.add_argument("--graphs", required=True, help="directory with graph_<year>.csv and model_<year>.json")
    p.add_argument("--short-year", type=int, default=1993)
    p.add_argument("--long-year", type=int, default=2011)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_authors)

    p = sub.add_parser("report", help="render figures described by a figure-spec JSON")
    p.add_argument("--metrics", required=True)
    p.add_argument("--figures", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (FileNotFoundError, ingest.CorpusFormatError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
