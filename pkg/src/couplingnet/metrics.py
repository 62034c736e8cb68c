"""Per-paper measures on the coupling network and the citation record."""
from __future__ import annotations

import csv
import datetime as dt
import heapq
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .bcnet import BcGraph
from .cluster import ClusterModel
from .ingest import Corpus

logger = logging.getLogger(__name__)

DEFAULT_HORIZONS = (2, 10, 20)
DEFAULT_COVERAGE = 0.8
EDGE_LENGTHS = ("inverse", "unit")
# two path lengths are treated as equal within this relative tolerance
PATH_RTOL = 1e-12


def add_years(day: dt.date, years: int) -> dt.date:
    try:
        return day.replace(year=day.year + years)
    except ValueError:  # Feb 29 -> Feb 28
        return day.replace(year=day.year + years, day=28)


def citation_horizon(corpus: Corpus, doi: str, horizon_years: int) -> int:
    """Citations received up to ``horizon_years`` calendar years after publication (inclusive)."""
    rec = corpus.records.get(doi)
    if rec is None:
        raise KeyError(f"unknown doi {doi!r}")
    if horizon_years < 1:
        raise ValueError("horizon_years must be >= 1")
    limit = add_years(rec.publication_date, horizon_years)
    return sum(1 for _, when in corpus.citers(doi) if when is not None and when <= limit)


def edge_lengths(graph: BcGraph, edge_length: str = "inverse") -> np.ndarray:
    if edge_length == "inverse":
        return 1.0 / graph.weights.astype(np.float64)
    if edge_length == "unit":
        return np.ones(graph.n_edges)
    raise ValueError(f"edge_length must be one of {EDGE_LENGTHS}")


def _adjacency_lists(graph: BcGraph, lengths: np.ndarray) -> list[list[tuple[int, float]]]:
    adj: list[list[tuple[int, float]]] = [[] for _ in range(graph.n_nodes)]
    for i, j, ell in zip(graph.rows.tolist(), graph.cols.tolist(), lengths.tolist()):
        adj[i].append((j, ell))
        adj[j].append((i, ell))
    return adj


def _same_length(a: float, b: float) -> bool:
    return abs(a - b) <= PATH_RTOL * max(abs(a), abs(b))


def _brandes_sources(adj, sources: Iterable[int]) -> np.ndarray:
    """Dependency accumulation (Brandes 2001, Dijkstra variant) summed over ``sources``."""
    n = len(adj)
    bc = np.zeros(n)
    for s in sources:
        dist = [math.inf] * n
        sigma = [0] * n
        preds: list[list[int]] = [[] for _ in range(n)]
        done = [False] * n
        order = []
        dist[s] = 0.0
        sigma[s] = 1
        heap = [(0.0, s)]
        while heap:
            d, v = heapq.heappop(heap)
            if done[v] or d > dist[v]:
                continue
            done[v] = True
            order.append(v)
            for w, ell in adj[v]:
                if done[w]:
                    continue
                nd = d + ell
                dw = dist[w]
                if dw != math.inf and _same_length(nd, dw):
                    sigma[w] += sigma[v]
                    preds[w].append(v)
                elif nd < dw:
                    dist[w] = nd
                    sigma[w] = sigma[v]
                    preds[w] = [v]
                    heapq.heappush(heap, (nd, w))
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v in preds[w]:
                delta[v] += sigma[v] * coeff
            if w != s:
                bc[w] += delta[w]
    return bc


def _brandes_chunk(args):
    adj, sources = args
    return _brandes_sources(adj, sources)


def weighted_betweenness(
    graph: BcGraph, edge_length: str = "inverse", workers: int = 1
) -> dict[str, float]:
    """Unnormalised betweenness over weighted shortest paths (length ``1/M_ij`` by default).

    Sums over ordered pairs ``(s, t)`` with ``s != v != t`` and halves the
    result, i.e. each unordered pair counts once. ``workers > 1`` splits the
    sources over a process pool.
    """
    adj = _adjacency_lists(graph, edge_lengths(graph, edge_length))
    n = graph.n_nodes
    if workers <= 1 or n < 2 * workers:
        bc = _brandes_sources(adj, range(n))
    else:
        chunks = [range(start, n, workers) for start in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_brandes_chunk, [(adj, c) for c in chunks]))
        bc = np.sum(parts, axis=0)
    bc /= 2.0
    return {doi: float(x) for doi, x in zip(graph.nodes, bc)}


def shortest_path_lengths(graph: BcGraph, edge_length: str = "inverse") -> np.ndarray:
    n = graph.n_nodes
    lengths = edge_lengths(graph, edge_length)
    mat = sparse.csr_matrix((lengths, (graph.rows, graph.cols)), shape=(n, n))
    return csgraph.dijkstra(mat, directed=False)


def weighted_closeness(graph: BcGraph, edge_length: str = "inverse") -> dict[str, float]:
    """``K_i = 1 / sum_j d_ij`` with ``d`` the weighted shortest-path length."""
    if graph.n_nodes < 2:
        return {doi: 0.0 for doi in graph.nodes}
    d = shortest_path_lengths(graph, edge_length)
    totals = d.sum(axis=1)
    return {doi: float(1.0 / t) if np.isfinite(t) and t > 0 else 0.0 for doi, t in zip(graph.nodes, totals)}


def truncate_pacs(code: str, depth: int | None) -> str:
    """Keep the first ``depth`` dot-separated fields of a PACS code (``None`` keeps all)."""
    if depth is None:
        return code
    return ".".join(code.split(".")[:depth])


def shannon_entropy(counts: Iterable[int]) -> float:
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total == 0:
        return 0.0
    h = -sum((c / total) * math.log2(c / total) for c in counts)
    return max(h, 0.0)


def pacs_entropy(
    corpus: Corpus,
    doi: str,
    coverage_threshold: float = DEFAULT_COVERAGE,
    pacs_depth: int | None = None,
) -> tuple[float | None, float]:
    """Shannon entropy (bits) of the PACS codes carried by a paper's references.

    Returns ``(entropy, coverage)``; ``entropy`` is ``None`` unless the share of
    references with PACS metadata exceeds ``coverage_threshold``.
    """
    refs = corpus.references(doi)
    if not refs:
        return None, 0.0
    codes: Counter = Counter()
    covered = 0
    for ref in refs:
        rec = corpus.records.get(ref)
        if rec is None or not rec.pacs_codes:
            continue
        covered += 1
        codes.update(truncate_pacs(c, pacs_depth) for c in rec.pacs_codes)
    coverage = covered / len(refs)
    if coverage <= coverage_threshold:
        return None, coverage
    return shannon_entropy(codes.values()), coverage


@dataclass
class PaperMetrics:
    doi: str
    degree: int
    betweenness: float
    closeness: float
    distance: float
    pacs_entropy: float | None
    pacs_coverage: float
    ref_length: int
    citations: dict[int, int] = field(default_factory=dict)

    def rate(self, horizon: int) -> float:
        return self.citations[horizon] / horizon

    @property
    def entropy_per_ref(self) -> float | None:
        if self.pacs_entropy is None or self.ref_length == 0:
            return None
        return self.pacs_entropy / self.ref_length


def assemble_metrics(
    graph: BcGraph,
    model: ClusterModel,
    corpus: Corpus,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    coverage_threshold: float = DEFAULT_COVERAGE,
    edge_length: str = "inverse",
    pacs_depth: int | None = None,
    workers: int = 1,
) -> list[PaperMetrics]:
    """One row per graph node, in graph node order."""
    if tuple(model.nodes) != tuple(graph.nodes):
        raise ValueError("cluster model was not fitted on this graph")
    missing = [d for d in graph.nodes if d not in corpus.records]
    if missing:
        raise ValueError(f"{len(missing)} graph nodes missing from corpus, e.g. {missing[0]!r}")
    betweenness = weighted_betweenness(graph, edge_length, workers=workers)
    closeness = weighted_closeness(graph, edge_length)
    out = []
    for i, doi in enumerate(graph.nodes):
        entropy, coverage = pacs_entropy(corpus, doi, coverage_threshold, pacs_depth)
        out.append(
            PaperMetrics(
                doi=doi,
                degree=int(graph.degree_array[i]),
                betweenness=betweenness[doi],
                closeness=closeness[doi],
                distance=float(model.distance_array[i]),
                pacs_entropy=entropy,
                pacs_coverage=coverage,
                ref_length=len(corpus.references(doi)),
                citations={h: citation_horizon(corpus, doi, h) for h in sorted(horizons)},
            )
        )
    return out


def metric_columns(horizons: Sequence[int]) -> list[str]:
    hs = sorted(horizons)
    rates = sorted({hs[0], hs[-1]})
    return (
        ["doi", "degree", "betweenness", "closeness", "distance", "pacs_entropy", "pacs_coverage", "ref_length"]
        + [f"c{h}" for h in hs]
        + [f"rate{h}" for h in rates]
        + ["entropy_per_ref"]
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_metrics(rows: Sequence[PaperMetrics], path, horizons: Sequence[int] = DEFAULT_HORIZONS) -> None:
    """CSV with ``c<h>`` per horizon and rates for the shortest and longest horizon."""
    cols = metric_columns(horizons)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for m in rows:
            values = {
                "doi": m.doi,
                "degree": m.degree,
                "betweenness": m.betweenness,
                "closeness": m.closeness,
                "distance": m.distance,
                "pacs_entropy": m.pacs_entropy,
                "pacs_coverage": m.pacs_coverage,
                "ref_length": m.ref_length,
                "entropy_per_ref": m.entropy_per_ref,
            }
            for h, c in m.citations.items():
                values[f"c{h}"] = c
                values[f"rate{h}"] = m.rate(h)
            writer.writerow([_fmt(values[c]) for c in cols])


def read_table(path) -> dict[str, list]:
    """Read a CSV into columns; numeric cells become floats, empty cells ``None``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name, cell in row.items():
                if cell == "" or cell is None:
                    cols[name].append(None)
                    continue
                try:
                    cols[name].append(float(cell))
                except ValueError:
                    cols[name].append(cell)
    return cols
