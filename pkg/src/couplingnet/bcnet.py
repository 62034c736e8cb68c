"""Bibliographic-coupling network for one publication-year slice."""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .ingest import Corpus, year_slice

logger = logging.getLogger(__name__)


def eligible_references(
    refs: Iterable[str], cutoff_year: int, corpus: Corpus, include_unknown: bool = False
) -> set[str]:
    """References that may count toward a coupling weight: published before ``cutoff_year``."""
    out = set()
    for ref in refs:
        year = corpus.year_of(ref)
        if year is None:
            if include_unknown:
                out.add(ref)
        elif year < cutoff_year:
            out.add(ref)
    return out


def bc_weight(
    refs_i: Iterable[str],
    refs_j: Iterable[str],
    cutoff_year: int,
    corpus: Corpus,
    include_unknown: bool = False,
) -> int:
    """Number of shared references published strictly before ``cutoff_year``.

    References missing from the corpus metadata have no known year and are
    excluded unless ``include_unknown`` is set.
    """
    shared = set(refs_i) & set(refs_j)
    return len(eligible_references(shared, cutoff_year, corpus, include_unknown))


@dataclass
class BcGraph:
    """Weighted undirected coupling graph; edges are stored once with ``i < j`` (node indices)."""

    nodes: tuple[str, ...]
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    year: int
    report: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {doi: i for i, doi in enumerate(self.nodes)}
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.int64)
        n = len(self.nodes)
        self.degree_array = np.bincount(self.rows, minlength=n) + np.bincount(self.cols, minlength=n)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @property
    def degree(self) -> dict[str, int]:
        return {doi: int(d) for doi, d in zip(self.nodes, self.degree_array)}

    @property
    def edges(self) -> dict[tuple[str, str], int]:
        return {
            (self.nodes[i], self.nodes[j]): int(w)
            for i, j, w in zip(self.rows, self.cols, self.weights)
        }

    def adjacency(self, dtype=np.int64) -> sparse.csr_matrix:
        n = self.n_nodes
        r = np.concatenate([self.rows, self.cols])
        c = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.weights, self.weights]).astype(dtype)
        return sparse.csr_matrix((w, (r, c)), shape=(n, n))

    def weight(self, a: str, b: str) -> int:
        adj = self._adj_cache()
        return int(adj[self.index[a], self.index[b]])

    def neighbors(self, doi: str) -> dict[str, int]:
        adj = self._adj_cache()
        i = self.index[doi]
        start, stop = adj.indptr[i], adj.indptr[i + 1]
        return {self.nodes[j]: int(w) for j, w in zip(adj.indices[start:stop], adj.data[start:stop])}

    def _adj_cache(self) -> sparse.csr_matrix:
        if not hasattr(self, "_adj"):
            self._adj = self.adjacency()
        return self._adj

    def threshold(self, min_weight: int) -> "BcGraph":
        """Drop links lighter than ``min_weight`` and keep the largest remaining component."""
        keep = self.weights >= min_weight
        edges = {
            (self.nodes[i], self.nodes[j]): int(w)
            for i, j, w in zip(self.rows[keep], self.cols[keep], self.weights[keep])
        }
        graph = _largest_component(list(self.nodes), edges, self.year)
        graph.report = dict(self.report, min_weight=min_weight, threshold=graph.report)
        return graph


def _largest_component(nodes: list[str], edges: Mapping[tuple[str, str], int], year: int) -> BcGraph:
    nodes = sorted(nodes)
    index = {d: i for i, d in enumerate(nodes)}
    n = len(nodes)
    if edges:
        pairs = np.array([(index[a], index[b]) for a, b in edges], dtype=np.int64)
        w = np.fromiter(edges.values(), dtype=np.int64, count=len(edges))
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
        w = np.empty(0, dtype=np.int64)
    adj = sparse.coo_matrix((np.ones(len(w)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = csgraph.connected_components(adj, directed=False)

    sizes = np.bincount(labels, minlength=n_comp)
    edge_label = labels[pairs[:, 0]] if len(w) else np.empty(0, dtype=np.int64)
    mass = np.bincount(edge_label, weights=w, minlength=n_comp) if len(w) else np.zeros(n_comp)
    # node count, then total weight, then the component holding the smallest doi
    first = np.full(n_comp, n, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(n))
    best = min(range(n_comp), key=lambda c: (-sizes[c], -mass[c], first[c]))

    discarded = Counter(int(s) for c, s in enumerate(sizes) if c != best)
    keep_nodes = [d for d, lab in zip(nodes, labels) if lab == best]
    new_index = {d: i for i, d in enumerate(keep_nodes)}
    rows, cols, ws = [], [], []
    for (a, b), weight in sorted(edges.items()):
        if a in new_index and b in new_index:
            i, j = new_index[a], new_index[b]
            if i > j:
                i, j = j, i
            rows.append(i)
            cols.append(j)
            ws.append(weight)
    order = np.lexsort((cols, rows)) if rows else np.empty(0, dtype=np.int64)
    report = {
        "slice_size": n,
        "n_components": int(n_comp),
        "largest_component_nodes": len(keep_nodes),
        "largest_component_edges": len(ws),
        "discarded_components": {str(k): v for k, v in sorted(discarded.items())},
        "isolated_nodes": discarded.get(1, 0),
    }
    return BcGraph(
        nodes=tuple(keep_nodes),
        rows=np.asarray(rows, dtype=np.int64)[order],
        cols=np.asarray(cols, dtype=np.int64)[order],
        weights=np.asarray(ws, dtype=np.int64)[order],
        year=year,
        report=report,
    )


def coupling_weights(
    corpus: Corpus, dois: Iterable[str], cutoff_year: int, include_unknown: bool = False
) -> dict[tuple[str, str], int]:
    """Pairwise shared-reference counts via an inverted index (cited paper -> citing papers).

    Returns ``{(a, b): weight}`` with ``a < b`` and only positive weights.
    """
    inverted: dict[str, list[str]] = defaultdict(list)
    for doi in sorted(set(dois)):
        for ref in eligible_references(corpus.references(doi), cutoff_year, corpus, include_unknown):
            inverted[ref].append(doi)
    counts: Counter = Counter()
    for citing in inverted.values():
        m = len(citing)
        for x in range(m):
            a = citing[x]
            for y in range(x + 1, m):
                counts[(a, citing[y])] += 1
    return dict(counts)


def build_bc_graph(
    corpus: Corpus,
    year: int,
    include_unknown_year_refs: bool = False,
    min_weight: int = 1,
) -> BcGraph:
    """Coupling network of the research papers published in ``year``, largest component only."""
    dois = year_slice(corpus, year)
    if not dois:
        raise ValueError(f"no research papers published in {year}")
    edges = coupling_weights(corpus, dois, year, include_unknown_year_refs)
    if min_weight > 1:
        edges = {k: w for k, w in edges.items() if w >= min_weight}
    graph = _largest_component(dois, edges, year)
    graph.report.update(
        include_unknown_year_refs=include_unknown_year_refs,
        min_weight=min_weight,
        slice_edges=len(edges),
    )
    logger.info(
        "year %d: %d papers, largest component %d nodes / %d edges",
        year, len(dois), graph.n_nodes, graph.n_edges,
    )
    return graph


def neighbor_cluster_profile(graph: BcGraph, model, node: str) -> dict[int, int]:
    """Count of the node's coupling neighbours per assigned cluster label."""
    if node not in graph.index:
        raise KeyError(f"{node!r} is not in the graph")
    profile: Counter = Counter()
    for nb in graph.neighbors(node):
        profile[model.assignment[nb]] += 1
    return dict(sorted(profile.items()))


def write_graph(graph: BcGraph, path) -> None:
    """Edge-list CSV ``doi_i,doi_j,weight`` plus a ``.json`` sidecar with nodes and report."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doi_i", "doi_j", "weight"])
        for i, j, w in zip(graph.rows, graph.cols, graph.weights):
            writer.writerow([graph.nodes[i], graph.nodes[j], int(w)])
    sidecar = {"year": graph.year, "nodes": list(graph.nodes), "report": graph.report}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")


def read_graph(path) -> BcGraph:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    nodes = tuple(meta["nodes"])
    index = {d: i for i, d in enumerate(nodes)}
    rows, cols, ws = [], [], []
    with path.open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(index[row["doi_i"]])
            cols.append(index[row["doi_j"]])
            ws.append(int(row["weight"]))
    return BcGraph(nodes=nodes, rows=rows, cols=cols, weights=ws, year=meta["year"], report=meta["report"])
