"""Author-level aggregation of paper metrics over a window of publication years."""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bcnet import BcGraph
from .cluster import ClusterModel
from .ingest import Corpus
from .metrics import PaperMetrics, assemble_metrics

logger = logging.getLogger(__name__)

AVERAGED = ("distance", "degree", "betweenness", "closeness", "ref_length")


def author_key(name: str) -> str:
    """Trim, collapse internal whitespace and case-fold. No further disambiguation."""
    return " ".join(name.split()).casefold()


@dataclass
class AuthorRecord:
    author_key: str
    papers: list[tuple[str, int]] = field(default_factory=list)
    avg_distance: float = math.nan
    avg_degree: float = math.nan
    avg_betweenness: float = math.nan
    avg_closeness: float = math.nan
    avg_ref_length: float = math.nan
    citations_short: int = 0
    citations_long: int = 0
    n_network_papers: int = 0

    @property
    def n_papers(self) -> int:
        return len(self.papers)


def citations_until(corpus: Corpus, doi: str, last_year: int) -> int:
    """Citations whose citing paper is dated on or before Dec 31 of ``last_year``."""
    limit = dt.date(last_year, 12, 31)
    return sum(1 for _, when in corpus.citers(doi) if when is not None and when <= limit)


def yearly_metrics(
    corpus: Corpus,
    per_year_graphs: Mapping[int, tuple[BcGraph, ClusterModel]],
    **kwargs,
) -> dict[int, dict[str, PaperMetrics]]:
    out = {}
    for year, (graph, model) in sorted(per_year_graphs.items()):
        rows = assemble_metrics(graph, model, corpus, **kwargs)
        out[year] = {m.doi: m for m in rows}
    return out


def build_author_table(
    corpus: Corpus,
    window: tuple[int, int],
    per_year_graphs: Mapping[int, tuple[BcGraph, ClusterModel]] | None = None,
    short_horizon_year: int = 1993,
    long_horizon_year: int = 2011,
    per_year_metrics: Mapping[int, Mapping[str, PaperMetrics]] | None = None,
) -> list[AuthorRecord]:
    """One record per normalised author name with at least one research paper in ``window``.

    Network averages are taken per year over the author's papers that sit in
    that year's largest component, then averaged over years. Papers outside
    every largest component still count toward ``n_papers`` and citations.
    Pass either ``per_year_graphs`` or precomputed ``per_year_metrics``.
    """
    first, last = window
    years = range(first, last + 1)
    if per_year_metrics is None:
        if per_year_graphs is None:
            raise ValueError("need per_year_graphs or per_year_metrics")
        missing = [y for y in years if y not in per_year_graphs]
        if missing:
            raise KeyError(f"no graph for window years {missing}")
        per_year_metrics = yearly_metrics(corpus, {y: per_year_graphs[y] for y in years})
    else:
        missing = [y for y in years if y not in per_year_metrics]
        if missing:
            raise KeyError(f"no metrics for window years {missing}")

    by_author: dict[str, AuthorRecord] = {}
    for doi in sorted(corpus.records):
        rec = corpus.records[doi]
        if not rec.is_research or not first <= rec.year <= last:
            continue
        for name in dict.fromkeys(author_key(a) for a in rec.authors):
            if not name:
                continue
            by_author.setdefault(name, AuthorRecord(name)).papers.append((doi, rec.year))

    short_cache: dict[str, int] = {}
    long_cache: dict[str, int] = {}
    for author in by_author.values():
        yearly: dict[int, list[PaperMetrics]] = defaultdict(list)
        for doi, year in author.papers:
            m = per_year_metrics[year].get(doi)
            if m is not None:
                yearly[year].append(m)
            if doi not in short_cache:
                short_cache[doi] = citations_until(corpus, doi, short_horizon_year)
                long_cache[doi] = citations_until(corpus, doi, long_horizon_year)
            author.citations_short += short_cache[doi]
            author.citations_long += long_cache[doi]
        author.n_network_papers = sum(len(v) for v in yearly.values())
        if yearly:
            for attr in AVERAGED:
                per_year = [np.mean([getattr(m, attr) for m in ms]) for _, ms in sorted(yearly.items())]
                setattr(author, f"avg_{attr}", float(np.mean(per_year)))
    logger.info("window %d-%d: %d authors", first, last, len(by_author))
    return [by_author[k] for k in sorted(by_author)]


AUTHOR_COLUMNS = [
    "author",
    "n_papers",
    "n_network_papers",
    "avg_distance",
    "avg_degree",
    "avg_betweenness",
    "avg_closeness",
    "avg_ref_length",
    "citations_short",
    "citations_long",
]


def write_authors(records: Sequence[AuthorRecord], path) -> None:
    """Averages are blank for authors with no paper in any largest component."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUTHOR_COLUMNS)
        for a in records:
            avgs = [a.avg_distance, a.avg_degree, a.avg_betweenness, a.avg_closeness, a.avg_ref_length]
            writer.writerow(
                [a.author_key, a.n_papers, a.n_network_papers]
                + ["" if math.isnan(x) else repr(x) for x in avgs]
                + [a.citations_short, a.citations_long]
            )
