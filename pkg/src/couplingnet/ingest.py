"""Corpus loading: citation edge lists, JSON-lines metadata and a cache file.

DOIs are normalised (trimmed, lower-cased) on the way in, so every other
module can compare them with plain string equality.
"""
from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

ARTICLE_TYPES = ("research", "editorial", "erratum", "other")
CACHE_FORMAT = "couplingnet-corpus"
CACHE_VERSION = 1


class CorpusFormatError(ValueError):
    """Raised when an input file does not follow the documented format."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def normalize_doi(doi: str) -> str:
    return doi.strip().lower()


def parse_date(text: str) -> dt.date:
    """Parse an ISO-8601 date; a bare year maps to January 1, a year-month to day 1."""
    text = text.strip()
    if len(text) == 4 and text.isdigit():
        return dt.date(int(text), 1, 1)
    if len(text) == 7 and text[4] == "-":
        return dt.date(int(text[:4]), int(text[5:7]), 1)
    return dt.date.fromisoformat(text[:10])


@dataclass(frozen=True)
class CorpusRecord:
    doi: str
    title: str
    publication_date: dt.date
    journal: str
    authors: tuple[str, ...] = ()
    pacs_codes: tuple[str, ...] = ()
    article_type: str = "research"

    @property
    def year(self) -> int:
        return self.publication_date.year

    @property
    def is_research(self) -> bool:
        return self.article_type == "research"

    def to_json(self) -> dict:
        return {
            "doi": self.doi,
            "title": self.title,
            "date": self.publication_date.isoformat(),
            "journal": self.journal,
            "authors": list(self.authors),
            "pacs": list(self.pacs_codes),
            "type": self.article_type,
        }


@dataclass(frozen=True)
class CitationEdge:
    citing_doi: str
    cited_doi: str


@dataclass
class LoadReport:
    """Bookkeeping from a load: nothing is dropped without being counted here."""

    malformed_lines: list[int] = field(default_factory=list)
    self_citations: int = 0
    duplicate_edges: int = 0

    @property
    def n_malformed(self) -> int:
        return len(self.malformed_lines)


class Corpus:
    """Immutable in-memory corpus with reference and citer indexes."""

    def __init__(
        self,
        records: Iterable[CorpusRecord],
        citations: Iterable[CitationEdge],
        report: LoadReport | None = None,
    ):
        recs: dict[str, CorpusRecord] = {}
        for rec in records:
            if rec.doi in recs:
                raise ValueError(f"duplicate doi {rec.doi!r}")
            recs[rec.doi] = rec
        self.records = recs
        self.report = report or LoadReport()

        seen = set()
        edges = []
        for edge in citations:
            key = (edge.citing_doi, edge.cited_doi)
            if edge.citing_doi == edge.cited_doi:
                self.report.self_citations += 1
                continue
            if key in seen:
                self.report.duplicate_edges += 1
                continue
            seen.add(key)
            edges.append(edge)
        self.citations: tuple[CitationEdge, ...] = tuple(edges)

        refs: dict[str, list[str]] = defaultdict(list)
        citers: dict[str, list[tuple[str, dt.date | None]]] = defaultdict(list)
        for edge in self.citations:
            refs[edge.citing_doi].append(edge.cited_doi)
            citer = recs.get(edge.citing_doi)
            citers[edge.cited_doi].append(
                (edge.citing_doi, citer.publication_date if citer else None)
            )
        self.reference_index: dict[str, tuple[str, ...]] = {k: tuple(v) for k, v in refs.items()}
        self.citer_index: dict[str, tuple[tuple[str, dt.date | None], ...]] = {
            k: tuple(v) for k, v in citers.items()
        }

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.records == other.records and self.citations == other.citations

    def __repr__(self):
        return f"Corpus({len(self.records)} records, {len(self.citations)} citations)"

    def references(self, doi: str) -> tuple[str, ...]:
        return self.reference_index.get(doi, ())

    def citers(self, doi: str) -> tuple[tuple[str, dt.date | None], ...]:
        return self.citer_index.get(doi, ())

    def year_of(self, doi: str) -> int | None:
        rec = self.records.get(doi)
        return rec.year if rec else None

    @property
    def years(self) -> tuple[int, int]:
        ys = [r.year for r in self.records.values()]
        return min(ys), max(ys)


def _record_from_json(obj: dict, path, lineno: int) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise CorpusFormatError(path, lineno, "expected a JSON object")
    doi = obj.get("doi")
    if not isinstance(doi, str) or not doi.strip():
        raise CorpusFormatError(path, lineno, "missing or empty 'doi'")
    date = obj.get("date")
    if not isinstance(date, str):
        raise CorpusFormatError(path, lineno, "missing 'date'")
    try:
        pub = parse_date(date)
    except ValueError as exc:
        raise CorpusFormatError(path, lineno, f"bad date {date!r}: {exc}") from None
    kind = obj.get("type") or "research"
    if kind not in ARTICLE_TYPES:
        raise CorpusFormatError(path, lineno, f"unknown type {kind!r}")
    authors = obj.get("authors") or []
    pacs = obj.get("pacs") or []
    if not all(isinstance(a, str) for a in authors) or not all(isinstance(p, str) for p in pacs):
        raise CorpusFormatError(path, lineno, "'authors' and 'pacs' must be arrays of strings")
    return CorpusRecord(
        doi=normalize_doi(doi),
        title=str(obj.get("title", "")),
        publication_date=pub,
        journal=str(obj.get("journal", "")),
        authors=tuple(authors),
        pacs_codes=tuple(p.strip() for p in pacs if p.strip()),
        article_type=kind,
    )


def read_metadata(path) -> list[CorpusRecord]:
    path = Path(path)
    records = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, lineno, f"invalid JSON: {exc.msg}") from None
            rec = _record_from_json(obj, path, lineno)
            if rec.doi in seen:
                raise CorpusFormatError(path, lineno, f"duplicate doi {rec.doi!r}")
            seen.add(rec.doi)
            records.append(rec)
    return records


def read_citations(path, report: LoadReport | None = None) -> list[CitationEdge]:
    """Read a ``citing_doi,cited_doi`` CSV. Malformed rows land in ``report``."""
    path = Path(path)
    report = report if report is not None else LoadReport()
    edges = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["citing_doi", "cited_doi"]:
            raise CorpusFormatError(path, 1, "expected header 'citing_doi,cited_doi'")
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                report.malformed_lines.append(lineno)
                continue
            edges.append(CitationEdge(normalize_doi(row[0]), normalize_doi(row[1])))
    if report.malformed_lines:
        logger.warning("%s: skipped %d malformed rows", path, report.n_malformed)
    return edges


def load_corpus(citations_path, metadata_path) -> Corpus:
    for p in (citations_path, metadata_path):
        if not Path(p).is_file():
            raise FileNotFoundError(p)
    records = read_metadata(metadata_path)
    report = LoadReport()
    edges = read_citations(citations_path, report)
    corpus = Corpus(records, edges, report)
    logger.info("loaded %r", corpus)
    return corpus


def write_corpus_files(corpus: Corpus, citations_path, metadata_path) -> None:
    with open(citations_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["citing_doi", "cited_doi"])
        for e in corpus.citations:
            writer.writerow([e.citing_doi, e.cited_doi])
    with open(metadata_path, "w", encoding="utf-8") as fh:
        for rec in corpus.records.values():
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def year_slice(corpus: Corpus, year: int) -> list[str]:
    """Research-type dois published in ``year`` (editorials, errata and 'other' dropped)."""
    return sorted(
        doi for doi, rec in corpus.records.items() if rec.is_research and rec.year == year
    )


# Cache file: gzip-compressed UTF-8 JSON, header {"format", "version"}.
# gzip mtime is pinned to 0 so identical corpora give identical bytes.


def save_cache(corpus: Corpus, path) -> None:
    payload = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "records": [rec.to_json() for rec in corpus.records.values()],
        "citations": [[e.citing_doi, e.cited_doi] for e in corpus.citations],
        "report": {
            "malformed_lines": corpus.report.malformed_lines,
            "self_citations": corpus.report.self_citations,
            "duplicate_edges": corpus.report.duplicate_edges,
        },
    }
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        with gzip.GzipFile(fileobj=fh, mode="wb", filename="", mtime=0) as gz:
            gz.write(raw)


def load_cache(path) -> Corpus:
    with gzip.open(path, "rb") as gz:
        payload = json.load(io.TextIOWrapper(gz, encoding="utf-8"))
    if payload.get("format") != CACHE_FORMAT:
        raise CorpusFormatError(path, 0, "not a corpus cache file")
    if payload.get("version") != CACHE_VERSION:
        raise CorpusFormatError(path, 0, f"unsupported cache version {payload.get('version')}")
    records = [_record_from_json(obj, path, i) for i, obj in enumerate(payload["records"], 1)]
    edges = [CitationEdge(a, b) for a, b in payload["citations"]]
    report = LoadReport(**payload.get("report", {}))
    return Corpus(records, edges, report)
