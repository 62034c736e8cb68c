"""Deterministic synthetic corpora with planted core, peripheral and bridge papers.

This is test plumbing: it produces data on which the expected answers are
known by construction. It is not a model of how science evolves.

Draw order (one ``random.Random(seed)``, fixed across releases):

1. block reference pools, then the global pool (publication dates, PACS codes);
2. for each slice year: core papers block by block, peripherals, bridges,
   editorials, errata (dates, references, private references, authors, PACS);
3. citation schedules for every slice paper in generation order.

DOIs are assigned after a seeded shuffle so sorted order carries no role information.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .ingest import CitationEdge, Corpus, CorpusRecord, write_corpus_files

JOURNALS = ("PRA", "PRB", "PRC", "PRD", "PRE")
ROLES = ("core", "peripheral", "bridge")


@dataclass
class SynthConfig:
    seed: int = 7
    n_blocks: int = 3
    papers_per_block: int = 60
    shared_refs_within: tuple[int, int] = (3, 12)
    shared_refs_between: tuple[int, int] = (0, 1)
    n_bridges: int = 3
    n_peripherals: int = 12
    citation_boost_bridge: float = 4.0
    citation_boost_core: float = 3.0
    citation_boost_peripheral: float = 2.0
    years: tuple[int, int] = (1991, 2011)
    n_slice_years: int = 1
    pacs_codes_per_block: int = 4
    pool_size: int = 20
    global_pool_size: int = 30
    peripheral_refs: tuple[int, int] = (1, 2)
    bridge_refs: tuple[int, int] = (6, 12)
    private_refs: tuple[int, int] = (1, 4)
    private_pacs_prob: float = 0.5
    authors_per_block: int = 25
    authors_per_paper: tuple[int, int] = (1, 3)
    base_short_rate: float = 2.0
    base_long_rate: float = 6.0
    n_editorials: int = 2
    n_errata: int = 1

    def validate(self) -> None:
        if self.n_blocks < 1 or self.papers_per_block < 1:
            raise ValueError("need at least one block with at least one paper")
        if self.n_bridges > 0 and self.n_blocks < 2:
            raise ValueError("bridges need at least two blocks")
        if self.n_bridges > self.n_blocks * self.papers_per_block:
            raise ValueError("more bridges than core papers")
        if self.n_peripherals < 0 or self.n_bridges < 0:
            raise ValueError("counts must be non-negative")
        for name in ("shared_refs_within", "shared_refs_between", "peripheral_refs", "bridge_refs", "private_refs",
                     "authors_per_paper"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an increasing non-negative range")
        if max(self.shared_refs_within[1], self.peripheral_refs[1], self.bridge_refs[1]) > self.pool_size:
            raise ValueError("cannot draw more shared references than the pool holds")
        if self.shared_refs_between[1] > self.global_pool_size:
            raise ValueError("cannot draw more global references than the global pool holds")
        if self.authors_per_paper[1] > self.authors_per_block:
            raise ValueError("authors_per_paper exceeds authors_per_block")
        if self.years[1] < self.years[0] + self.n_slice_years - 1:
            raise ValueError("citation window ends before the last slice year")
        if self.pacs_codes_per_block < 1:
            raise ValueError("pacs_codes_per_block must be positive")

    @classmethod
    def from_json(cls, obj: dict) -> "SynthConfig":
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for k, v in obj.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth; the rates used here are small
    limit = math.exp(-lam)
    k, p = 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _random_date(rng: random.Random, year: int) -> dt.date:
    start = dt.date(year, 1, 1)
    span = (dt.date(year, 12, 31) - start).days
    return start + dt.timedelta(days=rng.randint(0, span))


def block_codes(block: int, n_codes: int) -> list[str]:
    return [f"{11 + 5 * block:02d}.{10 + 10 * j:02d}.-a" for j in range(n_codes)]


GLOBAL_CODES = ["01.30.-y", "01.65.+g", "02.70.-c"]


def bridge_pairs(n_blocks: int) -> list[tuple[int, int]]:
    """Distinct block pairs in the order bridges are assigned: ring neighbours first, then the rest.

    Bridges beyond the number of distinct pairs reuse pairs and share their
    shortest paths, which dilutes their betweenness.
    """
    if n_blocks < 2:
        return []
    ring = [(b, (b + 1) % n_blocks) for b in range(n_blocks if n_blocks > 2 else 1)]
    seen = {frozenset(p) for p in ring}
    rest = [p for p in itertools.combinations(range(n_blocks), 2) if frozenset(p) not in seen]
    return ring + rest


@dataclass
class _Paper:
    key: str
    role: str
    blocks: tuple[int, ...]
    date: dt.date
    refs: list[str]
    authors: list[str]
    pacs: list[str]
    journal: str
    kind: str = "research"
    doi: str = ""


@dataclass
class SynthCorpus:
    records: list[CorpusRecord]
    citations: list[CitationEdge]
    manifest: dict = field(default_factory=dict)

    def corpus(self) -> Corpus:
        return Corpus(self.records, self.citations)


def generate_corpus(config: SynthConfig) -> SynthCorpus:
    config.validate()
    rng = random.Random(config.seed)
    first_year, last_year = config.years
    records: list[CorpusRecord] = []

    # 1. reference pools
    pools: list[list[str]] = []
    for b in range(config.n_blocks):
        codes = block_codes(b, config.pacs_codes_per_block)
        pool = []
        for j in range(config.pool_size):
            doi = f"10.5555/pool.b{b}.{j:03d}"
            date = _random_date(rng, rng.randint(first_year - 15, first_year - 1))
            records.append(
                CorpusRecord(doi, f"Block {b} reference {j}", date, JOURNALS[b % len(JOURNALS)],
                             (f"pool author {b}-{j % 5}",), (rng.choice(codes),))
            )
            pool.append(doi)
        pools.append(pool)
    global_pool = []
    for j in range(config.global_pool_size):
        doi = f"10.5555/pool.g.{j:03d}"
        date = _random_date(rng, rng.randint(first_year - 15, first_year - 1))
        records.append(CorpusRecord(doi, f"General reference {j}", date, "RMP", ("pool author g",), (rng.choice(GLOBAL_CODES),)))
        global_pool.append(doi)

    authors = [[f"Author B{b} {j:02d}" for j in range(config.authors_per_block)] for b in range(config.n_blocks)]
    private_counter = 0

    def private_refs(block: int, year: int) -> list[str]:
        nonlocal private_counter
        out = []
        codes = block_codes(block, config.pacs_codes_per_block)
        for _ in range(rng.randint(*config.private_refs)):
            doi = f"10.5555/priv.{private_counter:05d}"
            private_counter += 1
            date = _random_date(rng, rng.randint(year - 10, year - 1))
            pacs = (rng.choice(codes),) if rng.random() < config.private_pacs_prob else ()
            records.append(CorpusRecord(doi, "Private reference", date, "EXT", (), pacs))
            out.append(doi)
        return out

    def global_refs() -> list[str]:
        return rng.sample(global_pool, rng.randint(*config.shared_refs_between))

    def pick_authors(blocks: tuple[int, ...]) -> list[str]:
        n = rng.randint(*config.authors_per_paper)
        names = []
        for i in range(n):
            names.append(rng.choice(authors[blocks[i % len(blocks)]]))
        return list(dict.fromkeys(names))

    def journal(block: int) -> str:
        return "PRL" if rng.random() < 0.2 else JOURNALS[block % len(JOURNALS)]

    # 2. slice papers
    papers: list[_Paper] = []
    for year in range(first_year, first_year + config.n_slice_years):
        for b in range(config.n_blocks):
            codes = block_codes(b, config.pacs_codes_per_block)
            for j in range(config.papers_per_block):
                date = _random_date(rng, year)
                refs = rng.sample(pools[b], rng.randint(*config.shared_refs_within))
                refs += global_refs() + private_refs(b, year)
                papers.append(_Paper(f"{year}-core-{b}-{j}", "core", (b,), date, refs,
                                     pick_authors((b,)), [rng.choice(codes)], journal(b)))
        for j in range(config.n_peripherals):
            b = j % config.n_blocks
            codes = block_codes(b, config.pacs_codes_per_block)
            date = _random_date(rng, year)
            refs = rng.sample(pools[b], rng.randint(*config.peripheral_refs))
            refs += global_refs() + private_refs(b, year)
            papers.append(_Paper(f"{year}-peripheral-{j}", "peripheral", (b,), date, refs,
                                 pick_authors((b,)), [rng.choice(codes)], journal(b)))
        pairs = bridge_pairs(config.n_blocks)
        for j in range(config.n_bridges):
            b1, b2 = pairs[j % len(pairs)]
            date = _random_date(rng, year)
            refs = rng.sample(pools[b1], rng.randint(*config.bridge_refs))
            refs += rng.sample(pools[b2], rng.randint(*config.bridge_refs))
            refs += global_refs() + private_refs(b1, year)
            pacs = [rng.choice(block_codes(b1, config.pacs_codes_per_block)),
                    rng.choice(block_codes(b2, config.pacs_codes_per_block))]
            papers.append(_Paper(f"{year}-bridge-{j}", "bridge", (b1, b2), date, refs,
                                 pick_authors((b1, b2)), pacs, journal(b1)))
        for kind, count in (("editorial", config.n_editorials), ("erratum", config.n_errata)):
            for j in range(count):
                b = j % config.n_blocks
                date = _random_date(rng, year)
                refs = rng.sample(pools[b], min(2, config.pool_size))
                papers.append(_Paper(f"{year}-{kind}-{j}", kind, (b,), date, refs,
                                     pick_authors((b,)), [], journal(b), kind=kind))

    order = list(range(len(papers)))
    rng.shuffle(order)
    for serial, idx in enumerate(order):
        p = papers[idx]
        p.doi = f"10.5555/syn.{p.date.year}.{serial:05d}"

    # 3. citation schedules
    scheduled: dict[str, list[str]] = {}
    citer_counter = 0
    edges: list[CitationEdge] = []
    horizon_end = dt.date(last_year, 12, 31)
    for p in papers:
        if p.kind != "research":
            continue
        short_rate = config.base_short_rate * (config.citation_boost_core if p.role == "core" else 1.0)
        long_rate = config.base_long_rate * {
            "core": 1.0,
            "peripheral": config.citation_boost_peripheral,
            "bridge": config.citation_boost_bridge,
        }[p.role]
        offsets = [rng.randint(1, 720) for _ in range(_poisson(rng, short_rate))]
        offsets += [rng.randint(740, 7290) for _ in range(_poisson(rng, long_rate))]
        dates = sorted(p.date + dt.timedelta(days=o) for o in offsets)
        dates = [d for d in dates if d <= horizon_end]
        scheduled[p.doi] = [d.isoformat() for d in dates]
        for d in dates:
            citer = f"10.5555/cite.{citer_counter:06d}"
            citer_counter += 1
            records.append(CorpusRecord(citer, "Citing paper", d, "EXT", (), (), "other"))
            edges.append(CitationEdge(citer, p.doi))

    for p in papers:
        records.append(CorpusRecord(p.doi, f"Synthetic {p.role} paper", p.date, p.journal,
                                    tuple(p.authors), tuple(p.pacs), p.kind))
        edges.extend(CitationEdge(p.doi, r) for r in p.refs)

    records.sort(key=lambda r: r.doi)
    research = [r for r in records if r.is_research]
    per_year: dict[int, int] = {}
    for r in research:
        per_year[r.year] = per_year.get(r.year, 0) + 1
    planted = [p for p in papers if p.kind == "research"]
    manifest = {
        "config": config.to_json(),
        "slice_years": list(range(first_year, first_year + config.n_slice_years)),
        "roles": {p.doi: p.role for p in sorted(planted, key=lambda p: p.doi)},
        "blocks": {p.doi: list(p.blocks) for p in sorted(planted, key=lambda p: p.doi)},
        "filtered": {p.doi: p.kind for p in sorted(papers, key=lambda p: p.doi) if p.kind != "research"},
        "scheduled_citations": dict(sorted(scheduled.items())),
        "counts": {
            "records": len(records),
            "citations": len(edges),
            "research_records": len(research),
            "per_year_research": {str(y): c for y, c in sorted(per_year.items())},
        },
    }
    return SynthCorpus(records, edges, manifest)


def generate(config: SynthConfig, out_dir) -> dict[str, Path]:
    """Write ``citations.csv``, ``metadata.jsonl`` and ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth = generate_corpus(config)
    paths = {
        "citations": out / "citations.csv",
        "metadata": out / "metadata.jsonl",
        "manifest": out / "manifest.json",
    }
    write_corpus_files(synth.corpus(), paths["citations"], paths["metadata"])
    paths["manifest"].write_text(json.dumps(synth.manifest, indent=1, sort_keys=True) + "\n")
    return paths


def file_digests(paths) -> dict[str, str]:
    return {Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}
