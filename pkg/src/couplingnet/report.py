"""Figure data (CSV) and SVG plots.

Every plot is written in two steps: the plotted numbers go to a CSV, then the
SVG is rendered from that CSV alone. SVG output is byte-stable: no date
metadata, fixed element-id salt.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import networkx as nx  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .bcnet import BcGraph, read_graph  # noqa: E402
from .cluster import ClusterModel, load_model  # noqa: E402
from .ingest import load_cache  # noqa: E402
from .metrics import read_table  # noqa: E402
from .stats import DEFAULT_BIN_SIZE, DEFAULT_QUANTILES, extreme_bins, quantile_bins  # noqa: E402

logger = logging.getLogger(__name__)

FIGURE_KINDS = ("distribution", "quantile_scatter", "paired_histogram", "network_layout")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#ff7f0e", "#7f7f7f")
QUANTILE_COLORS = {"q50": "#1f77b4", "q70": "#d62728", "q90": "#2ca02c"}


def _save_svg(fig: Figure, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "couplingnet", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def histogram_edges(values: np.ndarray, bins="fd") -> np.ndarray:
    """Freedman-Diaconis edges by default; a constant sample gets one bin."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty input")
    lo, hi = values.min(), values.max()
    if lo == hi:
        return np.array([lo - 0.5, hi + 0.5]) if lo == 0 else np.array([lo - abs(lo) * 0.5, hi + abs(hi) * 0.5])
    if bins == "fd":
        q75, q25 = np.percentile(values, [75, 25])
        if q75 == q25:
            bins = "sturges"
    return np.histogram_bin_edges(values, bins=bins)


# -- distributions ---------------------------------------------------------


def distribution_table(series: Mapping[str, Sequence[float]], bins="fd") -> list[tuple]:
    """Rows ``(label, bin_lo, bin_hi, count, density, median)`` over shared bin edges."""
    if not series or any(len(v) == 0 for v in series.values()):
        raise ValueError("empty input")
    pooled = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    edges = histogram_edges(pooled, bins)
    rows = []
    for label, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        counts, _ = np.histogram(values, bins=edges)
        density = counts / counts.sum()
        med = float(np.median(values))
        for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, density):
            rows.append((label, float(lo), float(hi), int(c), float(d), med))
    return rows


def render_distribution(csv_path, svg_path, xlabel: str = "", title: str = "") -> None:
    rows = _read_csv(csv_path)
    fig = Figure(figsize=(5, 3.6))
    ax = fig.add_subplot()
    labels = list(dict.fromkeys(r["label"] for r in rows))
    for i, label in enumerate(labels):
        sel = [r for r in rows if r["label"] == label]
        lo = np.array([float(r["bin_lo"]) for r in sel])
        hi = np.array([float(r["bin_hi"]) for r in sel])
        dens = np.array([float(r["density"]) for r in sel])
        color = PALETTE[i % len(PALETTE)]
        ax.stairs(dens, np.append(lo, hi[-1]), label=label, color=color)
        ax.axvline(float(sel[0]["median"]), color=color, linestyle=":", linewidth=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fraction")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save_svg(fig, svg_path)


def plot_distribution(series: Mapping[str, Sequence[float]], out_path, bins="fd", xlabel: str = "") -> Path:
    """Overlaid normalised histograms, one per label. Returns the SVG path."""
    svg = Path(out_path).with_suffix(".svg")
    data = svg.with_suffix(".csv")
    _write_csv(data, ["label", "bin_lo", "bin_hi", "count", "density", "median"], distribution_table(series, bins))
    render_distribution(data, svg, xlabel=xlabel)
    return svg


# -- quantile scatter --------------------------------------------------------


def quantile_scatter_table(covariate, response, bin_size=DEFAULT_BIN_SIZE, quantiles=DEFAULT_QUANTILES) -> list[tuple]:
    """Rows ``(series, x, y)``: raw points, then one curve per quantile at bin midpoints."""
    x = np.asarray(covariate, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("covariate and response lengths differ")
    table = quantile_bins(x, y, bin_size, quantiles)
    rows = [("point", float(a), float(b)) for a, b in zip(x, y)]
    for q in table.quantile_levels:
        for b in table.bins:
            rows.append((f"q{round(q * 100):d}", (b.lo + b.hi) / 2, b.quantiles[q]))
    return rows


def render_quantile_scatter(csv_path, svg_path, xlabel: str = "", ylabel: str = "") -> None:
    rows = _read_csv(csv_path)
    fig = Figure(figsize=(5, 3.6))
    ax = fig.add_subplot()
    pts = [r for r in rows if r["series"] == "point"]
    ax.scatter([float(r["x"]) for r in pts], [float(r["y"]) for r in pts], s=3, color="#bbbbbb", linewidths=0)
    for name in dict.fromkeys(r["series"] for r in rows if r["series"] != "point"):
        sel = [r for r in rows if r["series"] == name]
        ax.plot([float(r["x"]) for r in sel], [float(r["y"]) for r in sel], marker="o", markersize=3,
                color=QUANTILE_COLORS.get(name, "#000000"), label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save_svg(fig, svg_path)


def plot_quantile_scatter(covariate, response, out_path, bin_size=DEFAULT_BIN_SIZE, quantiles=DEFAULT_QUANTILES,
                          xlabel: str = "", ylabel: str = "") -> Path:
    svg = Path(out_path).with_suffix(".svg")
    data = svg.with_suffix(".csv")
    _write_csv(data, ["series", "x", "y"], quantile_scatter_table(covariate, response, bin_size, quantiles))
    render_quantile_scatter(data, svg, xlabel, ylabel)
    return svg


def plot_paired_histogram(covariate, response, out_path, bin_size=DEFAULT_BIN_SIZE, xlabel: str = "") -> Path:
    """Response distributions of the lowest and the highest covariate bin."""
    low, high = extreme_bins(covariate, response, bin_size)
    return plot_distribution({"low": low, "high": high}, out_path, xlabel=xlabel)


# -- network -------------------------------------------------------------------


def network_layout(graph: BcGraph, min_weight: int = 1, seed: int = 1) -> tuple[BcGraph, dict[str, tuple[float, float]]]:
    """Force-directed layout (weighted spring model, fixed seed) of the thresholded graph."""
    g = graph.threshold(min_weight) if min_weight > 1 else graph
    nxg = nx.Graph()
    nxg.add_nodes_from(g.nodes)
    for (a, b), w in g.edges.items():
        nxg.add_edge(a, b, weight=w)
    pos = nx.spring_layout(nxg, weight="weight", seed=seed, iterations=100)
    return g, {d: (float(pos[d][0]), float(pos[d][1])) for d in g.nodes}


def render_network(nodes_csv, edges_csv, svg_path, title: str = "") -> None:
    nodes = _read_csv(nodes_csv)
    edges = _read_csv(edges_csv)
    pos = {r["doi"]: (float(r["x"]), float(r["y"])) for r in nodes}
    fig = Figure(figsize=(6, 6))
    ax = fig.add_subplot()
    for e in edges:
        (x1, y1), (x2, y2) = pos[e["doi_i"]], pos[e["doi_j"]]
        ax.plot([x1, x2], [y1, y2], color="#cccccc", linewidth=0.3, zorder=1)
    journals = sorted({r["journal"] for r in nodes})
    colors = {j: PALETTE[i % len(PALETTE)] for i, j in enumerate(journals)}
    sizes = np.array([float(r["size"]) for r in nodes])
    area = 4 + 60 * sizes / sizes.max() if sizes.max() > 0 else np.full(len(nodes), 4.0)
    ax.scatter([float(r["x"]) for r in nodes], [float(r["y"]) for r in nodes], s=area,
               c=[colors[r["journal"]] for r in nodes], linewidths=0, zorder=2)
    named = [j for j in journals if j]
    for j in named:
        ax.scatter([], [], color=colors[j], label=j)
    if named:
        ax.legend(frameon=False, fontsize=7)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save_svg(fig, svg_path)


def plot_network(
    graph: BcGraph,
    model: ClusterModel | None,
    node_size: Mapping[str, float],
    out_path,
    journals: Mapping[str, str] | None = None,
    min_weight: int = 1,
    seed: int = 1,
) -> Path:
    """Layout plot with node area proportional to ``node_size`` and colour by journal.

    Writes ``<name>.svg``, ``<name>.csv`` (node coordinates) and ``<name>_edges.csv``.
    """
    missing = [d for d in graph.nodes if d not in node_size]
    if missing:
        raise KeyError(f"node size missing for {len(missing)} nodes, e.g. {missing[0]!r}")
    g, pos = network_layout(graph, min_weight, seed)
    journals = journals or {}
    labels = model.assignment if model is not None else {}
    svg = Path(out_path).with_suffix(".svg")
    nodes_csv = svg.with_suffix(".csv")
    edges_csv = svg.with_name(svg.stem + "_edges.csv")
    _write_csv(
        nodes_csv,
        ["doi", "x", "y", "size", "journal", "cluster"],
        [(d, pos[d][0], pos[d][1], float(node_size[d]), journals.get(d, ""), labels.get(d, "")) for d in g.nodes],
    )
    _write_csv(edges_csv, ["doi_i", "doi_j", "weight"], [(a, b, w) for (a, b), w in g.edges.items()])
    render_network(nodes_csv, edges_csv, svg)
    return svg


# -- figure specs ----------------------------------------------------------------


def _column(table: Mapping[str, list], name: str) -> list:
    if name not in table:
        raise KeyError(f"unknown column {name!r}")
    return table[name]


def _paired(table, xname, yname):
    xs, ys = _column(table, xname), _column(table, yname)
    pairs = [(x, y) for x, y in zip(xs, ys) if x is not None and y is not None]
    return np.array([p[0] for p in pairs], dtype=float), np.array([p[1] for p in pairs], dtype=float)


REQUIRED_KEYS = {
    "distribution": ("column",),
    "quantile_scatter": ("covariate", "response"),
    "paired_histogram": ("covariate", "response"),
    "network_layout": ("graph",),
}


def validate_figure_spec(spec: Mapping) -> list[dict]:
    """Check a parsed figure-spec document and return its figure entries."""
    figures = spec.get("figures") if isinstance(spec, Mapping) else None
    if not isinstance(figures, list):
        raise ValueError("figure spec must be an object with a 'figures' list")
    names = set()
    for i, fig in enumerate(figures):
        kind = fig.get("kind")
        if kind not in FIGURE_KINDS:
            raise ValueError(f"figure {i}: unknown kind {kind!r}; expected one of {FIGURE_KINDS}")
        name = fig.get("name")
        if not name or "/" in name or name in names:
            raise ValueError(f"figure {i}: 'name' must be a unique file stem")
        names.add(name)
        missing = [k for k in REQUIRED_KEYS[kind] if k not in fig]
        if missing:
            raise ValueError(f"figure {name!r}: missing keys {missing}")
    return figures


def _render_one(fig: dict, metrics_path: Path, spec_dir: Path, out: Path) -> Path:
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else spec_dir / p

    base = read_table(metrics_path)
    kind = fig["kind"]
    target = out / fig["name"]
    if kind == "distribution":
        column = fig["column"]
        series = {}
        for label, path in (fig.get("series") or {"all": None}).items():
            table = base if path is None else read_table(resolve(path))
            series[label] = [v for v in _column(table, column) if v is not None]
        return plot_distribution(series, target, bins=fig.get("bins", "fd"), xlabel=column)
    if kind == "quantile_scatter":
        x, y = _paired(base, fig["covariate"], fig["response"])
        return plot_quantile_scatter(x, y, target, fig.get("bin_size", DEFAULT_BIN_SIZE),
                                     fig.get("quantiles", DEFAULT_QUANTILES),
                                     xlabel=fig["covariate"], ylabel=fig["response"])
    if kind == "paired_histogram":
        x, y = _paired(base, fig["covariate"], fig["response"])
        return plot_paired_histogram(x, y, target, fig.get("bin_size", DEFAULT_BIN_SIZE), xlabel=fig["response"])
    graph = read_graph(resolve(fig["graph"]))
    model = load_model(resolve(fig["model"])) if fig.get("model") else None
    sizes = dict(zip(_column(base, "doi"), _column(base, fig.get("size_column", "c20"))))
    journals = None
    if fig.get("corpus"):
        corpus = load_cache(resolve(fig["corpus"]))
        journals = {d: corpus.records[d].journal for d in graph.nodes}
    return plot_network(graph, model, {d: sizes.get(d) or 0.0 for d in graph.nodes}, target,
                        journals, fig.get("min_weight", 1), fig.get("seed", 1))


def render_figures(metrics_path, spec_path, out_dir, workers: int = 1) -> list[Path]:
    """Render every entry of a figure-spec JSON file (schema in the README).

    Figures are independent; with ``workers > 1`` they render in separate
    processes. Output bytes do not depend on ``workers``.
    """
    spec_path = Path(spec_path)
    figures = validate_figure_spec(json.loads(spec_path.read_text()))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = Path(metrics_path)
    args = [(fig, metrics_path, spec_path.parent, out) for fig in figures]
    if workers > 1 and len(figures) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            written = list(pool.map(_render_one, *zip(*args)))
    else:
        written = [_render_one(*a) for a in args]
    for path in written:
        logger.info("wrote %s", path)
    return written
