"""Mainstream, out-of-the-box and bridging papers from bibliographic coupling."""

from .bcnet import BcGraph, bc_weight, build_bc_graph, neighbor_cluster_profile
from .cluster import ClusterModel, binarize_rows, distance_to_nearest, fit_graph, fit_kmeans
from .ingest import Corpus, CorpusRecord, CitationEdge, load_corpus, year_slice
from .metrics import (
    PaperMetrics,
    assemble_metrics,
    citation_horizon,
    pacs_entropy,
    weighted_betweenness,
    weighted_closeness,
)
from .stats import ols_regress, pearson, quantile_bins, scale_select, wilcoxon_rank_sum

__all__ = [
    "BcGraph", "bc_weight", "build_bc_graph", "neighbor_cluster_profile",
    "ClusterModel", "binarize_rows", "distance_to_nearest", "fit_graph", "fit_kmeans",
    "Corpus", "CorpusRecord", "CitationEdge", "load_corpus", "year_slice",
    "PaperMetrics", "assemble_metrics", "citation_horizon", "pacs_entropy",
    "weighted_betweenness", "weighted_closeness",
    "ols_regress", "pearson", "quantile_bins", "scale_select", "wilcoxon_rank_sum",
]

__version__ = "0.1.0"
