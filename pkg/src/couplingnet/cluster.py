"""k-means over binarised coupling-adjacency rows with a normalised Hamming distance.

Centres are coordinate-wise means, so they are fractional. The distance from a
binary row ``x`` to a centre ``c`` is ``mean_j |x_j - c_j|``, which reduces to
the normalised Hamming distance when ``c`` is binary. For sparse rows it is
evaluated as ``(sum(c) + sum_{j in supp(x)} (1 - 2 c_j)) / n``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .bcnet import BcGraph

logger = logging.getLogger(__name__)

DEFAULT_K = 20
DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-9


def binarize_rows(graph: BcGraph) -> sparse.csr_matrix:
    """0/1 adjacency rows: ``row(i)[j] = 1`` iff the two papers are coupled."""
    if graph.n_nodes == 0:
        raise ValueError("empty graph")
    adj = graph.adjacency(dtype=np.float64)
    adj.data[:] = 1.0
    adj.setdiag(0)
    adj.eliminate_zeros()
    return adj.tocsr()


def distance_matrix(rows, centers: np.ndarray) -> np.ndarray:
    """Normalised Hamming/L1 distance of every row to every centre, shape ``(n_rows, k)``."""
    centers = np.asarray(centers, dtype=np.float64)
    n = centers.shape[1]
    if rows.shape[1] != n:
        raise ValueError(f"row length {rows.shape[1]} does not match centre length {n}")
    rows = sparse.csr_matrix(rows, dtype=np.float64)
    cross = np.asarray(rows @ (1.0 - 2.0 * centers).T)
    d = (centers.sum(axis=1)[None, :] + cross) / n
    # the closed form can drift a hair below 0 for rows equal to a binary centre
    return np.clip(d, 0.0, 1.0)


@dataclass
class ClusterModel:
    k: int
    centers: np.ndarray
    labels: np.ndarray
    distance_array: np.ndarray
    nodes: tuple[str, ...]
    seed: int
    restarts: int
    total_cost: float
    n_iter: int = 0
    cost_history: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def assignment(self) -> dict[str, int]:
        return {d: int(l) for d, l in zip(self.nodes, self.labels)}

    @property
    def distances(self) -> dict[str, float]:
        return {d: float(x) for d, x in zip(self.nodes, self.distance_array)}

    def to_json(self) -> dict:
        centers = []
        for c in self.centers:
            nz = np.flatnonzero(c)
            centers.append([[int(j), float(c[j])] for j in nz])
        return {
            "k": self.k,
            "nodes": list(self.nodes),
            "centers": centers,
            "labels": [int(x) for x in self.labels],
            "distances": [float(x) for x in self.distance_array],
            "total_cost": float(self.total_cost),
            "n_iter": self.n_iter,
            "cost_history": [float(x) for x in self.cost_history],
            "seed": self.seed,
            "restarts": self.restarts,
            "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ClusterModel":
        n = len(obj["nodes"])
        centers = np.zeros((obj["k"], n))
        for ell, entries in enumerate(obj["centers"]):
            for j, v in entries:
                centers[ell, j] = v
        return cls(
            k=obj["k"],
            centers=centers,
            labels=np.asarray(obj["labels"], dtype=np.int64),
            distance_array=np.asarray(obj["distances"], dtype=np.float64),
            nodes=tuple(obj["nodes"]),
            seed=obj["seed"],
            restarts=obj["restarts"],
            total_cost=obj["total_cost"],
            n_iter=obj.get("n_iter", 0),
            cost_history=obj.get("cost_history", []),
            config=obj.get("config", {}),
        )


def save_model(model: ClusterModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), sort_keys=True) + "\n")


def load_model(path) -> ClusterModel:
    return ClusterModel.from_json(json.loads(Path(path).read_text()))


def _dense_row(rows: sparse.csr_matrix, i: int) -> np.ndarray:
    return rows.getrow(i).toarray().ravel()


def _seed_centers(rows: sparse.csr_matrix, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding, sampling proportionally to the distance (not its square)."""
    m = rows.shape[0]
    centers = np.empty((k, rows.shape[1]))
    centers[0] = _dense_row(rows, int(rng.integers(m)))
    closest = distance_matrix(rows, centers[:1])[:, 0]
    for ell in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=closest / total))
        centers[ell] = _dense_row(rows, idx)
        closest = np.minimum(closest, distance_matrix(rows, centers[ell : ell + 1])[:, 0])
    return centers


def _assign(rows, centers):
    d = distance_matrix(rows, centers)
    labels = d.argmin(axis=1)
    nearest = d[np.arange(len(labels)), labels]
    return labels, nearest


def _mean_centers(rows: sparse.csr_matrix, labels: np.ndarray, k: int, old: np.ndarray, nearest: np.ndarray):
    m = rows.shape[0]
    member = sparse.csr_matrix((np.ones(m), (labels, np.arange(m))), shape=(k, m))
    counts = np.asarray(member.sum(axis=1)).ravel()
    sums = np.asarray((member @ rows).todense())
    centers = old.copy()
    filled = counts > 0
    centers[filled] = sums[filled] / counts[filled, None]
    # empty clusters are reseeded at the row currently farthest from its centre
    taken = set()
    for ell in np.flatnonzero(~filled):
        for idx in np.argsort(-nearest, kind="stable"):
            if idx not in taken:
                taken.add(int(idx))
                centers[ell] = _dense_row(rows, int(idx))
                break
    return centers, int((~filled).sum())


def _lloyd(rows, k, rng, max_iter, tol):
    seeds = _seed_centers(rows, k, rng)
    labels, nearest = _assign(rows, seeds)
    # the first mean update is always taken, so centres are cluster means
    centers, _ = _mean_centers(rows, labels, k, seeds, nearest)
    labels, nearest = _assign(rows, centers)
    cost = float(nearest.sum())
    history = [cost]
    n_iter = 1
    while n_iter < max_iter:
        new_centers, _ = _mean_centers(rows, labels, k, centers, nearest)
        new_labels, new_nearest = _assign(rows, new_centers)
        new_cost = float(new_nearest.sum())
        if new_cost > cost:
            # mean centres are not L1-optimal, so an update can raise the cost;
            # that counts as convergence and the previous state is kept
            break
        n_iter += 1
        improvement = cost - new_cost
        centers, labels, nearest, cost = new_centers, new_labels, new_nearest, new_cost
        history.append(cost)
        if improvement <= tol * max(cost, np.finfo(float).tiny):
            break
    return centers, labels, nearest, cost, history, n_iter


def fit_kmeans(
    rows,
    k: int = DEFAULT_K,
    seed: int = 42,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    nodes=None,
) -> ClusterModel:
    """Lloyd iterations from ``restarts`` seeded starts; the lowest-cost run wins.

    ``tol`` is relative: a run stops once an iteration improves the total
    cost by no more than ``tol * cost``.
    """
    rows = sparse.csr_matrix(rows, dtype=np.float64)
    m = rows.shape[0]
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > m:
        raise ValueError(f"k={k} exceeds the number of rows ({m})")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if nodes is None:
        nodes = tuple(str(i) for i in range(m))

    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for run, ss in enumerate(seeds):
        result = _lloyd(rows, k, np.random.default_rng(ss), max_iter, tol)
        logger.debug("restart %d: cost %.6g after %d iterations", run, result[3], result[5])
        if best is None or result[3] < best[3]:
            best = result
    centers, labels, nearest, cost, history, n_iter = best
    return ClusterModel(
        k=k,
        centers=centers,
        labels=labels,
        distance_array=nearest,
        nodes=tuple(nodes),
        seed=seed,
        restarts=restarts,
        total_cost=cost,
        n_iter=n_iter,
        cost_history=history,
        config={
            "distance": "normalized_hamming_l1",
            "rows": "binarized_adjacency",
            "center_update": "mean",
            "init": "kmeans++(distance-weighted)",
            "max_iter": max_iter,
            "tol": tol,
        },
    )


def fit_graph(graph: BcGraph, k: int = DEFAULT_K, seed: int = 42, restarts: int = DEFAULT_RESTARTS, **kwargs) -> ClusterModel:
    return fit_kmeans(binarize_rows(graph), k=k, seed=seed, restarts=restarts, nodes=graph.nodes, **kwargs)


def distance_to_nearest(model: ClusterModel, row) -> float:
    """Distance of one binary row (dense or sparse) to its nearest centre."""
    if sparse.issparse(row):
        row = sparse.csr_matrix(row)
    else:
        row = np.asarray(row, dtype=np.float64).reshape(1, -1)
    if row.shape[1] != model.centers.shape[1]:
        raise ValueError(
            f"row length {row.shape[1]} does not match centre length {model.centers.shape[1]}"
        )
    return float(distance_matrix(row, model.centers).min())
