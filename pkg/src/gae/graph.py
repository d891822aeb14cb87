"""Affinity graphs over the columns of a data matrix and the matching regularizer.

For weights ``V`` the regularizer matrix is ``G = D1 + D2 - 2V`` where ``D1``
holds row sums and ``D2`` column sums, so that

    tr(H G H^T) = sum_ij V[i, j] * ||h_i - h_j||^2

for any representation matrix ``H`` whose columns are samples. ``V`` need
not be symmetric.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import UNLABELED, DataSet

KINDS = ("knn", "epsilon", "l1", "semi", "custom")


class GraphError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AffinityGraph:
    V: np.ndarray
    kind: str = "custom"
    params: dict = field(default_factory=dict)
    G: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        V = np.array(self.V, dtype=float)
        _check_weights(V)
        if np.any(np.diag(V) != 0):
            raise GraphError("weight matrix must have a zero diagonal")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)
        G = regularizer_matrix(V)
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def n(self) -> int:
        return self.V.shape[0]

    def edges(self):
        """Nonzero ``(i, j, weight)`` triples in row-major order."""
        rows, cols = np.nonzero(self.V)
        return [(int(i), int(j), float(self.V[i, j])) for i, j in zip(rows, cols)]


def _check_weights(V):
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise GraphError(f"weight matrix must be square, got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise GraphError("weight matrix has non-finite entries")
    if np.any(V < 0):
        raise GraphError("weight matrix has negative entries")


def regularizer_matrix(V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    _check_weights(V)
    return np.diag(V.sum(axis=1)) + np.diag(V.sum(axis=0)) - 2.0 * V


def _columns(data) -> np.ndarray:
    X = data.X if isinstance(data, DataSet) else np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise GraphError("data must be a features x samples matrix")
    return X


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    """Euclidean distances between the columns of ``X``."""
    D = cdist(X.T, X.T)
    np.fill_diagonal(D, 0.0)
    return D


def knn_sets(D: np.ndarray, k: int) -> np.ndarray:
    """Row ``j`` lists the ``k`` nearest other samples of sample ``j``.

    Ties go to the lower sample index.
    """
    D = D.copy()
    np.fill_diagonal(D, np.inf)
    return np.argsort(D, axis=1, kind="stable")[:, :k]


def _knn_mask(D, k):
    n = D.shape[0]
    if not 0 < k < n:
        raise GraphError(f"k must satisfy 0 < k < n={n}, got {k}")
    nbrs = knn_sets(D, k)
    mask = np.zeros((n, n), dtype=bool)
    # v_ij is set when x_i is among x_j's neighbors
    mask[nbrs.ravel(), np.repeat(np.arange(n), k)] = True
    return mask


def build_knn_graph(data, k: int) -> AffinityGraph:
    X = _columns(data)
    D = pairwise_distances(X)
    mask = _knn_mask(D, k)
    V = np.where(mask, np.exp(-D), 0.0)
    return AffinityGraph(V, "knn", {"k": int(k)})


def build_epsilon_graph(data, epsilon: float) -> AffinityGraph:
    if not epsilon > 0:
        raise GraphError("epsilon must be positive")
    X = _columns(data)
    D = pairwise_distances(X)
    mask = D < epsilon
    np.fill_diagonal(mask, False)
    V = np.where(mask, np.exp(-D), 0.0)
    return AffinityGraph(V, "epsilon", {"epsilon": float(epsilon)})


def _soft(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def lasso_cd(A: np.ndarray, y: np.ndarray, lambda1: float, tol: float = 1e-6,
             max_iter: int = 10_000) -> np.ndarray:
    """Cyclic coordinate descent for ``0.5*||y - A w||^2 + lambda1*||w||_1``.

    Stops when the largest coefficient change in a sweep is below ``tol``;
    raises ``ConvergenceError`` after ``max_iter`` sweeps.
    """
    p = A.shape[1]
    w = np.zeros(p)
    sq = np.einsum("ij,ij->j", A, A)
    r = np.array(y, dtype=float, copy=True)
    for _ in range(max_iter):
        delta = 0.0
        for j in range(p):
            if sq[j] == 0.0:
                continue
            old = w[j]
            rho = A[:, j] @ r + sq[j] * old
            new = _soft(rho, lambda1) / sq[j]
            if new != old:
                r -= (new - old) * A[:, j]
                w[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return w
    raise ConvergenceError(f"lasso did not converge in {max_iter} sweeps (last change {delta:.3g})")


def build_l1_graph(data, lambda1: float, tol: float = 1e-6, max_iter: int = 10_000) -> AffinityGraph:
    """Sparse self-representation graph: row ``i`` holds ``|w|`` from the lasso
    that rebuilds ``x_i`` from all other samples."""
    if lambda1 < 0:
        raise GraphError("lambda1 must be non-negative")
    X = _columns(data)
    n = X.shape[1]
    if n < 2:
        raise GraphError("l1 graph needs at least two samples")
    V = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        others = idx != i
        try:
            w = lasso_cd(X[:, others], X[:, i], lambda1, tol, max_iter)
        except ConvergenceError as exc:
            raise ConvergenceError(f"sample {i}: {exc}") from None
        V[i, others] = np.abs(w)
    return AffinityGraph(V, "l1", {"lambda1": float(lambda1), "tol": tol, "max_iter": max_iter})


def build_semi_graph(ds: DataSet, k: int) -> AffinityGraph:
    """KNN graph whose labeled neighbor pairs get weight 1 (same class) or 0."""
    D = pairwise_distances(ds.X)
    mask = _knn_mask(D, k)
    y = ds.observed_labels()
    seen = y != UNLABELED
    if not seen.any():
        warnings.warn("no labeled samples; semi graph reduces to the KNN graph", stacklevel=2)
    both = seen[:, None] & seen[None, :]
    same = y[:, None] == y[None, :]
    W = np.where(both, same.astype(float), np.exp(-D))
    V = np.where(mask, W, 0.0)
    return AffinityGraph(V, "semi", {"k": int(k)})


def build_graph(data, kind: str, **params) -> AffinityGraph:
    """Dispatch on ``kind``; the semi graph needs a ``DataSet`` with known labels."""
    if kind == "knn":
        return build_knn_graph(data, params["k"])
    if kind == "epsilon":
        return build_epsilon_graph(data, params["epsilon"])
    if kind == "l1":
        extra = {key: params[key] for key in ("tol", "max_iter") if key in params}
        return build_l1_graph(data, params["lambda1"], **extra)
    if kind == "semi":
        if not isinstance(data, DataSet):
            raise GraphError("semi graph needs a DataSet carrying labels")
        return build_semi_graph(data, params["k"])
    raise GraphError(f"unknown graph kind {kind!r}")


def graph_error_rate(graph: AffinityGraph, true_labels) -> float:
    """Fraction of connections that join samples of different classes."""
    y = np.asarray(true_labels)
    if y.shape != (graph.n,):
        raise GraphError("need one label per graph node")
    nz = graph.V != 0
    total = int(nz.sum())
    if total == 0:
        raise GraphError("graph has no connections")
    wrong = int((nz & (y[:, None] != y[None, :])).sum())
    return wrong / total


def prune_cross_edges(graph: AffinityGraph, true_labels) -> AffinityGraph:
    """Drop every connection between different classes (error rate 0)."""
    y = np.asarray(true_labels)
    V = np.where(y[:, None] == y[None, :], graph.V, 0.0)
    return AffinityGraph(V, graph.kind, {**graph.params, "pruned": True})


def corrupt_edges(graph: AffinityGraph, true_labels, fraction: float, seed: int) -> AffinityGraph:
    """Rewire ``fraction`` of the connections to random cross-class targets.

    Each chosen edge ``(i, j)`` keeps its weight and moves to ``(i, j')`` with
    ``j'`` drawn from another class and not already connected to ``i``.
    """
    y = np.asarray(true_labels)
    rng = np.random.default_rng(seed)
    V = np.array(graph.V)
    rows, cols = np.nonzero(V)
    count = int(round(fraction * rows.size))
    for e in rng.choice(rows.size, size=count, replace=False):
        i, j = rows[e], cols[e]
        pool = np.flatnonzero((y != y[i]) & (V[i] == 0))
        if pool.size == 0:
            continue
        target = rng.choice(pool)
        V[i, target] = V[i, j]
        V[i, j] = 0.0
    return AffinityGraph(V, graph.kind, {**graph.params, "corrupted": float(fraction)})


def save_edge_list(graph: AffinityGraph, path) -> None:
    """Write ``i j weight`` lines sorted by ``(i, j)`` after a ``#`` header."""
    lines = [f"# n={graph.n} kind={graph.kind}"]
    lines += [f"{i} {j} {w!r}" for i, j, w in graph.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_edge_list(path, n: int | None = None) -> AffinityGraph:
    kind = "custom"
    triples = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "n" and n is None:
                    n = int(val)
                elif key == "kind":
                    kind = val
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphError(f"bad edge line {line!r}")
        triples.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if n is None:
        n = 1 + max((max(i, j) for i, j, _ in triples), default=-1)
    V = np.zeros((n, n))
    for i, j, w in triples:
        V[i, j] = w
    return AffinityGraph(V, kind if kind in KINDS else "custom")
