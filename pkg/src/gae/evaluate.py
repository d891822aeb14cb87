"""Clustering front end, metrics and the randomized class-subset protocol."""
from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autoencoder import TrainConfig
from .dataset import DataSet, choose_classes, mask_labels, subsample_classes
from .seeds import derive_seed
from .stack import encode_stack, train_stack

METHODS = ("gae", "sgae", "sae", "plain_ae", "pca", "kmeans_raw")

DEFAULT_GRID = {
    "lam": [1e-3, 1e-2, 1e-1, 1.0, 10.0],
    "k": [3, 5, 7, 10],
    "eta": [1e-3, 1e-2, 1e-1],
    "rho": [0.05, 0.1, 0.2],
}
# which grid axes each method searches
GRID_AXES = {
    "gae": ("lam", "k"),
    "sgae": ("lam", "k"),
    "sae": ("eta", "rho"),
    "plain_ae": (),
    "pca": (),
    "kmeans_raw": (),
}


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centers: np.ndarray
    inertia: float


def _sq_dists(H, C):
    d = (H * H).sum(axis=0)[:, None] - 2.0 * H.T @ C + (C * C).sum(axis=0)[None, :]
    return np.maximum(d, 0.0)


def _inertia(H, C, assign):
    diff = H - C[:, assign]
    return float(np.sum(diff * diff))


def _plusplus(H, k, rng):
    n = H.shape[1]
    centers = [int(rng.integers(n))]
    d = _sq_dists(H, H[:, centers])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total <= 0:
            # every point coincides with a chosen center
            remaining = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(n, p=d / total))
        centers.append(nxt)
        d = np.minimum(d, _sq_dists(H, H[:, [nxt]])[:, 0])
    return H[:, centers].copy()


def _lloyd(H, C, max_iter):
    n = H.shape[1]
    k = C.shape[1]
    assign = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(H, C), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        counts = np.bincount(assign, minlength=k)
        for c in range(k):
            if counts[c]:
                C[:, c] = H[:, assign == c].mean(axis=1)
        for c in np.flatnonzero(counts == 0):
            # re-seed an empty cluster with the point farthest from its center
            far = int(np.argmax(((H - C[:, assign]) ** 2).sum(axis=0)))
            C[:, c] = H[:, far]
            assign[far] = c
    return assign, C


def kmeans(H: np.ndarray, k: int, restarts: int = 10, seed: int = 0,
           max_iter: int = 300) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` by inertia."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[1] == 0:
        raise ValueError("kmeans needs a non-empty features x samples matrix")
    n = H.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        assign, C = _lloyd(H, _plusplus(H, k, rng), max_iter)
        val = _inertia(H, C, assign)
        if best is None or val < best.inertia:
            best = ClusterResult(assign.copy(), C.copy(), val)
    return best


def pca_reduce(X: np.ndarray, l: int) -> np.ndarray:
    """Project mean-centred samples onto the top ``l`` principal directions.

    Each direction's sign is fixed so that its largest-magnitude entry is
    positive.
    """
    X = np.asarray(X, dtype=float)
    m, n = X.shape
    if not 1 <= l <= min(m, n):
        raise ValueError(f"l must lie in 1..{min(m, n)}, got {l}")
    Xc = X - X.mean(axis=1, keepdims=True)
    if not np.any(Xc):
        raise ValueError("zero-variance data has no principal directions")
    U, _, _ = np.linalg.svd(Xc, full_matrices=False)
    U = U[:, :l]
    pivot = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[pivot, np.arange(l)])
    return U.T @ Xc


def contingency(a, b) -> np.ndarray:
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    M = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(M, (ia, ib), 1)
    return M


def accuracy(clustered, truth) -> float:
    """Fraction matched under the best one-to-one cluster-to-class mapping."""
    clustered, truth = np.asarray(clustered), np.asarray(truth)
    if clustered.shape != truth.shape:
        raise ValueError("label vectors differ in length")
    if clustered.size == 0:
        raise ValueError("empty label vectors")
    M = contingency(clustered, truth)
    rows, cols = linear_sum_assignment(M, maximize=True)
    return float(M[rows, cols].sum()) / clustered.size


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def normalized_mutual_information(C, C_prime) -> float:
    """Plug-in mutual information divided by the larger of the two entropies."""
    C, C_prime = np.asarray(C), np.asarray(C_prime)
    if C.shape != C_prime.shape:
        raise ValueError("label vectors differ in length")
    if C.size == 0:
        raise ValueError("empty label vectors")
    P = contingency(C, C_prime) / C.size
    pa, pb = P.sum(axis=1), P.sum(axis=0)
    ha, hb = _entropy(pa), _entropy(pb)
    if max(ha, hb) == 0.0:
        return 1.0
    nz = P > 0
    mi = float(np.sum(P[nz] * np.log(P[nz] / np.outer(pa, pb)[nz])))
    return min(max(mi / max(ha, hb), 0.0), 1.0)


@dataclass
class ExperimentReport:
    method: str
    records: list = field(default_factory=list)
    # subset size -> {"AC", "MI", "hyper"}
    cells: dict = field(default_factory=dict)

    @property
    def mean_ac(self) -> float:
        return float(np.mean([r["AC"] for r in self.records]))

    @property
    def mean_mi(self) -> float:
        return float(np.mean([r["MI"] for r in self.records]))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "records": self.records,
            "cells": {str(s): c for s, c in self.cells.items()},
            "average": {"AC": self.mean_ac, "MI": self.mean_mi},
        }


def grid_cells(method: str, hyper_grid: dict | None) -> list[dict]:
    grid = {**DEFAULT_GRID, **(hyper_grid or {})}
    axes = GRID_AXES[method]
    return [dict(zip(axes, vals)) for vals in itertools.product(*(grid[a] for a in axes))]


def hidden_dims(m: int, classes: int, hidden: int | None = None, depth: int = 2) -> list[int]:
    """Layer sizes ending at the class count; ``depth=2`` adds one hidden layer first."""
    if depth == 1:
        return [classes]
    if depth != 2:
        raise ValueError("depth must be 1 or 2")
    if hidden is None:
        hidden = max(classes, min(m, 2 * classes))
    return [hidden, classes]


def represent(ds: DataSet, method: str, classes: int, hyper: dict, train: TrainConfig,
              hidden: int | None = None, depth: int = 2) -> np.ndarray:
    """Learned representation of ``ds`` with ``classes`` output dimensions."""
    if method == "kmeans_raw":
        return ds.X
    if method == "pca":
        return pca_reduce(ds.X, min(classes, ds.m, ds.n))
    dims = hidden_dims(ds.m, classes, hidden, depth)
    if method == "plain_ae":
        model = train_stack(ds, None, dims, train, kind="plain")
    elif method == "sae":
        cfg = TrainConfig(**{**train.__dict__, "eta": hyper["eta"], "rho": hyper["rho"]})
        model = train_stack(ds, None, dims, cfg, kind="sae")
    elif method in ("gae", "sgae"):
        cfg = TrainConfig(**{**train.__dict__, "lam": hyper["lam"]})
        spec = {"kind": "semi" if method == "sgae" else "knn", "k": int(hyper["k"])}
        model = train_stack(ds, spec, dims, cfg, kind="gae")
    else:
        raise ValueError(f"unknown method {method!r}")
    return encode_stack(model, ds.X)


def _run_one(task):
    (ds, method, size, repeat, hyper, train, hidden, depth, labeled_fraction, seed,
     restarts) = task
    subset_seed = derive_seed(seed, "protocol", size, repeat)
    sub = subsample_classes(ds, size, subset_seed)
    if method == "sgae":
        sub = mask_labels(sub, labeled_fraction, derive_seed(seed, "labels", size, repeat))
    cfg = TrainConfig(**{**train.__dict__, "seed": derive_seed(seed, "init", size, repeat)})
    H = represent(sub, method, size, hyper, cfg, hidden, depth)
    km = kmeans(H, size, restarts, derive_seed(seed, "kmeans", size, repeat))
    classes = choose_classes(ds.class_count, size, subset_seed)
    return {
        "size": int(size),
        "repeat": int(repeat),
        "seed": int(subset_seed),
        "classes": [int(c) for c in classes],
        "hyper": hyper,
        "AC": accuracy(km.assignments, sub.labels),
        "MI": normalized_mutual_information(sub.labels, km.assignments),
    }


def run_experiment(ds: DataSet, method: str, class_subset_sizes, repeats: int = 5,
                   labeled_fraction: float | None = None, hyper_grid: dict | None = None,
                   seed: int = 0, train: TrainConfig | None = None, hidden: int | None = None,
                   depth: int = 2, restarts: int = 10, jobs: int = 1) -> ExperimentReport:
    """Randomized class-subset protocol for one method.

    For every subset size and repeat a class subset is drawn, the
    representation dimension is set to the subset size, and k-means with
    that many clusters is scored by AC and NMI. Each hyperparameter cell is
    run on the same subsets; the cell with the best mean AC is reported.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if ds.labels is None:
        raise ValueError("run_experiment needs a labeled dataset")
    sizes = [int(s) for s in class_subset_sizes]
    if not sizes or any(not 1 <= s <= ds.class_count for s in sizes):
        raise ValueError(f"subset sizes must lie in 1..{ds.class_count}")
    if method == "sgae" and labeled_fraction is None:
        raise ValueError("sgae needs labeled_fraction")
    if repeats < 1:
        raise ValueError("repeats must be positive")
    train = train or TrainConfig()
    cells = grid_cells(method, hyper_grid)

    tasks = [(ds, method, s, r, h, train, hidden, depth, labeled_fraction, seed, restarts)
             for s in sizes for h in cells for r in range(repeats)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    report = ExperimentReport(method)
    pos = 0
    for s in sizes:
        best = None
        for h in cells:
            recs = results[pos:pos + repeats]
            pos += repeats
            ac = float(np.mean([r["AC"] for r in recs]))
            if best is None or ac > best[0]:
                best = (ac, h, recs)
        ac, h, recs = best
        report.records.extend(recs)
        report.cells[s] = {"AC": ac, "MI": float(np.mean([r["MI"] for r in recs])), "hyper": h}
    return report


def report_csv(reports: list[ExperimentReport]) -> str:
    """Rows are subset sizes plus a final ``Average`` row; columns are method x metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["classes"] + [f"{r.method}_{m}" for r in reports for m in ("AC", "MI")])
    sizes = list(reports[0].cells) if reports else []
    for s in sizes:
        w.writerow([s] + [f"{r.cells[s][m]:.4f}" for r in reports for m in ("AC", "MI")])
    w.writerow(["Average"] + [f"{v:.4f}" for r in reports for v in (r.mean_ac, r.mean_mi)])
    return buf.getvalue()


def report_json(reports: list[ExperimentReport], extra: dict | None = None) -> str:
    body = {"reports": [r.to_dict() for r in reports]}
    if extra:
        body.update(extra)
    return json.dumps(body, indent=2, sort_keys=True) + "\n"
