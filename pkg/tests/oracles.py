"""Independent reference computations shared by the unit and acceptance tests."""
import itertools

import numpy as np

from gae.autoencoder import LayerParams, loss_and_grad
from gae.graph import regularizer_matrix
from gae.stack import GaeModel, stack_loss_and_grad

FD_STEP = 1e-6


def central_difference(f, theta, h=FD_STEP):
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """Elementwise |a - fd| / max(|a|, |fd|, 1)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def random_instance(rng, m=5, l=3, n=7):
    X = rng.uniform(size=(m, n))
    V = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.7)
    np.fill_diagonal(V, 0)
    p = LayerParams.init(m, l, int(rng.integers(1 << 30)))
    p = LayerParams(p.W_H, rng.normal(0, 0.5, l), p.W_Q, rng.normal(0, 0.5, m))
    return X, regularizer_matrix(V), p


def layer_gradient_error(kind, rng):
    """Worst relative error between analytic and FD gradients on one random instance."""
    X, G, p = random_instance(rng)
    kw = {"plain": {}, "gae": {"G": G, "lam": 0.3}, "sae": {"eta": 0.7, "rho": 0.1},
          "graph_only": {"G": G, "lam": 0.3}}[kind]
    m, l = p.m, p.l

    def f(theta):
        return loss_and_grad(LayerParams.unflatten(theta, m, l), X, kind, need_grad=False, **kw)[0]

    analytic = loss_and_grad(p, X, kind, **kw)[1].flatten()
    return relative_error(analytic, central_difference(f, p.flatten()))


def stack_gradient_error(rng, dims=(5, 4, 2), n=6, lam=0.2, reconstruct=True):
    X = rng.uniform(size=(dims[0], n))
    V = rng.uniform(size=(n, n))
    np.fill_diagonal(V, 0)
    G = regularizer_matrix(V)
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        p = LayerParams.init(a, b, int(rng.integers(1 << 30)))
        layers.append(LayerParams(p.W_H, rng.normal(0, 0.5, b), p.W_Q, rng.normal(0, 0.5, a)))
    sizes = [p.flatten().size for p in layers]

    def unpack(theta):
        out, pos = [], 0
        for (a, b), s in zip(zip(dims[:-1], dims[1:]), sizes):
            out.append(LayerParams.unflatten(theta[pos:pos + s], a, b))
            pos += s
        return out

    theta = np.concatenate([p.flatten() for p in layers])
    _, grads = stack_loss_and_grad(layers, X, G, lam, reconstruct)
    analytic = np.concatenate([g.flatten() for g in grads])
    numeric = central_difference(lambda t: stack_loss_and_grad(unpack(t), X, G, lam, reconstruct)[0], theta)
    return relative_error(analytic, numeric)


def brute_force_accuracy(clustered, truth):
    """Best matched fraction over every injective cluster-to-class relabelling."""
    clusters = sorted(set(clustered))
    classes = sorted(set(truth))
    pool = classes + [None] * max(0, len(clusters) - len(classes))
    best = 0
    for perm in itertools.permutations(pool, len(clusters)):
        mapping = dict(zip(clusters, perm))
        best = max(best, sum(mapping[c] == g for c, g in zip(clustered, truth)))
    return best / len(truth)


def set_partitions(n, k):
    """All labelings of n items into exactly k non-empty, canonically ordered blocks."""
    def rec(i, labels, used):
        if i == n:
            if used == k:
                yield tuple(labels)
            return
        for c in range(min(used + 1, k)):
            labels.append(c)
            yield from rec(i + 1, labels, max(used, c + 1))
            labels.pop()
    yield from rec(0, [], 0)


def partition_inertia(H, labels):
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        pts = H[:, labels == c]
        total += float(np.sum((pts - pts.mean(axis=1, keepdims=True)) ** 2))
    return total


def exhaustive_kmeans_optimum(H, k):
    return min(partition_inertia(H, lab) for lab in set_partitions(H.shape[1], k))


def nmi_by_summation(a, b):
    """Normalized mutual information from explicit probability sums (natural log)."""
    n = len(a)
    ca, cb = sorted(set(a)), sorted(set(b))
    pa = {x: sum(1 for v in a if v == x) / n for x in ca}
    pb = {y: sum(1 for v in b if v == y) / n for y in cb}
    mi = 0.0
    for x in ca:
        for y in cb:
            pxy = sum(1 for u, v in zip(a, b) if u == x and v == y) / n
            if pxy > 0:
                mi += pxy * np.log(pxy / (pa[x] * pb[y]))
    ha = -sum(p * np.log(p) for p in pa.values())
    hb = -sum(p * np.log(p) for p in pb.values())
    if max(ha, hb) == 0:
        return 1.0
    return mi / max(ha, hb)


def lasso_grid_minimum(A, y, lam, lo=-2.0, hi=2.0, points=401, refine=5):
    """Dense grid search for the lasso minimizer, refined around the best cell."""
    p = A.shape[1]
    center = np.zeros(p)
    half = (hi - lo) / 2
    center[:] = (hi + lo) / 2
    for _ in range(refine + 1):
        axes = [np.linspace(c - half, c + half, points if p <= 2 else 81) for c in center]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=0).reshape(p, -1)
        R = y[:, None] - A @ mesh
        F = 0.5 * np.sum(R ** 2, axis=0) + lam * np.sum(np.abs(mesh), axis=0)
        center = mesh[:, np.argmin(F)]
        half = 4 * (axes[0][1] - axes[0][0])
    return center


def tiny_model(rng, dims=(4, 3, 2)):
    layers = tuple(LayerParams.init(a, b, int(rng.integers(1 << 30)))
                   for a, b in zip(dims[:-1], dims[1:]))
    return GaeModel(layers)
