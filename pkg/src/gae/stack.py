"""Multi-layer GAE: greedy layer-wise training, stacked encoding, fine-tuning."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autoencoder import (LayerParams, TrainConfig, minimize_params, sigmoid,
                          train_layer)
from .dataset import DataSet
from .graph import AffinityGraph, build_graph
from .optim import NumericalError


@dataclass(frozen=True, eq=False)
class GaeModel:
    layers: tuple
    configs: tuple = ()
    graph_spec: dict = field(default_factory=dict)
    kind: str = "gae"
    # per-layer (objective, grad_norm) traces; not part of model identity
    traces: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.l != b.m:
                raise ValueError(f"layer dims do not chain: {a.l} -> {b.m}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "configs", tuple(self.configs))

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].m] + [p.l for p in self.layers]


def encode_stack(model: GaeModel, X: np.ndarray) -> np.ndarray:
    H = np.asarray(X, dtype=float)
    if H.ndim != 2 or H.shape[0] != model.dims[0]:
        raise ValueError(f"expected {model.dims[0]} input rows, got shape {H.shape}")
    for p in model.layers:
        H = sigmoid(p.W_H @ H + p.b_H[:, None])
    return H


def decode_stack(model: GaeModel, H: np.ndarray) -> np.ndarray:
    """Apply the per-layer decoders from the top layer down."""
    R = np.asarray(H, dtype=float)
    for p in reversed(model.layers):
        R = sigmoid(p.W_Q @ R + p.b_Q[:, None])
    return R


def _layer_graph(H, spec, ds):
    if spec["kind"] == "semi":
        data = DataSet(H, ds.labels, ds.name, ds.known)
    else:
        data = H
    params = {k: v for k, v in spec.items() if k != "kind"}
    return build_graph(data, spec["kind"], **params)


def train_stack(ds: DataSet, graph_spec: dict | None, dims, configs, kind: str = "gae") -> GaeModel:
    """Greedy layer-wise training.

    Layer ``i`` is trained on ``H_{i-1}`` (``H_0 = X``) with a graph rebuilt
    from ``H_{i-1}`` using the same ``graph_spec`` recipe, e.g.
    ``{"kind": "knn", "k": 5}``. ``configs`` is one ``TrainConfig`` per layer
    or a single config reused for all of them.
    """
    dims = list(dims)
    if not dims:
        raise ValueError("dims must list at least one hidden size")
    if isinstance(configs, TrainConfig):
        configs = [configs] * len(dims)
    configs = list(configs)
    if len(configs) != len(dims):
        raise ValueError("need one TrainConfig per layer")

    H = ds.X
    layers, traces = [], []
    for l, cfg in zip(dims, configs):
        G = None
        if kind == "graph_only" or (kind == "gae" and cfg.lam > 0):
            if not graph_spec:
                raise ValueError(f"objective {kind!r} needs a graph_spec")
            G = _layer_graph(H, graph_spec, ds).G
        res = train_layer(H, G, cfg, l, kind)
        layers.append(res.params)
        traces.append(res.history)
        H = sigmoid(res.params.W_H @ H + res.params.b_H[:, None])
    return GaeModel(tuple(layers), tuple(configs), dict(graph_spec or {}), kind, tuple(traces))


def stack_loss_and_grad(layers, X, G, lam: float, reconstruct: bool = True):
    """Objective and per-layer gradients for the whole stack.

    With ``reconstruct`` the objective is
    ``||X - decode_stack(encode_stack(X))||^2 + lam * tr(H G H^T)``;
    without it only the graph term remains and decoder gradients are zero.
    """
    acts = [np.asarray(X, dtype=float)]
    for p in layers:
        acts.append(sigmoid(p.W_H @ acts[-1] + p.b_H[:, None]))
    H = acts[-1]

    f = 0.0
    dH = np.zeros_like(H)
    dec = [(np.zeros_like(p.W_Q), np.zeros_like(p.b_Q)) for p in layers]
    if reconstruct:
        # recon[i] is the reconstruction of acts[i]
        recon = [None] * len(layers) + [H]
        for i in range(len(layers) - 1, -1, -1):
            p = layers[i]
            recon[i] = sigmoid(p.W_Q @ recon[i + 1] + p.b_Q[:, None])
        E = recon[0] - acts[0]
        f += float(np.sum(E * E))
        dR = 2.0 * E
        for i, p in enumerate(layers):
            dZ = dR * recon[i] * (1.0 - recon[i])
            dec[i] = (dZ @ recon[i + 1].T, dZ.sum(axis=1))
            dR = p.W_Q.T @ dZ
        dH += dR
    if G is not None and lam != 0.0:
        f += lam * float(np.einsum("ij,jk,ik->", H, G, H))
        dH += lam * (H @ (G + G.T))

    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        p = layers[i]
        dZ = dH * acts[i + 1] * (1.0 - acts[i + 1])
        grads[i] = LayerParams(dZ @ acts[i].T, dZ.sum(axis=1), *dec[i])
        dH = p.W_H.T @ dZ
    return f, grads


def _encoder_vector(layers):
    return np.concatenate([np.concatenate([p.W_H.ravel(), p.b_H]) for p in layers])


def _with_encoders(layers, theta):
    out, pos = [], 0
    for p in layers:
        a = p.W_H.size
        W = theta[pos:pos + a].reshape(p.W_H.shape)
        b = theta[pos + a:pos + a + p.l]
        pos += a + p.l
        out.append(LayerParams(W, b, p.W_Q, p.b_Q))
    return out


def _finetune(model, X, G, config, reconstruct):
    layers = list(model.layers)
    if reconstruct:
        shapes = [(p.m, p.l) for p in layers]
        sizes = [p.flatten().size for p in layers]

        def unpack(theta):
            out, pos = [], 0
            for (m, l), s in zip(shapes, sizes):
                out.append(LayerParams.unflatten(theta[pos:pos + s], m, l))
                pos += s
            return out

        theta0 = np.concatenate([p.flatten() for p in layers])

        def fg(theta):
            f, grads = stack_loss_and_grad(unpack(theta), X, G, config.lam, True)
            return f, np.concatenate([g.flatten() for g in grads])
    else:
        def unpack(theta):
            return _with_encoders(layers, theta)

        theta0 = _encoder_vector(layers)

        def fg(theta):
            f, grads = stack_loss_and_grad(unpack(theta), X, G, config.lam, False)
            return f, _encoder_vector(grads)

    res = minimize_params(fg, theta0, config)
    if not np.isfinite(res.fun):
        raise NumericalError("fine-tuning produced a non-finite objective")
    return replace(model, layers=tuple(unpack(res.x)), traces=(res.history,))


def _graph_G(graph, n):
    G = graph.G if isinstance(graph, AffinityGraph) else np.asarray(graph, dtype=float)
    if G.shape != (n, n):
        raise ValueError(f"graph must cover the {n} samples, got {G.shape}")
    return G


def finetune_graph_only(model: GaeModel, ds: DataSet, graph, config: TrainConfig) -> GaeModel:
    """Jointly adjust every encoder to minimize ``lam * tr(H_top G H_top^T)``.

    Decoders are left untouched.
    """
    X = ds.X if isinstance(ds, DataSet) else np.asarray(ds, dtype=float)
    return _finetune(model, X, _graph_G(graph, X.shape[1]), config, reconstruct=False)


def finetune_full(model: GaeModel, ds: DataSet, graph, config: TrainConfig) -> GaeModel:
    """Jointly adjust all parameters on reconstruction plus the top-layer graph term."""
    X = ds.X if isinstance(ds, DataSet) else np.asarray(ds, dtype=float)
    G = None if graph is None else _graph_G(graph, X.shape[1])
    return _finetune(model, X, G, config, reconstruct=True)
