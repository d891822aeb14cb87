"""Single-layer sigmoid auto-encoder with optional graph or sparsity penalty.

Encoder ``H = S(W_H X + b_H)``, decoder ``Q = S(W_Q H + b_Q)``, no weight
tying. Objectives (``X`` is features x samples):

* ``plain``      ``||X - Q||^2``
* ``gae``        ``||X - Q||^2 + lam * tr(H G H^T)``
* ``sae``        ``||X - Q||^2 + eta * sum_j KL(rho || rho_j)``
* ``graph_only`` ``lam * tr(H G H^T)``

Reconstruction error is the un-normalized squared Frobenius norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .optim import NumericalError, OptimizeResult, lbfgs

OBJECTIVES = ("plain", "gae", "sae", "graph_only")
KL_CLAMP = 1e-12


@dataclass(frozen=True, eq=False)
class LayerParams:
    W_H: np.ndarray
    b_H: np.ndarray
    W_Q: np.ndarray
    b_Q: np.ndarray

    def __post_init__(self):
        for name in ("W_H", "b_H", "W_Q", "b_Q"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        l, m = self.W_H.shape
        if self.b_H.shape != (l,) or self.W_Q.shape != (m, l) or self.b_Q.shape != (m,):
            raise ValueError(
                f"inconsistent layer shapes W_H{self.W_H.shape} b_H{self.b_H.shape} "
                f"W_Q{self.W_Q.shape} b_Q{self.b_Q.shape}")

    @property
    def m(self) -> int:
        return self.W_H.shape[1]

    @property
    def l(self) -> int:
        return self.W_H.shape[0]

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W_H.ravel(), self.b_H, self.W_Q.ravel(), self.b_Q])

    @classmethod
    def unflatten(cls, theta: np.ndarray, m: int, l: int) -> "LayerParams":
        a = l * m
        return cls(theta[:a].reshape(l, m), theta[a:a + l],
                   theta[a + l:2 * a + l].reshape(m, l), theta[2 * a + l:])

    @classmethod
    def init(cls, m: int, l: int, seed: int) -> "LayerParams":
        """Uniform weights in ``[-r, r]`` with ``r = sqrt(6 / (m + l))``, zero biases."""
        rng = np.random.default_rng(seed)
        r = np.sqrt(6.0 / (m + l))
        W_H = rng.uniform(-r, r, size=(l, m))
        W_Q = rng.uniform(-r, r, size=(m, l))
        return cls(W_H, np.zeros(l), W_Q, np.zeros(m))


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    eta: float = 0.0
    rho: float = 0.05
    max_iter: int = 400
    grad_tol: float = 1e-5
    seed: int = 0
    history_size: int = 10
    # cap on the length of each optimizer step; None leaves steps unbounded
    max_step: float | None = None

    def __post_init__(self):
        if self.lam < 0 or self.eta < 0:
            raise ValueError("lam and eta must be non-negative")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_iter < 1 or self.grad_tol <= 0 or self.history_size < 1:
            raise ValueError("max_iter, grad_tol and history_size must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")


def sigmoid(z):
    """Logistic function; ``expit`` saturates cleanly for large ``|z|``."""
    return expit(z)


def encode(params: LayerParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != params.m:
        raise ValueError(f"expected {params.m} input rows, got shape {X.shape}")
    return sigmoid(params.W_H @ X + params.b_H[:, None])


def decode(params: LayerParams, H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != params.l:
        raise ValueError(f"expected {params.l} hidden rows, got shape {H.shape}")
    return sigmoid(params.W_Q @ H + params.b_Q[:, None])


def kl_penalty(H: np.ndarray, rho: float) -> float:
    r = np.clip(H.mean(axis=1), KL_CLAMP, 1.0 - KL_CLAMP)
    return float(np.sum(rho * np.log(rho / r) + (1 - rho) * np.log((1 - rho) / (1 - r))))


def graph_penalty(H: np.ndarray, G: np.ndarray) -> float:
    return float(np.einsum("ij,jk,ik->", H, G, H))


def _check(params, X, G):
    if X.shape[0] != params.m:
        raise ValueError(f"expected {params.m} input rows, got shape {X.shape}")
    if G is not None and G.shape != (X.shape[1], X.shape[1]):
        raise ValueError(f"G must be {X.shape[1]}x{X.shape[1]}, got {G.shape}")
    if not np.all(np.isfinite(params.flatten())):
        raise NumericalError("non-finite parameters")


def loss_and_grad(params: LayerParams, X: np.ndarray, kind: str = "plain", G=None,
                  lam: float = 0.0, eta: float = 0.0, rho: float = 0.05,
                  need_grad: bool = True):
    """Objective value and gradient (as a ``LayerParams``) for one layer."""
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}")
    X = np.asarray(X, dtype=float)
    G = None if G is None else np.asarray(G, dtype=float)
    _check(params, X, G)
    H = encode(params, X)
    use_graph = kind in ("gae", "graph_only") and G is not None and lam != 0.0
    reconstruct = kind != "graph_only"

    f = 0.0
    dH = np.zeros_like(H)
    dW_Q = np.zeros_like(params.W_Q)
    db_Q = np.zeros_like(params.b_Q)
    if reconstruct:
        Q = decode(params, H)
        E = Q - X
        f += float(np.sum(E * E))
        if need_grad:
            dZ2 = 2.0 * E * Q * (1.0 - Q)
            dW_Q = dZ2 @ H.T
            db_Q = dZ2.sum(axis=1)
            dH += params.W_Q.T @ dZ2
    if use_graph:
        f += lam * graph_penalty(H, G)
        if need_grad:
            dH += lam * (H @ (G + G.T))
    if kind == "sae" and eta != 0.0:
        f += eta * kl_penalty(H, rho)
        if need_grad:
            r = H.mean(axis=1)
            inside = (r > KL_CLAMP) & (r < 1.0 - KL_CLAMP)
            dr = np.where(inside, -rho / r + (1 - rho) / (1 - r), 0.0)
            dH += (eta / H.shape[1]) * dr[:, None]
    if not need_grad:
        return f, None
    dZ1 = dH * H * (1.0 - H)
    grad = LayerParams(dZ1 @ X.T, dZ1.sum(axis=1), dW_Q, db_Q)
    return f, grad


def gae_objective(params, X, G, lam) -> float:
    return loss_and_grad(params, X, "gae", G, lam, need_grad=False)[0]


def gae_gradient(params, X, G, lam) -> LayerParams:
    return loss_and_grad(params, X, "gae", G, lam)[1]


def sae_objective(params, X, eta, rho) -> float:
    return loss_and_grad(params, X, "sae", eta=eta, rho=rho, need_grad=False)[0]


def sae_gradient(params, X, eta, rho) -> LayerParams:
    return loss_and_grad(params, X, "sae", eta=eta, rho=rho)[1]


def reconstruction_error(params, X) -> float:
    return loss_and_grad(params, X, "plain", need_grad=False)[0]


@dataclass
class TrainResult:
    params: LayerParams
    objective: float
    status: str
    iterations: int
    history: list = field(default_factory=list)


def minimize_params(fg, theta0, config: TrainConfig) -> OptimizeResult:
    return lbfgs(fg, theta0, max_iter=config.max_iter, grad_tol=config.grad_tol,
                 history_size=config.history_size, max_step=config.max_step)


def train_layer(X: np.ndarray, G, config: TrainConfig, l: int, kind: str = "gae",
                init: LayerParams | None = None) -> TrainResult:
    """Fit one encoder/decoder pair with L-BFGS from a seeded initialization.

    ``G`` is required for ``gae`` with ``lam > 0`` and for ``graph_only``.
    Raises ``NumericalError`` if the objective stops being finite.
    """
    X = np.asarray(X, dtype=float)
    m, n = X.shape
    if l < 1:
        raise ValueError("hidden size must be positive")
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}")
    needs_graph = kind == "graph_only" or (kind == "gae" and config.lam > 0)
    if needs_graph and G is None:
        raise ValueError(f"objective {kind!r} with lam > 0 needs a graph")
    p0 = init if init is not None else LayerParams.init(m, l, config.seed)

    def fg(theta):
        f, g = loss_and_grad(LayerParams.unflatten(theta, m, l), X, kind, G,
                             config.lam, config.eta, config.rho)
        return f, g.flatten()

    res = minimize_params(fg, p0.flatten(), config)
    return TrainResult(LayerParams.unflatten(res.x, m, l), res.fun, res.status,
                       res.iterations, res.history)
