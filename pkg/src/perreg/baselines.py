"""Comparator methods: L1/L2 activation penalties, batch normalization and
its L^p generalization, and the Huber / Pseudo-Huber reference losses."""

from dataclasses import dataclass

import numpy as np

from .sliced import ActivationBatch


@dataclass
class BnState:
    """Per-layer batch-norm parameters and running statistics.

    `running_var` stores the square of the (unfloored) L^p denominator, which
    for order_p = 2 is the biased batch variance. Training-mode calls mutate
    the running statistics and must be serialized per instance.
    """

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    order_p: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.momentum < 1.0):
            raise ValueError("momentum must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.order_p <= 0.0:
            raise ValueError("order_p must be positive")

    @classmethod
    def create(cls, dim: int, **kwargs) -> "BnState":
        return cls(gamma=np.ones(dim), beta=np.zeros(dim),
                   running_mean=np.zeros(dim), running_var=np.ones(dim),
                   **kwargs)


def lp_activation_penalty(batch: ActivationBatch, p: int, lam: float):
    """Activation-norm penalty: loss lam*(1/b)*sum |h|^p and its gradient.

    For p = 1 the subgradient at exactly 0 is taken to be 0.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    h = batch.values
    b = batch.batch_size
    if p == 1:
        loss = lam * np.abs(h).sum() / b
        grad = (lam / b) * np.sign(h)
    else:
        loss = lam * (h * h).sum() / b
        grad = (lam / b) * 2.0 * h
    return float(loss), grad


def lp_normalize(column: np.ndarray, p: float, epsilon: float = 1e-5) -> np.ndarray:
    """Center a column and scale it so its p-th power mean of absolute values
    is 1. The denominator is floored at epsilon, so a constant column maps to
    all zeros."""
    col = np.asarray(column, dtype=np.float64)
    if col.ndim != 1 or col.shape[0] < 2:
        raise ValueError("column must be 1-D with at least 2 entries")
    if p < 1.0:
        raise ValueError("p must be >= 1")
    dev = col - col.mean()
    denom = (np.abs(dev) ** p).mean() ** (1.0 / p)
    return dev / max(denom, epsilon)


def bn_forward(batch: ActivationBatch, state: BnState, training: bool):
    """Columnwise gamma * xi(h) + beta with the L^p normalizer xi.

    Training mode uses batch statistics and updates the running statistics by
    exponential moving average; eval mode uses the running statistics and
    returns no cache.
    """
    x = batch.values
    b = batch.batch_size
    if training:
        if b < 2:
            raise ValueError("training-mode batch norm needs batch size >= 2")
        mu = x.mean(axis=0)
        dev = x - mu
        p = state.order_p
        if p == 2.0:
            denom = np.sqrt((dev * dev).mean(axis=0))
        else:
            denom = (np.abs(dev) ** p).mean(axis=0) ** (1.0 / p)
        floored = denom < state.epsilon
        scale = np.maximum(denom, state.epsilon)
        xi = dev / scale
        out = state.gamma * xi + state.beta
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu
        state.running_var = (1.0 - m) * state.running_var + m * denom ** 2
        cache = _BnCache(xi=xi, scale=scale, floored=floored,
                         gamma=state.gamma.copy(), order_p=p, batch_size=b)
        return ActivationBatch(out, batch.layer_index), cache
    scale = np.maximum(np.sqrt(state.running_var), state.epsilon)
    out = state.gamma * (x - state.running_mean) / scale + state.beta
    return ActivationBatch(out, batch.layer_index), None


@dataclass
class _BnCache:
    xi: np.ndarray
    scale: np.ndarray
    floored: np.ndarray
    gamma: np.ndarray
    order_p: float
    batch_size: int


def bn_backward(upstream: np.ndarray, cache: _BnCache):
    """Exact gradients of the training-mode forward map (order_p = 2 only).

    Returns (grad_input, grad_gamma, grad_beta) for the upstream gradient
    with respect to the normalized output.
    """
    if cache is None:
        raise ValueError("bn_backward needs the cache of a training-mode forward")
    if cache.order_p != 2.0:
        raise ValueError("backward pass implemented for order_p = 2 only")
    dout = np.asarray(upstream, dtype=np.float64)
    xi = cache.xi
    grad_beta = dout.sum(axis=0)
    grad_gamma = (dout * xi).sum(axis=0)
    dxi = dout * cache.gamma
    # Through the scale only where it was not floored at epsilon.
    scale_term = np.where(cache.floored, 0.0, xi * (dxi * xi).mean(axis=0))
    ddev = (dxi - scale_term) / cache.scale
    grad_input = ddev - ddev.mean(axis=0)
    return grad_input, grad_gamma, grad_beta


def huber(x):
    """Quadratic inside |x| <= 1, |x| - 0.5 outside; elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) <= 1.0, 0.5 * x * x, np.abs(x) - 0.5)
    return float(out) if out.ndim == 0 else out


def pseudo_huber(x):
    """Smooth interpolation sqrt(1 + x^2) - 1; elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.sqrt(1.0 + x * x) - 1.0
    return float(out) if out.ndim == 0 else out
