"""Minimal dense feed-forward network with manual backpropagation.

Layers compute h = phi(W x + b); the head is softmax cross-entropy. The
backward pass exposes one hook per hidden layer where regularizers act on the
post-activation gradient: the projected-error injection, L1/L2 penalty
gradients, or nothing. Batch-norm layers, when present, sit between the
affine map and the activation.

All training state (parameters, velocities, batch-norm statistics) is owned
by the caller's training loop; every function here is deterministic given its
inputs and the explicit random streams.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import bn_backward, bn_forward, lp_activation_penalty
from .per import RegConfig, apply_per_backward
from .sliced import ActivationBatch
from .special_fns import RngStream


class TrainingDiverged(RuntimeError):
    """Raised when activations or the loss stop being finite."""


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_deriv(z):
    return (z > 0.0).astype(np.float64)


def _leaky_relu(z):
    return np.where(z > 0.0, z, 0.01 * z)


def _leaky_relu_deriv(z):
    return np.where(z > 0.0, 1.0, 0.01)


def _elu(z):
    return np.where(z > 0.0, z, np.expm1(np.minimum(z, 0.0)))


def _elu_deriv(z):
    return np.where(z > 0.0, 1.0, np.exp(np.minimum(z, 0.0)))


def _identity(z):
    return z


def _identity_deriv(z):
    return np.ones_like(z)


# name -> (value, derivative w.r.t. the activation input)
ACTIVATIONS = {
    "relu": (_relu, _relu_deriv),
    "leaky_relu": (_leaky_relu, _leaky_relu_deriv),
    "elu": (_elu, _elu_deriv),
    "identity": (_identity, _identity_deriv),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (d_out, d_in)
    bias: np.ndarray     # (d_out,)
    activation: str = "identity"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("inconsistent layer shapes")


@dataclass
class Network:
    """Ordered dense layers; the last layer emits logits for a softmax
    cross-entropy head, so its activation is the identity."""

    layers: list

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ValueError("need at least one hidden layer plus the output layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError("layer widths do not chain")

    @property
    def n_hidden(self) -> int:
        return len(self.layers) - 1

    @property
    def n_classes(self) -> int:
        return self.layers[-1].weights.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    momentum: float = 0.0
    epochs: int = 1
    batch_size: int = 32
    grad_clip_norm: float | None = None
    reg: RegConfig = field(default_factory=RegConfig)
    init: str = "he"
    seed: RngStream = RngStream(0)

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.reg.method == "bn" and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 when batch norm is active")


def init_network(widths, activation: str, init: str = "he",
                 rng: RngStream = RngStream(0)) -> Network:
    """Build a network with He- or Glorot-uniform weights and zero biases.

    `widths` runs input dim, hidden widths..., class count; hidden layers get
    `activation`, the output layer is identity.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 3:
        raise ValueError("widths must list input, at least one hidden, and output")
    if any(w < 1 for w in widths):
        raise ValueError("all widths must be >= 1")
    if init not in ("he", "glorot"):
        raise ValueError(f"unknown init {init!r}")
    gen = rng.generator()
    layers = []
    for l in range(1, len(widths)):
        d_in, d_out = widths[l - 1], widths[l]
        if init == "he":
            bound = math.sqrt(6.0 / d_in)
        else:
            bound = math.sqrt(6.0 / (d_in + d_out))
        w = gen.uniform(-bound, bound, size=(d_out, d_in))
        act = activation if l < len(widths) - 1 else "identity"
        layers.append(DenseLayer(w, np.zeros(d_out), act))
    return Network(layers)


@dataclass
class ForwardCache:
    layer_inputs: list    # x fed into each layer's affine map
    act_inputs: list      # what went into phi (post batch-norm when present)
    bn_caches: list       # per layer, None without batch norm
    activations: list     # post-activation ActivationBatch per layer


def forward(net: Network, inputs: np.ndarray, bn_states=None,
            training: bool = False):
    """Run the network; returns (logits, activations, cache).

    `bn_states` is a per-layer list (None entries skip normalization).
    Non-finite intermediate values raise TrainingDiverged.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layers[0].weights.shape[1]:
        raise ValueError(f"inputs must be (b, {net.layers[0].weights.shape[1]})")
    layer_inputs, act_inputs, bn_caches, activations = [], [], [], []
    for l, layer in enumerate(net.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            z = x @ layer.weights.T + layer.bias
        if not np.all(np.isfinite(z)):
            raise TrainingDiverged(f"non-finite pre-activation in layer {l}")
        bn_cache = None
        if bn_states is not None and bn_states[l] is not None:
            normed, bn_cache = bn_forward(ActivationBatch(z, l), bn_states[l],
                                          training)
            z = normed.values
        h = ACTIVATIONS[layer.activation][0](z)
        layer_inputs.append(x)
        act_inputs.append(z)
        bn_caches.append(bn_cache)
        activations.append(ActivationBatch(h, l))
        x = h
    cache = ForwardCache(layer_inputs, act_inputs, bn_caches, activations)
    return x, activations, cache


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    loss = -log_probs[np.arange(b), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    return float(loss), grad / b


@dataclass
class Gradients:
    weights: list
    biases: list
    gammas: list  # None entries where no batch norm
    betas: list


def backward(net: Network, cache: ForwardCache, labels: np.ndarray,
             reg: RegConfig, bn_states=None) -> Gradients:
    """Exact gradients of the mean cross-entropy plus the active regularizer.

    Each hidden layer's post-activation gradient passes through the
    regularizer hook before the activation Jacobian: the projected-error
    injection draws its slices from reg.seed.substream(layer), so gradients
    are a pure function of (cache, labels, reg).
    """
    n_layers = len(net.layers)
    logits = cache.activations[-1].values
    _, d_h = softmax_cross_entropy(logits, labels)

    grads = Gradients(weights=[None] * n_layers, biases=[None] * n_layers,
                      gammas=[None] * n_layers, betas=[None] * n_layers)
    for l in range(n_layers - 1, -1, -1):
        if l < n_layers - 1:  # regularizer hook on hidden post-activations
            if reg.method == "per":
                d_h = apply_per_backward(
                    d_h, cache.activations[l],
                    replace(reg, seed=reg.seed.substream(l)))
            elif reg.method in ("l1", "l2"):
                _, pen_grad = lp_activation_penalty(
                    cache.activations[l], 1 if reg.method == "l1" else 2,
                    reg.lam)
                d_h = d_h + pen_grad
        d_z = d_h * ACTIVATIONS[net.layers[l].activation][1](cache.act_inputs[l])
        if cache.bn_caches[l] is not None:
            d_z, grads.gammas[l], grads.betas[l] = bn_backward(
                d_z, cache.bn_caches[l])
        grads.weights[l] = d_z.T @ cache.layer_inputs[l]
        grads.biases[l] = d_z.sum(axis=0)
        d_h = d_z @ net.layers[l].weights
    return grads


def trainable_arrays(net: Network, bn_states=None) -> list:
    """Flat parameter list: per layer W, b, then gamma/beta when normalized."""
    params = []
    for l, layer in enumerate(net.layers):
        params.append(layer.weights)
        params.append(layer.bias)
        if bn_states is not None and bn_states[l] is not None:
            params.append(bn_states[l].gamma)
            params.append(bn_states[l].beta)
    return params


def gradient_arrays(grads: Gradients) -> list:
    """Gradient list aligned with trainable_arrays."""
    out = []
    for l in range(len(grads.weights)):
        out.append(grads.weights[l])
        out.append(grads.biases[l])
        if grads.gammas[l] is not None:
            out.append(grads.gammas[l])
            out.append(grads.betas[l])
    return out


def init_velocity(params) -> list:
    return [np.zeros_like(p) for p in params]


def sgd_step(params, grads, cfg: TrainConfig, velocity):
    """Classical momentum update, in place: v <- mu v + g, p <- p - lr v.
    Gradients are jointly rescaled first when their global norm exceeds
    cfg.grad_clip_norm."""
    if cfg.grad_clip_norm is not None:
        total = math.sqrt(sum(float((g * g).sum()) for g in grads))
        if total > cfg.grad_clip_norm:
            scale = cfg.grad_clip_norm / total
            grads = [g * scale for g in grads]
    for p, g, v in zip(params, grads, velocity, strict=True):
        v *= cfg.momentum
        v += g
        p -= cfg.lr * v
    return params


def train_epoch(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig,
                velocity, bn_states=None, epoch: int = 0) -> float:
    """One pass over the data in shuffled minibatches; returns the mean batch
    loss. Shuffling uses cfg.seed.substream(epoch); the regularizer stream is
    re-split per (epoch, iteration) so slices are fresh every backward call.

    A trailing batch of a single sample is skipped: batch statistics are
    undefined there, and dropping it for every method keeps runs comparable.
    """
    n = x.shape[0]
    order = cfg.seed.substream(epoch).generator().permutation(n)
    params = trainable_arrays(net, bn_states)
    losses = []
    for it, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start:start + cfg.batch_size]
        if idx.shape[0] == 1 and cfg.batch_size > 1:
            break
        reg_it = replace(cfg.reg, seed=cfg.reg.seed.substream(epoch, it))
        logits, _, fcache = forward(net, x[idx], bn_states, training=True)
        loss, _ = softmax_cross_entropy(logits, y[idx])
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}, "
                                   f"iteration {it}")
        grads = backward(net, fcache, y[idx], reg_it, bn_states)
        sgd_step(params, gradient_arrays(grads), cfg, velocity)
        losses.append(loss)
    return float(np.mean(losses)) if losses else float("nan")
