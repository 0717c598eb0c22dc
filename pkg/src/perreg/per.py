"""Projected error function regularization (PER).

The per-projection loss z*erf(z/sqrt(2)) + sqrt(2/pi)*exp(-z^2/2) equals
E|Z - z| for Z ~ N(0,1): the 1-D W1 between a point mass at z and the
standard normal. Averaged over random slices it upper-bounds the sliced W1
between an activation batch and N(0, I), and its gradient in z is simply
erf(z/sqrt(2)), so the whole regularizer reduces to a cheap additive term in
the backward pass.

Two gradient conventions coexist on purpose:

* `per_grad` divides by the batch size b (the gradient of `per_loss`);
* `apply_per_backward` omits the 1/b factor, adding lambda * G with
  G_i = (1/s) * sum_k erf(<h_i, theta_k>/sqrt(2)) * theta_k.

They are equivalent under lambda_backward = lambda_loss / b; the training
harness uses the backward convention.
"""

import math
from dataclasses import dataclass

import numpy as np

from .sliced import ActivationBatch, SliceSet, draw_slices, _projections
from .special_fns import RngStream, erf

_SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

_METHODS = ("none", "per", "l1", "l2", "bn")


@dataclass(frozen=True)
class RegConfig:
    """Which regularizer/normalizer to apply during training and how hard."""

    method: str = "none"
    lam: float = 0.0  # regularization coefficient, >= 0
    slices: int = 256
    seed: RngStream = RngStream(0)

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; "
                             f"expected one of {_METHODS}")
        if self.lam < 0.0:
            raise ValueError("lam must be nonnegative")
        if self.slices < 1:
            raise ValueError("slices must be >= 1")


def per_point_loss(z):
    """E|Z - z| for Z ~ N(0,1), elementwise: the 1-D profile of the
    regularizer. Even in z, minimized at 0 with value sqrt(2/pi), and within
    0.001 of |z| once |z| >= 3."""
    z = np.asarray(z, dtype=np.float64)
    out = z * erf(z / _SQRT2) + SQRT_2_OVER_PI * np.exp(-0.5 * z * z)
    return float(out) if out.ndim == 0 else out


def per_point_grad(z):
    """Derivative of per_point_loss: erf(z/sqrt(2)), elementwise."""
    return erf(np.asarray(z, dtype=np.float64) / _SQRT2)


def per_loss(batch: ActivationBatch, slices: SliceSet) -> float:
    """Monte Carlo regularization loss: per_point_loss averaged over every
    (sample, slice) projection. Upper-bounds sw1_to_gaussian on the same
    slices."""
    proj = _projections(batch, slices)  # (s, b)
    return float(per_point_loss(proj).mean())


def per_grad(batch: ActivationBatch, slices: SliceSet) -> np.ndarray:
    """Exact gradient of per_loss with respect to the batch; shape (b, d)."""
    proj = _projections(batch, slices)  # (s, b)
    g = per_point_grad(proj)            # erf of each projection
    return (g.T @ slices.directions) / (batch.batch_size * slices.count)


def apply_per_backward(upstream: np.ndarray, batch: ActivationBatch,
                       cfg: RegConfig) -> np.ndarray:
    """Backward-pass hook: returns upstream + lam * G with fresh slices drawn
    from cfg.seed (batch-shared). G omits the 1/b factor of per_grad; see the
    module docstring for the lambda rescaling."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != batch.values.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match "
                         f"batch shape {batch.values.shape}")
    if cfg.method != "per":
        raise ValueError(f"apply_per_backward requires method 'per', "
                         f"got {cfg.method!r}")
    if cfg.lam == 0.0:
        return upstream
    slices = draw_slices(cfg.seed, cfg.slices, batch.dim)
    proj = _projections(batch, slices)
    g = (per_point_grad(proj).T @ slices.directions) / slices.count
    return upstream + cfg.lam * g
