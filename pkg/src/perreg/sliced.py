"""Monte Carlo sliced Wasserstein-1 estimators over random projections.

A batch of d-dimensional activations is projected onto s random unit vectors
("slices"); the 1-D W1 of each projection against the target is averaged over
slices. Two targets are supported: the analytic N(0, 1) marginal and an
empirical surrogate built from Gaussian reference draws.
"""

from dataclasses import dataclass

import numpy as np

from . import ot1d
from .special_fns import RngStream


@dataclass(frozen=True)
class SliceSet:
    """s unit vectors in R^d, one per row; seed provenance kept for records."""

    directions: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        dirs = np.asarray(self.directions, dtype=np.float64)
        if dirs.ndim != 2 or dirs.shape[0] < 1 or dirs.shape[1] < 1:
            raise ValueError("directions must be a non-empty (s, d) matrix")
        norms = np.linalg.norm(dirs, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-12):
            raise ValueError("every slice direction must have unit norm")
        object.__setattr__(self, "directions", dirs)

    @property
    def count(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


@dataclass(frozen=True)
class ActivationBatch:
    """b activation vectors of width d, one per row, tagged with a layer index."""

    values: np.ndarray
    layer_index: int = 0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("values must be a non-empty (b, d) matrix")
        if not np.all(np.isfinite(vals)):
            raise ValueError("activation values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def batch_size(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def draw_slices(rng: RngStream, count: int, dim: int) -> SliceSet:
    """Draw `count` i.i.d. uniform directions on the unit sphere in R^dim."""
    if count < 1 or dim < 1:
        raise ValueError("count and dim must be >= 1")
    gen = rng.generator()
    dirs = gen.standard_normal((count, dim))
    norms = np.linalg.norm(dirs, axis=1)
    while np.any(norms < 1e-300):  # degenerate draw: redraw those rows
        bad = norms < 1e-300
        dirs[bad] = gen.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(dirs, axis=1)
    return SliceSet(dirs / norms[:, None],
                    provenance=f"seed={rng.seed},stream={rng.stream_id}")


def project(batch: ActivationBatch, theta: np.ndarray) -> np.ndarray:
    """Project every activation onto one direction: returns <h_i, theta> per row."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (batch.dim,):
        raise ValueError(f"direction has dimension {theta.shape}, "
                         f"batch has width {batch.dim}")
    return batch.values @ theta


def _projections(batch: ActivationBatch, slices: SliceSet) -> np.ndarray:
    if slices.dim != batch.dim:
        raise ValueError(f"slice dimension {slices.dim} does not match "
                         f"batch width {batch.dim}")
    # (s, b): row k holds the batch projected onto direction k
    return slices.directions @ batch.values.T


def sw1_to_gaussian(batch: ActivationBatch, slices: SliceSet) -> float:
    """Monte Carlo sliced W1 between the batch and N(0, I): the per-slice
    closed-form Gaussian W1 averaged over slices."""
    proj = _projections(batch, slices)
    return float(ot1d.w1_empirical_gaussian_rows(proj).mean())


def sw1_empirical(batch: ActivationBatch, reference: ActivationBatch,
                  slices: SliceSet) -> float:
    """Monte Carlo sliced W1 between two equal-size batches (the empirical
    Gaussian surrogate when `reference` holds N(0, I) draws)."""
    if reference.batch_size != batch.batch_size:
        raise ValueError("batch and reference must have equal row counts")
    if reference.dim != batch.dim:
        raise ValueError("batch and reference must have equal width")
    proj = _projections(batch, slices)
    proj_ref = _projections(reference, slices)
    return float(ot1d.w1_empirical_empirical_rows(proj, proj_ref).mean())
