"""Scalar special functions, seeded random streams, and unit-sphere sampling.

Everything here is pure: random sampling takes an explicit `RngStream` value,
so the same stream always yields the same draws. Streams are split, never
mutated, which keeps parallel callers reproducible.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

_MASK64 = (1 << 64) - 1

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _mix64(x: int) -> int:
    # SplitMix64 finalizer: a bijective 64-bit mixer, used to derive
    # well-separated substream ids.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """A splittable, counter-based random stream.

    The (seed, stream_id) pair keys a Philox-4x64 generator, so the same pair
    reproduces the same sample sequence on any platform, and distinct
    stream_ids give statistically independent sequences.
    """

    seed: int
    stream_id: int = 0

    def substream(self, *path: int) -> "RngStream":
        """Derive an independent child stream from a path of integer tags."""
        sid = self.stream_id & _MASK64
        for tag in path:
            sid = _mix64(sid ^ _mix64(tag & _MASK64))
        return RngStream(self.seed, sid)

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator positioned at the start of this stream."""
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def erf(x):
    """Gauss error function, elementwise; odd symmetry is exact by construction."""
    x = np.asarray(x, dtype=np.float64)
    out = np.copysign(_sp.erf(np.abs(x)), x)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    """Density of N(0, 1), elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def std_normal_cdf(x):
    """Distribution function of N(0, 1), elementwise.

    Computed as erfc(-x/sqrt(2))/2, which equals (1 + erf(x/sqrt(2)))/2 but
    stays accurate deep into both tails.
    """
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * _sp.erfc(-x / _SQRT2)
    return float(out) if out.ndim == 0 else out


# Coefficients of Acklam's rational approximation to the normal quantile
# (relative error < 1.15e-9 over (0, 1); refined below by Newton steps).
_ACK_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
          1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_ACK_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
          6.680131188771972e+01, -1.328068155288572e+01)
_ACK_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
          -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_ACK_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
_ACK_SPLIT = 0.02425


def _quantile_initial(p: np.ndarray) -> np.ndarray:
    a, b, c, d = _ACK_A, _ACK_B, _ACK_C, _ACK_D
    x = np.empty_like(p)

    lo = p < _ACK_SPLIT
    hi = p > 1.0 - _ACK_SPLIT
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]
        den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
        x[mid] = num * q / den
    for mask, tail_p, sign in ((lo, p[lo], 1.0), (hi, 1.0 - p[hi], -1.0)):
        if np.any(mask):
            q = np.sqrt(-2.0 * np.log(tail_p))
            num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
            den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
            x[mask] = sign * num / den
    return x


def std_normal_quantile(p):
    """Inverse of std_normal_cdf on (0, 1).

    Rational initial approximation refined by Newton iterations; the result x
    satisfies |cdf(x) - p| <= 1e-13 (limited only by double precision).
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")

    x = _quantile_initial(np.atleast_1d(p_arr).copy())
    target = np.atleast_1d(p_arr)
    for _ in range(3):
        err = std_normal_cdf(x) - target
        pdf = std_normal_pdf(x)
        step = np.where(pdf > 0.0, err / np.where(pdf > 0.0, pdf, 1.0), 0.0)
        x -= step
    out = x.reshape(p_arr.shape)
    return float(out) if p_arr.ndim == 0 else out


def sample_standard_gaussian(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. N(0, 1) draws, fully determined by the stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.generator().standard_normal(n)


def sample_unit_sphere(rng: RngStream, d: int) -> np.ndarray:
    """One uniform draw from the unit sphere in R^d (normalized Gaussian)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    gen = rng.generator()
    while True:
        v = gen.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm >= 1e-300:
            return v / norm
