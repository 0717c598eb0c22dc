"""Independent oracles shared by the test suite.

Everything here deliberately avoids the package's own computational paths:
normal-law values come from the stdlib math module, integrals from a local
adaptive Simpson rule, and gradients from central finite differences.
"""

import math

import numpy as np


def phi_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def phi_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def adaptive_simpson(f, a: float, b: float, tol: float,
                     max_depth: int = 50, min_depth: int = 0) -> float:
    """Recursive adaptive Simpson quadrature with Richardson correction.

    min_depth forces that many subdivision levels before the acceptance test
    may fire, guarding against spikes the initial stencil never samples
    (e.g. integrands that vanish at every coarse sample point).
    """

    def step(lo, flo, fmid, fhi, hi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, tol, depth):
        mid = 0.5 * (lo + hi)
        lmid, rmid = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flmid, frmid = f(lmid), f(rmid)
        left = step(lo, flo, flmid, fmid, mid)
        right = step(mid, fmid, frmid, fhi, hi)
        converged = (depth <= max_depth - min_depth
                     and abs(left + right - whole) <= 15.0 * tol)
        if depth <= 0 or converged:
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, flmid, fmid, left, tol / 2.0, depth - 1)
                + recurse(mid, hi, fmid, frmid, fhi, right, tol / 2.0,
                          depth - 1))

    if b <= a:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, step(a, fa, fm, fb, b), tol, max_depth)


def mean_abs_dev_quad(z: float, tol: float = 1e-12) -> float:
    """E|Z - z| for Z ~ N(0,1) by quadrature, split at the kink.

    The integrand vanishes at the kink, so the pieces force enough initial
    subdivision to see the probability mass hugging that endpoint.
    """
    lo, hi = min(z, 0.0) - 12.0, max(z, 0.0) + 12.0
    f = lambda t: abs(t - z) * phi_pdf(t)
    return (adaptive_simpson(f, lo, z, tol / 2, min_depth=6)
            + adaptive_simpson(f, z, hi, tol / 2, min_depth=6))


def cdf_gap_quad(sample, tol: float = 1e-11) -> float:
    """Integral of |Phi(x) - F_emp(x)| over [min-10, max+10] by adaptive
    Simpson, subdivided at the data points where F_emp jumps."""
    s = np.sort(np.asarray(sample, dtype=np.float64))
    b = s.size
    pts = [float(s[0]) - 10.0, *map(float, s), float(s[-1]) + 10.0]
    seg_tol = tol / (len(pts) - 1)
    total = 0.0
    for k, (lo, hi) in enumerate(zip(pts[:-1], pts[1:])):
        if hi <= lo:
            continue
        c = k / b
        total += adaptive_simpson(lambda x: abs(phi_cdf(x) - c), lo, hi,
                                  seg_tol)
    return total


def sphere_marginal_abs_mean(c, tol: float = 1e-12) -> float:
    """E|<c, theta>| for theta uniform on the unit sphere in R^d, via 1-D
    quadrature of the first-coordinate marginal density."""
    c = np.asarray(c, dtype=np.float64)
    d = c.size
    if d == 1:
        return float(abs(c[0]))
    norm_const = math.gamma(d / 2.0) / (math.sqrt(math.pi)
                                        * math.gamma((d - 1) / 2.0))
    density = lambda u: norm_const * (1.0 - u * u) ** ((d - 3) / 2.0)
    # integrand |u| * f(u) is even; integrate on (0, 1) and double
    val = 2.0 * adaptive_simpson(lambda u: u * density(u), 0.0, 1.0 - 1e-12,
                                 tol)
    return float(np.linalg.norm(c)) * val


def central_diff(f, x: float, h: float = 1e-5) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def grad_check(objective, params, eps: float = 1e-6):
    """Central-difference gradient of a scalar objective over a list of
    parameter arrays (perturbed in place); returns matching arrays."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for k in range(flat_p.size):
            orig = flat_p[k]
            flat_p[k] = orig + eps
            hi = objective()
            flat_p[k] = orig - eps
            lo = objective()
            flat_p[k] = orig
            flat_g[k] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def rel_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Global-norm relative error between two gradient collections."""
    a = np.concatenate([np.asarray(g).reshape(-1) for g in analytic])
    n = np.concatenate([np.asarray(g).reshape(-1) for g in numeric])
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def full_network_rel_error(activation: str, method: str, seed: int = 0,
                           widths=(3, 6, 5, 4), batch: int = 4,
                           lam: float = 3e-2) -> float:
    """Backprop vs central differences on a small network.

    The finite-difference objective is the mean cross-entropy plus, for the
    penalty methods, the terms the backward hook differentiates: the
    projection loss enters as lam * b * per_loss per hidden layer with the
    slices frozen by the fixed regularizer stream.
    """
    import perreg as pr

    rng = pr.RngStream(seed)
    net = pr.init_network(widths, activation, "he", rng.substream(1))
    gen = rng.substream(2).generator()
    x = gen.normal(0.0, 1.0, (batch, widths[0]))
    y = gen.integers(0, widths[-1], batch)
    bn_states = None
    if method == "bn":
        bn_states = [pr.BnState.create(layer.weights.shape[0])
                     for layer in net.layers[:-1]] + [None]
    reg = pr.RegConfig(method=method,
                       lam=0.0 if method in ("none", "bn") else lam,
                       slices=8, seed=rng.substream(3))

    def objective():
        logits, acts, _ = pr.forward(net, x, bn_states, training=True)
        loss, _ = pr.softmax_cross_entropy(logits, y)
        for l in range(net.n_hidden):
            if reg.method == "per" and reg.lam > 0.0:
                slices = pr.draw_slices(reg.seed.substream(l), reg.slices,
                                        acts[l].dim)
                loss += reg.lam * batch * pr.per_loss(acts[l], slices)
            elif reg.method in ("l1", "l2"):
                pen, _ = pr.lp_activation_penalty(
                    acts[l], 1 if reg.method == "l1" else 2, reg.lam)
                loss += pen
        return loss

    _, _, cache = pr.forward(net, x, bn_states, training=True)
    grads = pr.backward(net, cache, y, reg, bn_states)
    params = pr.trainable_arrays(net, bn_states)
    numeric = grad_check(objective, params)
    return rel_error(pr.gradient_arrays(grads), numeric)
