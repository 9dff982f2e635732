"""Generalized mutual information of labeled constellations over AWGN.

``sigma_z`` is the noise standard deviation per complex dimension, so with
constellations normalized to unit power per complex dimension the SNR is
``1 / sigma_z**2``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .constellation import LabeledConstellation, label_bits, orbit_representatives, sign_symmetries
from .errors import (
    BadOrder,
    DimensionUnsupported,
    NonPositiveNoise,
    TargetOutOfRange,
    TooFewSamples,
)

DEFAULT_ORDER = 10
LN2 = np.log(2.0)

# elements per (nodes x points) block; keeps the working set in cache
_BLOCK = 1 << 17


@dataclass(frozen=True)
class QuadratureRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class GmiEstimate:
    value: float
    method: str
    std_err: float = 0.0
    n_samples: int = 0


def sigma_from_snr_db(snr_db):
    return 10.0 ** (-np.asarray(snr_db, dtype=float) / 20.0)


def snr_db_from_sigma(sigma_z):
    return -20.0 * np.log10(sigma_z)


def _orthonormal_hermite(x, n):
    """Orthonormal Hermite polynomials ``h_0..h_n`` at ``x`` (weight exp(-x^2))."""
    h = np.empty((n + 1,) + np.shape(x))
    h[0] = np.pi**-0.25
    if n > 0:
        h[1] = np.sqrt(2.0) * x * h[0]
    for k in range(1, n):
        h[k + 1] = np.sqrt(2.0 / (k + 1)) * x * h[k] - np.sqrt(k / (k + 1)) * h[k - 1]
    return h


@lru_cache(maxsize=None)
def gauss_hermite_rule(order=DEFAULT_ORDER):
    """Gauss-Hermite rule for weight ``exp(-x^2)``.

    Nodes come from the Golub-Welsch eigenproblem, are polished by Newton
    steps on the three-term recurrence, and are symmetrized so that
    reflections of the grid are exact in floating point.
    """
    if not isinstance(order, (int, np.integer)) or not 2 <= order <= 64:
        raise BadOrder(f"quadrature order must be an integer in [2, 64], got {order!r}")
    offdiag = np.sqrt(np.arange(1, order) / 2.0)
    nodes = np.linalg.eigvalsh(np.diag(offdiag, 1) + np.diag(offdiag, -1))
    for _ in range(3):
        h = _orthonormal_hermite(nodes, order)
        nodes = nodes - h[order] / (np.sqrt(2.0 * order) * h[order - 1])
    h = _orthonormal_hermite(nodes, order - 1)
    weights = 1.0 / np.sum(h**2, axis=0)
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order, nodes, weights)


@lru_cache(maxsize=8)
def tensor_grid(order, n_dims):
    """Product-rule nodes ``(J^N, N)`` and weights ``(J^N,)``."""
    rule = gauss_hermite_rule(order)
    axes = np.meshgrid(*([rule.nodes] * n_dims), indexing="ij")
    nodes = np.stack([a.ravel() for a in axes], axis=1)
    waxes = np.meshgrid(*([rule.weights] * n_dims), indexing="ij")
    weights = np.prod(np.stack([a.ravel() for a in waxes], axis=1), axis=1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _row_terms(points, bits, sigma, nodes, weights, rows, want_grad=False):
    """Per-row quadrature sums of ``m*log S_all - sum_k log S_k`` (natural log).

    ``S`` are sums of ``exp(-||X_i - X_p + sigma*u||^2 / sigma^2)``. Every
    term is <= 1 and the sums always contain ``p = i``, so no overflow or
    log(0) can occur; this is log-sum-exp with the shift fixed at the
    analytic maximum ``||u||^2``. Optionally returns the gradient of the
    summed terms with respect to ``points``.
    """
    n_points, n_dims = points.shape
    n_bits = bits.shape[1]
    inv_var = 1.0 / (sigma * sigma)
    node_norm = sigma * sigma * np.sum(nodes * nodes, axis=1)
    chunk = max(16, _BLOCK // n_points)
    terms = np.zeros(len(rows))
    grad = np.zeros_like(points) if want_grad else None
    match = np.ones((n_points, n_bits + 1))
    for r, i in enumerate(rows):
        diff = points[i] - points
        sq = np.sum(diff * diff, axis=1)
        match[:, 1:] = bits == bits[i]
        g_row = np.zeros_like(points) if want_grad else None
        for q0 in range(0, len(weights), chunk):
            u = nodes[q0:q0 + chunk]
            w = weights[q0:q0 + chunk]
            z = u @ (diff.T * (2.0 * sigma))
            z += sq
            z += node_norm[q0:q0 + chunk, None]
            z *= -inv_var
            # exp() of arguments in the subnormal range is very slow
            np.maximum(z, -700.0, out=z)
            np.exp(z, out=z)
            sums = z @ match
            logs = np.log(sums)
            terms[r] += w @ (n_bits * logs[:, 0] - logs[:, 1:].sum(axis=1))
            if want_grad:
                coef = n_bits / sums[:, :1] - (1.0 / sums[:, 1:]) @ match[:, 1:].T
                coef *= w[:, None]
                z *= coef
                g_row += (2.0 * inv_var) * (
                    z.sum(axis=0)[:, None] * diff + sigma * (z.T @ u)
                )
        if want_grad:
            grad += g_row
            grad[i] -= g_row.sum(axis=0)
    return terms, grad


def _check(c, sigma_z):
    if not sigma_z > 0:
        raise NonPositiveNoise(f"sigma_z must be > 0, got {sigma_z}")
    if c.n_dims not in (2, 4):
        raise DimensionUnsupported(f"Gauss-Hermite GMI supports N in (2, 4), got N={c.n_dims}")


def _product_factors(c):
    """Split a 4D product format (label = label_x || label_y) into its 2D factors."""
    if c.n_dims != 4 or c.bits % 2:
        return None
    side = 1 << (c.bits // 2)
    grid = c.points.reshape(side, side, 4)
    if np.array_equal(grid[:, :, :2], np.broadcast_to(grid[:, :1, :2], grid[:, :, :2].shape)) and \
            np.array_equal(grid[:, :, 2:], np.broadcast_to(grid[:1, :, 2:], grid[:, :, 2:].shape)):
        return (
            LabeledConstellation(grid[:, 0, :2], c.name + ":x"),
            LabeledConstellation(grid[0, :, 2:], c.name + ":y"),
        )
    return None


def _gh_value(points, sigma, order, rows=None, row_weight=1.0):
    n_points, n_dims = points.shape
    nodes, weights = tensor_grid(order, n_dims)
    bits = label_bits(n_points)
    if rows is None:
        rows = np.arange(n_points)
    terms, _ = _row_terms(points, bits, sigma, nodes, weights, rows)
    norm = n_points * np.pi ** (n_dims / 2) * LN2
    return bits.shape[1] - row_weight * np.sum(terms) / norm


def gmi_gh(c, sigma_z, rule=None):
    """GMI (bit/symbol) by Gauss-Hermite quadrature over the ``N``-fold node product.

    Exact symmetries are used to cut work: product formats split into their
    two 2D factors, and label-XOR sign symmetries restrict the outer sum to
    one row per orbit.
    """
    _check(c, sigma_z)
    order = DEFAULT_ORDER if rule is None else rule.order
    factors = _product_factors(c)
    if factors is not None:
        value = sum(gmi_gh(f, sigma_z, gauss_hermite_rule(order)).value for f in factors)
        return GmiEstimate(float(value), "gauss_hermite")
    masks = sign_symmetries(c)
    rows = orbit_representatives(c.n_points, masks)
    value = _gh_value(c.points, float(sigma_z), order, rows, float(len(masks)))
    return GmiEstimate(float(max(value, 0.0)), "gauss_hermite")


def gmi_gh_full(c, sigma_z, rule=None):
    """Same estimate as :func:`gmi_gh` with every shortcut disabled."""
    _check(c, sigma_z)
    order = DEFAULT_ORDER if rule is None else rule.order
    return GmiEstimate(float(_gh_value(c.points, float(sigma_z), order)), "gauss_hermite")


def gmi_gh_value_and_grad(points, sigma_z, rule=None, rows=None, row_weight=1.0):
    """GMI and its gradient with respect to the (unnormalized) point matrix.

    With ``rows``/``row_weight`` the outer sum runs over a subset of rows,
    which equals the full GMI only on constellations carrying the matching
    symmetry; the gradient is then exact only along symmetric directions.
    """
    order = DEFAULT_ORDER if rule is None else rule.order
    n_points, n_dims = points.shape
    nodes, weights = tensor_grid(order, n_dims)
    bits = label_bits(n_points)
    if rows is None:
        rows = np.arange(n_points)
    terms, grad = _row_terms(points, bits, float(sigma_z), nodes, weights, rows, want_grad=True)
    norm = n_points * np.pi ** (n_dims / 2) * LN2
    value = bits.shape[1] - row_weight * np.sum(terms) / norm
    return float(value), -(row_weight / norm) * grad


def gmi_mc(c, sigma_z, n=10**6, seed=0, chunk=8192):
    """Monte Carlo GMI from bitwise max-log-free LLRs; deterministic for a fixed seed."""
    if n < 10**4:
        raise TooFewSamples(f"need n >= 1e4 samples, got {n}")
    if not sigma_z > 0:
        raise NonPositiveNoise(f"sigma_z must be > 0, got {sigma_z}")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, c.n_points, size=n)
    noise = rng.standard_normal((n, c.n_dims)) * (sigma_z / np.sqrt(2.0))
    bits = label_bits(c.n_points).astype(float)
    ones_zeros = np.hstack([np.ones((c.n_points, 1)), 1.0 - bits, bits])
    m = c.bits
    xs = c.points
    x_sq = np.sum(xs * xs, axis=1)
    per_sample = np.empty(n)
    for s0 in range(0, n, chunk):
        lab = labels[s0:s0 + chunk]
        y = xs[lab] + noise[s0:s0 + chunk]
        metric = (2.0 * (y @ xs.T) - x_sq - np.sum(y * y, axis=1)[:, None]) / sigma_z**2
        metric -= metric.max(axis=1, keepdims=True)
        sums = np.exp(metric) @ ones_zeros
        tx_bits = bits[lab].astype(bool)
        own = np.where(tx_bits, sums[:, 1 + m:], sums[:, 1:1 + m])
        per_sample[s0:s0 + chunk] = (m * np.log(sums[:, 0]) - np.log(own).sum(axis=1)) / LN2
    loss = per_sample.mean()
    std_err = per_sample.std(ddof=1) / np.sqrt(n)
    return GmiEstimate(float(m - loss), "monte_carlo", float(std_err), int(n))


def snr_for_target_gmi(c, target_bits, rule=None, lo_db=-20.0, hi_db=40.0,
                       gmi_tol=1e-4, snr_tol=1e-4):
    """Bisection for the SNR (dB) at which ``gmi_gh`` reaches ``target_bits``."""
    if not 0 < target_bits < c.bits:
        raise TargetOutOfRange(f"target {target_bits} outside (0, m={c.bits})")

    def g(snr_db):
        return gmi_gh(c, float(sigma_from_snr_db(snr_db)), rule).value

    if not g(lo_db) < target_bits < g(hi_db):
        raise TargetOutOfRange(
            f"target {target_bits} not bracketed by [{lo_db}, {hi_db}] dB for {c.name}"
        )
    lo, hi = lo_db, hi_db
    while True:
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val - target_bits) <= gmi_tol or hi - lo <= snr_tol:
            return float(mid)
        if val < target_bits:
            lo = mid
        else:
            hi = mid


def normalized_gmi(g, m):
    value = g.value if isinstance(g, GmiEstimate) else float(g)
    return value / m
