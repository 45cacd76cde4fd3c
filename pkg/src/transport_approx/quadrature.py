"""Deterministic interval quadrature rules (Clenshaw-Curtis, Gauss-Legendre)."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError, NumericDomainError


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights approximating the integral over ``domain``.

    Arrays are made read-only on construction so a rule can be shared
    freely between objectives.
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        a, b = (float(v) for v in self.domain)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 1:
            raise InvalidArgumentError("nodes and weights must be 1-D arrays of equal, positive length")
        if not a < b:
            raise InvalidArgumentError(f"empty interval [{a}, {b}]")
        if nodes[0] < a or nodes[-1] > b or np.any(np.diff(nodes) <= 0):
            raise InvalidArgumentError("nodes must be strictly ascending inside the domain")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "domain", (a, b))

    def __len__(self):
        return self.nodes.size

    @property
    def length(self):
        return self.domain[1] - self.domain[0]

    def integrate(self, f):
        return integrate(self, f)


def _check_interval(interval):
    a, b = (float(v) for v in interval)
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise InvalidArgumentError(f"interval must be finite with a < b, got {interval!r}")
    return a, b


def clenshaw_curtis(n_points, interval=(-1.0, 1.0)):
    """Clenshaw-Curtis rule on Chebyshev extrema, exact to degree ``n_points - 1``.

    Weights come from the explicit cosine sum, O(n^2) but free of FFT
    round-off and easy to audit.
    """
    if int(n_points) != n_points or n_points < 2:
        raise InvalidArgumentError(f"Clenshaw-Curtis needs n_points >= 2, got {n_points}")
    n = int(n_points)
    a, b = _check_interval(interval)
    N = n - 1
    x = -np.cos(np.pi * np.arange(n) / N)
    # exact symmetry and endpoints, cos round-off otherwise leaks ~1e-17
    x = 0.5 * (x - x[::-1])
    x[0], x[-1] = -1.0, 1.0
    if n % 2 == 1:
        x[N // 2] = 0.0
    w = np.asarray(_kernels.cc_weights(n), dtype=float)
    w = 0.5 * (w + w[::-1])
    half = 0.5 * (b - a)
    nodes = a + half * (x + 1.0)
    nodes[0], nodes[-1] = a, b
    return QuadratureRule(nodes, half * w, (a, b))


def _legendre_and_derivative(n, x):
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(1, n):
        p0, p1 = p1, ((2 * m + 1) * x * p1 - m * p0) / (m + 1)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gauss_legendre(n_points, interval=(-1.0, 1.0), tol=1e-15, max_iter=100):
    """Gauss-Legendre rule, exact to degree ``2 * n_points - 1``.

    Roots of P_n are found by Newton iteration on the three-term recurrence,
    started from Chebyshev-type angles.
    """
    if int(n_points) != n_points or n_points < 1:
        raise InvalidArgumentError(f"Gauss-Legendre needs n_points >= 1, got {n_points}")
    n = int(n_points)
    a, b = _check_interval(interval)
    if n == 1:
        x, w = np.zeros(1), np.full(1, 2.0)
    else:
        k = np.arange(1, n + 1)
        x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
        for _ in range(max_iter):
            p, dp = _legendre_and_derivative(n, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) < tol:
                break
        _, dp = _legendre_and_derivative(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        x, w = x[::-1].copy(), w[::-1].copy()
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
    half = 0.5 * (b - a)
    return QuadratureRule(a + half * (x + 1.0), half * w, (a, b))


def integrate(rule, f):
    """Return ``sum(weights * f(nodes))``; ``f`` is called once on the node array."""
    values = np.asarray(f(rule.nodes), dtype=float)
    if values.shape != rule.nodes.shape:
        values = np.broadcast_to(values, rule.nodes.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        node = float(rule.nodes[i])
        raise NumericDomainError(f"integrand is not finite at node {node!r} (index {i})", location=node)
    return float(rule.weights @ values)
