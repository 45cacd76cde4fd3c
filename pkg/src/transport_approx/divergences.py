"""Objectives and discrepancy estimators between distributions and maps."""

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from . import _kernels
from .basis import ExpansionFunction
from .distributions import quantile_nodes
from .errors import (IllConditionedError, InvalidArgumentError, MonotonicityViolationError,
                     NotSPDError, NumericDomainError)
from .maps import (MonotoneComponent, TriangularMap, pullback_logdensity, rectifier_apply,
                   rectifier_deriv, rectifier_dlog, rectifier_log)
from .optimize import solve_spd
from .quadrature import gauss_legendre

# ------------------------------------------------------------ Wasserstein-p


@dataclass(eq=False)
class WpQuantileObjective:
    """Quantile form of W_p^p for maps that are assumed increasing.

    ``ref_q`` and ``target_q`` tabulate the reference and target quantiles
    at the nodes of ``rule`` (a [0, 1] rule); nodes where either quantile
    is infinite are dropped.
    """

    p: float
    ref_q: np.ndarray
    target_q: np.ndarray
    weights: np.ndarray
    smoothing_eps: float = 1e-8

    @classmethod
    def build(cls, reference, target, rule, p=2.0, smoothing_eps=1e-8):
        if p < 1:
            raise InvalidArgumentError("W_p needs p >= 1")
        with np.errstate(divide="ignore"):
            ref_q = np.asarray(reference._ppf(rule.nodes), dtype=float)
            target_q = np.asarray(target._ppf(rule.nodes), dtype=float)
        keep = np.isfinite(ref_q) & np.isfinite(target_q)
        return cls(float(p), ref_q[keep], target_q[keep], rule.weights[keep], smoothing_eps)

    def residual(self, S):
        values = np.asarray(S(self.ref_q), dtype=float)
        bad = ~np.isfinite(values)
        if np.any(bad):
            node = float(self.ref_q[np.flatnonzero(bad)[0]])
            raise NumericDomainError(f"map is not finite at reference quantile {node!r}", location=node)
        return self.target_q - values

    def _penalty(self, u):
        if self.p == 1.0:
            return np.sqrt(u * u + self.smoothing_eps ** 2)
        return np.abs(u) ** self.p

    def _penalty_slope(self, u):
        if self.p == 1.0:
            return u / np.sqrt(u * u + self.smoothing_eps ** 2)
        return self.p * np.abs(u) ** (self.p - 1.0) * np.sign(u)

    def __call__(self, S):
        return float(self.weights @ self._penalty(self.residual(S)))

    def distance(self, S):
        """The W_p estimate itself; unlike ``__call__`` it is never smoothed."""
        u = self.residual(S)
        return float(self.weights @ np.abs(u) ** self.p) ** (1.0 / self.p)

    def coefficient_problem(self, template):
        """``(fun, grad)`` over the coefficients of an expansion template."""
        design = template.design(self.ref_q)
        wd = design * self.weights

        def fun(alpha):
            return float(self.weights @ self._penalty(self.target_q - alpha @ design))

        def grad(alpha):
            return -(wd @ self._penalty_slope(self.target_q - alpha @ design))

        return fun, grad


def wp_objective(obj, S):
    return obj(S)


def wp_gradient(obj, template, alpha):
    return obj.coefficient_problem(template)[1](np.asarray(alpha, dtype=float))


def w2_closed_form(spec, reference, target, rule, max_condition=1e12):
    """Least-squares W_2 fit: solve ``A alpha = b`` with the quantile Gram matrix."""
    obj = WpQuantileObjective.build(reference, target, rule, p=2.0)
    template = ExpansionFunction(spec, np.zeros(spec.dimension))
    design = template.design(obj.ref_q)
    A = (design * obj.weights) @ design.T
    b = (design * obj.weights) @ obj.target_q
    cond = np.linalg.cond(A)
    if not cond < max_condition:
        raise IllConditionedError(
            f"W2 normal equations have condition number {cond:.3e}; lower the degree or refine the quadrature",
            condition=cond)
    try:
        alpha = solve_spd(A, b)
    except NotSPDError as exc:
        raise IllConditionedError(f"W2 normal equations are not positive definite: {exc}", condition=cond) from exc
    return template.with_coefficients(alpha)


# ------------------------------------------------------------ sample based


def empirical_wasserstein_1d(xs, ys, p=1.0):
    """W_p between two equal-size empirical measures via the sorted coupling."""
    xs = np.sort(np.asarray(xs, dtype=float).ravel())
    ys = np.sort(np.asarray(ys, dtype=float).ravel())
    if xs.size != ys.size or xs.size == 0:
        raise InvalidArgumentError("empirical W_p needs two non-empty samples of equal size")
    return float(np.mean(np.abs(xs - ys) ** p) ** (1.0 / p))


def mmd_gaussian(xs, ys, gamma):
    """Biased (V-statistic) MMD with kernel ``exp(-gamma^2 |u - v|^2)``."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size == 0 or ys.size == 0:
        raise InvalidArgumentError("MMD needs non-empty samples")
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    kxx = _kernels.gaussian_kernel_sum(xs, xs, gamma) / xs.size ** 2
    kyy = _kernels.gaussian_kernel_sum(ys, ys, gamma) / ys.size ** 2
    kxy = _kernels.gaussian_kernel_sum(xs, ys, gamma) / (xs.size * ys.size)
    return _mmd_from_terms(kxx, kyy, kxy)


def _mmd_from_terms(kxx, kyy, kxy):
    sq = kxx + kyy - 2.0 * kxy
    if not sq >= -1e-12:
        raise NumericDomainError(f"negative MMD radicand {sq!r}; inputs are probably not finite")
    return math.sqrt(max(sq, 0.0))


def mmd_gaussian_pushforward(F, G, mu, gamma, order=256):
    """Deterministic MMD between ``F#mu`` and ``G#mu`` by a quantile-space rule."""
    x, w = quantile_nodes(mu, gauss_legendre(order, (0.0, 1.0)))
    fx = np.asarray(F(x), dtype=float)
    gx = np.asarray(G(x), dtype=float)
    g2 = gamma * gamma

    def mean_kernel(a, b):
        d = a[:, None] - b[None, :]
        return float(w @ np.exp(-g2 * d * d) @ w)

    return _mmd_from_terms(mean_kernel(fx, fx), mean_kernel(gx, gx), mean_kernel(fx, gx))


# ------------------------------------------------------------ KL


def _components(S):
    if isinstance(S, MonotoneComponent):
        return [S]
    if isinstance(S, TriangularMap):
        if not S.monotone:
            raise MonotonicityViolationError("KL objective needs monotone components")
        return S.components
    raise InvalidArgumentError(f"unsupported map type {type(S).__name__}")


def _component_input(x, i):
    if x.ndim == 1:
        return x
    return x[..., : i + 1] if i > 0 else x[..., 0]


@dataclass(eq=False)
class KLPullbackObjective:
    """Negative mean log-likelihood of samples under ``S^# N(0, I)``.

    The constant ``(d / 2) log(2 pi)`` is dropped. ``half=False`` drops the
    factor 1/2 on ``|S(x)|^2`` for comparison runs.
    """

    samples: np.ndarray
    half: bool = True

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)

    @property
    def _scale(self):
        return 0.5 if self.half else 1.0

    def __call__(self, S):
        x = self.samples
        total = 0.0
        for i, c in enumerate(_components(S)):
            xi = _component_input(x, i)
            d = c.deriv(xi)
            if np.any(~(d > 0)):
                raise MonotonicityViolationError("map derivative is not positive at a sample")
            total = total + self._scale * c(xi) ** 2 - c.log_deriv(xi)
        return float(np.mean(total))

    def coefficient_problem(self, template, order=None):
        """``(fun, grad)`` over the concatenated coefficients of ``template``.

        The segment quadrature is frozen at ``order`` (default: the
        component's own order) so the gradient is exact for the discretized
        objective.
        """
        comps = _components(template)
        x = self.samples
        caches = []
        for i, c in enumerate(comps):
            xi = _component_input(x, i)
            q = int(order or c.order)
            seg, wt = c.segment_points(xi, q)
            caches.append({
                "comp": c,
                "anchor": c.f.design(c._anchor(xi)),
                "seg": c.f.design(c._unsplit(seg), partial=-1),
                "wt": wt,
                "diag": c.f.design(xi, partial=-1),
                "size": len(c.coefficients),
            })
        n = x.shape[0]
        scale = self._scale
        memo = {}

        def evaluate(alpha):
            key = alpha.tobytes()
            if key in memo:
                return memo[key]
            value = 0.0
            grads = []
            start = 0
            for cache in caches:
                a = alpha[start : start + cache["size"]]
                start += cache["size"]
                r = cache["comp"].rectifier
                fp_seg = np.tensordot(a, cache["seg"], axes=1)
                T = a @ cache["anchor"] + np.sum(cache["wt"] * rectifier_apply(r, fp_seg), axis=-1)
                fp = a @ cache["diag"]
                value += np.sum(scale * T * T - rectifier_log(r, fp)) / n
                dr = cache["wt"] * rectifier_deriv(r, fp_seg)
                dT = cache["anchor"] + np.einsum("knq,nq->kn", cache["seg"], dr)
                grads.append((2.0 * scale * (dT @ T) - cache["diag"] @ rectifier_dlog(r, fp)) / n)
            out = (float(value), np.concatenate(grads))
            memo.clear()
            memo[key] = out
            return out

        def fun(alpha):
            return evaluate(np.asarray(alpha, dtype=float))[0]

        def grad(alpha):
            return evaluate(np.asarray(alpha, dtype=float))[1].copy()

        return fun, grad


def kl_pullback_objective(obj, S):
    return obj(S)


def kl_estimate(nu, T, test_samples, reference=None, return_stderr=False):
    """Monte Carlo estimate of ``KL(nu || T^# reference)`` from samples of ``nu``."""
    from .distributions import Gaussian

    reference = reference or Gaussian()
    x = np.asarray(test_samples, dtype=float)
    terms = nu.log_pdf(x) - pullback_logdensity(T, reference, x)
    if terms.ndim > 1:
        terms = terms.reshape(terms.shape[0], -1).sum(axis=1)
    est = float(np.mean(terms))
    if return_stderr:
        return est, float(np.std(terms, ddof=1) / math.sqrt(terms.size))
    return est


# ------------------------------------------------------------ map distances


def _diagonal_partial(F):
    if isinstance(F, MonotoneComponent):
        return F.deriv
    if isinstance(F, ExpansionFunction):
        return lambda x: F.partial(x, axis=-1)
    deriv = getattr(F, "deriv", None)
    if deriv is None:
        raise InvalidArgumentError("pass the diagonal derivative explicitly for plain callables")
    return deriv


def gaussian_tensor_rule(dim, order=48):
    """Probabilists' Gauss-Hermite nodes and probability weights on R^dim."""
    x, w = hermegauss(order)
    w = w / math.sqrt(2.0 * math.pi)
    if dim == 1:
        return x, w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(len(pts))
    for wg in np.meshgrid(*([w] * dim), indexing="ij"):
        weights *= wg.ravel()
    return pts, weights


def v_norm_distance(F, G, dim=1, order=48, dF=None, dG=None, reference=None, rule=None):
    """V-norm of ``F - G``: root of the squared L2 norm plus the squared L2
    norm of the derivative in the last coordinate.

    The weight is the standard Gaussian on R^dim unless a 1D ``reference``
    and a quantile ``rule`` on [0, 1] are given.
    """
    if reference is not None:
        if rule is None or dim != 1:
            raise InvalidArgumentError("a custom reference needs a quantile rule and dim == 1")
        pts, w = quantile_nodes(reference, rule)
    else:
        pts, w = gaussian_tensor_rule(dim, order)
    dF = dF or _diagonal_partial(F)
    dG = dG or _diagonal_partial(G)
    diff = np.asarray(F(pts), dtype=float) - np.asarray(G(pts), dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        ddiff = np.asarray(dF(pts), dtype=float) - np.asarray(dG(pts), dtype=float)
    return math.sqrt(float(w @ (diff * diff) + w @ (ddiff * ddiff)))


def l2_map_error(F, G, reference=None, rule=None, points=None):
    """L2 distance between maps: quadrature under ``reference`` or RMS over ``points``."""
    if points is not None:
        points = np.asarray(points, dtype=float)
        diff = np.asarray(F(points), dtype=float) - np.asarray(G(points), dtype=float)
        return float(np.sqrt(np.mean(diff * diff)))
    if reference is None or rule is None:
        raise InvalidArgumentError("give either points or a reference with a quantile rule")
    x, w = quantile_nodes(reference, rule)
    diff = np.asarray(F(x), dtype=float) - np.asarray(G(x), dtype=float)
    return float(math.sqrt(w @ (diff * diff)))


def _sign_change_breaks(h, a, b, grid=2001):
    """Endpoints plus every root of ``h`` found on a uniform grid.

    All brackets are bisected together, one vectorized ``h`` call per step.
    """
    xs = np.linspace(a, b, grid)
    hs = np.asarray(h(xs), dtype=float)
    idx = np.flatnonzero(np.sign(hs[:-1]) * np.sign(hs[1:]) < 0)
    lo, hi = xs[idx], xs[idx + 1]
    lo_sign = np.sign(hs[idx])
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if not np.any((mid > lo) & (mid < hi)):
            break
        same = np.sign(np.asarray(h(mid), dtype=float)) == lo_sign
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return [a, *(0.5 * (lo + hi)).tolist(), b]


def _piecewise_integral(fn, breaks, order=48, max_width=0.5):
    rule = gauss_legendre(order)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        panels = max(1, int(math.ceil((hi - lo) / max_width)))
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mids[:, None] + half[:, None] * rule.nodes[None, :]).ravel()
        weights = (half[:, None] * rule.weights[None, :]).ravel()
        total += float(weights @ fn(nodes))
    return total


def lp_map_distance(F, G, mu, q=2.0, order=48):
    """``||F - G||_{L^q(mu)}`` with the integration split at sign changes of F - G."""
    a, b = mu.mass_interval(1e-17)

    def h(x):
        return np.asarray(F(x), dtype=float) - np.asarray(G(x), dtype=float)

    breaks = _sign_change_breaks(h, a, b)
    val = _piecewise_integral(lambda x: np.abs(h(x)) ** q * mu.pdf(x), breaks, order)
    return val ** (1.0 / q)


def wp_monotone_pushforward(F, G, mu, p=2.0, order=48):
    """W_p between ``F#mu`` and ``G#mu`` for increasing maps, via quantile functions."""

    def h(y):
        x = mu._ppf(np.asarray(y, dtype=float))
        return np.asarray(F(x), dtype=float) - np.asarray(G(x), dtype=float)

    bounded = np.all(np.isfinite(mu.support))
    lo, hi = (0.0, 1.0) if bounded else (1e-16, float(np.nextafter(1.0, 0.0)))
    breaks = _sign_change_breaks(h, lo, hi)
    if not bounded:
        # the quantile has log singularities at both ends; grade the panels
        tails = 10.0 ** -np.arange(2.0, 16.0)
        breaks = sorted(set(breaks) | set(tails.tolist()) | set((1.0 - tails[:-1]).tolist()))
    return _piecewise_integral(lambda y: np.abs(h(y)) ** p, breaks, order, max_width=0.05) ** (1.0 / p)
