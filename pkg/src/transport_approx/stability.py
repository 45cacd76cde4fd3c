"""Numerical checks of divergence-vs-map-distance stability bounds.

Each check compares a divergence between two pushforwards (or pullbacks)
with a norm of the difference of the maps. Suites draw random map pairs on
per-trial RNG substreams, so a fixed master seed reproduces every number.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, ExpansionFunction, Family
from .distributions import UniformSym, rng_stream
from .divergences import (
    empirical_wasserstein_1d,
    lp_map_distance,
    mmd_gaussian,
    mmd_gaussian_pushforward,
    v_norm_distance,
    wp_monotone_pushforward,
)
from .errors import DivergenceError, InvalidArgumentError, NotMonotoneError, NumericDomainError
from .maps import MonotoneComponent, QuantileTransport, Rectifier
from .quadrature import gauss_legendre

DETERMINISTIC_TOL = 1e-8
ABS_FLOOR = 1e-14


@dataclass
class StabilityReport:
    """Per-trial (lhs, rhs, ratio) records for one inequality.

    ``violations`` lists the trial indices whose bound check failed.
    ``extra`` carries check-specific diagnostics such as a fitted slope.
    """

    theorem: str
    trials: list = field(default_factory=list)
    tolerance: float = DETERMINISTIC_TOL
    extra: dict = field(default_factory=dict)

    @property
    def trial_count(self):
        return len(self.trials)

    @property
    def ratios(self):
        return np.array([t["ratio"] for t in self.trials], dtype=float)

    @property
    def max_ratio(self):
        r = self.ratios
        return float(np.max(r)) if r.size else 0.0

    @property
    def violations(self):
        return [i for i, t in enumerate(self.trials) if t["violation"]]

    @property
    def passed(self):
        return not self.violations and bool(np.all(np.isfinite(self.ratios)))

    def merged(self, other):
        if other.theorem != self.theorem:
            raise InvalidArgumentError("cannot merge reports for different checks")
        return StabilityReport(self.theorem, self.trials + other.trials, self.tolerance,
                               {**self.extra, **other.extra})

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "trial_count": self.trial_count,
            "tolerance": self.tolerance,
            "max_ratio": self.max_ratio,
            "violations": self.violations,
            "passed": self.passed,
            "trials": self.trials,
            "extra": self.extra,
        }


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs <= ABS_FLOOR else math.inf


def _finite(name, value):
    if not np.isfinite(value):
        raise NumericDomainError(f"{name} is not finite", location=name)
    return float(value)


def is_monotone_map(F):
    return isinstance(F, (MonotoneComponent, QuantileTransport)) or bool(getattr(F, "monotone", False))


class AffineMap:
    """x -> slope * x + shift, with derivative and inverse."""

    monotone = True

    def __init__(self, slope=1.0, shift=0.0):
        if slope == 0:
            raise InvalidArgumentError("affine map needs a nonzero slope")
        self.slope = float(slope)
        self.shift = float(shift)
        self.monotone = self.slope > 0

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.shift

    def deriv(self, x):
        return np.full(np.shape(x), self.slope)

    def inverse(self, prefix, y):
        return (np.asarray(y, dtype=float) - self.shift) / self.slope


def _batch_se(stat, a, b, folds):
    n = len(a) // folds
    vals = [stat(a[i * n:(i + 1) * n], b[i * n:(i + 1) * n]) for i in range(folds)]
    return float(np.std(vals, ddof=1) / math.sqrt(folds))


def check_wp_stability(F, G, mu, p=1.0, q=None, monotone=None, n_samples=100_000, rng=None,
                       folds=20, seed=0):
    """One trial of ``W_p(F#mu, G#mu) <= ||F - G||_{L^q(mu)}`` for ``q >= p``.

    Monotone pairs use quantile composition, which is exact; at ``q == p``
    the ratio must then equal one, and that equality is checked too.
    Otherwise the left side is an empirical Wasserstein distance on
    ``n_samples`` common reference draws, with a batch-means standard error
    over ``folds`` blocks.
    """
    q = p if q is None else q
    if q < p:
        raise InvalidArgumentError("the bound needs q >= p")
    monotone = is_monotone_map(F) and is_monotone_map(G) if monotone is None else monotone
    rhs = _finite("rhs", lp_map_distance(F, G, mu, q))
    record = {"p": p, "q": q, "rhs": rhs}
    if monotone:
        lhs = _finite("lhs", wp_monotone_pushforward(F, G, mu, p))
        ratio = _ratio(lhs, rhs)
        violation = lhs > rhs * (1 + DETERMINISTIC_TOL) + ABS_FLOOR
        if q == p and rhs > 0:
            record["sharp"] = abs(ratio - 1.0) <= DETERMINISTIC_TOL
            violation = violation or not record["sharp"]
        record.update(method="exact", lhs=lhs, se=0.0)
    else:
        rng = rng if rng is not None else rng_stream(seed, "wp-samples")
        x = mu.sample(rng, n_samples)
        a = np.asarray(F(x), dtype=float)
        b = np.asarray(G(x), dtype=float)
        lhs = _finite("lhs", empirical_wasserstein_1d(a, b, p))
        se = _batch_se(lambda u, v: empirical_wasserstein_1d(u, v, p), a, b, folds)
        ratio = _ratio(lhs, rhs)
        violation = lhs > rhs + 3.0 * se + ABS_FLOOR
        record.update(method="empirical", lhs=lhs, se=se)
    record.update(ratio=_finite("ratio", ratio), violation=bool(violation))
    return StabilityReport(f"wp(p={p:g},q={q:g})", [record])


def check_mmd_stability(F, G, mu, gamma=1.0, n_samples=0, rng=None, folds=20, seed=0):
    """One trial of ``MMD_gamma(F#mu, G#mu) <= sqrt(2) gamma ||F - G||_{L^1(mu)}``.

    The left side is evaluated deterministically by quadrature over
    ``mu x mu``. With ``n_samples > 0`` a V-statistic on common reference
    draws is added as a cross-check against the same bound plus three
    batch-means standard errors.
    """
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    rhs = _finite("rhs", math.sqrt(2.0) * gamma * lp_map_distance(F, G, mu, 1.0))
    lhs = _finite("lhs", mmd_gaussian_pushforward(F, G, mu, gamma))
    ratio = _ratio(lhs, rhs)
    record = {"gamma": gamma, "lhs": lhs, "rhs": rhs, "ratio": _finite("ratio", ratio),
              "violation": bool(lhs > rhs * (1 + DETERMINISTIC_TOL) + 1e-12)}
    if n_samples:
        rng = rng if rng is not None else rng_stream(seed, "mmd-samples")
        x = mu.sample(rng, n_samples)
        a = np.asarray(F(x), dtype=float)
        b = np.asarray(G(x), dtype=float)
        est = mmd_gaussian(a, b, gamma)
        se = _batch_se(lambda u, v: mmd_gaussian(u, v, gamma), a, b, folds)
        record.update(sample_lhs=est, sample_se=se,
                      sample_violation=bool(est > rhs + 3.0 * se + 1e-12))
        record["violation"] = record["violation"] or record["sample_violation"]
    return StabilityReport(f"mmd(gamma={gamma:g})", [record])


class _KLNodes:
    """Map values on a composite Gauss-Legendre grid, reused across ``t``."""

    def __init__(self, F, delta, dF, ddelta, order=32, width=0.1, z_max=12.0):
        lo, hi = np.asarray(F.inverse(None, np.array([-z_max, z_max])), dtype=float)
        panels = max(1, int(math.ceil((hi - lo) / width)))
        edges = np.linspace(lo, hi, panels + 1)
        rule = gauss_legendre(order)
        half = 0.5 * np.diff(edges)
        x = (0.5 * (edges[:-1] + edges[1:])[:, None] + half[:, None] * rule.nodes).ravel()
        self.w = (half[:, None] * rule.weights).ravel()
        self.Fx = np.asarray(F(x), dtype=float)
        self.slope = np.asarray(dF(x), dtype=float)
        self.delta = np.asarray(delta(x), dtype=float)
        self.ddelta = np.asarray(ddelta(x), dtype=float)
        self.density = np.exp(-0.5 * self.Fx ** 2) / math.sqrt(2.0 * math.pi) * self.slope

    def kl(self, t):
        shift = t * self.delta
        rel = t * self.ddelta / self.slope
        if np.any(rel <= -1.0):
            raise NotMonotoneError(f"F + {t:g} delta is not increasing at a quadrature node")
        value = float(self.w @ (self.density * (0.5 * shift * (2.0 * self.Fx + shift) - np.log1p(rel))))
        if not np.isfinite(value):
            raise DivergenceError("KL integral is not finite")
        return value


def perturbation_kl(F, delta, t, dF=None, ddelta=None, order=32, width=0.1, z_max=12.0):
    """``KL(F^# eta || (F + t delta)^# eta)`` for standard Gaussian ``eta``.

    Integrated in x over ``F^{-1}([-z_max, z_max])`` with composite
    Gauss-Legendre panels of the given ``width``. The log-density difference
    is written in terms of ``t * delta`` so nothing cancels at small ``t``.
    Gauss-Hermite in ``z = F(x)`` is avoided: where ``F'`` is small the
    integrand varies too quickly in z.
    """
    dF = dF or _derivative_of(F)
    ddelta = ddelta or _derivative_of(delta)
    return _KLNodes(F, delta, dF, ddelta, order, width, z_max).kl(t)


def _derivative_of(fn):
    for name in ("deriv", "partial"):
        if hasattr(fn, name):
            return getattr(fn, name)
    raise InvalidArgumentError("map needs a deriv() or partial() method")


def _probe_monotone(F, delta, t_max, dF, ddelta, lo=-12.0, hi=12.0, grid=4001):
    x = np.linspace(lo, hi, grid)
    slope = np.asarray(dF(x)) - t_max * np.abs(np.asarray(ddelta(x)))
    if np.min(slope) <= 0:
        raise NotMonotoneError("perturbed map loses monotonicity on the probe grid")


def kl_rate_probe(F, delta, t_grid=None, dF=None, ddelta=None, order=32):
    """Fit the local order of ``KL`` against the V-norm distance ``t ||delta||_V``.

    Returns a report with one trial per ``t``. The fitted log-log slope sits
    in ``extra["slope"]``; the check passes when it is at least
    ``1 - 0.05``, i.e. the divergence is at most linear in the distance.
    """
    t_grid = np.geomspace(1e-3, 1e-2, 6) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t_grid.size < 2 or np.any(t_grid <= 0):
        raise InvalidArgumentError("t_grid needs at least two positive values")
    dF = dF or _derivative_of(F)
    ddelta = ddelta or _derivative_of(delta)
    _probe_monotone(F, delta, float(np.max(t_grid)), dF, ddelta)
    dnorm = v_norm_distance(delta, lambda x: np.zeros_like(x), dF=ddelta,
                            dG=lambda x: np.zeros_like(x))
    nodes = _KLNodes(F, delta, dF, ddelta, order)
    kls = np.array([nodes.kl(t) for t in t_grid])
    if np.any(kls <= 0):
        raise DivergenceError("KL estimate is not positive; the perturbation may be degenerate")
    dist = t_grid * dnorm
    slope, _ = np.polyfit(np.log(dist), np.log(kls), 1)
    trials = [{"t": float(t), "lhs": float(k), "rhs": float(d), "ratio": float(k / d),
               "violation": False} for t, k, d in zip(t_grid, kls, dist)]
    report = StabilityReport("kl-rate", trials, tolerance=0.05,
                             extra={"slope": float(slope), "delta_v_norm": dnorm})
    if slope < 1.0 - report.tolerance:
        for tr in trials:
            tr["violation"] = True
    return report


def random_polynomial_map(rng, degree=6):
    """Legendre expansion with coefficients uniform on [-1, 1]; generally not monotone."""
    spec = BasisSpec(Family.LEGENDRE, degree)
    return ExpansionFunction(spec, rng.uniform(-1.0, 1.0, spec.dimension))


def random_monotone_map(rng, degree=6, family=Family.LEGENDRE, rectifier=Rectifier.SOFTPLUS):
    spec = BasisSpec(family, degree)
    f = ExpansionFunction(spec, rng.uniform(-1.0, 1.0, spec.dimension))
    return MonotoneComponent(f, rectifier)


def _run(trial, trials, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(trial, range(trials)))
    return [trial(i) for i in range(trials)]


def _combine(name, reports, extra=None):
    records = []
    for i, r in enumerate(reports):
        for t in r.trials:
            records.append({"trial": i, **t})
    return StabilityReport(name, records, extra=extra or {})


def wp_stability_suite(seed, trials=100, p=1.0, q=2.0, kind="polynomial", mu=None,
                       n_samples=100_000, degree=6, workers=1):
    """Random-pair suite for the Wasserstein bound; ``kind`` is polynomial or monotone."""
    mu = mu or UniformSym()
    if kind not in ("polynomial", "monotone"):
        raise InvalidArgumentError(f"unknown map kind {kind!r}")
    make = random_polynomial_map if kind == "polynomial" else random_monotone_map

    def trial(i):
        rng = rng_stream(seed, f"wp/{kind}/{p}/{q}/{i}")
        F, G = make(rng, degree), make(rng, degree)
        return check_wp_stability(F, G, mu, p, q, monotone=kind == "monotone",
                                  n_samples=n_samples, rng=rng)

    return _combine(f"wp(p={p:g},q={q:g},{kind})", _run(trial, trials, workers),
                    {"seed": seed, "kind": kind, "p": p, "q": q})


def mmd_stability_suite(seed, trials=100, gamma=1.0, kind="polynomial", mu=None,
                        sample_trials=5, n_samples=1000, degree=6, workers=1):
    """Random-pair suite for the MMD bound.

    The first ``sample_trials`` trials also run the sample-based cross-check.
    """
    mu = mu or UniformSym()
    make = random_polynomial_map if kind == "polynomial" else random_monotone_map

    def trial(i):
        rng = rng_stream(seed, f"mmd/{kind}/{gamma}/{i}")
        F, G = make(rng, degree), make(rng, degree)
        return check_mmd_stability(F, G, mu, gamma, n_samples if i < sample_trials else 0, rng)

    return _combine(f"mmd(gamma={gamma:g},{kind})", _run(trial, trials, workers),
                    {"seed": seed, "kind": kind, "gamma": gamma})


def random_kl_probe(seed, degree=6, t_grid=None, max_attempts=20):
    """KL rate probe on a random monotone Hermite map and a unit V-norm direction.

    Draws are repeated (on fresh substreams) when the perturbed map would
    not stay monotone over the probe range.
    """
    spec = BasisSpec(Family.HERMITE_FUNCTION, degree)
    for attempt in range(max_attempts):
        rng = rng_stream(seed, f"kl-probe/{attempt}")
        F = random_monotone_map(rng, degree, Family.HERMITE_FUNCTION)
        delta = ExpansionFunction(spec, rng.uniform(-1.0, 1.0, spec.dimension))
        norm = v_norm_distance(delta, lambda x: np.zeros_like(x), dF=delta.partial,
                               dG=lambda x: np.zeros_like(x))
        delta = delta.with_coefficients(delta.coefficients / norm)
        try:
            report = kl_rate_probe(F, delta, t_grid)
        except NotMonotoneError:
            continue
        report.extra.update(seed=seed, attempt=attempt)
        return report
    raise NotMonotoneError(f"no admissible random pair in {max_attempts} attempts")


def gaussian_shift_probe(t_grid=None):
    """Closed-form case: identity map perturbed by a unit shift, KL = t^2 / 2."""
    delta = _ConstantShift(1.0)
    report = kl_rate_probe(AffineMap(1.0, 0.0), delta, t_grid, ddelta=delta.deriv)
    report.extra["closed_form"] = [0.5 * tr["t"] ** 2 for tr in report.trials]
    return report


class _ConstantShift:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        return np.full(np.shape(x), self.value)

    def deriv(self, x):
        return np.zeros(np.shape(x))
