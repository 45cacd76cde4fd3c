"""One-dimensional reference and target distributions.

Every distribution exposes ``pdf``, ``log_pdf``, ``cdf``, ``quantile`` and
``sample``; all are vectorized over numpy arrays. Quantiles are the
workhorse: Wasserstein objectives and the ground-truth monotone transports
are built from them.
"""

import hashlib
import math
import re

import numpy as np
from scipy import special

from .errors import DomainError, InvalidArgumentError

EULER_GAMMA = 0.5772156649015329


def rng_stream(seed, label):
    """Counter-based generator for the substream ``label`` of master ``seed``.

    Substreams are independent Philox keys derived from ``(seed, label)``;
    no global state is touched.
    """
    digest = hashlib.sha256(str(label).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *words])
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng, count):
    """``count`` uniform variates strictly inside (0, 1)."""
    return (rng.integers(0, 1 << 53, size=count, dtype=np.int64) + 0.5) / float(1 << 53)


class Distribution1D:
    """Base class; subclasses implement the vectorized ``_ppf`` and friends."""

    support = (-math.inf, math.inf)

    def quantile(self, y):
        y_arr = np.asarray(y, dtype=float)
        if np.any(~((y_arr > 0.0) & (y_arr < 1.0))):
            raise DomainError("quantile level must lie in the open interval (0, 1)")
        out = self._ppf(y_arr)
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, x):
        return np.exp(self.log_pdf(x))

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def log_cdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.cdf(x))

    def _isf(self, q):
        return self._ppf(1.0 - q)

    def _ppf_log(self, log_y):
        return self._ppf(np.exp(log_y))

    def sample(self, rng, count):
        if count < 0:
            raise InvalidArgumentError("sample count must be non-negative")
        return self._ppf(open_uniform(rng, count))

    def mass_interval(self, tail=1e-12):
        """Interval holding all but ``2 * tail`` of the mass."""
        lo, hi = self.support
        if not np.isfinite(lo):
            lo = float(self._ppf(np.float64(tail)))
        if not np.isfinite(hi):
            hi = float(self._isf(np.float64(tail)))
        return lo, hi


class UniformSym(Distribution1D):
    """Uniform distribution on [-1, 1]."""

    support = (-1.0, 1.0)

    def _ppf(self, y):
        return 2.0 * y - 1.0

    def cdf(self, x):
        return np.clip(0.5 * (np.asarray(x, dtype=float) + 1.0), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, 0.5, 0.0)

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= 1.0, -math.log(2.0), -np.inf)

    def __repr__(self):
        return "uniform"


class Gaussian(Distribution1D):
    def __init__(self, loc=0.0, scale=1.0):
        if not scale > 0:
            raise InvalidArgumentError("Gaussian scale must be positive")
        self.loc = float(loc)
        self.scale = float(scale)

    def _ppf(self, y):
        # ndtri is accurate to a few ulp, so no Newton polish is needed
        return self.loc + self.scale * special.ndtri(y)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def sf(self, x):
        return special.ndtr((self.loc - np.asarray(x, dtype=float)) / self.scale)

    def _isf(self, q):
        return self.loc - self.scale * special.ndtri(q)

    def log_cdf(self, x):
        return special.log_ndtr((np.asarray(x, dtype=float) - self.loc) / self.scale)

    def _ppf_log(self, log_y):
        return self.loc + self.scale * special.ndtri_exp(log_y)

    def log_pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.loc) / self.scale
        return -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - math.log(self.scale)

    def __repr__(self):
        if self.loc == 0.0 and self.scale == 1.0:
            return "gaussian"
        return f"gaussian(loc={self.loc:g},scale={self.scale:g})"


def StdGaussian():
    return Gaussian(0.0, 1.0)


class Gumbel(Distribution1D):
    def __init__(self, mu=0.0, beta=1.0):
        if not beta > 0:
            raise InvalidArgumentError("Gumbel scale beta must be positive")
        self.mu = float(mu)
        self.beta = float(beta)

    def _ppf(self, y):
        return self.mu - self.beta * np.log(-np.log(y))

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.beta
        with np.errstate(over="ignore"):
            return np.exp(-np.exp(-z))

    def sf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.beta
        with np.errstate(over="ignore"):
            return -np.expm1(-np.exp(-z))

    def _isf(self, q):
        return self.mu - self.beta * np.log(-np.log1p(-q))

    def log_cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.beta
        with np.errstate(over="ignore"):
            return -np.exp(-z)

    def _ppf_log(self, log_y):
        return self.mu - self.beta * np.log(-np.asarray(log_y, dtype=float))

    def log_pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.beta
        with np.errstate(over="ignore"):
            return -(z + np.exp(-z)) - math.log(self.beta)

    @property
    def mean(self):
        return self.mu + self.beta * EULER_GAMMA

    def __repr__(self):
        return f"gumbel(mu={self.mu:g},beta={self.beta:g})"


class PushforwardMonotone(Distribution1D):
    """Law of ``fn(X)`` for ``X ~ base`` and strictly increasing ``fn``.

    Quantiles compose exactly. The density needs ``inverse`` and ``deriv``;
    when ``inverse`` is omitted it is computed by bisection on the base
    support.
    """

    def __init__(self, base, fn, deriv=None, inverse=None, name=None):
        self.base = base
        self.fn = fn
        self.deriv = deriv
        self.inverse = inverse
        self.name = name
        lo, hi = base.support
        self.support = (float(fn(np.float64(lo))) if np.isfinite(lo) else -math.inf,
                        float(fn(np.float64(hi))) if np.isfinite(hi) else math.inf)

    def _ppf(self, y):
        return self.fn(self.base._ppf(y))

    def _inverse(self, x):
        if self.inverse is not None:
            return self.inverse(x)
        x = np.asarray(x, dtype=float)
        lo, hi = self.base.mass_interval(1e-15)
        a = np.full(x.shape, lo)
        b = np.full(x.shape, hi)
        for _ in range(200):
            mid = 0.5 * (a + b)
            right = self.fn(mid) < x
            a = np.where(right, mid, a)
            b = np.where(right, b, mid)
        return 0.5 * (a + b)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x > lo) & (x < hi)
        u = self._inverse(np.where(inside, x, self._ppf(np.float64(0.5))))
        return np.where(inside, self.base.cdf(u), np.where(x >= hi, 1.0, 0.0))

    def log_pdf(self, x):
        if self.deriv is None:
            raise InvalidArgumentError("pushforward density needs the map derivative")
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        u = self._inverse(np.where(inside, x, self._ppf(np.float64(0.5))))
        with np.errstate(divide="ignore"):
            val = self.base.log_pdf(u) - np.log(self.deriv(u))
        return np.where(inside, val, -np.inf)

    def __repr__(self):
        return self.name or f"pushforward({self.base!r})"


def power_sign_map(k):
    """``T_k(x) = |x|^(2k) sign(x)`` with derivative and inverse."""
    k = int(k)
    if k < 1:
        raise InvalidArgumentError("k must be a positive integer")
    e = 2 * k

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.abs(x) ** e

    def deriv(x):
        return e * np.abs(np.asarray(x, dtype=float)) ** (e - 1)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        return np.sign(y) * np.abs(y) ** (1.0 / e)

    return fn, deriv, inverse


def pushforward_power(k):
    """Target nu_k: pushforward of uniform[-1, 1] under ``power_sign_map(k)``."""
    fn, deriv, inverse = power_sign_map(k)
    return PushforwardMonotone(UniformSym(), fn, deriv, inverse, name=f"pushforward(k={int(k)})")


def quantile_nodes(dist, rule):
    """Map a rule on [0, 1] to ``(x, w)`` with ``sum(w * g(x)) ~ E[g(X)]``.

    Nodes whose quantile is infinite (the endpoints of unbounded laws) are
    dropped; their Clenshaw-Curtis weight is O(1/n^2).
    """
    a, b = rule.domain
    if a != 0.0 or b != 1.0:
        raise InvalidArgumentError("quantile-space rules must live on [0, 1]")
    with np.errstate(divide="ignore"):
        x = np.asarray(dist._ppf(rule.nodes), dtype=float)
    keep = np.isfinite(x)
    return x[keep], rule.weights[keep]


_SPEC_RE = re.compile(r"^\s*([a-zA-Z_]+)\s*(?:\((.*)\))?\s*$")


def parse_distribution(text):
    """Parse names such as ``"gumbel(mu=1,beta=2)"`` or ``"pushforward(k=3)"``."""
    if isinstance(text, Distribution1D):
        return text
    m = _SPEC_RE.match(str(text))
    if not m:
        raise InvalidArgumentError(f"cannot parse distribution {text!r}")
    name = m.group(1).lower()
    kwargs = {}
    if m.group(2):
        for part in m.group(2).split(","):
            if not part.strip():
                continue
            key, _, value = part.partition("=")
            if not _:
                raise InvalidArgumentError(f"expected key=value in {text!r}")
            kwargs[key.strip()] = float(value)
    try:
        if name in ("uniform", "uniformsym"):
            return UniformSym(**kwargs)
        if name in ("gaussian", "normal", "stdgaussian"):
            return Gaussian(**kwargs)
        if name == "gumbel":
            return Gumbel(**kwargs)
        if name == "pushforward":
            return pushforward_power(int(kwargs.pop("k")))
    except TypeError as exc:
        raise InvalidArgumentError(f"bad parameters for {name!r}: {exc}") from None
    except KeyError:
        raise InvalidArgumentError("pushforward needs k=<int>") from None
    raise InvalidArgumentError(f"unknown distribution {name!r}")

