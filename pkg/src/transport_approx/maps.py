"""Transport-map representations.

Plain expansion maps (``ExpansionFunction``) are used as-is for the
Wasserstein track, where monotonicity is only measured afterwards. The
monotone track integrates a rectified diagonal derivative::

    T_i(x) = f_i(x_{<i}, 0) + int_0^{x_i} r(d_i f_i(x_{<i}, t)) dt

which is increasing in ``x_i`` for any ``f_i``. Components stack into a
lower-triangular map that is inverted coordinate by coordinate.
"""

import enum
import functools
import math

import numpy as np
from scipy.special import expit

from .basis import BasisSpec, ExpansionFunction, Family, project_l2
from .errors import BracketError, DomainError, InvalidArgumentError, NotMonotoneError
from .quadrature import gauss_legendre

DEFAULT_ORDER = 64
MAX_ORDER = 1024
SEGMENT_TOL = 1e-11
CHUNK_NODES = 1 << 17


class Rectifier(str, enum.Enum):
    SOFTPLUS = "softplus"
    SHIFTED_ELU = "shifted_elu"

    def __call__(self, z):
        return rectifier_apply(self, z)


def rectifier_apply(r, z):
    z = np.asarray(z, dtype=float)
    if Rectifier(r) is Rectifier.SOFTPLUS:
        out = np.logaddexp(0.0, z)
    else:
        out = np.where(z < 0, np.exp(np.minimum(z, 0.0)), z + 1.0)
    return float(out) if out.ndim == 0 else out


def rectifier_deriv(r, z):
    z = np.asarray(z, dtype=float)
    if Rectifier(r) is Rectifier.SOFTPLUS:
        out = expit(z)
    else:
        out = np.where(z < 0, np.exp(np.minimum(z, 0.0)), 1.0)
    return float(out) if out.ndim == 0 else out


def rectifier_log(r, z):
    """``log r(z)`` without underflow for very negative ``z``."""
    z = np.asarray(z, dtype=float)
    if Rectifier(r) is Rectifier.SOFTPLUS:
        small = z < -30.0
        zs = np.where(small, z, 0.0)
        zl = np.where(small, 0.0, z)
        out = np.where(small, zs + np.log1p(-0.5 * np.exp(zs)), np.log(np.logaddexp(0.0, zl)))
    else:
        out = np.where(z < 0, z, np.log1p(np.maximum(z, 0.0)))
    return float(out) if out.ndim == 0 else out


def rectifier_inverse(r, y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("rectifier inverse is only defined on (0, inf)")
    if Rectifier(r) is Rectifier.SOFTPLUS:
        out = y + np.log(-np.expm1(-y))
    else:
        out = np.where(y < 1.0, np.log(y), y - 1.0)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=32)
def _gl_reference(order):
    rule = gauss_legendre(order)
    return rule.nodes, rule.weights


class MonotoneComponent:
    """Component ``T_i`` built from an unconstrained expansion ``f``.

    ``f.dim`` is the component index (1-based): the component reads the
    first ``f.dim`` coordinates and is monotone in the last one.
    """

    def __init__(self, f, rectifier=Rectifier.SOFTPLUS, order=DEFAULT_ORDER, adaptive=True):
        if not isinstance(f, ExpansionFunction):
            raise InvalidArgumentError("f must be an ExpansionFunction")
        self.f = f
        self.rectifier = Rectifier(rectifier)
        self.order = int(order)
        self.adaptive = adaptive

    @property
    def dim(self):
        return self.f.dim

    @property
    def coefficients(self):
        return self.f.coefficients

    def with_coefficients(self, coefficients):
        return MonotoneComponent(self.f.with_coefficients(coefficients), self.rectifier,
                                 self.order, self.adaptive)

    @property
    def domain(self):
        if self.f.basis.family is Family.LEGENDRE:
            return (-1.0, 1.0)
        return (-np.inf, np.inf)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return x[..., None]
        if x.shape[-1] != self.dim:
            raise InvalidArgumentError(f"component expects {self.dim} coordinates")
        return x

    def segment_points(self, x, order):
        """Points ``(x_{<i}, t_q)`` and signed weights for the segment integral."""
        pts = self._split(x)
        g, w = _gl_reference(order)
        last = pts[..., -1:]
        t = 0.5 * last * (g + 1.0)
        wt = 0.5 * last * w
        seg = np.repeat(pts[..., None, :], order, axis=-2)
        seg[..., -1] = t
        return seg, wt

    def _anchor(self, x):
        pts = self._split(x).copy()
        pts[..., -1] = 0.0
        return pts if self.dim > 1 else pts[..., 0]

    def _unsplit(self, pts):
        return pts if self.dim > 1 else pts[..., 0]

    def _eval_order(self, x, order):
        seg, wt = self.segment_points(x, order)
        fp = self.f.partial(self._unsplit(seg), axis=-1)
        return self.f(self._anchor(x)) + np.sum(wt * rectifier_apply(self.rectifier, fp), axis=-1)

    def __call__(self, x):
        pts = self._split(x)
        flat = pts.reshape(-1, self.dim)
        out = np.empty(flat.shape[0])
        step = max(1, CHUNK_NODES // self.order)
        for start in range(0, flat.shape[0], step):
            out[start:start + step] = self._eval_chunk(self._unsplit(flat[start:start + step]))
        return out.reshape(pts.shape[:-1])

    def _eval_chunk(self, x):
        if not self.adaptive:
            return self._eval_order(x, self.order)
        # the half-order value serves as the error estimate for the full order
        order = self.order
        prev = self._eval_order(x, max(order // 2, 1))
        while True:
            cur = self._eval_order(x, order)
            if np.all(np.abs(cur - prev) <= SEGMENT_TOL * np.maximum(1.0, np.abs(cur))):
                return cur
            if order >= MAX_ORDER:
                return cur
            prev, order = cur, order * 2

    def deriv(self, x):
        """Diagonal partial ``d T_i / d x_i = r(d_i f_i)``, always positive."""
        return rectifier_apply(self.rectifier, self.f.partial(x, axis=-1))

    def log_deriv(self, x):
        return rectifier_log(self.rectifier, self.f.partial(x, axis=-1))

    def inverse(self, prefix, y):
        return monotone_inverse(self, prefix, y)

    def to_dict(self):
        return {
            "type": "monotone",
            "rectifier": self.rectifier.value,
            "basis": {"family": self.f.basis.family.value, "degree": self.f.basis.max_degree},
            "dim": self.dim,
            "order": self.order,
            "coefficients": [float(c) for c in self.coefficients],
        }

    def __repr__(self):
        return f"MonotoneComponent({self.f!r}, {self.rectifier.value})"


def monotone_eval(c, x):
    return c(x)


def _join(prefix, t, dim):
    if dim == 1:
        return t
    prefix = np.asarray(prefix, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(prefix.shape[:-1], t.shape)
    out = np.empty(shape + (dim,))
    out[..., :-1] = np.broadcast_to(prefix, shape + (dim - 1,))
    out[..., -1] = np.broadcast_to(t, shape)
    return out


def monotone_inverse(c, prefix, y, tol=1e-10, max_doublings=60):
    """Solve ``T_i(prefix, t) = y`` for ``t``.

    Bracket by doubling, bisect to width 1e-6, then polish with at most
    eight safeguarded Newton steps using ``r(d_i f_i)``.
    """
    y = np.asarray(y, dtype=float)
    if c.dim > 1:
        prefix = np.asarray(prefix, dtype=float)
        shape = np.broadcast_shapes(prefix.shape[:-1], y.shape)
    else:
        shape = y.shape
    y = np.broadcast_to(y, shape).astype(float)
    dlo, dhi = c.domain
    lo = np.full(shape, max(-1.0, dlo))
    hi = np.full(shape, min(1.0, dhi))

    def T(t):
        return c(_join(prefix, t, c.dim))

    for end, sign in ((lo, -1.0), (hi, 1.0)):
        for _ in range(max_doublings + 1):
            val = T(end)
            bad = (val > y) if sign < 0 else (val < y)
            if not np.any(bad):
                break
            limit = dlo if sign < 0 else dhi
            if np.all(np.abs(end[bad]) >= abs(limit)):
                raise BracketError("target value lies outside the range of the component")
            end[bad] = np.clip(2.0 * end[bad], dlo, dhi)
        else:
            raise BracketError(f"no bracket found within {max_doublings} doublings")
    while np.max(hi - lo) > 1e-6:
        mid = 0.5 * (lo + hi)
        below = T(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    for _ in range(8):
        pts = _join(prefix, t, c.dim)
        resid = c(pts) - y
        if np.all(np.abs(resid) < tol):
            break
        lo = np.where(resid < 0, np.maximum(lo, t), lo)
        hi = np.where(resid > 0, np.minimum(hi, t), hi)
        step = t - resid / c.deriv(pts)
        t = np.where((step >= lo) & (step <= hi), step, 0.5 * (lo + hi))
    return float(t) if t.ndim == 0 else t


def monotone_from_map(T, spec, reference, rule, rectifier=Rectifier.SOFTPLUS, dT=None,
                      dim=1, order=DEFAULT_ORDER, fd_step=1e-6):
    """Recover ``f`` with ``R(f) = T`` and project it onto ``spec``.

    ``dT`` is the diagonal partial of ``T``; central differences are used
    when it is omitted. ``rule`` is a [0, 1] quantile-space rule for the
    product ``reference``.
    """
    rectifier = Rectifier(rectifier)
    if dT is None:
        def dT(x):
            x = np.asarray(x, dtype=float)
            e = np.zeros(x.shape[-1] if dim > 1 else 1)
            e[-1] = fd_step
            step = e if dim > 1 else fd_step
            return (T(x + step) - T(x - step)) / (2.0 * fd_step)

    probe = MonotoneComponent(ExpansionFunction(BasisSpec(Family.HERMITE_FUNCTION, 0), [0.0], dim),
                              rectifier, order)

    def f_target(x):
        seg, wt = probe.segment_points(x, order)
        seg = probe._unsplit(seg)
        slopes = np.asarray(dT(seg), dtype=float)
        if np.any(~(slopes > 0)):
            raise NotMonotoneError("diagonal derivative of the map is not positive at a probe point")
        anchor = np.asarray(T(probe._anchor(x)), dtype=float)
        return anchor + np.sum(wt * rectifier_inverse(rectifier, slopes), axis=-1)

    f = project_l2(f_target, spec, reference, rule, dim=dim)
    return MonotoneComponent(f, rectifier, order)


class TriangularMap:
    """Lower-triangular map from a list of components.

    Component ``i`` (0-based) reads coordinates ``0..i``. Components may be
    ``MonotoneComponent`` or plain ``ExpansionFunction`` objects.
    """

    def __init__(self, components):
        self.components = list(components)
        for i, comp in enumerate(self.components):
            if comp.dim != i + 1:
                raise InvalidArgumentError(f"component {i} must read {i + 1} coordinates, reads {comp.dim}")

    @property
    def dim(self):
        return len(self.components)

    @property
    def monotone(self):
        return all(isinstance(c, MonotoneComponent) for c in self.components)

    def _component_input(self, x, i):
        return x[..., : i + 1] if i > 0 else x[..., 0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([c(self._component_input(x, i)) for i, c in enumerate(self.components)], axis=-1)

    def log_det_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        total = 0.0
        for i, c in enumerate(self.components):
            xi = self._component_input(x, i)
            if isinstance(c, MonotoneComponent):
                total = total + c.log_deriv(xi)
            else:
                total = total + np.log(np.abs(c.partial(xi, axis=-1)))
        return total

    def inverse(self, y):
        if not self.monotone:
            raise NotMonotoneError("only monotone triangular maps can be inverted")
        y = np.asarray(y, dtype=float)
        x = np.empty_like(y)
        for i, c in enumerate(self.components):
            prefix = x[..., :i] if i > 0 else None
            x[..., i] = monotone_inverse(c, prefix, y[..., i])
        return x

    def to_dict(self):
        return {"type": "triangular", "components": [map_to_dict(c) for c in self.components]}


def pullback_logdensity(T, reference, x):
    """``log p_ref(T(x)) + log det J_T(x)`` for a monotone map.

    ``T`` is a ``MonotoneComponent`` (d = 1) or a monotone ``TriangularMap``;
    ``reference`` is the 1-D factor of the product reference.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(T, MonotoneComponent):
        if T.dim != 1:
            raise InvalidArgumentError("wrap multi-input components in a TriangularMap")
        return reference.log_pdf(T(x)) + T.log_deriv(x)
    if not T.monotone:
        raise NotMonotoneError("pullback densities need a monotone map")
    return np.sum(reference.log_pdf(T(x)), axis=-1) + T.log_det_jacobian(x)


def pushforward_sample(T, reference, rng, count, dim=1):
    """Draw ``count`` reference points and push them through ``T``."""
    if dim == 1:
        return np.asarray(T(reference.sample(rng, count)), dtype=float)
    x = reference.sample(rng, count * dim).reshape(count, dim)
    return np.asarray(T(x), dtype=float)


class QuantileTransport:
    """Monotone map ``F_target^{-1} o F_source`` with derivative and inverse.

    The lower half goes through log-CDFs and the upper half through
    survival functions, so both tails stay finite where the CDF rounds.
    """

    def __init__(self, source, target):
        self.source = source
        self.target = target

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        log_u = self.source.log_cdf(x)
        upper = log_u > -math.log(2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lower_val = self.target._ppf_log(np.where(upper, -math.log(2.0), log_u))
            upper_val = self.target._isf(np.where(upper, self.source.sf(x), 0.5))
        out = np.where(upper, upper_val, lower_val)
        return float(out) if out.ndim == 0 else out

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(self.source.log_pdf(x) - self.target.log_pdf(self(x)))

    @property
    def inverse(self):
        return QuantileTransport(self.target, self.source)

    def __repr__(self):
        return f"QuantileTransport({self.source!r} -> {self.target!r})"


def exact_monotone_transport(source, target):
    """Increasing map pushing ``source`` onto ``target``.

    For the pushforward problem pass ``(reference, target)``; the pullback
    ground truth is ``exact_monotone_transport(target, reference)``.
    """
    return QuantileTransport(source, target)


def map_to_dict(m):
    if isinstance(m, (MonotoneComponent, TriangularMap)):
        return m.to_dict()
    if isinstance(m, ExpansionFunction):
        return {
            "type": "expansion",
            "rectifier": None,
            "basis": {"family": m.basis.family.value, "degree": m.basis.max_degree},
            "dim": m.dim,
            "coefficients": [float(c) for c in m.coefficients],
        }
    raise InvalidArgumentError(f"cannot serialize {type(m).__name__}")


def map_from_dict(record):
    kind = record.get("type")
    if kind == "triangular":
        return TriangularMap([map_from_dict(c) for c in record["components"]])
    if kind not in ("expansion", "monotone"):
        raise InvalidArgumentError(f"unknown map type {kind!r}")
    spec = BasisSpec(Family(record["basis"]["family"]), int(record["basis"]["degree"]))
    f = ExpansionFunction(spec, record["coefficients"], dim=int(record.get("dim", 1)))
    if kind == "expansion":
        return f
    return MonotoneComponent(f, Rectifier(record["rectifier"]), int(record.get("order", DEFAULT_ORDER)))


def rectifier_dlog(r, z):
    """``d/dz log r(z)``, stable in both tails."""
    z = np.asarray(z, dtype=float)
    if Rectifier(r) is Rectifier.SOFTPLUS:
        return np.exp(-np.logaddexp(0.0, -z) - rectifier_log(r, z))
    return np.where(z < 0, 1.0, 1.0 / (1.0 + np.maximum(z, 0.0)))
