"""Spectral bases (Legendre, Hermite polynomials, Hermite functions).

Evaluation goes through three-term recurrences, never through closed-form
factorials, so degrees of a few hundred stay finite. ``ExpansionFunction``
covers the scalar case and total-degree tensor products for d > 1.
"""

import enum
import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distributions import quantile_nodes
from .errors import DomainError, IllConditionedError, InvalidArgumentError, NotSPDError
from .optimize import solve_spd

_LEGENDRE_SLACK = 1e-12


class Family(str, enum.Enum):
    LEGENDRE = "legendre"
    HERMITE_POLYNOMIAL = "hermite_polynomial"
    HERMITE_FUNCTION = "hermite_function"


@dataclass(frozen=True)
class BasisSpec:
    family: Family
    max_degree: int

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.max_degree) != self.max_degree or self.max_degree < 0:
            raise InvalidArgumentError("max_degree must be a non-negative integer")
        object.__setattr__(self, "max_degree", int(self.max_degree))

    @property
    def dimension(self):
        return self.max_degree + 1


def basis_tables(spec, x):
    """Values and derivatives of every basis element up to ``spec.max_degree``.

    Returns two arrays of shape ``(max_degree + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    n = spec.max_degree
    if spec.family is Family.LEGENDRE:
        if x.size and np.max(np.abs(x)) > 1.0 + _LEGENDRE_SLACK:
            raise DomainError("Legendre basis is only defined on [-1, 1]")
        return _kernels.legendre_table(n, x)
    if spec.family is Family.HERMITE_FUNCTION:
        return _kernels.hermite_function_table(n, x)
    return _kernels.hermite_poly_table(n, x)


def _check_degree(spec, m):
    if not 0 <= m <= spec.max_degree:
        raise InvalidArgumentError(f"degree {m} outside 0..{spec.max_degree}")


def basis_eval(spec, m, x):
    _check_degree(spec, m)
    sub = BasisSpec(spec.family, m)
    out = basis_tables(sub, x)[0][m]
    return float(out) if np.ndim(out) == 0 else out


def basis_deriv(spec, m, x):
    _check_degree(spec, m)
    sub = BasisSpec(spec.family, m)
    out = basis_tables(sub, x)[1][m]
    return float(out) if np.ndim(out) == 0 else out


def total_degree_indices(dim, n):
    """Multi-indices ``m`` in N^dim with ``|m|_1 <= n``, graded then lexicographic."""
    out = [m for m in itertools.product(range(n + 1), repeat=dim) if sum(m) <= n]
    out.sort(key=lambda m: (sum(m), tuple(-v for v in m)))
    return np.array(out, dtype=int).reshape(-1, dim)


class ExpansionFunction:
    """Linear combination of basis elements, f(x) = sum_m c_m phi_m(x).

    For ``dim == 1`` inputs are arrays of points; for ``dim > 1`` the last
    axis of the input holds the coordinates.
    """

    def __init__(self, basis, coefficients, dim=1, multi_indices=None):
        self.basis = basis
        self.dim = int(dim)
        if multi_indices is None:
            multi_indices = (np.arange(basis.dimension).reshape(-1, 1) if self.dim == 1
                             else total_degree_indices(self.dim, basis.max_degree))
        self.multi_indices = np.asarray(multi_indices, dtype=int).reshape(-1, self.dim)
        coefficients = np.array(coefficients, dtype=float)
        if coefficients.shape != (len(self.multi_indices),):
            raise InvalidArgumentError(
                f"expected {len(self.multi_indices)} coefficients, got shape {coefficients.shape}")
        coefficients.flags.writeable = False
        self.coefficients = coefficients

    def _coords(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return x[..., None], x.shape
        if x.shape[-1] != self.dim:
            raise InvalidArgumentError(f"expected points with last axis {self.dim}")
        return x, x.shape[:-1]

    def design(self, x, partial=None):
        """Matrix of basis values, shape ``(n_terms,) + batch_shape``.

        ``partial`` selects a coordinate to differentiate along.
        """
        pts, _ = self._coords(x)
        out = np.ones((len(self.multi_indices),) + pts.shape[:-1])
        for j in range(self.dim):
            vals, ders = basis_tables(self.basis, pts[..., j])
            table = ders if partial is not None and j == partial % self.dim else vals
            out *= table[self.multi_indices[:, j]]
        return out

    def __call__(self, x):
        return np.tensordot(self.coefficients, self.design(x), axes=1)

    def partial(self, x, axis=-1):
        return np.tensordot(self.coefficients, self.design(x, partial=axis), axes=1)

    def with_coefficients(self, coefficients):
        return ExpansionFunction(self.basis, coefficients, self.dim, self.multi_indices)

    def to_dict(self):
        return {
            "family": self.basis.family.value,
            "degree": self.basis.max_degree,
            "dim": self.dim,
            "coefficients": [float(c) for c in self.coefficients],
        }

    @classmethod
    def from_dict(cls, record):
        spec = BasisSpec(Family(record["family"]), int(record["degree"]))
        return cls(spec, record["coefficients"], dim=int(record.get("dim", 1)))

    def __repr__(self):
        return (f"ExpansionFunction({self.basis.family.value}, degree={self.basis.max_degree}, "
                f"dim={self.dim})")


def zero_expansion(spec, dim=1):
    size = spec.dimension if dim == 1 else len(total_degree_indices(dim, spec.max_degree))
    return ExpansionFunction(spec, np.zeros(size), dim)


def identity_expansion(spec, reference=None, rule=None):
    """Expansion closest to x -> x.

    Exact for polynomial families. Hermite functions decay, so there the
    L2 projection of the identity under ``reference`` is returned.
    """
    coef = np.zeros(spec.dimension)
    if spec.family is Family.LEGENDRE and spec.max_degree >= 1:
        coef[1] = 1.0
        return ExpansionFunction(spec, coef)
    if spec.family is Family.HERMITE_POLYNOMIAL and spec.max_degree >= 1:
        coef[1] = 0.5
        return ExpansionFunction(spec, coef)
    if reference is None or rule is None:
        raise InvalidArgumentError("projecting the identity needs a reference and a rule")
    return project_l2(lambda x: x, spec, reference, rule)


def tensor_quantile_nodes(reference, rule, dim):
    x, w = quantile_nodes(reference, rule)
    if dim == 1:
        return x, w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(len(pts))
    for wg in np.meshgrid(*([w] * dim), indexing="ij"):
        weights *= wg.ravel()
    return pts, weights


def gram_system(spec, reference, rule, target=None, dim=1):
    """Weighted Gram matrix (and moment vector when ``target`` is given)."""
    pts, w = tensor_quantile_nodes(reference, rule, dim)
    design = zero_expansion(spec, dim).design(pts)
    gram = (design * w) @ design.T
    if target is None:
        return gram, None
    values = np.asarray(target(pts), dtype=float)
    return gram, (design * w) @ values


def project_l2(target, spec, reference, rule, dim=1, max_condition=1e12):
    """L2(reference) projection of ``target`` onto the span of ``spec``.

    ``rule`` lives on [0, 1] in quantile coordinates; for ``dim > 1`` it is
    tensorized over the product reference.
    """
    gram, moments = gram_system(spec, reference, rule, target, dim)
    scale = np.sqrt(np.diag(gram))
    if np.any(scale == 0):
        raise IllConditionedError("Gram matrix has a zero diagonal entry", condition=np.inf)
    scaled = gram / np.outer(scale, scale)
    cond = np.linalg.cond(scaled)
    if not cond < max_condition:
        raise IllConditionedError(
            f"projection Gram matrix condition number {cond:.3e} exceeds {max_condition:.0e}",
            condition=cond)
    try:
        coef = solve_spd(scaled, moments / scale) / scale
    except NotSPDError as exc:
        raise IllConditionedError(f"projection Gram matrix is singular: {exc}", condition=cond) from exc
    return zero_expansion(spec, dim).with_coefficients(coef)
