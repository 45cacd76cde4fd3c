"""Study drivers: convergence of fitted transport maps as the degree grows.

Three studies are provided. ``compact-w2`` fits Legendre expansions to the
maps ``x -> |x|^(2k) sign(x)`` on [-1, 1] by the closed-form W2 solve.
``gumbel-wp`` fits Hermite-function expansions pushing a standard Gaussian
onto Gumbel(1, 2) in W1 or W2. ``gumbel-kl`` fits monotone pullback maps
to Gumbel(0, 1) samples by maximum likelihood.

Every row of a study is independent and draws randomness from its own
substream of the master seed.
"""

import csv
import dataclasses
import functools
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .basis import BasisSpec, Family, identity_expansion, zero_expansion
from .distributions import parse_distribution, rng_stream
from .divergences import (
    KLPullbackObjective,
    WpQuantileObjective,
    empirical_wasserstein_1d,
    l2_map_error,
    lp_map_distance,
    v_norm_distance,
    w2_closed_form,
)
from .errors import InsufficientDataError, InvalidArgumentError, TransportError
from .maps import MonotoneComponent, Rectifier, exact_monotone_transport
from .optimize import bfgs_minimize
from .quadrature import clenshaw_curtis

CSV_COLUMNS = ("n", "divergence", "l2_err", "v_err", "p_mon", "wall_ms", "iters")
STUDIES = ("compact-w2", "gumbel-wp", "gumbel-kl")
EMPIRICAL_NOTE = ("empirical W_p uses test_m pushforward samples; it saturates near the "
                  "sampling floor (about test_m ** -0.5) once the fit error drops below it")


@dataclass
class StudyConfig:
    """Everything needed to reproduce a study; echoed verbatim into outputs."""

    study: str = "compact-w2"
    reference: str = "uniform"
    target: str = "pushforward(k=1)"
    divergence: str = "w2"
    degrees: tuple = (1, 2, 4, 10, 21, 46, 100)
    basis: str = ""
    quad_points: int = 10_000
    train_n: int = 10_000
    test_m: int = 100_000
    pairs: int = 10_000
    rectifier: str = "softplus"
    seed: int = 0
    bfgs_tol: float = 1e-9
    bfgs_max_iter: int = 500
    smoothing_eps: float = 1e-8
    segment_order: int = 64
    workers: int = 1
    record_timing: bool = True
    out: str = ""

    def __post_init__(self):
        if self.study not in STUDIES:
            raise InvalidArgumentError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        self.degrees = tuple(int(n) for n in self.degrees)
        if not self.degrees or any(b <= a for a, b in zip(self.degrees, self.degrees[1:])):
            raise InvalidArgumentError("degree list must be non-empty and strictly increasing")
        if self.degrees[0] < 0:
            raise InvalidArgumentError("degrees must be non-negative")
        if self.divergence not in ("w1", "w2", "kl"):
            raise InvalidArgumentError(f"unsupported divergence {self.divergence!r}")
        if not self.basis:
            self.basis = "legendre" if self.study == "compact-w2" else "hermite_function"
        Family(self.basis)
        Rectifier(self.rectifier)
        for name in ("quad_points", "train_n", "test_m", "pairs", "workers"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")

    @property
    def p(self):
        return {"w1": 1.0, "w2": 2.0}.get(self.divergence)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["degrees"] = list(self.degrees)
        return out

    @classmethod
    def from_dict(cls, record):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(record) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**record)


def compact_config(k=1, degrees=(1, 2, 4, 10, 21, 46, 100), **kwargs):
    return StudyConfig(study="compact-w2", reference="uniform", target=f"pushforward(k={int(k)})",
                       divergence="w2", degrees=degrees, **kwargs)


def gumbel_wp_config(p=2, degrees=tuple(range(1, 21)), **kwargs):
    if p not in (1, 2):
        raise InvalidArgumentError("p must be 1 or 2")
    return StudyConfig(study="gumbel-wp", reference="gaussian", target="gumbel(mu=1,beta=2)",
                       divergence=f"w{int(p)}", degrees=degrees, **kwargs)


def gumbel_kl_config(degrees=tuple(range(1, 11)), **kwargs):
    return StudyConfig(study="gumbel-kl", reference="gaussian", target="gumbel(mu=0,beta=1)",
                       divergence="kl", degrees=degrees, **kwargs)


@dataclass
class StudyRow:
    n: int
    divergence: float
    l2_err: float
    v_err: float
    p_mon: float
    wall_ms: float
    iters: int
    ok: bool = True
    message: str = ""
    report: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def csv_values(self):
        return [self.n, *(_fmt(getattr(self, c)) for c in CSV_COLUMNS[1:6]), self.iters]

    def to_dict(self):
        return dataclasses.asdict(self)


def _fmt(v):
    return repr(float(v))


@functools.lru_cache(maxsize=8)
def cached_cc_rule(n_points):
    return clenshaw_curtis(n_points, (0.0, 1.0))


def monotonicity_probability(T, reference, pair_count, rng):
    """Fraction of reference pairs with ``<T(x) - T(x'), x - x'> > 0``.

    Ties count as failures. Inputs with a trailing coordinate axis are
    treated as points in R^d.
    """
    if pair_count < 1:
        raise InvalidArgumentError("pair_count must be at least 1")
    x = np.asarray(reference.sample(rng, pair_count), dtype=float)
    x2 = np.asarray(reference.sample(rng, pair_count), dtype=float)
    dt = np.asarray(T(x), dtype=float) - np.asarray(T(x2), dtype=float)
    inner = dt * (x - x2)
    if inner.ndim > 1:
        inner = inner.sum(axis=-1)
    return float(np.count_nonzero(inner > 0)) / pair_count


def fit_rate(rows, model="power", window=None, key="divergence"):
    """Least-squares slope of ``log(value)`` against ``log n`` or ``n``.

    ``rows`` holds ``StudyRow`` objects or ``(n, value)`` pairs. ``window``
    is an inclusive ``(n_min, n_max)`` range. Returns ``(slope, intercept,
    residual)`` where ``residual`` is the RMS misfit in log space.
    """
    pts = []
    for r in rows:
        n, v = (r.n, getattr(r, key)) if isinstance(r, StudyRow) else r
        if window is not None and not window[0] <= n <= window[1]:
            continue
        if np.isfinite(v) and v > 0 and n > 0:
            pts.append((float(n), float(v)))
    if len(pts) < 3:
        raise InsufficientDataError(f"rate fit needs at least 3 usable rows, got {len(pts)}")
    n, v = np.array(pts).T
    if model == "power":
        xs = np.log(n)
    elif model == "exponential":
        xs = n
    else:
        raise InvalidArgumentError(f"unknown rate model {model!r}")
    A = np.vstack([xs, np.ones_like(xs)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
    resid = float(np.sqrt(np.mean((A @ [slope, intercept] - np.log(v)) ** 2)))
    return float(slope), float(intercept), resid


# ------------------------------------------------------------------ studies


def _failed_row(n, exc, started):
    return StudyRow(n, math.nan, math.nan, math.nan, math.nan,
                    (time.perf_counter() - started) * 1e3, 0, ok=False,
                    message=f"{type(exc).__name__}: {exc}")


def _over_degrees(cfg, fit_row):
    def one(n):
        started = time.perf_counter()
        try:
            row = fit_row(n)
        except TransportError as exc:
            return _failed_row(n, exc, started)
        row.wall_ms = (time.perf_counter() - started) * 1e3 if cfg.record_timing else 0.0
        return row

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            return list(pool.map(one, cfg.degrees))
    return [one(n) for n in cfg.degrees]


def run_compact_convergence(cfg):
    """Closed-form W2 fits of Legendre expansions on the uniform reference."""
    eta = parse_distribution(cfg.reference)
    nu = parse_distribution(cfg.target)
    rule = cached_cc_rule(cfg.quad_points)
    exact = exact_monotone_transport(eta, nu)
    objective = WpQuantileObjective.build(eta, nu, rule, 2.0)

    def fit_row(n):
        S = w2_closed_form(BasisSpec(cfg.basis, n), eta, nu, rule)
        rng = rng_stream(cfg.seed, f"mon/{n}")
        return StudyRow(
            n=n,
            divergence=objective.distance(S),
            l2_err=lp_map_distance(exact, S, eta, 2.0),
            v_err=v_norm_distance(exact, S, reference=eta, rule=rule),
            p_mon=monotonicity_probability(S, eta, cfg.pairs, rng),
            wall_ms=0.0,
            iters=0,
            extra={"coefficients": S.coefficients.tolist()},
        )

    return _over_degrees(cfg, fit_row)


def run_gumbel_wasserstein(cfg):
    """W2 (closed form) or smoothed-W1 (BFGS) fits of Hermite expansions."""
    p = cfg.p
    if p is None:
        raise InvalidArgumentError("gumbel-wp needs divergence w1 or w2")
    eta = parse_distribution(cfg.reference)
    nu = parse_distribution(cfg.target)
    rule = cached_cc_rule(cfg.quad_points)
    exact = exact_monotone_transport(eta, nu)
    objective = WpQuantileObjective.build(eta, nu, rule, p, cfg.smoothing_eps)
    target_test = nu.sample(rng_stream(cfg.seed, "test/target"), cfg.test_m)

    def fit_row(n):
        spec = BasisSpec(cfg.basis, n)
        report = {}
        iters = 0
        ok, message = True, ""
        if p == 2.0:
            S = w2_closed_form(spec, eta, nu, rule)
        else:
            start = identity_expansion(spec, eta, rule)
            fun, grad = objective.coefficient_problem(start)
            res = bfgs_minimize(fun, grad, start.coefficients, cfg.bfgs_tol, cfg.bfgs_max_iter)
            S = start.with_coefficients(res.x)
            report, iters = res.to_dict(), res.iterations
            ok, message = res.converged, res.message
        ref_test = eta.sample(rng_stream(cfg.seed, f"test/reference/{n}"), cfg.test_m)
        empirical = empirical_wasserstein_1d(S(ref_test), target_test, p)
        return StudyRow(
            n=n,
            divergence=objective.distance(S),
            l2_err=l2_map_error(exact, S, eta, rule),
            v_err=v_norm_distance(exact, S),
            p_mon=monotonicity_probability(S, eta, cfg.pairs, rng_stream(cfg.seed, f"mon/{n}")),
            wall_ms=0.0,
            iters=iters,
            ok=ok,
            message=message,
            report=report,
            extra={"empirical_wp": empirical, "coefficients": S.coefficients.tolist()},
        )

    return _over_degrees(cfg, fit_row)


def run_gumbel_kl(cfg):
    """Maximum-likelihood fits of monotone pullback maps from target samples."""
    eta = parse_distribution(cfg.reference)
    nu = parse_distribution(cfg.target)
    train = nu.sample(rng_stream(cfg.seed, "train"), cfg.train_n)
    test = nu.sample(rng_stream(cfg.seed, "test"), cfg.test_m)
    exact = exact_monotone_transport(nu, eta)
    exact_test = exact(test)
    objective = KLPullbackObjective(train)

    def fit_row(n):
        spec = BasisSpec(cfg.basis, n)
        template = MonotoneComponent(zero_expansion(spec), cfg.rectifier, order=cfg.segment_order)
        fun, grad = objective.coefficient_problem(template, order=cfg.segment_order)
        res = bfgs_minimize(fun, grad, template.coefficients, cfg.bfgs_tol, cfg.bfgs_max_iter)
        S = template.with_coefficients(res.x)
        values = S(test)
        terms = nu.log_pdf(test) - eta.log_pdf(values) - S.log_deriv(test)
        kl = float(np.mean(terms))
        diff = exact_test - values
        return StudyRow(
            n=n,
            divergence=kl,
            l2_err=float(np.sqrt(np.mean(diff * diff))),
            v_err=v_norm_distance(exact, S),
            p_mon=monotonicity_probability(S, nu, cfg.pairs, rng_stream(cfg.seed, f"mon/{n}")),
            wall_ms=0.0,
            iters=res.iterations,
            ok=res.converged,
            message=res.message,
            report=res.to_dict(),
            extra={"kl_stderr": float(np.std(terms, ddof=1) / math.sqrt(terms.size)), "train_objective": res.fun,
                   "coefficients": S.coefficients.tolist()},
        )

    return _over_degrees(cfg, fit_row)


RUNNERS = {
    "compact-w2": run_compact_convergence,
    "gumbel-wp": run_gumbel_wasserstein,
    "gumbel-kl": run_gumbel_kl,
}


def run_study(cfg):
    return RUNNERS[cfg.study](cfg)


# ------------------------------------------------------------------- output


def environment():
    return {
        "artifact_version": __version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "kernel_backend": _kernels.BACKEND,
    }


def rows_to_csv(rows, cfg, stream):
    """Write the fixed-schema CSV; ``#`` lines echo the version and config."""
    stream.write(f"# transport-approx {__version__}\n")
    stream.write(f"# config {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_values())


def sidecar(rows, cfg):
    out = {
        "config": cfg.to_dict(),
        "environment": environment(),
        "rows": [r.to_dict() for r in rows],
    }
    if cfg.study == "gumbel-wp":
        out["notes"] = [EMPIRICAL_NOTE]
    return out


def write_study(rows, cfg, path):
    """Write ``path`` (CSV) and ``path`` with a ``.json`` suffix (sidecar)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        rows_to_csv(rows, cfg, fh)
    json_path = path.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar(rows, cfg), indent=2, default=_json_default))
    return path, json_path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
