"""BFGS minimization and symmetric positive-definite solves."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .errors import InvalidArgumentError, NotSPDError, OptimizationError


def solve_spd(A, b, sym_tol=1e-10):
    """Solve ``A x = b`` by Cholesky; fails loudly instead of regularizing.

    Raises
    ------
    NotSPDError
        If ``A`` is not symmetric within ``sym_tol`` (relative) or a
        non-positive pivot appears. ``pivot`` holds the 0-based index.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise InvalidArgumentError(f"incompatible shapes {A.shape} and {b.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > sym_tol * scale:
        raise NotSPDError("matrix is not symmetric")
    c, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NotSPDError(f"non-positive pivot at index {info - 1}", pivot=info - 1)
    if info < 0:
        raise InvalidArgumentError(f"dpotrf rejected argument {-info}")
    x, info = lapack.dpotrs(c, b, lower=1)
    if info != 0:
        raise InvalidArgumentError(f"dpotrs rejected argument {-info}")
    return x


@dataclass
class OptimizerReport:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    line_search_failures: int
    converged: bool
    message: str = ""
    history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fun": float(self.fun),
            "grad_norm": float(self.grad_norm),
            "iterations": int(self.iterations),
            "line_search_failures": int(self.line_search_failures),
            "converged": bool(self.converged),
            "message": self.message,
        }


def _backtrack(f, x, fx, g, p, c1, min_step):
    slope = g @ p
    alpha = 1.0
    while alpha >= min_step:
        val = f(x + alpha * p)
        if np.isfinite(val) and val <= fx + c1 * alpha * slope:
            return alpha, val
        alpha *= 0.5
    return None, None


def bfgs_minimize(fun, grad, x0, tol=1e-9, max_iter=500, c1=1e-4, c2=0.9, min_step=1e-14):
    """Minimize ``fun`` with BFGS and a strong-Wolfe line search.

    Curvature pairs with ``y.s <= 1e-12 |y||s|`` are skipped so the inverse
    Hessian stays positive definite. When the Wolfe search fails the step
    falls back to Armijo backtracking, then to a steepest-descent restart.
    """
    x = np.array(x0, dtype=float)
    fx = float(fun(x))
    if not np.isfinite(fx):
        raise OptimizationError("objective is not finite at the initial point", last_x=x)
    g = np.asarray(grad(x), dtype=float)
    k = x.size
    H = np.eye(k)
    scaled = False
    history = [fx]
    failures = 0
    old_fx = None
    gnorm = float(np.linalg.norm(g))
    converged = gnorm <= tol
    message = "gradient tolerance reached" if converged else ""
    it = 0
    while not converged and it < max_iter:
        p = -H @ g
        if g @ p >= 0:
            H = np.eye(k)
            p = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            with np.errstate(over="ignore", invalid="ignore"):
                alpha, _, _, new_f, _, new_g = line_search(
                    fun, grad, x, p, gfk=g, old_fval=fx, old_old_fval=old_fx, c1=c1, c2=c2)
        if alpha is None or new_f is None or not np.isfinite(new_f) or new_f > fx:
            failures += 1
            with np.errstate(over="ignore", invalid="ignore"):
                alpha, new_f = _backtrack(fun, x, fx, g, p, c1, min_step)
            if alpha is None and not np.array_equal(p, -g):
                H = np.eye(k)
                p = -g
                with np.errstate(over="ignore", invalid="ignore"):
                    alpha, new_f = _backtrack(fun, x, fx, g, p, c1, min_step)
            if alpha is None:
                converged = True
                message = "step size collapsed below minimum"
                break
            new_g = None
        s = alpha * p
        x_new = x + s
        if new_g is None:
            new_g = grad(x_new)
        new_g = np.asarray(new_g, dtype=float)
        if not np.isfinite(new_f) or not np.all(np.isfinite(new_g)):
            raise OptimizationError("objective or gradient became non-finite", last_x=x)
        y = new_g - g
        ys = y @ s
        if ys > 1e-12 * np.linalg.norm(y) * np.linalg.norm(s):
            if not scaled:
                H = np.eye(k) * (ys / (y @ y))
                scaled = True
            rho = 1.0 / ys
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
        old_fx, fx = fx, float(new_f)
        x, g = x_new, new_g
        history.append(fx)
        it += 1
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            converged = True
            message = "gradient tolerance reached"
        elif np.linalg.norm(s) < min_step * max(1.0, np.linalg.norm(x)):
            converged = True
            message = "step size collapsed below minimum"
    if not converged:
        message = "iteration limit reached"
    return OptimizerReport(x, fx, gnorm, it, failures, converged, message, history)
