"""Shared nonlinear least-squares machinery.

All fitters in this package run on one engine: bounded Nelder-Mead with
multistart (5 starts by default, 500 iterations per start, 1e-4 relative
parameter tolerance).  Derivative-free simplex search is robust to the
|t| kinks that appear in every decay model here.  Parameter uncertainties
come from the Gauss-Newton covariance at the optimum, estimated with
finite-difference Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

MAX_ITER_PER_START = 500
REL_XTOL = 1e-4
N_STARTS = 5


@dataclass
class FitResult:
    """Parameter estimates with 1-sigma uncertainties and residual size.

    ``mse`` is the relative mean-square error sum((y-m)^2)/sum(y^2) of the
    fit it came from; ``flags`` carries non-fatal diagnostics (for example
    an unidentifiable parameter pinned to a default).
    """

    params: dict[str, float]
    sigma: dict[str, float]
    mse: float
    converged: bool = True
    flags: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "params": {k: _jsonable(v) for k, v in self.params.items()},
            "sigma": {k: _jsonable(v) for k, v in self.sigma.items()},
            "mse": _jsonable(self.mse),
        }
        if self.flags:
            out["flags"] = list(self.flags)
        return out


def _jsonable(v):
    v = float(v)
    if np.isinf(v):
        return None
    return v


def poisson_deviance(y: np.ndarray, model: np.ndarray) -> float:
    """Cash statistic 2*sum(m - y + y ln(y/m)); the right objective for
    low-count histograms, where chi-square with observed-count weights
    biases decay constants low."""
    y = np.asarray(y, dtype=float)
    m = np.maximum(np.asarray(model, dtype=float), 1e-12)
    out = 2.0 * float(np.sum(m - y))
    pos = y > 0
    out += 2.0 * float(np.sum(y[pos] * np.log(y[pos] / m[pos])))
    return out


def relative_mse(y: np.ndarray, model: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    model = np.asarray(model, dtype=float)
    denom = float(np.sum(y * y))
    if denom == 0.0:
        return float("nan")
    return float(np.sum((y - model) ** 2) / denom)


def minimize_multistart(objective, x0, bounds=None, n_starts=N_STARTS, seed=0,
                        spread=0.3):
    """Bounded Nelder-Mead from ``n_starts`` perturbed starting points.

    Parameters are internally rescaled by |x0| so the 1e-4 simplex tolerance
    acts as a relative tolerance.  Returns the scipy result of the best start.
    """
    x0 = np.asarray(x0, dtype=float)
    scale = np.where(np.abs(x0) > 1e-12, np.abs(x0), 1.0)
    rng = np.random.default_rng(seed)

    lo = np.full_like(x0, -np.inf)
    hi = np.full_like(x0, np.inf)
    if bounds is not None:
        for i, (a, b) in enumerate(bounds):
            lo[i] = -np.inf if a is None else a
            hi[i] = np.inf if b is None else b

    def scaled_objective(z):
        return objective(z * scale)

    scaled_bounds = list(zip(lo / scale, hi / scale))

    best = None
    for k in range(max(1, n_starts)):
        if k == 0:
            z0 = x0 / scale
        else:
            z0 = (x0 / scale) * (1.0 + spread * rng.uniform(-1, 1, x0.size))
            z0 += spread * rng.uniform(-1, 1, x0.size) * (np.abs(x0 / scale) < 1e-9)
        z0 = np.clip(z0, [b[0] for b in scaled_bounds], [b[1] for b in scaled_bounds])
        res = minimize(
            scaled_objective, z0, method="Nelder-Mead", bounds=scaled_bounds,
            options={"maxiter": MAX_ITER_PER_START, "xatol": REL_XTOL,
                     "fatol": 1e-12, "adaptive": x0.size > 3},
        )
        if best is None or res.fun < best.fun:
            best = res
    best.x = best.x * scale
    return best


def leastsq_sigma(model_fn, popt, y, weights=None, rel_step=1e-5):
    """1-sigma parameter errors from the Gauss-Newton covariance.

    ``model_fn(p)`` must return the model evaluated on the data grid.
    ``weights`` are inverse variances; Poisson weights 1/max(y,1) by default.
    """
    popt = np.asarray(popt, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is None:
        weights = 1.0 / np.maximum(y, 1.0)
    m0 = np.asarray(model_fn(popt), dtype=float)
    jac = np.empty((y.size, popt.size))
    for i in range(popt.size):
        h = rel_step * max(abs(popt[i]), 1e-8)
        p_hi = popt.copy()
        p_hi[i] += h
        p_lo = popt.copy()
        p_lo[i] -= h
        jac[:, i] = (np.asarray(model_fn(p_hi)) - np.asarray(model_fn(p_lo))) / (2 * h)
    jtj = (jac * weights[:, None]).T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        return np.full(popt.size, np.inf), m0
    # scale by reduced chi^2 so under/over-stated weights do not skew sigmas
    dof = max(y.size - popt.size, 1)
    chi2 = float(np.sum(weights * (y - m0) ** 2))
    cov = cov * max(chi2 / dof, 1e-30)
    return np.sqrt(np.maximum(np.diag(cov), 0.0)), m0


def profile_amplitude(shape: np.ndarray, y: np.ndarray, weights=None) -> float:
    """Closed-form weighted least-squares amplitude for y ~ A * shape."""
    shape = np.asarray(shape, dtype=float)
    y = np.asarray(y, dtype=float)
    if weights is None:
        weights = 1.0 / np.maximum(y, 1.0)
    denom = float(np.sum(weights * shape * shape))
    if denom <= 0.0:
        return 0.0
    return float(np.sum(weights * y * shape) / denom)
