"""Quadrature grids for the mixing variable and scaling-parameter updates.

The grid for a scaling law depends only on the law's own parameters (never
on the data or on the phase-type parameters). Each EM sweep therefore
works with a fixed discrete mixing law, which is what makes the
log-likelihood trace monotone.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from ..errors import UnsupportedError, ValidationError
from ..quadrature import mapped_log_grid
from ..scaling import (Degenerate, Discrete, Gamma, InverseGaussian, MittagLeffler,
                       PositiveStable)


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for the ``theta`` integrals of the E-step.

    ``n_theta`` sets the resolution: the step in ``log theta`` is ``25 / n_theta``
    in the tails and finer in the bulk. ``scheme`` is the only rule implemented,
    a trapezoid rule in ``log theta`` with a graded map.
    """

    n_theta: int = 100
    scheme: str = "log-trapezoid"
    adaptive: bool = True
    eps: float = 1e-12

    def __post_init__(self):
        if int(self.n_theta) < 10:
            raise ValidationError("n_theta must be at least 10")
        if self.scheme != "log-trapezoid":
            raise ValidationError(f"unknown quadrature scheme {self.scheme!r}")


FITTABLE = (Gamma, InverseGaussian, PositiveStable, MittagLeffler, Discrete, Degenerate)


def check_fittable(scaling):
    if not isinstance(scaling, FITTABLE):
        raise UnsupportedError(
            f"fitting is not supported for {scaling.name} scaling "
            "(supported: gamma, inverse-gaussian, stable, mittag-leffler, discrete, degenerate)")


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    theta: np.ndarray
    logw: np.ndarray     # normalised log masses
    s: np.ndarray = None
    ds: np.ndarray = None

    @property
    def size(self):
        return self.theta.size


def build_grid(scaling, cfg=QuadratureConfig()):
    at = scaling.atoms()
    if at is not None:
        theta, w = at
        with np.errstate(divide="ignore"):
            return ThetaGrid(np.asarray(theta, float), np.log(np.asarray(w, float)))
    cache = scaling.__dict__.setdefault("_em_grid_cache", {})
    if cfg in cache:
        return cache[cfg]
    far = 25.0 / cfg.n_theta
    m, sd = scaling.log_moments()
    lo, hi = scaling.log_bounds(cfg.eps)
    core = min(far, sd * 12.5 / cfg.n_theta, scaling.strip_width() / 4.0 * 100.0 / cfg.n_theta)
    s, ds = mapped_log_grid(lo, hi, m, 6.0 * sd, far, core)
    grid = ThetaGrid(np.exp(s), _weights(scaling, s, ds), s, ds)
    cache[cfg] = grid
    return grid


def _weights(scaling, s, ds):
    lw = scaling.logpdf(np.exp(s)) + s + np.log(ds)
    return lw - logsumexp(lw)


# ---------------------------------------------------------------------------
# Scaling-parameter step: maximise sum_j P_j log w_j(param) on fixed nodes.

def _q(P, logw):
    keep = P > 0
    return float(np.sum(P[keep] * logw[keep]))


def scaling_step(scaling, grid, P):
    """Candidate scaling law maximising the expected complete log-likelihood.

    Returns ``None`` when the family has no free parameter.
    """
    if isinstance(scaling, Degenerate):
        return None
    if isinstance(scaling, Discrete):
        w = P / P.sum()
        return Discrete(atoms=scaling.params["atoms"], weights=w)
    if isinstance(scaling, Gamma):
        name, cur, lo, hi = "alpha", scaling.alpha, 1e-3, 1e3
        box = (max(lo, cur / 3), min(hi, cur * 3))
    elif isinstance(scaling, InverseGaussian):
        name, cur = "sigma2", scaling.sigma2
        box = (max(1e-4, cur / 3), min(1e4, cur * 3))
    elif isinstance(scaling, (PositiveStable, MittagLeffler)):
        name, cur = "alpha", scaling.alpha
        if cur >= 1:
            return None
        box = (max(0.05, 1 - 2 * (1 - cur)), min(0.99, 1 - (1 - cur) / 2))
    else:
        raise UnsupportedError(f"no parameter update for {scaling.name} scaling")

    def neg(logv):
        fam = scaling.with_params(**{name: float(np.exp(logv))})
        return -_q(P, _weights(fam, grid.s, grid.ds))

    res = minimize_scalar(neg, bounds=(np.log(box[0]), np.log(box[1])), method="bounded",
                          options={"xatol": 1e-6, "maxiter": 25})
    if res.fun < neg(np.log(cur)):
        return scaling.with_params(**{name: float(np.exp(res.x))})
    return None
