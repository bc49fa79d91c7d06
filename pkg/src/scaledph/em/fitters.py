"""EM fitters for scaled phase-type models."""

import math
import warnings

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import CapacityError, UnsupportedError, ValidationError
from ..multivar import MAX_DIM, SharedModel
from ..phase import Intensity, PhaseParams
from ..scaling import (Degenerate, Discrete, Gamma, InverseGaussian, MittagLeffler,
                       PositiveStable, ScalingFamily, family_class)
from ..siph import Observations, SiphModel, mml_model
from .core import (FitReport, Problem, State, TransformParams, default_intensity, init_state,
                   run_em)

_SCALING_DEFAULTS = {
    Gamma: {"alpha": 1.0},
    InverseGaussian: {"sigma2": 1.0},
    PositiveStable: {"alpha": 0.8},
    MittagLeffler: {"alpha": 0.8},
    Degenerate: {"k": 1.0},
    Discrete: {"atoms": [0.25, 0.5, 1.0, 2.0, 4.0], "weights": [0.2] * 5},
}


def make_scaling(kind):
    """Scaling family from a name (default starting parameters) or an instance."""
    if isinstance(kind, ScalingFamily):
        return kind
    cls = family_class(kind)
    if cls not in _SCALING_DEFAULTS:
        raise UnsupportedError(f"fitting is not supported for {cls.name} scaling")
    return cls(**_SCALING_DEFAULTS[cls])


def _as_obs(data):
    if isinstance(data, Observations):
        return data
    if isinstance(data, (list, tuple)) and data and not np.isscalar(data[0]):
        return Observations.from_list(data)
    return Observations(data)


def _report(model, state, trace, converged, seed, stats, max_iter, **flags):
    flags.setdefault("max_iter_reached", (not converged) and len(trace) - 1 >= max_iter)
    return FitReport(model, trace, len(trace) - 1, converged, seed, flags, stats)


def _univariate(data, p, intensity, scaling, *, fit_intensity, fit_scaling, structure, seed,
                cfg, tol, max_iter, init, extra=None, maxfev=20):
    obs = _as_obs(data)
    problem = Problem(obs.y, obs.censored, obs.x, obs.weights, cfg)
    rng = np.random.default_rng(seed)
    if init is not None:
        st = State((init.phase,), (init.intensity,), np.array(init.beta, float), init.scaling)
        if st.beta.size != obs.q:
            raise ValidationError("initial model and data disagree on the number of covariates")
    else:
        st = init_state(problem, [p], rng, [default_intensity(intensity)], make_scaling(scaling),
                        structure=structure)
    tp = TransformParams(st, fit_intensity=fit_intensity, fit_beta=True)
    st, trace, conv, stats = run_em(problem, st, fit_scaling=fit_scaling, transform=tp,
                                    extra=extra, tol=tol, max_iter=max_iter, seed=seed,
                                    maxfev=maxfev)
    model = SiphModel(st.phases[0], st.intensities[0], st.scaling, st.beta)
    return model, st, trace, conv, stats, problem


def em_cph(data, p, scaling="gamma", cfg=None, seed=0, *, structure="general", tol=1e-7,
           max_iter=2000, init=None, fit_scaling=True):
    """Fit ``Y = Z / Theta`` with ``Z`` phase-type of dimension ``p``.

    ``data`` holds exact or right-censored positive observations.
    """
    obs = _as_obs(data)
    if obs.q:
        raise ValidationError("em_cph takes no covariates; use em_siph")
    model, st, trace, conv, stats, _ = _univariate(
        obs, p, "constant", scaling, fit_intensity=False, fit_scaling=fit_scaling,
        structure=structure, seed=seed, cfg=cfg, tol=tol, max_iter=max_iter, init=init)
    return _report(model, st, trace, conv, seed, stats, max_iter)


def em_siph(data, p, intensity="weibull", scaling="gamma", cfg=None, seed=0, *,
            structure="general", tol=1e-7, max_iter=2000, init=None, fit_scaling=True,
            fit_intensity=True, maxfev=20):
    """Fit ``Y = h(exp(-beta x) Z / Theta)``: E/M sweeps plus a simplex step on ``(eta, beta)``."""
    model, st, trace, conv, stats, _ = _univariate(
        data, p, intensity, scaling, fit_intensity=fit_intensity, fit_scaling=fit_scaling,
        structure=structure, seed=seed, cfg=cfg, tol=tol, max_iter=max_iter, init=init,
        maxfev=maxfev)
    return _report(model, st, trace, conv, seed, stats, max_iter)


# ---------------------------------------------------------------------------
# Matrix Mittag-Leffler

_ALPHA_MAX = 0.99


def _mml_state(st, a):
    if a >= 1:
        return st.with_(intensities=(Intensity("constant"),), scaling=Degenerate(1.0))
    return st.with_(intensities=(Intensity("weibull", eta=a),), scaling=MittagLeffler(alpha=a))


def _mml_alpha(st):
    return 1.0 if isinstance(st.scaling, Degenerate) else st.scaling.alpha


def _alpha_search(width):
    def step(problem, st, prev):
        a0 = _mml_alpha(st)

        def obj(a):
            return -problem.loglik(_mml_state(st, a))

        best_a, best_f = a0, obj(a0)
        lo, hi = max(0.05, a0 - width), min(_ALPHA_MAX, a0 + width)
        if hi > lo:
            res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-4, "maxiter": 8})
            if res.fun < best_f:
                best_a, best_f = float(res.x), float(res.fun)
        if best_a >= _ALPHA_MAX - 0.02 and a0 < 1:
            f1 = obj(1.0)
            if f1 < best_f:
                best_a = 1.0
        return _mml_state(st, best_a)
    return step


def em_mml(data, p, cfg=None, seed=0, *, alpha0=0.9, structure="general", tol=1e-7,
           max_iter=2000, init=None, width=0.05, alpha_every=1):
    """Fit the matrix Mittag-Leffler law.

    Each sweep is an E/M step for ``(pi, T)`` at fixed ``alpha`` followed by
    a bounded search of the observed log-likelihood over ``alpha`` in a
    window of half-width ``width`` (every ``alpha_every`` sweeps). The value
    ``alpha = 1`` (plain phase-type) is examined explicitly near the upper
    boundary; the report flags it.
    """
    obs = _as_obs(data)
    if obs.q or obs.censored.any():
        raise ValidationError("em_mml takes exact observations without covariates")
    if not 0 < alpha0 <= 1:
        raise ValidationError("alpha0 must lie in (0, 1]")
    search = _alpha_search(width)
    count = {"n": 0}

    def extra(problem, st, prev):
        count["n"] += 1
        return search(problem, st, prev) if count["n"] % alpha_every == 0 else st

    problem = Problem(obs.y, None, None, obs.weights, cfg)
    if init is not None:
        a = init.scaling.alpha if isinstance(init.scaling, MittagLeffler) else 1.0
        init = mml_model(init.phase, a)
        st = State((init.phase,), (init.intensity,), np.zeros(0), init.scaling)
    else:
        rng = np.random.default_rng(seed)
        st = init_state(problem, [p], rng, [Intensity("weibull", eta=alpha0)], Degenerate(1.0),
                        structure=structure)
        st = _mml_state(st, alpha0)
    st, trace, conv, stats = run_em(problem, st, fit_scaling=False, transform=None, extra=extra,
                                    tol=tol, max_iter=max_iter, seed=seed)
    a = _mml_alpha(st)
    model = SiphModel(st.phases[0], st.intensities[0], st.scaling, st.beta)
    return _report(model, st, trace, conv, seed, stats, max_iter, alpha=a,
                   alpha_at_boundary=bool(a >= 1))


# ---------------------------------------------------------------------------
# Shared scaling

def _as_matrix(data):
    Y = np.asarray(data, dtype=float)
    if Y.ndim != 2:
        raise ValidationError("multivariate data must be an (n, d) array")
    return Y


def em_mv_cph(data, dims, scaling="gamma", cfg=None, seed=0, *, structure="general",
              tol=1e-7, max_iter=2000, init=None, fit_scaling=True):
    """Fit ``Y_i = Z_i / Theta`` for ``i = 1..d`` with one shared ``Theta``."""
    return em_mv_siph(data, dims, ["constant"] * len(dims), scaling, cfg, seed,
                      structure=structure, tol=tol, max_iter=max_iter, init=init,
                      fit_scaling=fit_scaling)


def em_mv_siph(data, dims, intensities, scaling="gamma", cfg=None, seed=0, *,
               structure="general", tol=1e-7, max_iter=2000, init=None, fit_scaling=True,
               fit_intensity=True, maxfev=20):
    """Fit ``Y_i = h_i(Z_i / Theta)`` with one shared ``Theta`` and a simplex step on ``eta``."""
    Y = _as_matrix(data)
    dims = [int(p) for p in dims]
    if Y.shape[1] != len(dims) or len(intensities) != len(dims):
        raise ValidationError("data width, dims and intensities must agree")
    if len(dims) > MAX_DIM:
        raise CapacityError(f"at most {MAX_DIM} coordinates are supported")
    SharedModel([(_unit(p), Intensity()) for p in dims], Degenerate())  # capacity check
    problem = Problem(Y, None, None, None, cfg)
    rng = np.random.default_rng(seed)
    if init is not None:
        st = State(tuple(ph for ph, _ in init.marginals), tuple(lam for _, lam in init.marginals),
                   np.zeros(0), init.scaling)
    else:
        st = init_state(problem, dims, rng, [default_intensity(i) for i in intensities],
                        make_scaling(scaling), structure=structure)
    tp = TransformParams(st, fit_intensity=fit_intensity, fit_beta=False)
    st, trace, conv, stats = run_em(problem, st, fit_scaling=fit_scaling, transform=tp,
                                    tol=tol, max_iter=max_iter, seed=seed, maxfev=maxfev)
    model = SharedModel(list(zip(st.phases, st.intensities)), st.scaling)
    return _report(model, st, trace, conv, seed, stats, max_iter)


def _unit(p):
    return PhaseParams(np.full(p, 1.0 / p), -np.eye(p))


# ---------------------------------------------------------------------------
# Density approximation

def log_grid(lo, hi, n):
    """Trapezoid nodes and weights for ``int_lo^hi g(y) dy`` on a log-spaced grid."""
    if not 0 < lo < hi:
        raise ValidationError("need 0 < lo < hi")
    s = np.linspace(math.log(lo), math.log(hi), int(n))
    y = np.exp(s)
    w = y * (s[1] - s[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return y, w


def approximate_density(target, grid, p, intensity="weibull", scaling="stable", cfg=None,
                        seed=0, *, structure="general", tol=1e-7, max_iter=2000, init=None,
                        fit_scaling=True, fit_intensity=True, maxfev=20):
    """Fit a SIPH law to a known density by maximising ``int g log f``.

    ``grid`` is ``(y, w)``: nodes and quadrature weights; the observations
    are the nodes with weights ``g(y_j) w_j``. The report trace is the
    cross-entropy estimate ``sum_j g(y_j) w_j log f(y_j)``.
    """
    y, w = (np.asarray(a, dtype=float).reshape(-1) for a in grid)
    if y.shape != w.shape:
        raise ValidationError("grid nodes and weights must match")
    g = np.asarray(target(y), dtype=float)
    if np.any(~np.isfinite(g)) or np.any(g < 0):
        raise ValidationError("target density must be finite and nonnegative on the grid")
    weights = g * w
    mass = float(weights.sum())
    if mass < 0.999:
        warnings.warn(f"the grid carries only {mass:.6f} of the target mass", RuntimeWarning,
                      stacklevel=2)
    obs = Observations(y, weights=weights)
    model, st, trace, conv, stats, _ = _univariate(
        obs, p, intensity, scaling, fit_intensity=fit_intensity, fit_scaling=fit_scaling,
        structure=structure, seed=seed, cfg=cfg, tol=tol, max_iter=max_iter, init=init,
        maxfev=maxfev)
    return _report(model, st, trace, conv, seed, stats, max_iter, grid_mass=mass)
