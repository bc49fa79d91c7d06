"""Shared machinery of the EM fitters.

A fitting problem holds ``d`` coordinates observed on ``n`` rows, each
coordinate with its own phase-type parameters and intensity, and one
scaling variable shared by all coordinates. The univariate fitters are the
case ``d = 1`` and may carry covariates and right-censoring.

Each sweep runs the E-step on a fixed ``theta`` grid, the closed-form
M-step for ``(pi, T)``, then optional updates of the scaling parameter and
of the transformation parameters ``(eta, beta)``. Those optional updates
are kept only when the log-likelihood does not drop, so the trace is
non-decreasing.

Reductions over observations and nodes are plain numpy sums in a fixed
order, so identical inputs give bit-identical traces.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from ..errors import EstimationError, ValidationError
from ..phase import Intensity, PhaseParams
from .grid import QuadratureConfig, build_grid, check_fittable, scaling_step
from .kernel import PhaseKernel

SLACK = 1e-8


def _lse_rows(a):
    m = a.max(axis=1)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


@dataclass(frozen=True)
class SufficientStats:
    """Expected initial counts ``B``, weighted sojourns ``Z``, jumps ``N`` and exits ``Nexit``."""

    B: np.ndarray
    Z: np.ndarray
    N: np.ndarray
    Nexit: np.ndarray


@dataclass
class FitReport:
    model: object
    trace: np.ndarray
    iterations: int
    converged: bool
    seed: int
    flags: dict = field(default_factory=dict)
    stats: list = field(default_factory=list)

    @property
    def loglik(self):
        return float(self.trace[-1])

    def to_dict(self):
        return {"loglik": self.loglik, "trace": [float(v) for v in self.trace],
                "iterations": self.iterations, "converged": self.converged,
                "seed": self.seed, "flags": dict(self.flags)}


@dataclass(frozen=True, eq=False)
class State:
    phases: tuple
    intensities: tuple
    beta: np.ndarray
    scaling: object

    def with_(self, **kw):
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# Initialisation and M-step

def structure_mask(p, structure):
    if structure == "general":
        return np.ones((p, p), bool) & ~np.eye(p, dtype=bool)
    if structure == "coxian":
        return np.eye(p, k=1, dtype=bool)
    raise ValidationError(f"unknown structure {structure!r} (use 'general' or 'coxian')")


def random_phase(p, rng, mean=1.0, structure="general"):
    """Random phase-type parameters with the given mean and zero pattern."""
    mask = structure_mask(p, structure)
    pi = rng.dirichlet(np.ones(p))
    T = np.where(mask, rng.uniform(0.1, 1.0, (p, p)), 0.0)
    exits = rng.uniform(0.1, 1.0, p)
    np.fill_diagonal(T, -(T.sum(axis=1) + exits))
    ph = PhaseParams(pi, T)
    return ph.scaled(ph.mean() / mean)


def m_step(phase, st):
    p = phase.dim
    keep = st.Z > 1e-300
    T = phase.T.copy()
    pi = st.B / st.B.sum()
    rows = np.where(keep)[0]
    T[rows] = st.N[rows] / st.Z[rows, None]
    exits = phase.t.copy()
    exits[rows] = st.Nexit[rows] / st.Z[rows]
    np.fill_diagonal(T, 0.0)
    diag = -(T.sum(axis=1) + exits)
    bad = diag >= 0
    if np.any(bad):     # state never left in expectation; keep its old rate
        diag[bad] = np.diagonal(phase.T)[bad]
    T[np.diag_indices(p)] = diag
    return PhaseParams(pi, T)


# ---------------------------------------------------------------------------
# Problem

class Problem:
    """Data plus the quadrature configuration; evaluates log-likelihoods and E-steps."""

    def __init__(self, Y, censored=None, X=None, weights=None, cfg=None):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        n, d = Y.shape
        if n == 0:
            raise ValidationError("empty data")
        if np.any(~np.isfinite(Y)) or np.any(Y <= 0):
            raise ValidationError("observations must be positive and finite")
        cen = np.zeros(n, bool) if censored is None else np.asarray(censored, bool).reshape(n)
        if d > 1 and cen.any():
            raise ValidationError("censoring is only supported for univariate data")
        X = np.zeros((n, 0)) if X is None else np.asarray(X, dtype=float).reshape(n, -1)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(n)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and nonnegative")
        keep = w > 0
        self.Y, self.cen, self.X, self.w = Y[keep], cen[keep], X[keep], w[keep]
        self.logw = np.log(self.w)
        self.n, self.d = self.Y.shape
        self.cfg = cfg or QuadratureConfig()

    def transform(self, st):
        """Transformed data ``z`` (n, d) and log-Jacobians of exact rows."""
        Z = np.empty_like(self.Y)
        logJ = np.zeros(self.n)
        exact = ~self.cen
        for i, lam in enumerate(st.intensities):
            Z[:, i] = lam.hinv(self.Y[:, i])
            with np.errstate(divide="ignore"):
                logJ[exact] += np.log(lam.lam(self.Y[exact, i]))
        if st.beta.size:
            xb = self.X @ st.beta
            Z[:, 0] *= np.exp(xb)
            logJ[exact] += xb[exact]
        return Z, logJ

    def _terms(self, st):
        grid = build_grid(st.scaling, self.cfg)
        Z, logJ = self.transform(st)
        if not np.all(np.isfinite(Z)) or np.any(Z <= 0):
            return None
        kernels = [PhaseKernel(ph) for ph in st.phases]
        logtheta = np.log(grid.theta)
        comb = np.broadcast_to(grid.logw, (self.n, grid.size)).copy()
        X, L = [], []
        for i, k in enumerate(kernels):
            x = np.multiply.outer(Z[:, i], grid.theta)
            li = k.log_terms(x, self.cen)
            comb += li
            comb[~self.cen] += logtheta
            X.append(x)
            L.append(li)
        logf = _lse_rows(comb)
        return grid, kernels, X, L, comb, logf, logJ

    def loglik(self, st):
        t = self._terms(st)
        if t is None:
            return -math.inf
        logf, logJ = t[5], t[6]
        ll = float(np.sum(self.w * (logf + logJ)))
        return ll if np.isfinite(ll) else -math.inf

    def e_step(self, st):
        """Log-likelihood, per-coordinate statistics and posterior node masses."""
        t = self._terms(st)
        if t is None:
            raise EstimationError("transformed data are not finite; cannot run the E-step")
        grid, kernels, X, L, comb, logf, logJ = t
        ll = float(np.sum(self.w * (logf + logJ)))
        if not np.isfinite(ll):
            raise EstimationError(f"non-finite log-likelihood ({ll}) in the E-step")
        logpost = comb - logf[:, None]
        P = self.w @ np.exp(logpost)
        stats = []
        for k, x, li in zip(kernels, X, L):
            logc = self.logw[:, None] + logpost - li
            stats.append(SufficientStats(*k.stats(x, logc, self.cen)))
        return ll, stats, P


# ---------------------------------------------------------------------------
# Transformation parameters (eta, beta)

def _to_free(name, fam, v):
    return math.log(v - 1.0) if (fam == "lognormal" and name == "gamma") else math.log(v)


def _from_free(name, fam, u):
    return 1.0 + math.exp(u) if (fam == "lognormal" and name == "gamma") else math.exp(u)


class TransformParams:
    """Free-coordinate view of the intensity parameters and regression coefficients."""

    def __init__(self, st, fit_intensity=True, fit_beta=True):
        self.slots = []
        if fit_intensity:
            for i, lam in enumerate(st.intensities):
                for name in lam.param_names:
                    self.slots.append(("lam", i, name, lam.family))
        if fit_beta:
            for j in range(st.beta.size):
                self.slots.append(("beta", j, None, None))

    def __len__(self):
        return len(self.slots)

    def get(self, st):
        out = []
        for kind, i, name, fam in self.slots:
            out.append(_to_free(name, fam, st.intensities[i].params[name]) if kind == "lam"
                       else st.beta[i])
        return np.array(out)

    def apply(self, st, u):
        lams = list(st.intensities)
        beta = np.array(st.beta, dtype=float)
        for (kind, i, name, fam), v in zip(self.slots, u):
            if kind == "lam":
                lams[i] = lams[i].with_params(**{name: _from_free(name, fam, float(v))})
            else:
                beta[i] = v
        return st.with_(intensities=tuple(lams), beta=beta)


def _simplex_step(problem, st, tp, step, maxfev):
    """Bounded Nelder-Mead on the observed log-likelihood; returns ``(state, ll, move)``."""
    x0 = tp.get(st)

    def obj(u):
        if not np.all(np.abs(u) < 50):
            return math.inf
        try:
            ll = problem.loglik(tp.apply(st, u))
        except (ValidationError, FloatingPointError):
            return math.inf
        return -ll if np.isfinite(ll) else math.inf

    k = x0.size
    simplex = np.vstack([x0] + [x0 + step * np.eye(k)[j] for j in range(k)])
    f0 = obj(x0)
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "maxfev": maxfev, "xatol": 1e-10,
                            "fatol": 1e-12})
    if res.fun < f0:
        return tp.apply(st, res.x), -float(res.fun), float(np.max(np.abs(res.x - x0)))
    return st, -f0, 0.0


# ---------------------------------------------------------------------------
# Driver

def run_em(problem, st, *, fit_scaling=True, transform=None, extra=None, tol=1e-7,
           max_iter=2000, seed=0, maxfev=20):
    """Iterate E/M sweeps from ``st``; returns ``(state, trace, converged, stats)``.

    ``transform`` is a :class:`TransformParams` (or ``None``); ``extra`` is an
    optional callable ``(problem, state, ll) -> (state, ll)`` for model-specific
    updates that must not lower ``ll``.
    """
    for s in (st.scaling,):
        check_fittable(s)
    ll, stats, P = problem.e_step(st)
    trace = [ll]
    converged = False
    step = 0.1
    for _ in range(max_iter):
        prev = ll
        new = st.with_(phases=tuple(m_step(ph, s) for ph, s in zip(st.phases, stats)))
        if fit_scaling:
            cand = scaling_step(new.scaling, build_grid(new.scaling, problem.cfg), P)
            if cand is not None:
                trial = new.with_(scaling=cand)
                if problem.loglik(trial) >= prev:
                    new = trial
        if transform is not None and len(transform):
            new, _, move = _simplex_step(problem, new, transform, step, maxfev)
            step = float(np.clip(2 * move, 1e-4, 0.1))
        if extra is not None:
            new = extra(problem, new, prev)
        ll, stats, P = problem.e_step(new)
        st = new
        trace.append(ll)
        if abs(ll - prev) <= tol * max(1.0, abs(prev)):
            converged = True
            break
    return st, np.array(trace), converged, stats


def init_state(problem, dims, rng, intensities, scaling, beta=None, structure="general"):
    st = State(tuple(PhaseParams([1.0], [[-1.0]]) for _ in dims), tuple(intensities),
               np.zeros(problem.X.shape[1]) if beta is None else np.asarray(beta, float),
               scaling)
    Z, _ = problem.transform(st)
    phases = []
    for i, p in enumerate(dims):
        med = float(np.median(Z[:, i]))
        phases.append(random_phase(p, rng, med / math.log(2.0), structure))
    return st.with_(phases=tuple(phases))


def default_intensity(name):
    if isinstance(name, Intensity):
        return name
    defaults = {"constant": {}, "pareto": {"eta": 1.0}, "weibull": {"eta": 1.0},
                "lognormal": {"gamma": 1.5}, "loglogistic": {"gamma": 1.0, "eta": 1.0},
                "gompertz": {"eta": 0.1}}
    key = name.lower()
    if key not in defaults:
        raise ValidationError(f"unknown intensity family {name!r}")
    return Intensity(key, **defaults[key])
