"""EM for bivariate phase-type data with correlated Gamma scaling.

``Theta_i = (W_0 + W_i) / eta_i`` with ``W_j ~ Gamma(kappa_j)`` and
``eta_i = kappa_0 + kappa_i``. The pair ``(Theta_1, Theta_2)`` is
discretised on a tensor grid: each axis carries the nodes of the marginal
law of ``V_i = W_0 + W_i`` and each node owns the cell between midpoints of
its neighbours in ``log v``. Cell masses are exact given ``W_0`` and are
averaged over a quadrature rule for ``W_0``.
"""

import math

import numpy as np
from scipy import special
from scipy.optimize import minimize

from ..errors import EstimationError, ValidationError
from ..multivar import CorrelatedGammaModel
from ..phase import Intensity
from ..quadrature import mapped_log_grid
from ..scaling import Gamma
from .core import FitReport, SufficientStats, m_step, random_phase
from .grid import QuadratureConfig
from .kernel import PhaseKernel

_KAPPA_MIN = 1e-4
_S_MIN = -60.0
_TINY = 1e-300


def _log_nodes(shape, cfg):
    """Nodes ``s`` (log scale) and trapezoid steps for ``Gamma(shape)``, window cut at ``_S_MIN``."""
    g = Gamma(alpha=shape)
    m, sd = g.log_moments()
    lo, hi = g.log_bounds(cfg.eps)
    lo = max(lo, _S_MIN)
    far = 25.0 / cfg.n_theta
    core = min(far, sd * 12.5 / cfg.n_theta)
    return mapped_log_grid(lo, max(hi, lo + 1.0), min(max(m, lo), hi), 6.0 * sd, far, core)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def _w0_rule(k0, breaks):
    """Nodes and weights for ``W_0 ~ Gamma(k0)`` by composite Gauss-Legendre in ``log u``.

    Sub-intervals are split at ``breaks`` (where the cell probabilities have
    kinks) and are at most one unit wide in ``log u``. Mass below ``exp(_S_MIN)``
    sits at ``u = 0``.
    """
    with np.errstate(divide="ignore"):
        lo = max(float(np.log(special.gammaincinv(k0, 1e-15))), _S_MIN)
    hi = math.log(special.gammainccinv(k0, 1e-15))
    h = min(1.0, 0.5 * Gamma(alpha=k0).log_moments()[1])
    b = np.log(breaks[(breaks > math.exp(lo)) & (breaks < math.exp(hi))])
    pts = np.unique(np.concatenate([[lo, hi], b]))
    pts = np.concatenate([np.linspace(x0, x1, int(np.ceil((x1 - x0) / h)) + 1)[:-1]
                          for x0, x1 in zip(pts[:-1], pts[1:])] + [[hi]])
    left, width = pts[:-1], np.diff(pts)
    s = (left[:, None] + width[:, None] * (_GL_X[None, :] + 1) / 2).reshape(-1)
    ds = (width[:, None] * _GL_W[None, :] / 2).reshape(-1)
    w = np.exp(Gamma(alpha=k0).logpdf(np.exp(s)) + s) * ds
    below = float(special.gammainc(k0, math.exp(lo)))
    return np.concatenate([[0.0], np.exp(s)]), np.concatenate([[below], w])


class CorrGrid:
    """Axes and cell masses of the discretised ``(Theta_1, Theta_2)`` law."""

    def __init__(self, kappa, cfg):
        k0, k1, k2 = kappa
        self.kappa = kappa
        self.axes = []
        self.edges = []
        for ki in (k1, k2):
            eta = k0 + ki
            s, _ = _log_nodes(eta, cfg)
            mid = np.exp((s[1:] + s[:-1]) / 2)
            self.axes.append(np.exp(s) / eta)
            self.edges.append(np.concatenate([[0.0], mid / eta, [np.inf]]))
        self.logW = cell_log_masses(kappa, self.edges, cfg)


def cell_log_masses(kappa, edges, cfg):
    """``log P(Theta_1 in cell j, Theta_2 in cell k)`` for the given ``theta`` cell edges."""
    k0, k1, k2 = kappa
    v1, v2 = (k0 + k1) * edges[0], (k0 + k2) * edges[1]
    u, om = _w0_rule(k0, np.concatenate([v1[1:-1], v2[1:-1]]))
    F = []
    for ki, e in ((k1, edges[0]), (k2, edges[1])):
        v = (k0 + ki) * e
        arg = np.clip(v[None, :] - u[:, None], 0.0, None)
        with np.errstate(invalid="ignore"):
            G = special.gammainc(ki, arg)
        G[:, -1] = 1.0
        F.append(np.diff(G, axis=1))
    W = (om[:, None] * F[0]).T @ F[1]
    W = np.clip(W, 0.0, None)
    W /= W.sum()
    with np.errstate(divide="ignore"):
        return np.log(W)


def _to_free(kappa):
    """``(log eta_1, log eta_2, logit rho)`` with ``kappa_0 = rho * min(eta_1, eta_2)``.

    The marginal law of ``Theta_i`` depends on ``eta_i`` only, so ``rho`` moves
    the dependence without disturbing the margins.
    """
    k0, k1, k2 = kappa
    e1, e2 = k0 + k1, k0 + k2
    rho = min(max(k0 / min(e1, e2), 1e-9), 1 - 1e-9)
    return np.array([math.log(e1), math.log(e2), math.log(rho / (1 - rho))])


def _from_free(x):
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 30):
        return None
    e1, e2 = math.exp(x[0]), math.exp(x[1])
    rho = 1.0 / (1.0 + math.exp(-x[2]))
    k0 = rho * min(e1, e2)
    kappa = (max(k0, _KAPPA_MIN), max(e1 - k0, _KAPPA_MIN), max(e2 - k0, _KAPPA_MIN))
    if max(kappa) > 1e3:
        return None
    return kappa


def _kappa_step(kappa, grid, Pjk, cfg, maxfev, step):
    keep = Pjk > 0

    def q(x):
        k = _from_free(x)
        if k is None:
            return math.inf
        lw = cell_log_masses(k, grid.edges, cfg)
        return -float(np.sum(Pjk[keep] * np.maximum(lw[keep], math.log(_TINY))))

    x0 = _to_free(kappa)
    f0 = q(x0)
    simplex = np.vstack([x0] + [x0 + step * np.eye(3)[j] for j in range(3)])
    res = minimize(q, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "maxfev": maxfev})
    if res.fun < f0:
        return _from_free(res.x), float(np.max(np.abs(res.x - x0)))
    return None, 0.0


def _kappa_direct(problem, phases, kappa, ll, maxfev, step):
    """Simplex search of the observed log-likelihood over ``log kappa``."""

    def obj(x):
        k = _from_free(x)
        return math.inf if k is None else -problem.loglik(phases, k)

    x0 = _to_free(kappa)
    simplex = np.vstack([x0] + [x0 + step * np.eye(3)[j] for j in range(3)])
    res = minimize(obj, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "maxfev": maxfev})
    if res.fun < -ll:
        return _from_free(res.x), -float(res.fun)
    return kappa, ll


class _CorrProblem:
    def __init__(self, Y, cfg):
        self.Y = Y
        self.n = Y.shape[0]
        self.cfg = cfg
        self._grids = {}

    def grid(self, kappa):
        if kappa not in self._grids:
            self._grids = {kappa: CorrGrid(kappa, self.cfg)}
        return self._grids[kappa]

    def _terms(self, phases, kappa):
        g = self.grid(kappa)
        L, X, A, M = [], [], [], []
        for i in range(2):
            x = np.multiply.outer(self.Y[:, i], g.axes[i])
            li = PhaseKernel(phases[i]).log_terms(x, np.zeros(self.n, bool))
            lt = li + np.log(g.axes[i])
            mx = lt.max(axis=1)
            X.append(x)
            L.append(li)
            M.append(mx)
            A.append(np.exp(lt - mx[:, None]))
        Wm = np.exp(g.logW)
        AW = A[0] @ Wm
        s = np.einsum("nk,nk->n", AW, A[1])
        logf = M[0] + M[1] + np.log(np.maximum(s, _TINY))
        return g, L, X, A, Wm, AW, s, logf

    def loglik(self, phases, kappa):
        t = self._terms(phases, kappa)
        if np.any(t[6] <= _TINY):
            return -math.inf
        ll = float(np.sum(t[-1]))
        return ll if np.isfinite(ll) else -math.inf

    def e_step(self, phases, kappa):
        g, L, X, A, Wm, AW, s, logf = self._terms(phases, kappa)
        ll = float(np.sum(logf))
        if np.any(s <= _TINY):
            raise EstimationError("the integrand mass of some observations escapes the "
                                  "quadrature grid; increase n_theta")
        if not np.isfinite(ll):
            raise EstimationError("non-finite log-likelihood in the E-step")
        inv = 1.0 / np.maximum(s, _TINY)
        post1 = A[0] * (A[1] @ Wm.T) * inv[:, None]
        post2 = A[1] * AW * inv[:, None]
        Pjk = Wm * ((A[0] * inv[:, None]).T @ A[1])
        stats = []
        for i, post in enumerate((post1, post2)):
            with np.errstate(divide="ignore"):
                logc = np.log(post) - L[i]
            stats.append(SufficientStats(*PhaseKernel(phases[i]).stats(
                X[i], logc, np.zeros(self.n, bool))))
        return ll, stats, Pjk, g


def em_corr_cph(data, dims, cfg=None, seed=0, *, kappa0=(0.5, 0.5, 0.5), structure="general",
                tol=1e-7, max_iter=2000, init=None, fit_kappa=True, maxfev=20):
    """Fit the bivariate correlated-Gamma CPH model ``Y_i = Z_i / Theta_i``.

    ``eta_i = kappa_0 + kappa_i`` throughout, so each ``Theta_i`` has mean one.
    The report's model is a :class:`CorrelatedGammaModel`.
    """
    Y = np.asarray(data, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise ValidationError("correlated fitting needs (n, 2) data")
    if np.any(~np.isfinite(Y)) or np.any(Y <= 0):
        raise ValidationError("observations must be positive and finite")
    if len(dims) != 2:
        raise ValidationError("correlated fitting is bivariate only")
    cfg = cfg or QuadratureConfig()
    problem = _CorrProblem(Y, cfg)
    if init is not None:
        phases = (init.marginal1[0], init.marginal2[0])
        kappa = (max(init.kappa0, _KAPPA_MIN), max(init.kappa1, _KAPPA_MIN),
                 max(init.kappa2, _KAPPA_MIN))
    else:
        rng = np.random.default_rng(seed)
        phases = tuple(random_phase(int(p), rng, float(np.median(Y[:, i])) / math.log(2.0),
                                    structure) for i, p in enumerate(dims))
        kappa = tuple(float(max(k, _KAPPA_MIN)) for k in kappa0)
    ll, stats, Pjk, g = problem.e_step(phases, kappa)
    trace = [ll]
    converged = False
    step = 0.5
    for _ in range(max_iter):
        prev = ll
        phases = tuple(m_step(ph, st) for ph, st in zip(phases, stats))
        if fit_kappa:
            cand, move = _kappa_step(kappa, g, Pjk, cfg, maxfev, step)
            step = float(np.clip(2 * move, 0.01, 1.0))
            cur = problem.loglik(phases, kappa)
            if cand is not None:
                lc = problem.loglik(phases, cand)
                if lc >= cur:
                    kappa, cur = cand, lc
            kappa, _ = _kappa_direct(problem, phases, kappa, cur, maxfev, step)
        ll, stats, Pjk, g = problem.e_step(phases, kappa)
        trace.append(ll)
        if abs(ll - prev) <= tol * max(1.0, abs(prev)):
            converged = True
            break
    model = CorrelatedGammaModel((phases[0], _const()), (phases[1], _const()), *kappa)
    flags = {"max_iter_reached": (not converged) and len(trace) - 1 >= max_iter,
             "correlation": model.correlation}
    return FitReport(model, np.array(trace), len(trace) - 1, converged, seed, flags, stats)


def _const():
    return Intensity("constant")
