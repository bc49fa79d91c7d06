"""Multivariate laws driven by a common or a correlated scaling.

Shared scaling: ``Y_i = h_i(Z_i / Theta)`` with independent ``Z_i ~ PH(pi_i, T_i)``;
the joint survival is ``(pi_1 x ... x pi_d) L(-(h_1^{-1}(y_1) T_1 (+) ...)) e``
with Kronecker products ``x`` and Kronecker sums ``(+)``.

Correlated Gamma scaling: ``Theta_i = (W_0 + W_i) / eta_i`` with independent
``W_j ~ Gamma(kappa_j, 1)``.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, EstimationError, UnsupportedError, ValidationError
from .matfun import expm_batch, frac_power, kron_prod, kron_sum
from .phase import Intensity, PhaseParams, ph_sample
from .scaling import Gamma, ScalingFamily
from .siph import SiphModel

DEFAULT_CAP = 512
MAX_DIM = 3


def _marginal(item):
    if isinstance(item, SiphModel):
        return item.phase, item.intensity
    phase, intensity = item if isinstance(item, (tuple, list)) else (item, Intensity())
    if not isinstance(phase, PhaseParams):
        phase = PhaseParams(*phase)
    return phase, intensity


class SharedModel:
    """``d``-variate model with one scaling variable shared by all coordinates."""

    def __init__(self, marginals, scaling, cap=DEFAULT_CAP):
        marg = [_marginal(m) for m in marginals]
        if not 1 <= len(marg) <= MAX_DIM:
            raise ValidationError(f"shared models support 1 to {MAX_DIM} coordinates")
        if not isinstance(scaling, ScalingFamily):
            raise ValidationError("scaling must be a ScalingFamily")
        size = math.prod(p.dim for p, _ in marg)
        if size > cap:
            raise CapacityError(f"joint dimension {size} exceeds the cap {cap}")
        self.marginals = tuple(marg)
        self.scaling = scaling
        self.cap = cap

    @property
    def d(self):
        return len(self.marginals)

    def marginal_model(self, i):
        p, lam = self.marginals[i]
        return SiphModel(p, lam, self.scaling)

    def replace(self, marginals=None, scaling=None):
        return SharedModel(self.marginals if marginals is None else marginals,
                           self.scaling if scaling is None else scaling, self.cap)

    def joint_pi(self):
        out = np.ones((1, 1))
        for p, _ in self.marginals:
            out = kron_prod(out, p.pi)
        return out.reshape(-1)

    def joint_t(self):
        out = np.ones((1, 1))
        for p, _ in self.marginals:
            out = kron_prod(out, p.t.reshape(-1, 1))
        return out.reshape(-1)

    def generator(self, z):
        """``z_1 T_1 (+) ... (+) z_d T_d``."""
        mats = [zi * p.T for zi, (p, _) in zip(z, self.marginals)]
        return mats[0] if len(mats) == 1 else kron_sum(*mats)


def _transform(m, y):
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != m.d:
        raise ValidationError(f"expected {m.d} coordinates, got {y.size}")
    if np.any(y < 0):
        raise ValidationError("coordinates must be nonnegative")
    z = np.array([float(lam.hinv(v)) for v, (_, lam) in zip(y, m.marginals)])
    lam = np.array([float(l.lam(v)) for v, (_, l) in zip(y, m.marginals)])
    return z, lam


def shared_survival(m, y):
    z, _ = _transform(m, y)
    pi = m.joint_pi()
    if np.any(~np.isfinite(z)):
        # a coordinate at infinity is a limit of the Laplace transform at infinity
        return 0.0
    L = m.scaling.laplace_matrix(-m.generator(z))
    return float(pi @ L.sum(axis=1))


def shared_density(m, y):
    z, lam = _transform(m, y)
    if np.any(~np.isfinite(z)):
        return 0.0
    if m.d == 1:
        from .siph import siph_density
        return siph_density(m.marginal_model(0), float(np.ravel(y)[0]))
    pi, t = m.joint_pi(), m.joint_t()
    if isinstance(m.scaling, Gamma):
        D = m.scaling.laplace_matrix_deriv(-m.generator(z), k=m.d)
        val = (-1.0) ** m.d * float(pi @ D @ t)
    else:
        theta, w = m.scaling.mixture()
        val = 0.0
        prod = np.ones(theta.size)
        for zi, (p, _) in zip(z, m.marginals):
            E = expm_batch(theta[:, None, None] * zi * p.T[None])
            prod = prod * (np.einsum("a,jab,b->j", p.pi, E, p.t) * theta)
        val = float(prod @ w)
    return max(val, 0.0) * float(np.prod(lam))


def shared_sample(m, size=None, rng=None):
    """Rows ``(h_1(Z_1/Theta), ..., h_d(Z_d/Theta))`` sharing one ``Theta`` per row."""
    rng = np.random.default_rng(rng)
    n = 1 if size is None else int(size)
    theta = m.scaling.sample(n, rng)
    cols = []
    for p, lam in m.marginals:
        z = ph_sample(p, n, rng)
        with np.errstate(divide="ignore"):
            cols.append(lam.h(z / theta))
    out = np.column_stack(cols)
    return out if size is not None else out[0]


def _alpha_moment(p, a):
    """``E[Z**a] = Gamma(a + 1) pi (-T)**(-a) e``."""
    return math.gamma(a + 1.0) * float(p.pi @ frac_power(-p.T, -a) @ np.ones(p.dim))


def upper_tail_dependence(m):
    """Upper tail dependence coefficient of a bivariate Gamma-scaled model."""
    if m.d != 2:
        raise ValidationError("tail dependence needs a bivariate model")
    if not isinstance(m.scaling, Gamma):
        raise UnsupportedError("the closed-form coefficient is implemented for gamma scaling")
    a = m.scaling.alpha
    (p1, _), (p2, _) = m.marginals
    T1 = p1.T * _alpha_moment(p1, a) ** (1.0 / a)
    T2 = p2.T * _alpha_moment(p2, a) ** (1.0 / a)
    M = frac_power(-kron_sum(T1, T2), -a)
    return math.gamma(a + 1.0) * float(np.kron(p1.pi, p2.pi) @ M.sum(axis=1))


def empirical_tail_dependence(sample, q):
    """Share of rows exceeding both empirical ``q``-quantiles among rows exceeding the second.

    Emits a warning when fewer than 20 rows exceed the threshold.
    """
    x = np.asarray(sample, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValidationError("sample must be an (n, 2) array of pairs")
    if not 0 < q < 1:
        raise ValidationError("q must lie strictly between 0 and 1")
    if x.shape[0] < 2 or np.all(x[:, 0] == x[0, 0]) or np.all(x[:, 1] == x[0, 1]):
        raise EstimationError("degenerate sample")
    u1, u2 = np.quantile(x, q, axis=0)
    exc2 = x[:, 1] > u2
    k = int(exc2.sum())
    if k == 0:
        raise EstimationError("no exceedances above the threshold")
    if k < 20:
        warnings.warn(f"only {k} exceedances; tail dependence estimate is unreliable",
                      RuntimeWarning, stacklevel=2)
    return float(np.sum(exc2 & (x[:, 0] > u1)) / k)


# ---------------------------------------------------------------------------
# Correlated Gamma scaling

@dataclass(frozen=True, eq=False)
class CorrelatedGammaModel:
    marginal1: tuple
    marginal2: tuple
    kappa0: float
    kappa1: float
    kappa2: float
    eta1: float = None
    eta2: float = None

    def __post_init__(self):
        m1, m2 = _marginal(self.marginal1), _marginal(self.marginal2)
        k0, k1, k2 = (float(self.kappa0), float(self.kappa1), float(self.kappa2))
        if min(k0, k1, k2) < 0 or k0 + k1 <= 0 or k0 + k2 <= 0:
            raise ValidationError("kappas must be nonnegative with kappa0 + kappa_i > 0")
        e1 = k0 + k1 if self.eta1 is None else float(self.eta1)
        e2 = k0 + k2 if self.eta2 is None else float(self.eta2)
        if e1 <= 0 or e2 <= 0:
            raise ValidationError("eta1 and eta2 must be positive")
        if m1[0].dim * m2[0].dim > DEFAULT_CAP:
            raise CapacityError("joint dimension exceeds the cap")
        for name, val in (("marginal1", m1), ("marginal2", m2), ("kappa0", k0), ("kappa1", k1),
                          ("kappa2", k2), ("eta1", e1), ("eta2", e2)):
            object.__setattr__(self, name, val)

    @property
    def correlation(self):
        k0 = self.kappa0
        return k0 / math.sqrt((k0 + self.kappa1) * (k0 + self.kappa2)) if k0 else 0.0

    def replace(self, **kw):
        base = dict(marginal1=self.marginal1, marginal2=self.marginal2, kappa0=self.kappa0,
                    kappa1=self.kappa1, kappa2=self.kappa2, eta1=self.eta1, eta2=self.eta2)
        base.update(kw)
        return CorrelatedGammaModel(**base)


def _corr_parts(m, y1, y2):
    (p1, l1), (p2, l2) = m.marginal1, m.marginal2
    if y1 < 0 or y2 < 0:
        raise ValidationError("coordinates must be nonnegative")
    z1, z2 = float(l1.hinv(y1)), float(l2.hinv(y2))
    I1, I2 = np.eye(p1.dim), np.eye(p2.dim)
    A = kron_prod(-z1 / m.eta1 * p1.T, I2)
    B = kron_prod(I1, -z2 / m.eta2 * p2.T)
    return (p1, l1, z1), (p2, l2, z2), A, B


def _mpow(M, a):
    return np.eye(M.shape[0]) if a == 0 else frac_power(M, a)


def correlated_survival(m, y1, y2):
    (p1, _, _), (p2, _, _), A, B = _corr_parts(m, y1, y2)
    eye = np.eye(A.shape[0])
    F = _mpow(eye + A + B, -m.kappa0) @ _mpow(eye + A, -m.kappa1) @ _mpow(eye + B, -m.kappa2)
    return float(np.kron(p1.pi, p2.pi) @ F.sum(axis=1))


def correlated_density(m, y1, y2):
    """Mixed second derivative of the joint survival in closed form."""
    (p1, l1, _), (p2, l2, _), A, B = _corr_parts(m, y1, y2)
    eye = np.eye(A.shape[0])
    k0, k1, k2 = m.kappa0, m.kappa1, m.kappa2
    F = _mpow(eye + A + B, -k0) @ _mpow(eye + A, -k1) @ _mpow(eye + B, -k2)
    P = np.linalg.inv(eye + A + B)
    Pa, Pb = np.linalg.inv(eye + A), np.linalg.inv(eye + B)
    ga = k0 * P + k1 * Pa
    gb = k0 * P + k2 * Pb
    Fab = F @ (ga @ gb + k0 * P @ P)
    t = np.kron(p1.t, p2.t)
    scale = float(l1.lam(y1)) * float(l2.lam(y2)) / (m.eta1 * m.eta2)
    return max(scale * float(np.kron(p1.pi, p2.pi) @ Fab @ t), 0.0)


def correlated_theta_sample(m, size, rng):
    rng = np.random.default_rng(rng)
    w0 = rng.gamma(m.kappa0, 1.0, size) if m.kappa0 > 0 else np.zeros(size)
    w1 = rng.gamma(m.kappa1, 1.0, size) if m.kappa1 > 0 else np.zeros(size)
    w2 = rng.gamma(m.kappa2, 1.0, size) if m.kappa2 > 0 else np.zeros(size)
    return (w0 + w1) / m.eta1, (w0 + w2) / m.eta2


def correlated_sample(m, size=None, rng=None):
    rng = np.random.default_rng(rng)
    n = 1 if size is None else int(size)
    th1, th2 = correlated_theta_sample(m, n, rng)
    (p1, l1), (p2, l2) = m.marginal1, m.marginal2
    z1 = ph_sample(p1, n, rng)
    z2 = ph_sample(p2, n, rng)
    with np.errstate(divide="ignore"):
        out = np.column_stack([l1.h(z1 / th1), l2.h(z2 / th2)])
    return out if size is not None else out[0]


def correlated_from_gamma_shared(m):
    """Shared Gamma(kappa0) model as a correlated model with kappa1 = kappa2 = 0."""
    if not isinstance(m.scaling, Gamma) or m.d != 2:
        raise ValidationError("needs a bivariate gamma-scaled shared model")
    a = m.scaling.alpha
    return CorrelatedGammaModel(m.marginals[0], m.marginals[1], a, 0.0, 0.0, 1.0, 1.0)

