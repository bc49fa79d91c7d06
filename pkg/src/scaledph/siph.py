"""Univariate scaled inhomogeneous phase-type (SIPH) laws.

``Y = h(exp(-beta x) Z / Theta)`` with ``Z ~ PH(pi, T)``, so that
``S(y) = pi L(-h^{-1}(y) exp(beta x) T) e`` where ``L`` is the Laplace
transform of ``Theta`` evaluated at a matrix.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedError, ValidationError
from .phase import Intensity, PhaseParams, ph_sample
from .scaling import (CompoundPoissonGamma, Degenerate, Gamma, InverseGaussian, MittagLeffler,
                      PositiveStable, PVF, ScalingFamily)


@dataclass(frozen=True, eq=False)
class SiphModel:
    phase: PhaseParams
    intensity: Intensity = field(default_factory=Intensity)
    scaling: ScalingFamily = field(default_factory=Degenerate)
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not isinstance(self.phase, PhaseParams):
            raise ValidationError("phase must be PhaseParams")
        if not isinstance(self.intensity, Intensity):
            raise ValidationError("intensity must be an Intensity")
        if not isinstance(self.scaling, ScalingFamily):
            raise ValidationError("scaling must be a ScalingFamily")

    @property
    def q(self):
        return self.beta.size

    def replace(self, **changes):
        kw = dict(phase=self.phase, intensity=self.intensity, scaling=self.scaling, beta=self.beta)
        kw.update(changes)
        return SiphModel(**kw)

    def covariate_factor(self, x=None):
        """``exp(beta x)`` for one covariate row or a matrix of rows."""
        if self.q == 0:
            if x is not None and np.size(x) and np.asarray(x).shape[-1] != 0:
                raise ValidationError("model has no covariates but covariates were given")
            return 1.0
        if x is None:
            raise ValidationError(f"model needs {self.q} covariates")
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.q:
            raise ValidationError(f"covariate width {x.shape[-1]} does not match beta length {self.q}")
        return np.exp(x @ self.beta)


@dataclass(frozen=True)
class Observation:
    value: float
    covariates: tuple = ()
    censored: bool = False

    def __post_init__(self):
        if not self.value > 0:
            raise ValidationError("observations must be positive")


class Observations:
    """Column view of a univariate sample: values, covariate matrix, censor flags, weights."""

    def __init__(self, y, x=None, censored=None, weights=None):
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size == 0:
            raise ValidationError("empty data")
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise ValidationError("observations must be positive and finite")
        n = y.size
        x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float).reshape(n, -1)
        c = np.zeros(n, bool) if censored is None else np.asarray(censored, dtype=bool).reshape(-1)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if c.size != n or w.size != n:
            raise ValidationError("censor flags and weights must match the data length")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        self.y, self.x, self.censored, self.weights = y, x, c, w

    @classmethod
    def from_list(cls, obs):
        obs = list(obs)
        return cls([o.value for o in obs], [list(o.covariates) for o in obs],
                   [o.censored for o in obs])

    def __len__(self):
        return self.y.size

    @property
    def q(self):
        return self.x.shape[1]


# ---------------------------------------------------------------------------
# Evaluation

def _each(y, x, fn):
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1)
    if x is None or np.ndim(x) <= 1:
        out = np.array([fn(v, x) for v in flat])
    else:
        x = np.asarray(x, dtype=float).reshape(flat.size, -1)
        out = np.array([fn(v, xr) for v, xr in zip(flat, x)])
    out = out.reshape(y.shape)
    return out if out.ndim else float(out)


def _surv_at(m, z):
    """``pi L(-z T) e`` for a transformed argument ``z >= 0``."""
    p = m.phase
    if not np.isfinite(z):
        return _tail_limit(m)
    return float(p.pi @ m.scaling.laplace_matrix(-z * p.T) @ np.ones(p.dim))


def _tail_limit(m):
    s = m.scaling
    if isinstance(s, CompoundPoissonGamma) and not s.params["shifted"]:
        return math.exp(-s.params["rho"])
    return 0.0


def siph_survival(m, y, x=None):
    def one(v, xr):
        if v < 0:
            raise ValidationError("survival requires y >= 0")
        return _surv_at(m, float(m.intensity.hinv(v)) * m.covariate_factor(xr))
    return _each(y, x, one)


def siph_density(m, y, x=None):
    p = m.phase

    def one(v, xr):
        if v < 0:
            raise ValidationError("density requires y >= 0")
        c = m.covariate_factor(xr)
        z = float(m.intensity.hinv(v)) * c
        lam = float(m.intensity.lam(v)) * c
        if not np.isfinite(z):
            return 0.0
        if z == 0.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                d = -lam * m.scaling.laplace_deriv(0.0) * float(p.pi @ p.t)
            return 0.0 if np.isnan(d) else float(d)
        D = m.scaling.laplace_matrix_deriv(-z * p.T)
        val = -lam * float(p.pi @ D @ p.t)
        return max(val, 0.0) if np.isfinite(val) else val
    return _each(y, x, one)


def siph_sample(m, x=None, size=None, rng=None):
    """Draws of ``h(exp(-beta x) Z / Theta)``.

    ``x`` may be one covariate row (shared by all draws) or one row per draw.
    """
    rng = np.random.default_rng(rng)
    n = 1 if size is None else int(size)
    z = ph_sample(m.phase, n, rng)
    theta = m.scaling.sample(n, rng)
    c = m.covariate_factor(x) if m.q else 1.0
    with np.errstate(divide="ignore"):
        out = m.intensity.h(z / (theta * c))
    return out if size is not None else float(out[0])


def loglik(m, data):
    """``sum log f`` over exact rows plus ``sum log S`` over censored rows (weighted)."""
    if not isinstance(data, Observations):
        data = Observations.from_list(data)
    if data.q != m.q:
        raise ValidationError(f"data has {data.q} covariates, model expects {m.q}")
    total = 0.0
    xs = data.x if m.q else [None] * len(data)
    for y, xr, cen, w in zip(data.y, xs, data.censored, data.weights):
        if w == 0:
            continue
        v = siph_survival(m, y, xr) if cen else siph_density(m, y, xr)
        if v <= 0:
            kind = "survival" if cen else "density"
            warnings.warn(f"zero {kind} at y={y:g}; log-likelihood is -inf", RuntimeWarning,
                          stacklevel=2)
            return -math.inf
        total += w * math.log(v)
    return total


# ---------------------------------------------------------------------------
# Matrix Mittag-Leffler

def mml_model(phase, alpha):
    """SIPH representation of the matrix Mittag-Leffler law with index ``alpha``."""
    alpha = float(alpha)
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    if alpha == 1:
        return SiphModel(phase, Intensity("constant"), Degenerate(1.0))
    return SiphModel(phase, Intensity("weibull", eta=alpha), MittagLeffler(alpha=alpha))


def mml_survival(phase, alpha, y):
    return siph_survival(mml_model(phase, alpha), y)


def mml_density(phase, alpha, y):
    return siph_density(mml_model(phase, alpha), y)


# ---------------------------------------------------------------------------
# Tail classification

@dataclass(frozen=True)
class TailClass:
    kind: str
    index: float = None
    shape: float = None

    KINDS = ("slowly-varying", "regularly-varying", "weibull-type", "lognormal-type",
             "exponential-type", "gumbel-type")

    def __str__(self):
        out = self.kind
        if self.index is not None:
            out += f" index={_num(self.index)}"
        if self.shape is not None:
            out += f" shape={_num(self.shape)}"
        return out


def _num(v):
    v = float(v)
    return f"{v:.1f}" if v.is_integer() and abs(v) < 1e15 else f"{v:.7g}"


def _decay_rate(T):
    """Smallest real part of the eigenvalues of ``-T`` (the dominant exponential rate)."""
    return float(np.min(np.linalg.eigvals(-np.asarray(T)).real))


def tail_class(scaling, intensity, T=None):
    """Tail class of ``SIPH(pi, T, lambda, Theta)`` from the scaling and the intensity family.

    The constant intensity is handled as Weibull with ``eta = 1``. When the
    class is regularly varying only at a boundary exponent, the index depends
    on the slowest decay rate of ``T`` and is filled in when ``T`` is given.
    """
    fam = intensity.family
    par = intensity.params
    if fam == "constant":
        fam, par = "weibull", {"eta": 1.0}
    if isinstance(scaling, Gamma):
        a = scaling.alpha
        if fam == "weibull":
            return TailClass("regularly-varying", index=a * par["eta"])
        if fam == "gompertz":
            return TailClass("exponential-type")
        return TailClass("slowly-varying")

    # stretched laws: S(y) ~ C exp(-b h^{-1}(y)**e) with b from the Laplace tail
    if isinstance(scaling, PositiveStable):
        e = scaling.alpha
        rate = (lambda r: r ** e)
    elif isinstance(scaling, InverseGaussian):
        e = 0.5
        s2 = scaling.sigma2
        rate = (lambda r: math.sqrt(2.0 * r / s2))
    elif isinstance(scaling, PVF):
        e = scaling.params["gamma"]
        b, c = scaling._bc()
        rate = (lambda r: c * (r / b) ** e)
    else:
        raise UnsupportedError(
            f"no tail classification is available for {scaling.name} scaling "
            "(only gamma, stable, inverse Gaussian and PVF scalings are tabulated)")
    if fam == "weibull":
        return TailClass("weibull-type", shape=e * par["eta"])
    if fam == "gompertz":
        return TailClass("gumbel-type")
    if fam == "lognormal":
        k = e * par["gamma"]
        if abs(k - 1.0) < 1e-12:
            return TailClass("regularly-varying",
                             index=None if T is None else rate(_decay_rate(T)))
        return TailClass("slowly-varying" if k < 1 else "lognormal-type")
    return TailClass("slowly-varying")
