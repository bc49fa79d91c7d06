"""Mixing laws for the random scaling ``Theta``.

Every family exposes its Laplace transform on scalars and on matrices, the
first derivative of both, a sampler and, where available, a density. The
positive stable law and its Mittag-Leffler transform ``S**(-alpha)`` share
one density routine based on Kanter's representation
``S = (a(U) / E)**((1 - alpha) / alpha)`` with ``U ~ Unif(0, pi)`` and
``E ~ Exp(1)``.
"""

import math

import numpy as np
from scipy import special, stats
from scipy.special import expit, logsumexp

from .errors import DomainError, UnsupportedError, ValidationError
from .matfun import expm, expm_batch, frac_power
from .quadrature import mapped_log_grid

EULER_GAMMA = 0.5772156649015329
_LOG_FLOOR = -700.0


def _check_u(u, strict_lower=None):
    u = np.asarray(u, dtype=float)
    if strict_lower is None:
        bad = np.isnan(u) | (u < 0)
        msg = "u >= 0"
    else:
        bad = np.isnan(u) | (u <= strict_lower)
        msg = f"u > {strict_lower}"
    if np.any(bad):
        raise DomainError(f"Laplace argument out of domain (need {msg})")
    return u


def _square(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"matrix argument must be square, got shape {M.shape}")
    return M


def _out(x):
    return x if np.ndim(x) else float(x)


# ---------------------------------------------------------------------------
# Kanter's function and the Mittag-Leffler density

def _log_kanter(v, alpha):
    """``log a(u)`` at ``u = pi * expit(v)``, accurate near both endpoints."""
    b = 1.0 - alpha
    u = np.pi * expit(v)
    eps = np.pi * expit(-v)
    sin_u = np.where(u < np.pi / 2, np.sin(u), np.sin(eps))
    return (alpha / b) * np.log(np.sin(alpha * u)) + np.log(np.sin(b * u)) - np.log(sin_u) / b


def ml_logpdf(theta, alpha, chunk=64):
    """Log density of ``S**(-alpha)`` for positive stable ``S`` (index ``alpha < 1``).

    With ``Theta = (E / a(U))**(1 - alpha)`` the density is
    ``(1/pi) int_0^pi a(u) / (1 - alpha) * theta**(alpha/(1-alpha))
    * exp(-a(u) theta**(1/(1-alpha))) du``. The integral is taken with the
    trapezoid rule after ``u = pi * expit(v)``, which resolves the peak that
    forms near ``u = pi`` for small ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    shape = theta.shape
    with np.errstate(divide="ignore"):
        ls = np.log(theta.reshape(-1))
    b = 1.0 - alpha
    h = min(0.25, b / 3.0)
    finite = np.isfinite(ls)
    lmin = ls[finite].min() if finite.any() else 0.0
    v = np.arange(-38.0, max(8.0, -lmin + 12.0) + h, h)
    loga = _log_kanter(v, alpha)
    logw = loga - math.log(b) + math.log(np.pi) + np.log(expit(v)) + np.log(expit(-v))
    out = np.full(ls.size, -np.inf)
    idx = np.nonzero(finite)[0]
    for i in range(0, idx.size, chunk):
        sel = idx[i:i + chunk]
        l = ls[sel][:, None]
        with np.errstate(over="ignore"):
            x = logw[None, :] + (alpha / b) * l - np.exp(loga[None, :] + l / b)
        out[sel] = logsumexp(x, axis=1)
    out = out + math.log(h) - math.log(np.pi)
    return out.reshape(shape)


def stable_logpdf(x, alpha):
    """Log density of the positive stable law with Laplace transform ``exp(-u**alpha)``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        lx = np.log(x)
        return ml_logpdf(np.exp(-alpha * lx), alpha) + math.log(alpha) - (alpha + 1.0) * lx


def _kanter_draw(alpha, n, rng):
    u = rng.random(n)
    e = -np.log1p(-rng.random(n))
    v = np.log(u) - np.log1p(-u)
    # guard u in {0, 1} which the uniform generator can return at 0
    v = np.clip(v, -700.0, 700.0)
    return _log_kanter(v, alpha), e


# ---------------------------------------------------------------------------
# Families

class ScalingFamily:
    """Base class. Subclasses fill in the closed forms."""

    name = "base"
    param_names = ()
    continuous = True

    def __init__(self, **params):
        if set(params) != set(self.param_names):
            raise ValidationError(
                f"{self.name} takes parameters {self.param_names}, got {tuple(params)}")
        self.params = {k: params[k] for k in self.param_names}
        self._validate()

    def _validate(self):
        pass

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and repr(self) == repr(other)

    def __setattr__(self, name, value):
        if name != "params" and not name.startswith("_"):
            raise AttributeError("scaling families are immutable")
        object.__setattr__(self, name, value)

    def __hash__(self):
        return hash(repr(self))

    def with_params(self, **params):
        return type(self)(**{**self.params, **params})

    def to_dict(self):
        out = {}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return {"family": self.name, "params": out}

    # scalar transforms ------------------------------------------------------
    def laplace(self, u):
        raise NotImplementedError

    def laplace_deriv(self, u, k=1):
        """``k``-th derivative of the Laplace transform (``k = 1`` for every family)."""
        raise NotImplementedError

    # matrix transforms ------------------------------------------------------
    def laplace_matrix(self, M):
        raise NotImplementedError

    def laplace_matrix_deriv(self, M, k=1):
        raise NotImplementedError

    # density -----------------------------------------------------------------
    @property
    def has_density(self):
        return self.continuous

    def logpdf(self, theta):
        raise UnsupportedError(f"{self.name} scaling has no density")

    def density(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0):
            raise DomainError("density requires theta > 0")
        return _out(np.exp(self.logpdf(theta)))

    def sample(self, size=None, rng=None):
        rng = np.random.default_rng(rng)
        n = 1 if size is None else int(size)
        x = self._draw(n, rng)
        return x if size is not None else float(x[0])

    def _draw(self, n, rng):
        raise NotImplementedError

    # quadrature support ------------------------------------------------------
    def log_moments(self):
        """Approximate mean and standard deviation of ``log Theta``."""
        raise NotImplementedError

    def log_bounds(self, eps=1e-13):
        """Interval in ``log theta`` carrying all but about ``eps`` of the mass."""
        raise NotImplementedError

    def strip_width(self):
        """Half-width of the analyticity strip of the density in ``log theta``."""
        return np.pi / 2

    def continuous_mass(self):
        return 1.0

    def atoms(self):
        """``(theta, weights)`` for purely atomic laws, else ``None``."""
        return None

    def mixture(self, far_step=0.1, eps=1e-14, core_frac=8.0, window=None):
        """Nodes and weights ``(theta, w)`` so that ``sum(w * g(theta))`` approximates ``E g(Theta)``.

        Weights are normalised to the mass of the continuous part.
        """
        at = self.atoms()
        if at is not None:
            return at
        key = (far_step, eps, core_frac, window)
        cache = self.__dict__.setdefault("_mixture_cache", {})
        if key not in cache:
            cache[key] = self._build_mixture(far_step, eps, core_frac, window)
        return cache[key]

    def _build_mixture(self, far_step, eps, core_frac, window):
        m, sd = self.log_moments()
        lo, hi = self.log_bounds(eps)
        if window is not None:
            lo, hi = max(lo, window[0]), min(hi, window[1])
        core = min(far_step, sd / core_frac, self.strip_width() / 4.0)
        s, ds = mapped_log_grid(lo, hi, m, 6.0 * sd, far_step, core)
        logw = self.logpdf(np.exp(s)) + s + np.log(ds)
        w = np.exp(logw - logsumexp(logw)) * self.continuous_mass()
        return np.exp(s), w

    def _mixture_laplace(self, u):
        theta, w = self.mixture()
        u = np.asarray(u, dtype=float)
        return _out(np.exp(-np.multiply.outer(u, theta)) @ w)

    def _mixture_matrix(self, M, power=0):
        theta, w = self.mixture()
        E = expm_batch(-theta[:, None, None] * M[None])
        return np.einsum("j,jab->ab", w * theta ** power, E)


class Gamma(ScalingFamily):
    """``Gamma(alpha, 1)``; Laplace transform ``(1 + u)**(-alpha)``."""

    name = "gamma"
    param_names = ("alpha",)

    def _validate(self):
        a = self.params["alpha"] = float(self.params["alpha"])
        if not a > 0 or not np.isfinite(a):
            raise ValidationError("gamma alpha must be positive")

    @property
    def alpha(self):
        return self.params["alpha"]

    def laplace(self, u):
        u = _check_u(u, -1.0)
        return _out((1.0 + u) ** (-self.alpha))

    def laplace_deriv(self, u, k=1):
        u = _check_u(u, -1.0)
        a = self.alpha
        coef = (-1.0) ** k * special.poch(a, k)
        return _out(coef * (1.0 + u) ** (-a - k))

    def laplace_matrix(self, M):
        M = _square(M)
        return frac_power(np.eye(M.shape[0]) + M, -self.alpha)

    def laplace_matrix_deriv(self, M, k=1):
        M = _square(M)
        a = self.alpha
        return (-1.0) ** k * special.poch(a, k) * frac_power(np.eye(M.shape[0]) + M, -a - k)

    def logpdf(self, theta):
        return stats.gamma.logpdf(theta, self.alpha)

    def _draw(self, n, rng):
        return rng.gamma(self.alpha, 1.0, n)

    def log_moments(self):
        return float(special.digamma(self.alpha)), float(np.sqrt(special.polygamma(1, self.alpha)))

    def log_bounds(self, eps=1e-13):
        with np.errstate(divide="ignore"):
            lo = np.log(special.gammaincinv(self.alpha, eps))
            hi = np.log(special.gammainccinv(self.alpha, eps))
        return max(float(lo), _LOG_FLOOR), float(hi)

    def left_exponent(self):
        return self.alpha


class PositiveStable(ScalingFamily):
    """Positive stable law with Laplace transform ``exp(-u**alpha)``, ``0 < alpha <= 1``."""

    name = "stable"
    param_names = ("alpha",)

    def _validate(self):
        a = self.params["alpha"] = float(self.params["alpha"])
        if not 0 < a <= 1:
            raise ValidationError("stable alpha must lie in (0, 1]")

    @property
    def alpha(self):
        return self.params["alpha"]

    @property
    def continuous(self):
        return self.alpha < 1

    def laplace(self, u):
        u = _check_u(u)
        return _out(np.exp(-u ** self.alpha))

    def laplace_deriv(self, u, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for stable scaling")
        u = _check_u(u)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -a * u ** (a - 1.0) * np.exp(-u ** a)
        return _out(out)

    def laplace_matrix(self, M):
        M = _square(M)
        if not np.any(M):
            return np.eye(M.shape[0])
        return expm(-frac_power(M, self.alpha))

    def laplace_matrix_deriv(self, M, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for stable scaling")
        M = _square(M)
        a = self.alpha
        if a == 1:
            return -expm(-M)
        return -a * frac_power(M, a - 1.0) @ expm(-frac_power(M, a))

    def logpdf(self, theta):
        if self.alpha == 1:
            raise UnsupportedError("stable scaling with alpha = 1 is degenerate at 1")
        return stable_logpdf(theta, self.alpha)

    def _draw(self, n, rng):
        a = self.alpha
        if a == 1:
            return np.ones(n)
        loga, e = _kanter_draw(a, n, rng)
        return np.exp((1.0 - a) / a * (loga - np.log(e)))

    def log_moments(self):
        a = self.alpha
        return EULER_GAMMA * (1 / a - 1), float(np.sqrt(np.pi ** 2 / 6 * (1 / a ** 2 - 1)))

    def log_bounds(self, eps=1e-13):
        lo, hi = MittagLeffler(alpha=self.alpha).log_bounds(eps)
        return -hi / self.alpha, -lo / self.alpha

    def strip_width(self):
        return self.alpha * MittagLeffler(alpha=self.alpha).strip_width()

    def atoms(self):
        return (np.ones(1), np.ones(1)) if self.alpha == 1 else None


class MittagLeffler(ScalingFamily):
    """``Theta = S**(-alpha)`` for positive stable ``S``; Laplace transform ``E_alpha(-u)``.

    Combined with ``h^{-1}(y) = y**alpha`` this gives the matrix Mittag-Leffler law.
    Transforms are evaluated as mixtures over the density.
    """

    name = "mittag-leffler"
    param_names = ("alpha",)

    def _validate(self):
        a = self.params["alpha"] = float(self.params["alpha"])
        if not 0 < a <= 1:
            raise ValidationError("Mittag-Leffler alpha must lie in (0, 1]")

    @property
    def alpha(self):
        return self.params["alpha"]

    @property
    def continuous(self):
        return self.alpha < 1

    def laplace(self, u):
        u = _check_u(u)
        if self.alpha == 1:
            return _out(np.exp(-u))
        return self._mixture_laplace(u)

    def laplace_deriv(self, u, k=1):
        u = _check_u(u)
        if self.alpha == 1:
            return _out((-1.0) ** k * np.exp(-u))
        theta, w = self.mixture()
        return _out((-1.0) ** k * np.exp(-np.multiply.outer(u, theta)) @ (w * theta ** k))

    def laplace_matrix(self, M):
        M = _square(M)
        if self.alpha == 1:
            return expm(-M)
        return self._mixture_matrix(M)

    def laplace_matrix_deriv(self, M, k=1):
        M = _square(M)
        if self.alpha == 1:
            return (-1.0) ** k * expm(-M)
        return (-1.0) ** k * self._mixture_matrix(M, power=k)

    def logpdf(self, theta):
        if self.alpha == 1:
            raise UnsupportedError("Mittag-Leffler scaling with alpha = 1 is degenerate at 1")
        return ml_logpdf(theta, self.alpha)

    def _draw(self, n, rng):
        a = self.alpha
        if a == 1:
            return np.ones(n)
        loga, e = _kanter_draw(a, n, rng)
        return np.exp((1.0 - a) * (np.log(e) - loga))

    def log_moments(self):
        a = self.alpha
        return -EULER_GAMMA * (1 - a), float(np.sqrt(np.pi ** 2 / 6 * (1 - a ** 2)))

    def log_bounds(self, eps=1e-13):
        a = self.alpha
        b = 1.0 - a
        # density at 0 is 1/Gamma(1 - a); the upper tail is below exp(-a(0) theta**(1/b))
        lo = math.log(eps) - special.gammaln(b) if b > 0 else 0.0
        a0 = a ** (a / b) * b if b > 0 else 1.0
        hi = b * math.log(-math.log(eps) / a0) if b > 0 else 0.0
        return max(lo, _LOG_FLOOR), hi

    def strip_width(self):
        return np.pi * (1.0 - self.alpha) / 2

    def left_exponent(self):
        return 1.0

    def atoms(self):
        return (np.ones(1), np.ones(1)) if self.alpha == 1 else None


class InverseGaussian(ScalingFamily):
    """Inverse Gaussian with mean 1 and variance ``sigma2``."""

    name = "inverse-gaussian"
    param_names = ("sigma2",)

    def _validate(self):
        s = self.params["sigma2"] = float(self.params["sigma2"])
        if not s > 0 or not np.isfinite(s):
            raise ValidationError("inverse Gaussian sigma2 must be positive")

    @property
    def sigma2(self):
        return self.params["sigma2"]

    def laplace(self, u):
        u = _check_u(u)
        s = self.sigma2
        return _out(np.exp((1.0 - np.sqrt(1.0 + 2.0 * s * u)) / s))

    def laplace_deriv(self, u, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for inverse Gaussian scaling")
        u = _check_u(u)
        s = self.sigma2
        r = np.sqrt(1.0 + 2.0 * s * u)
        return _out(-np.exp((1.0 - r) / s) / r)

    def laplace_matrix(self, M):
        M = _square(M)
        s = self.sigma2
        eye = np.eye(M.shape[0])
        return expm((eye - frac_power(eye + 2.0 * s * M, 0.5)) / s)

    def laplace_matrix_deriv(self, M, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for inverse Gaussian scaling")
        M = _square(M)
        s = self.sigma2
        eye = np.eye(M.shape[0])
        R = frac_power(eye + 2.0 * s * M, 0.5)
        return -np.linalg.solve(R, expm((eye - R) / s))

    def _dist(self):
        s = self.sigma2
        return stats.invgauss(mu=s, scale=1.0 / s)

    def logpdf(self, theta):
        theta = np.asarray(theta, dtype=float)
        lam = 1.0 / self.sigma2
        return (0.5 * (math.log(lam) - math.log(2 * np.pi)) - 1.5 * np.log(theta)
                - lam * (theta - 1.0) ** 2 / (2.0 * theta))

    def _draw(self, n, rng):
        return rng.wald(1.0, 1.0 / self.sigma2, n)

    def log_moments(self):
        v = math.log1p(self.sigma2)
        return -v / 2, math.sqrt(v)

    def log_bounds(self, eps=1e-13):
        d = self._dist()
        return max(float(np.log(d.ppf(eps))), _LOG_FLOOR), float(np.log(d.isf(eps)))

    def left_exponent(self):
        return np.inf


class PVF(ScalingFamily):
    """Power variance function family with mean 1 and variance ``1/eta``.

    Laplace transform ``exp(c (1 - (1 + u/b)**gamma))`` with ``b = eta (1 - gamma)``
    and ``c = b / gamma``; ``gamma = 1`` is the point mass at 1.
    """

    name = "pvf"
    param_names = ("eta", "gamma")

    def _validate(self):
        e = self.params["eta"] = float(self.params["eta"])
        g = self.params["gamma"] = float(self.params["gamma"])
        if not e > 0 or not 0 < g <= 1:
            raise ValidationError("PVF requires eta > 0 and gamma in (0, 1]")

    @property
    def continuous(self):
        return self.params["gamma"] < 1

    def _bc(self):
        e, g = self.params["eta"], self.params["gamma"]
        b = e * (1.0 - g)
        return b, b / g

    def laplace(self, u):
        u = _check_u(u)
        g = self.params["gamma"]
        if g == 1:
            return _out(np.exp(-u))
        b, c = self._bc()
        return _out(np.exp(c * (1.0 - (1.0 + u / b) ** g)))

    def laplace_deriv(self, u, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for PVF scaling")
        u = _check_u(u)
        g = self.params["gamma"]
        if g == 1:
            return _out(-np.exp(-u))
        b, c = self._bc()
        q = 1.0 + u / b
        return _out(-q ** (g - 1.0) * np.exp(c * (1.0 - q ** g)))

    def laplace_matrix(self, M):
        M = _square(M)
        g = self.params["gamma"]
        if g == 1:
            return expm(-M)
        b, c = self._bc()
        eye = np.eye(M.shape[0])
        return expm(c * (eye - frac_power(eye + M / b, g)))

    def laplace_matrix_deriv(self, M, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for PVF scaling")
        M = _square(M)
        g = self.params["gamma"]
        if g == 1:
            return -expm(-M)
        b, c = self._bc()
        eye = np.eye(M.shape[0])
        Q = eye + M / b
        return -frac_power(Q, g - 1.0) @ expm(c * (eye - frac_power(Q, g)))

    def _tilt(self, c):
        """Scale ``k`` with ``Theta`` equal to ``k S`` tilted by ``exp(-b theta)``."""
        b, _ = self._bc()
        g = self.params["gamma"]
        return (c * b ** (-g)) ** (1.0 / g)

    def logpdf(self, theta):
        """Exponentially tilted stable density (reduced accuracy far in the tails)."""
        g = self.params["gamma"]
        if g == 1:
            raise UnsupportedError("PVF with gamma = 1 is degenerate at 1")
        theta = np.asarray(theta, dtype=float)
        b, c = self._bc()
        k = self._tilt(c)
        return c - b * theta + stable_logpdf(theta / k, g) - math.log(k)

    def _draw(self, n, rng):
        g = self.params["gamma"]
        if g == 1:
            return np.ones(n)
        b, c = self._bc()
        m = max(1, int(math.ceil(c)))
        k = self._tilt(c / m)
        out = np.zeros(n)
        # each of m iid pieces is accepted with probability exp(-c/m) >= exp(-1)
        for _ in range(m):
            piece = np.empty(n)
            todo = np.arange(n)
            while todo.size:
                loga, e = _kanter_draw(g, todo.size, rng)
                x = k * np.exp((1.0 - g) / g * (loga - np.log(e)))
                keep = rng.random(todo.size) <= np.exp(-b * x)
                piece[todo[keep]] = x[keep]
                todo = todo[~keep]
            out += piece
        return out

    def log_moments(self):
        v = math.log1p(1.0 / self.params["eta"])
        return -v / 2, math.sqrt(v)

    def log_bounds(self, eps=1e-13):
        g = self.params["gamma"]
        b, c = self._bc()
        lo = PositiveStable(alpha=g).log_bounds(eps)[0] + math.log(self._tilt(c))
        hi = math.log(max(1.0 + 40.0 * math.sqrt(1.0 / self.params["eta"]),
                          (c - math.log(eps)) / b))
        return lo, hi

    def strip_width(self):
        g = self.params["gamma"]
        return g * np.pi * (1.0 - g) / 2

    def atoms(self):
        return (np.ones(1), np.ones(1)) if self.params["gamma"] == 1 else None


class CompoundPoissonGamma(ScalingFamily):
    """Sum of ``N`` iid ``Gamma(alpha, 1)`` with ``N ~ Poisson(rho)`` (``N + 1`` when shifted).

    Without the shift ``Theta = 0`` with probability ``exp(-rho)``, which puts
    an atom at infinity in the scaled law.
    """

    name = "compound-poisson-gamma"
    param_names = ("rho", "alpha", "shifted")

    def _validate(self):
        r = self.params["rho"] = float(self.params["rho"])
        a = self.params["alpha"] = float(self.params["alpha"])
        self.params["shifted"] = bool(self.params["shifted"])
        if not r > 0 or not a > 0:
            raise ValidationError("compound Poisson requires rho > 0 and alpha > 0")

    def __init__(self, rho=None, alpha=None, shifted=False):
        super().__init__(rho=rho, alpha=alpha, shifted=shifted)

    def laplace(self, u):
        u = _check_u(u)
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        q = (1.0 + u) ** (-a)
        out = np.exp(-r * (1.0 - q))
        return _out(out * q if sh else out)

    def laplace_deriv(self, u, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for compound Poisson scaling")
        u = _check_u(u)
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        q = (1.0 + u) ** (-a)
        L = np.exp(-r * (1.0 - q))
        d = -a * (1.0 + u) ** (-a - 1.0) * L
        return _out(d * (r * q + 1.0) if sh else r * d)

    def laplace_matrix(self, M):
        M = _square(M)
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        eye = np.eye(M.shape[0])
        Q = frac_power(eye + M, -a)
        L = expm(-r * (eye - Q))
        return L @ Q if sh else L

    def laplace_matrix_deriv(self, M, k=1):
        if k != 1:
            raise UnsupportedError("only the first derivative is available for compound Poisson scaling")
        M = _square(M)
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        eye = np.eye(M.shape[0])
        Q = frac_power(eye + M, -a)
        D = -a * frac_power(eye + M, -a - 1.0) @ expm(-r * (eye - Q))
        return D @ (r * Q + eye) if sh else r * D

    def _n_range(self, eps=1e-16):
        r, sh = self.params["rho"], self.params["shifted"]
        n_hi = int(stats.poisson.isf(eps, r)) + 2
        n = np.arange(0, n_hi + 1)
        logp = stats.poisson.logpmf(n, r)
        if sh:
            n = n + 1
        else:
            n, logp = n[1:], logp[1:]
        return n, logp

    def logpdf(self, theta):
        """Log density of the continuous part (series over the Poisson count)."""
        theta = np.asarray(theta, dtype=float)
        a = self.params["alpha"]
        n, logp = self._n_range()
        terms = logp[:, None] + stats.gamma.logpdf(theta.reshape(1, -1), (n * a)[:, None])
        return logsumexp(terms, axis=0).reshape(theta.shape)

    def _draw(self, n, rng):
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        N = rng.poisson(r, n) + (1 if sh else 0)
        out = np.zeros(n)
        pos = N > 0
        out[pos] = rng.gamma(N[pos] * a)
        return out

    def continuous_mass(self):
        return 1.0 if self.params["shifted"] else -math.expm1(-self.params["rho"])

    def log_moments(self):
        r, a, sh = self.params["rho"], self.params["alpha"], self.params["shifted"]
        mean = r * a + (a if sh else 0.0)
        var = r * a * (a + 1.0) + (a if sh else 0.0)
        v = math.log1p(var / mean ** 2)
        return math.log(mean) - v / 2, math.sqrt(v)

    def log_bounds(self, eps=1e-13):
        a = self.params["alpha"]
        n, _ = self._n_range(eps)
        lo = max(float(np.log(special.gammaincinv(a * n[0], eps))), _LOG_FLOOR)
        hi = float(np.log(special.gammainccinv(a * n[-1], eps)))
        return lo, hi


class Discrete(ScalingFamily):
    """Finite discrete law with atoms ``eta_j > 0`` and weights ``w_j``."""

    name = "discrete"
    param_names = ("atoms", "weights")
    continuous = False

    def __init__(self, atoms=None, weights=None):
        super().__init__(atoms=atoms, weights=weights)

    def _validate(self):
        at = np.array(self.params["atoms"], dtype=float).reshape(-1)
        w = np.array(self.params["weights"], dtype=float).reshape(-1)
        if at.size == 0 or at.shape != w.shape:
            raise ValidationError("discrete scaling needs matching nonempty atoms and weights")
        if np.any(at <= 0) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("discrete atoms must be positive and weights a probability vector")
        at.setflags(write=False)
        w.setflags(write=False)
        self.params["atoms"], self.params["weights"] = at, w

    def __repr__(self):
        return f"Discrete(atoms={self.params['atoms'].tolist()}, weights={self.params['weights'].tolist()})"

    def laplace(self, u):
        u = _check_u(u)
        at, w = self.params["atoms"], self.params["weights"]
        return _out(np.exp(-np.multiply.outer(u, at)) @ w)

    def laplace_deriv(self, u, k=1):
        u = _check_u(u)
        at, w = self.params["atoms"], self.params["weights"]
        return _out((-1.0) ** k * np.exp(-np.multiply.outer(u, at)) @ (w * at ** k))

    def laplace_matrix(self, M):
        M = _square(M)
        at, w = self.params["atoms"], self.params["weights"]
        return np.einsum("j,jab->ab", w, expm_batch(-at[:, None, None] * M[None]))

    def laplace_matrix_deriv(self, M, k=1):
        M = _square(M)
        at, w = self.params["atoms"], self.params["weights"]
        E = expm_batch(-at[:, None, None] * M[None])
        return (-1.0) ** k * np.einsum("j,jab->ab", w * at ** k, E)

    def _draw(self, n, rng):
        at, w = self.params["atoms"], self.params["weights"]
        cum = np.cumsum(w)
        cum[-1] = 1.0
        idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), at.size - 1)
        return at[idx]

    def atoms(self):
        return np.array(self.params["atoms"]), np.array(self.params["weights"])


class Degenerate(ScalingFamily):
    """Point mass at ``k``."""

    name = "degenerate"
    param_names = ("k",)
    continuous = False

    def __init__(self, k=1.0):
        super().__init__(k=k)

    def _validate(self):
        k = self.params["k"] = float(self.params["k"])
        if not k > 0:
            raise ValidationError("degenerate scaling needs k > 0")

    def laplace(self, u):
        u = _check_u(u)
        return _out(np.exp(-self.params["k"] * u))

    def laplace_deriv(self, u, k=1):
        u = _check_u(u)
        c = self.params["k"]
        return _out((-c) ** k * np.exp(-c * u))

    def laplace_matrix(self, M):
        return expm(-self.params["k"] * _square(M))

    def laplace_matrix_deriv(self, M, k=1):
        c = self.params["k"]
        return (-c) ** k * expm(-c * _square(M))

    def _draw(self, n, rng):
        return np.full(n, self.params["k"])

    def atoms(self):
        return np.array([self.params["k"]]), np.ones(1)


FAMILIES = {cls.name: cls for cls in (Gamma, PositiveStable, MittagLeffler, InverseGaussian,
                                      PVF, CompoundPoissonGamma, Discrete, Degenerate)}
_ALIASES = {"positivestable": "stable", "ig": "inverse-gaussian", "cpg": "compound-poisson-gamma",
            "ml": "mittag-leffler"}
_ALIASES.update({k.replace("-", ""): k for k in FAMILIES})


def family_class(name):
    key = name.lower().replace("_", "").replace("-", "")
    if key not in _ALIASES:
        raise ValidationError(f"unknown scaling family {name!r}")
    return FAMILIES[_ALIASES[key]]


def scaling_from_dict(d):
    return family_class(d["family"])(**d.get("params", {}))


# module-level spellings of the methods
def laplace(s, u):
    return s.laplace(u)


def laplace_matrix(s, M):
    return s.laplace_matrix(M)


def density(s, theta):
    return s.density(theta)


def sample(s, size=None, rng=None):
    return s.sample(size, rng)
