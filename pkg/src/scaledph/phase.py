"""Phase-type (PH) and inhomogeneous phase-type (IPH) distributions."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .matfun import expm

_PI_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PhaseParams:
    """Initial distribution ``pi`` and sub-intensity matrix ``T`` of a PH law."""

    pi: np.ndarray
    T: np.ndarray
    t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float).reshape(-1)
        T = np.array(self.T, dtype=float)
        if T.ndim == 0:
            T = T.reshape(1, 1)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValidationError(f"T must be square, got shape {T.shape}")
        p = T.shape[0]
        if pi.shape != (p,):
            raise ValidationError(f"pi has length {pi.size}, expected {p}")
        if np.any(pi < -_PI_TOL) or abs(pi.sum() - 1.0) > 1e-9:
            raise ValidationError("pi must be a probability vector")
        pi = np.clip(pi, 0.0, None)
        pi = pi / pi.sum()
        off = T - np.diag(np.diagonal(T))
        if np.any(off < 0):
            raise ValidationError("off-diagonal entries of T must be nonnegative")
        if np.any(np.diagonal(T) >= 0):
            raise ValidationError("diagonal entries of T must be negative")
        t = -T.sum(axis=1)
        scale = np.abs(np.diagonal(T))
        if np.any(t < -1e-10 * scale):
            raise ValidationError("row sums of T must be nonpositive")
        t = np.clip(t, 0.0, None)
        if not np.any(t > 0):
            raise ValidationError("exit vector t = -T e must have a positive entry")
        pi.setflags(write=False)
        T.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t", t)

    @property
    def dim(self):
        return self.T.shape[0]

    def scaled(self, c):
        """Representation of ``Z / c`` for ``Z ~ PH(pi, T)``."""
        return PhaseParams(self.pi, c * self.T)

    def mean(self):
        return float(self.pi @ np.linalg.solve(-self.T, np.ones(self.dim)))

    def to_dict(self):
        return {"pi": self.pi.tolist(), "T": self.T.tolist()}


# ---------------------------------------------------------------------------
# Intensity families: lambda(t), h^{-1}(y) = int_0^y lambda, and h.

_FAMILIES = {
    "constant": (),
    "pareto": ("eta",),
    "weibull": ("eta",),
    "lognormal": ("gamma",),
    "loglogistic": ("gamma", "eta"),
    "gompertz": ("eta",),
}


class Intensity:
    """Parametric intensity function with closed-form ``h`` and ``h^{-1}``."""

    __slots__ = ("family", "params")

    def __init__(self, family="constant", **params):
        family = family.lower()
        if family not in _FAMILIES:
            raise ValidationError(f"unknown intensity family {family!r}")
        names = _FAMILIES[family]
        if set(params) != set(names):
            raise ValidationError(
                f"{family} intensity takes parameters {names}, got {tuple(params)}")
        vals = {k: float(params[k]) for k in names}
        for k, v in vals.items():
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"{family} parameter {k} must be positive, got {v}")
        if family == "lognormal" and vals["gamma"] <= 1:
            raise ValidationError("lognormal parameter gamma must exceed 1")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", vals)

    def __setattr__(self, name, value):
        raise AttributeError("Intensity is immutable")

    def __repr__(self):
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"Intensity({self.family!r}{', ' if args else ''}{args})"

    def __eq__(self, other):
        return (isinstance(other, Intensity) and other.family == self.family
                and other.params == self.params)

    def __hash__(self):
        return hash((self.family, tuple(sorted(self.params.items()))))

    @staticmethod
    def families():
        return dict(_FAMILIES)

    @property
    def param_names(self):
        return _FAMILIES[self.family]

    def with_params(self, **params):
        return Intensity(self.family, **{**self.params, **params})

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params)}

    def lam(self, t):
        t = np.asarray(t, dtype=float)
        f, p = self.family, self.params
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if f == "constant":
                out = np.ones_like(t)
            elif f == "pareto":
                out = 1.0 / (t + p["eta"])
            elif f == "weibull":
                eta = p["eta"]
                out = eta * np.power(t, eta - 1.0) if eta != 1 else np.ones_like(t)
            elif f == "lognormal":
                g = p["gamma"]
                out = g * np.power(np.log1p(t), g - 1.0) / (t + 1.0)
            elif f == "loglogistic":
                g, eta = p["gamma"], p["eta"]
                if eta == 1:
                    out = 1.0 / (t + g)
                else:
                    out = eta * np.power(t, eta - 1.0) / (np.power(t, eta) + g ** eta)
            else:
                out = np.exp(p["eta"] * t)
        return out

    def hinv(self, y):
        y = np.asarray(y, dtype=float)
        f, p = self.family, self.params
        with np.errstate(over="ignore"):
            if f == "constant":
                out = y.copy()
            elif f == "pareto":
                out = np.log1p(y / p["eta"])
            elif f == "weibull":
                out = np.power(y, p["eta"])
            elif f == "lognormal":
                out = np.power(np.log1p(y), p["gamma"])
            elif f == "loglogistic":
                out = np.log1p(np.power(y / p["gamma"], p["eta"]))
            else:
                out = np.expm1(p["eta"] * y) / p["eta"]
        return out

    def h(self, z):
        z = np.asarray(z, dtype=float)
        f, p = self.family, self.params
        with np.errstate(over="ignore"):
            if f == "constant":
                out = z.copy()
            elif f == "pareto":
                out = p["eta"] * np.expm1(z)
            elif f == "weibull":
                out = np.power(z, 1.0 / p["eta"])
            elif f == "lognormal":
                out = np.expm1(np.power(z, 1.0 / p["gamma"]))
            elif f == "loglogistic":
                out = p["gamma"] * np.power(np.expm1(z), 1.0 / p["eta"])
            else:
                out = np.log1p(p["eta"] * z) / p["eta"]
        return out


def intensity_lambda(i, t):
    return i.lam(t)


def intensity_hinv(i, y):
    return i.hinv(y)


def intensity_h(i, z):
    return i.h(z)


# ---------------------------------------------------------------------------
# Evaluation

def _vectorize(fn, y):
    y = np.asarray(y, dtype=float)
    out = np.array([fn(v) for v in y.reshape(-1)]).reshape(y.shape)
    return out if out.ndim else float(out)


def ph_survival(p, y):
    """``S(y) = pi exp(T y) e``."""
    e = np.ones(p.dim)
    return _vectorize(lambda v: float(p.pi @ expm(p.T * v) @ e), y)


def ph_density(p, y):
    """``f(y) = pi exp(T y) t``."""
    return _vectorize(lambda v: float(p.pi @ expm(p.T * v) @ p.t), y)


def iph_survival(p, i, y):
    return ph_survival(p, i.hinv(y))


def iph_density(p, i, y):
    y = np.asarray(y, dtype=float)
    lam = i.lam(y)
    dens = ph_density(p, i.hinv(y))
    with np.errstate(invalid="ignore"):
        out = lam * dens
    out = np.where(np.isnan(out), 0.0, out)
    return out if np.ndim(out) else float(out)


def ph_sample(p, size=None, rng=None):
    """Absorption times of the underlying jump chain.

    Each sojourn uses one inverse-CDF exponential and each jump one uniform.
    """
    rng = np.random.default_rng(rng)
    n = 1 if size is None else int(size)
    dim = p.dim
    rates = -np.diagonal(p.T)
    jump = np.zeros((dim, dim + 1))
    jump[:, :dim] = p.T / rates[:, None]
    jump[np.arange(dim), np.arange(dim)] = 0.0
    jump[:, dim] = p.t / rates
    cum = np.cumsum(jump, axis=1)
    cum[:, -1] = 1.0
    start_cum = np.cumsum(p.pi)
    start_cum[-1] = 1.0

    state = np.searchsorted(start_cum, rng.random(n), side="right")
    state = np.minimum(state, dim - 1)
    times = np.zeros(n)
    alive = np.arange(n)
    while alive.size:
        s = state[alive]
        times[alive] += -np.log1p(-rng.random(alive.size)) / rates[s]
        u = rng.random(alive.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        state[alive] = nxt
        alive = alive[nxt < dim]
    return times if size is not None else float(times[0])
