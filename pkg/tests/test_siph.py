import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import erfc, gamma as gamma_fn, roots_genlaguerre

from scaledph.errors import UnsupportedError, ValidationError
from scaledph.matfun import expm
from scaledph.phase import Intensity, PhaseParams, iph_density, iph_survival, ph_density
from scaledph.scaling import (PVF, CompoundPoissonGamma, Degenerate, Discrete, Gamma,
                              InverseGaussian, MittagLeffler, PositiveStable)
from scaledph.siph import (Observation, Observations, SiphModel, loglik, mml_density,
                           mml_survival, siph_density, siph_sample, siph_survival, tail_class)

from conftest import PI1_64, PI_61, PI_62, S_62, T1_64, T_61

LOMAX = SiphModel(PhaseParams([1.0], [[-1.0]]), Intensity(), Gamma(alpha=1.5))
BURR = SiphModel(PhaseParams(PI_62, S_62), Intensity("weibull", eta=2.0), Gamma(alpha=1.5))


def test_scalar_lomax():
    assert siph_survival(LOMAX, 0.0) == 1.0
    assert siph_survival(LOMAX, 1.0) == pytest.approx(0.3535534, abs=1e-7)
    assert siph_density(LOMAX, 1.0) == pytest.approx(0.2651650, abs=1e-7)
    # log(1.5) - 2.5 log 2
    assert loglik(LOMAX, Observations([1.0])) == pytest.approx(-1.3274028, abs=1e-7)


def test_degenerate_reduces_to_iph():
    ph = PhaseParams(PI_62, S_62)
    lam = Intensity("pareto", eta=1.3)
    m = SiphModel(ph, lam, Degenerate(k=1.0))
    y = np.array([0.2, 1.0, 3.0, 10.0])
    np.testing.assert_allclose(siph_survival(m, y), iph_survival(ph, lam, y), rtol=1e-12)
    np.testing.assert_allclose(siph_density(m, y), iph_density(ph, lam, y), rtol=1e-12)


def test_matrix_burr_against_mixture():
    # Gauss-Laguerre is enough at small y; for large y the mass of the integrand
    # sits near theta = 0 and adaptive quadrature is needed
    x, w = roots_genlaguerre(200, 0.5)
    w = w / gamma_fn(1.5)
    e = np.ones(3)
    for y in (0.5, 1.0):
        oracle = sum(wi * PI_62 @ expm(xi * y ** 2 * S_62) @ e for xi, wi in zip(x, w))
        assert siph_survival(BURR, y) == pytest.approx(oracle, abs=1e-6)
    for y in (2.0, 5.0):
        g = lambda t: PI_62 @ expm(t * y ** 2 * S_62) @ e * np.sqrt(t) * np.exp(-t) / gamma_fn(1.5)
        oracle = quad(g, 0, 1, epsabs=1e-13)[0] + quad(g, 1, np.inf, epsabs=1e-13)[0]
        assert siph_survival(BURR, y) == pytest.approx(oracle, abs=1e-9)


SURVIVAL_MODELS = [
    LOMAX,
    BURR,
    SiphModel(PhaseParams(PI_62, S_62), Intensity("lognormal", gamma=1.5), InverseGaussian(sigma2=0.7)),
    SiphModel(PhaseParams(PI_62, S_62), Intensity("loglogistic", gamma=2.0, eta=1.5), PositiveStable(alpha=0.6)),
    SiphModel(PhaseParams(PI1_64, T1_64), Intensity("gompertz", eta=0.2), PVF(eta=2.0, gamma=0.5)),
    SiphModel(PhaseParams(PI1_64, T1_64), Intensity("pareto", eta=1.0), CompoundPoissonGamma(rho=1.0, alpha=2.0, shifted=True)),
    SiphModel(PhaseParams(PI1_64, T1_64), Intensity("weibull", eta=0.7), Discrete(atoms=[0.5, 2.0], weights=[0.4, 0.6])),
    SiphModel(PhaseParams(PI_61, T_61), Intensity("weibull", eta=0.8), MittagLeffler(alpha=0.8)),
]


@pytest.mark.parametrize("m", SURVIVAL_MODELS, ids=lambda m: f"{m.scaling.name}-{m.intensity.family}")
def test_density_is_minus_survival_derivative(m):
    for y in (0.3, 1.0, 2.5, 6.0):
        h = 1e-4 * y
        fd = -(siph_survival(m, y + h) - siph_survival(m, y - h)) / (2 * h)
        assert siph_density(m, y) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("m", SURVIVAL_MODELS, ids=lambda m: f"{m.scaling.name}-{m.intensity.family}")
def test_transform_consistency(m):
    p = m.phase
    for z in (0.1, 1.0, 4.0):
        y = float(m.intensity.h(z))
        direct = p.pi @ m.scaling.laplace_matrix(-z * p.T) @ np.ones(p.dim)
        assert siph_survival(m, y) == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("m", [BURR, SiphModel(PhaseParams(PI_61, T_61), Intensity("weibull", eta=0.8),
                                               MittagLeffler(alpha=0.8))], ids=["burr", "mml"])
def test_density_normalization(m):
    f = lambda y: siph_density(m, y)
    total = sum(quad(f, a, b, limit=400)[0] for a, b in ((0, 1), (1, 100), (100, np.inf)))
    assert total == pytest.approx(1.0, abs=1e-5)


def test_mml_special_values():
    ph1 = PhaseParams([1.0], [[-1.0]])
    assert mml_density(ph1, 1.0, 1.0) == pytest.approx(np.exp(-1.0), abs=1e-7)
    assert mml_survival(ph1, 0.5, 1.0) == pytest.approx(np.e * erfc(1.0), abs=1e-6)
    ph = PhaseParams(PI_61, T_61)
    y = np.array([0.1, 0.7, 2.0, 5.0])
    np.testing.assert_allclose(mml_density(ph, 1.0, y), ph_density(ph, y), atol=1e-8)
    with pytest.raises(ValidationError):
        mml_survival(ph, 1.2, 1.0)


def test_sampler_matches_survival(rng):
    m = SiphModel(PhaseParams(PI1_64, T1_64), Intensity(), Gamma(alpha=1.5))
    draws = siph_sample(m, size=10 ** 5, rng=rng)
    for q in np.quantile(draws, np.linspace(0.1, 0.9, 9)):
        s = siph_survival(m, q)
        emp = np.mean(draws > q)
        assert abs(emp - s) <= 3 * np.sqrt(s * (1 - s) / draws.size) + 1e-3


def test_degenerate_constant_sample_is_phase_type(rng):
    m = SiphModel(PhaseParams([1.0], [[-2.0]]))
    draws = siph_sample(m, size=10 ** 5, rng=rng)
    assert draws.mean() == pytest.approx(0.5, rel=0.02)


def test_covariates():
    m = SiphModel(PhaseParams(PI_62, S_62), Intensity("weibull", eta=1.5), Gamma(alpha=2.0),
                  beta=[np.log(2.0)])
    base = m.replace(beta=[])
    for y in (0.5, 2.0):
        # h^{-1}(y) is multiplied by 2, i.e. y by 2^{1/eta}
        assert siph_survival(m, y, [1.0]) == pytest.approx(siph_survival(base, y * 2 ** (1 / 1.5)), rel=1e-12)
        assert siph_density(m, y, [1.0]) == pytest.approx(
            2 ** (1 / 1.5) * siph_density(base, y * 2 ** (1 / 1.5)), rel=1e-10)
    a = siph_sample(m, x=[1.0], size=20000, rng=np.random.default_rng(1))
    b = siph_sample(m, x=[0.0], size=20000, rng=np.random.default_rng(2))
    ratio = np.median(b) ** 1.5 / np.median(a) ** 1.5
    assert ratio == pytest.approx(2.0, rel=0.1)
    with pytest.raises(ValidationError):
        siph_survival(m, 1.0)


def test_loglik_censoring():
    obs = Observations([0.5, 1.0, 2.0], censored=[True, True, True])
    want = np.log(siph_survival(BURR, [0.5, 1.0, 2.0])).sum()
    assert loglik(BURR, obs) == pytest.approx(want, rel=1e-12)
    mixed = [Observation(1.0), Observation(2.0, censored=True)]
    want = np.log(siph_density(BURR, 1.0)) + np.log(siph_survival(BURR, 2.0))
    assert loglik(BURR, mixed) == pytest.approx(want, rel=1e-12)


def test_tail_slope_regular_variation():
    y = np.geomspace(1e3, 1e5, 9)
    s = siph_survival(BURR, y)
    slope = np.polyfit(np.log(y), np.log(s), 1)[0]
    assert slope == pytest.approx(-3.0, rel=0.05)


def test_tail_classes():
    tc = tail_class(Gamma(alpha=1.5), Intensity("weibull", eta=2.0))
    assert tc.kind == "regularly-varying" and tc.index == pytest.approx(3.0)
    assert str(tc) == "regularly-varying index=3.0"
    assert tail_class(Gamma(alpha=2.0), Intensity("gompertz", eta=0.1)).kind == "exponential-type"
    assert tail_class(PositiveStable(alpha=0.5), Intensity("lognormal", gamma=2.0)).kind == "regularly-varying"
    assert tail_class(PositiveStable(alpha=0.5), Intensity("weibull", eta=1.0)).shape == pytest.approx(0.5)
    assert tail_class(InverseGaussian(sigma2=1.0), Intensity("gompertz", eta=0.1)).kind == "gumbel-type"
    with pytest.raises(UnsupportedError):
        tail_class(Discrete(atoms=[1.0], weights=[1.0]), Intensity())
    with pytest.raises(UnsupportedError):
        tail_class(CompoundPoissonGamma(rho=1.0, alpha=1.0), Intensity())
