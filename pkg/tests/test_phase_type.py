import math

import numpy as np
import pytest
from scipy.integrate import quad

from aoii_ctmc.mrph import MrphSpec, mrph_absorption_probs, mrph_moments, mrph_pdf
from aoii_ctmc.phase_type import (
    AmcSpec,
    absorption_probs,
    embedded_dtmc,
    embedded_jump_chain,
    fundamental_matrix,
    ph_moments,
    ph_pdf_cdf,
)

from .conftest import random_subgenerator
from .oracles import mc_amc_absorption, neumann_visits


def exponential_spec(lam=1.0):
    return AmcSpec(a=np.array([[-lam]]), b=np.array([[lam]]), beta=np.array([1.0]))


def erlang2_spec(lam=1.0):
    a = np.array([[-lam, lam], [0.0, -lam]])
    b = np.array([[0.0], [lam]])
    return AmcSpec(a=a, b=b, beta=np.array([1.0, 0.0]))


def random_spec(rng, k, l):
    a = random_subgenerator(rng, k)
    leak = -a.sum(axis=1)
    split = rng.dirichlet(np.ones(l), size=k)
    b = split * leak[:, None]
    beta = rng.dirichlet(np.ones(k))
    return AmcSpec(a=a, b=b, beta=beta)


def test_spec_validation_errors():
    with pytest.raises(ValueError):
        AmcSpec(a=np.array([[1.0]]), b=np.array([[1.0]]), beta=np.array([1.0]))
    with pytest.raises(ValueError):
        AmcSpec(a=np.array([[-1.0]]), b=np.array([[0.5]]), beta=np.array([1.0]))
    with pytest.raises(ValueError):
        AmcSpec(a=np.array([[-1.0]]), b=np.array([[1.0]]), beta=np.array([0.5]))


def test_pdf_cdf_exponential():
    lam = 1.7
    spec = exponential_spec(lam)
    f0, cdf0 = ph_pdf_cdf(spec, 0.0)
    assert f0 == pytest.approx(lam, rel=1e-14)
    assert cdf0 == 0.0
    t = 0.9
    f, cdf = ph_pdf_cdf(spec, t)
    assert f == pytest.approx(lam * math.exp(-lam * t), rel=1e-12)
    assert cdf == pytest.approx(1 - math.exp(-lam * t), rel=1e-12)
    with pytest.raises(ValueError):
        ph_pdf_cdf(spec, -0.1)


def test_erlang_cdf_at_mean_of_phase():
    lam = 2.3
    _, cdf = ph_pdf_cdf(erlang2_spec(lam), 1.0 / lam)
    assert cdf == pytest.approx(1 - 2 * math.exp(-1), rel=1e-12)


def test_moments_exponential_and_erlang():
    lam = 0.8
    mean, second = ph_moments(exponential_spec(lam))
    assert mean == pytest.approx(1 / lam, rel=1e-13)
    assert second == pytest.approx(2 / lam**2, rel=1e-13)
    mean2, second2 = ph_moments(erlang2_spec(lam))
    assert mean2 == pytest.approx(2 / lam, rel=1e-13)
    assert second2 == pytest.approx(6 / lam**2, rel=1e-13)


def test_moments_match_quadrature():
    rng = np.random.default_rng(42)
    spec = random_spec(rng, 4, 2)
    mean, second = ph_moments(spec)
    m1 = quad(lambda t: t * ph_pdf_cdf(spec, t)[0], 0, np.inf, limit=200)[0]
    m2 = quad(lambda t: t * t * ph_pdf_cdf(spec, t)[0], 0, np.inf, limit=200)[0]
    assert mean == pytest.approx(m1, rel=1e-6)
    assert second == pytest.approx(m2, rel=1e-6)
    assert second >= mean**2


def test_pdf_integrates_to_one_and_matches_cdf():
    rng = np.random.default_rng(7)
    spec = random_spec(rng, 3, 2)
    total = quad(lambda t: ph_pdf_cdf(spec, t)[0], 0, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-8)
    t_probe = 1.3
    partial = quad(lambda t: ph_pdf_cdf(spec, t)[0], 0, t_probe, limit=200)[0]
    assert ph_pdf_cdf(spec, t_probe)[1] == pytest.approx(partial, abs=1e-8)


def test_absorption_single_sink_and_symmetric_race():
    rng = np.random.default_rng(3)
    spec = random_spec(rng, 3, 1)
    np.testing.assert_allclose(absorption_probs(spec), [1.0], atol=1e-12)
    race = AmcSpec(
        a=np.array([[-2.0]]), b=np.array([[1.0, 1.0]]), beta=np.array([1.0])
    )
    np.testing.assert_allclose(absorption_probs(race), [0.5, 0.5], rtol=1e-14)


def test_absorption_sums_to_one():
    rng = np.random.default_rng(11)
    for _ in range(20):
        spec = random_spec(rng, int(rng.integers(2, 6)), int(rng.integers(1, 5)))
        probs = absorption_probs(spec)
        assert probs.min() > -1e-12
        assert probs.sum() == pytest.approx(1.0, abs=1e-10)


def test_absorption_matches_monte_carlo():
    rng = np.random.default_rng(19)
    spec = random_spec(rng, 4, 3)
    probs = absorption_probs(spec)
    mc, se = mc_amc_absorption(spec.a, spec.b, spec.beta, n_paths=1_000_000, seed=99)
    assert np.all(np.abs(probs - mc) <= 3 * se + 1e-12)


def test_embedded_dtmc_column_scaling():
    a_diag = np.diag([-1.0, -2.0])
    np.testing.assert_array_equal(embedded_dtmc(a_diag), np.zeros((2, 2)))
    a = np.array([[-2.0, 1.0], [1.0, -2.0]])
    np.testing.assert_allclose(embedded_dtmc(a), [[0.0, 0.5], [0.5, 0.0]])
    asym = np.array([[-2.0, 1.0], [3.0, -4.0]])
    d = embedded_dtmc(asym)
    assert d[0, 1] == pytest.approx(-asym[0, 1] / asym[1, 1])
    assert d[1, 0] == pytest.approx(-asym[1, 0] / asym[0, 0])
    with pytest.raises(ValueError):
        embedded_dtmc(np.array([[0.0, 1.0], [1.0, -2.0]]))


def test_embedded_jump_chain_row_scaling():
    asym = np.array([[-2.0, 1.0], [3.0, -4.0]])
    d = embedded_jump_chain(asym)
    assert d[0, 1] == pytest.approx(0.5)
    assert d[1, 0] == pytest.approx(0.75)
    # coincide when the diagonal is constant
    sym = np.array([[-2.0, 1.0], [1.0, -2.0]])
    np.testing.assert_allclose(embedded_jump_chain(sym), embedded_dtmc(sym))


def test_fundamental_matrix_cases():
    np.testing.assert_allclose(fundamental_matrix(np.zeros((3, 3))), np.eye(3))
    d = np.zeros((2, 2))
    d[0, 1] = 0.3
    expected = np.eye(2)
    expected[0, 1] = 0.3
    np.testing.assert_allclose(fundamental_matrix(d), expected, rtol=1e-14)
    rng = np.random.default_rng(4)
    sub = rng.uniform(0.0, 0.18, size=(5, 5))  # row sums < 0.9
    np.testing.assert_allclose(
        fundamental_matrix(sub), neumann_visits(sub, 200), atol=1e-8
    )
    with pytest.raises(ValueError):
        fundamental_matrix(np.eye(2))


def test_single_regime_matches_multi_regime_module():
    rng = np.random.default_rng(23)
    spec = random_spec(rng, 4, 3)
    mspec = MrphSpec(
        gammas=np.array([0.0]),
        a_mats=spec.a[None],
        b_mats=spec.b[None],
        beta1=spec.beta,
    )
    mean, second = ph_moments(spec)
    m_mean, m_second = mrph_moments(mspec)
    assert m_mean == pytest.approx(mean, rel=1e-12)
    assert m_second == pytest.approx(second, rel=1e-12)
    np.testing.assert_allclose(
        mrph_absorption_probs(mspec), absorption_probs(spec), rtol=1e-12
    )
    for t in (0.0, 0.4, 2.2):
        assert mrph_pdf(mspec, t) == pytest.approx(ph_pdf_cdf(spec, t)[0], rel=1e-12)
