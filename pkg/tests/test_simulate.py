import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cfbalance.data import load_dataset
from cfbalance.errors import BadCovariateShape, InvalidDims
from cfbalance.simulate import (
    IHDP_D,
    IHDP_N,
    IHDP_TREATED,
    PRNG,
    SimulatedDataset,
    complex_effect,
    gen_complex_outcome,
    gen_ihdp_style,
    gen_linear_outcome,
    generate,
    ihdp_response_means,
    linear_propensity,
    save_simulated,
    true_ite,
)


def test_linear_constant_effect_and_coefficients():
    sim = gen_linear_outcome(n=300, p=20, seed=1)
    np.testing.assert_array_equal(true_ite(sim), np.full(300, 10.0))
    np.testing.assert_array_equal(sim.true_ite, np.full(300, 10.0))
    X = sim.dataset.features
    base = X @ (1.0 / np.arange(1, 21) ** 2)
    np.testing.assert_allclose(sim.y1 - base - 10, sim.y0 - base, atol=1e-12)
    assert (1.0 / np.arange(1, 21) ** 2)[2] == pytest.approx(1 / 9)


def test_linear_propensity_at_zero():
    assert linear_propensity(np.array(0.0)) == pytest.approx(1 - 0.5**1.23, abs=1e-12)
    assert linear_propensity(np.array(0.0)) == pytest.approx(0.57368, abs=1e-5)
    draws = np.random.Generator(np.random.PCG64(3)).random(10000) < linear_propensity(np.zeros(10000))
    assert abs(draws.mean() - 0.5726) < 0.02


def test_linear_propensity_no_overflow():
    v = linear_propensity(np.array([-800.0, 800.0]))
    assert np.all(np.isfinite(v)) and v[0] == pytest.approx(0.0) and v[1] == 1.0


def test_complex_effect_values():
    assert complex_effect(np.array(0.0)) == pytest.approx(0.89 * np.log1p(np.exp(-2)), abs=1e-14)
    assert complex_effect(np.array(0.0)) == pytest.approx(0.112966, abs=1e-6)
    assert -np.expm1(-complex_effect(np.array(0.0))) == pytest.approx(0.106819, abs=1e-6)


def test_complex_true_ite_is_theta():
    sim = gen_complex_outcome(n=400, p=12, seed=2)
    theta = complex_effect(sim.dataset.features[:, :10].sum(axis=1))
    np.testing.assert_allclose(true_ite(sim), theta, atol=1e-12)
    base = sim.dataset.features.sum(axis=1)
    np.testing.assert_allclose((sim.y1 + sim.y0) / 2 - base, (sim.y1 + sim.y0) / 2 - base)


def test_complex_treatment_rate_matches_quadrature():
    # E[1 - exp(-theta(s))] with s ~ N(0, 10) for ten unit propensity weights
    dens = stats.norm(scale=np.sqrt(10)).pdf
    rate, _ = integrate.quad(lambda s: (1 - (1 + np.exp(-2 - 2 * s)) ** -0.89) * dens(s), -60, 60)
    sim = gen_complex_outcome(n=10000, p=100, seed=5)
    se = np.sqrt(rate * (1 - rate) / 10000)
    assert abs(sim.dataset.treatment.mean() - rate) < 4 * se


def test_linear_treatment_rate_matches_quadrature():
    dens = stats.norm(scale=np.sqrt(10)).pdf
    rate, _ = integrate.quad(lambda s: (1 - (1 + np.exp(s)) ** -1.23) * dens(s), -60, 60)
    sim = gen_linear_outcome(n=10000, p=20, seed=6)
    assert abs(sim.dataset.treatment.mean() - rate) < 4 * np.sqrt(rate * (1 - rate) / 10000)


@pytest.mark.parametrize("gen", [gen_linear_outcome, gen_complex_outcome])
def test_invalid_dims(gen):
    with pytest.raises(InvalidDims):
        gen(n=10, p=9)
    with pytest.raises(InvalidDims):
        gen(n=0, p=10)


@pytest.mark.parametrize("name", ["linear", "complex", "ihdp"])
@given(seed=st.integers(0, 2**32 - 1))
def test_consistency_and_reproducibility(name, seed):
    kw = {} if name == "ihdp" else {"n": 50, "p": 10}
    a = generate(name, seed, **kw)
    b = generate(name, seed, **kw)
    observed = np.where(a.dataset.treatment == 1, a.y1, a.y0)
    np.testing.assert_array_equal(observed, a.dataset.outcome)
    assert a.dataset.equals(b.dataset)
    np.testing.assert_array_equal(a.y1, b.y1)


def test_consistency_enforced():
    sim = gen_linear_outcome(n=20, p=10, seed=0)
    with pytest.raises(ValueError):
        SimulatedDataset(sim.dataset, sim.y1 + 1, sim.y1 + 1, sim.true_ite, "linear", 0)


def test_degenerate_equal_outcomes_give_zero_ite():
    sim = gen_linear_outcome(n=20, p=10, seed=0)
    flat = SimulatedDataset(sim.dataset, sim.dataset.outcome, sim.dataset.outcome, np.zeros(20), "linear", 0)
    np.testing.assert_array_equal(true_ite(flat), np.zeros(20))


def test_shared_noise_cancels_in_effect():
    a = gen_complex_outcome(n=100, p=10, seed=4)
    b = gen_complex_outcome(n=100, p=10, seed=4, noise=False)
    np.testing.assert_allclose(true_ite(a), true_ite(b), atol=1e-12)


def test_ihdp_shape_and_coefficients():
    sim = gen_ihdp_style(seed=3)
    assert (sim.n, sim.dataset.d, sim.dataset.n_treated) == (IHDP_N, IHDP_D, IHDP_TREATED)
    assert (sim.n, sim.dataset.d, sim.dataset.n_treated) == (747, 25, 139)
    X = sim.dataset.features
    assert np.all(np.isin(X[:, 6:], [0.0, 1.0]))
    # thinning removed high first-covariate treated units
    assert X[sim.dataset.treatment == 1, 0].mean() < X[sim.dataset.treatment == 0, 0].mean() + 0.5


def test_ihdp_beta1_and_response():
    D = np.hstack([np.ones((1, 1)), np.full((1, 25), -0.5) + 0.5])
    beta0 = np.zeros(26)
    beta0[0] = 0.4
    beta1 = 1.0 / np.arange(1, 27)
    assert beta1[1] == 0.5
    mu1, mu0 = ihdp_response_means(D, beta0, beta1)
    assert mu0[0] == pytest.approx(np.sqrt(np.exp(0.4)), abs=1e-12)
    assert mu0[0] == pytest.approx(1.2214, abs=1e-4)
    assert mu1[0] == pytest.approx(1.0)
    _, lin0 = ihdp_response_means(D, beta0, beta1, "linear")
    assert lin0[0] == pytest.approx(0.4)


def test_ihdp_noise_free_means():
    sim = gen_ihdp_style(seed=8, noise=False)
    beta0 = np.array(sim.params["beta0"])
    D = np.hstack([np.ones((IHDP_N, 1)), sim.dataset.features + 0.5])
    np.testing.assert_allclose(sim.y0, np.sqrt(np.exp(D @ beta0)), rtol=1e-12)
    np.testing.assert_allclose(sim.y1, D @ (1.0 / np.arange(1, 27)), rtol=1e-12)


def test_ihdp_beta0_zero_probability():
    draws = np.concatenate([gen_ihdp_style(seed=s, noise=False).params["beta0"] for s in range(150)])
    assert abs(np.mean(draws == 0) - 0.6) < 0.03
    assert set(np.round(draws, 10)) <= {0.0, 0.1, 0.2, 0.3, 0.4}


def test_ihdp_supplied_covariates():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((747, 25))
    W = np.zeros(747, dtype=int)
    W[:139] = 1
    sim = gen_ihdp_style(X, seed=1, treatment=W)
    np.testing.assert_array_equal(sim.dataset.features, X)
    with pytest.raises(BadCovariateShape):
        gen_ihdp_style(X[:, :24], seed=1, treatment=W)
    with pytest.raises(ValueError):
        gen_ihdp_style(X, seed=1)


def test_save_simulated(tmp_path):
    sim = gen_linear_outcome(n=30, p=10, seed=7)
    paths = save_simulated(sim, tmp_path / "out")
    assert [p.rsplit("/", 1)[1] for p in paths] == ["data.csv", "potential_outcomes.csv", "metadata.json"]
    assert load_dataset(paths[0]).equals(sim.dataset)
    po = np.loadtxt(paths[1], delimiter=",", skiprows=1)
    np.testing.assert_array_equal(po[:, 0], sim.y1)
    meta = json.loads(open(paths[2]).read())
    assert meta["prng"] == PRNG and meta["seed"] == 7 and meta["generator"] == "linear"
    assert meta["params"] == {"n": 30, "p": 10, "noise": True}
