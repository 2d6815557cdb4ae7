import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from semantic_bmm.bmm import project
from semantic_bmm.distributions import (
    DirichletParams,
    MapParams,
    MapState,
    NormalGammaBlock,
    ParameterError,
    PosteriorMoments,
    dirichlet_moments,
    map_moments,
    normal_gamma_moments,
    predictive_density,
    sample_class,
    sample_property,
    sample_state,
    sample_states,
)

from conftest import random_map

pos = st.floats(0.05, 50.0)


# --- containers ---------------------------------------------------------

def test_dirichlet_validation():
    assert DirichletParams([1.0, 2.0]).a0 == 3.0
    for bad in ([], [1.0, 0.0], [1.0, -2.0], [1.0, math.inf], [[1.0]]):
        with pytest.raises(ParameterError):
            DirichletParams(bad)


def test_block_validation():
    NormalGammaBlock([0.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ParameterError):
        NormalGammaBlock([0.0, 1.0], [1.0], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ParameterError):
        NormalGammaBlock([0.0], [0.0], [1.0], [1.0])
    with pytest.raises(ParameterError):
        NormalGammaBlock([math.nan], [1.0], [1.0], [1.0])


def test_map_params_validation_and_immutability():
    p = MapParams.uniform(3, 2)
    assert (p.K, p.J) == (3, 2)
    with pytest.raises(ValueError):
        p.mu[0, 0] = 5.0
    with pytest.raises(ParameterError):
        MapParams(np.ones(2), np.zeros((3, 2)), np.ones((3, 2)), np.ones((3, 2)), np.ones((3, 2)))
    with pytest.raises(ParameterError):
        p.replace(beta=-np.ones((3, 2)))
    with pytest.raises(ParameterError):
        MapParams.from_blocks([1.0, 1.0], [NormalGammaBlock.scalar(0, 1, 1, 1),
                                           NormalGammaBlock([0, 0], [1, 1], [1, 1], [1, 1])])


def test_map_state_validation():
    MapState([0.25, 0.75], [[0.0], [1.0]], [[1.0], [2.0]])
    with pytest.raises(ParameterError):
        MapState([0.5, 0.6], [[0.0], [1.0]], [[1.0], [2.0]])
    with pytest.raises(ParameterError):
        MapState([0.5, 0.5], [[0.0], [1.0]], [[1.0], [0.0]])


def test_blocks_roundtrip_and_permute(rng):
    p = random_map(rng, 3, 2)
    q = MapParams.from_blocks(p.dirichlet, p.blocks)
    assert q.allclose(p, rtol=0)
    r = p.permute([2, 0, 1])
    np.testing.assert_array_equal(r.mu[0], p.mu[2])
    np.testing.assert_array_equal(r.a, p.a[[2, 0, 1]])
    assert len(p.flat()) == len(p.flat_names()) == 3 + 4 * 6


def test_json_schema_and_roundtrip(rng):
    p = random_map(rng, 2, 3)
    d = json.loads(p.to_json())
    assert set(d) == {"a", "blocks"}
    assert set(d["blocks"][0]) == {"mu", "lambda", "alpha", "beta"}
    assert len(d["blocks"]) == 2 and len(d["blocks"][1]["mu"]) == 3
    q = MapParams.from_json(p.to_json())
    assert q.allclose(p, rtol=0)


# --- moments ------------------------------------------------------------

@pytest.mark.parametrize(
    "a, Ew, Ew2",
    [
        ((1, 1), (0.5, 0.5), (1 / 3, 1 / 3)),
        ((2, 2), (0.5, 0.5), (0.3, 0.3)),
        ((1, 2, 3), (1 / 6, 2 / 6, 3 / 6), (2 / 42, 6 / 42, 12 / 42)),
    ],
)
def test_dirichlet_moments(a, Ew, Ew2):
    got = dirichlet_moments(DirichletParams(a))
    np.testing.assert_allclose(got[0], Ew, rtol=1e-14)
    np.testing.assert_allclose(got[1], Ew2, rtol=1e-14)


@pytest.mark.parametrize(
    "params, expected",
    [
        ((0, 1, 2, 2), (0, 1, 1.5, 0, 1)),
        ((1, 2, 3, 4), (1, 0.75, 0.75, 0.75, 1.25)),
    ],
)
def test_normal_gamma_moments(params, expected):
    got = normal_gamma_moments(NormalGammaBlock.scalar(*params))
    np.testing.assert_allclose([float(v[0]) for v in got], expected, rtol=1e-14, atol=1e-15)


def test_normal_gamma_moments_large_lambda_limit():
    b = NormalGammaBlock.scalar(2.0, 1e15, 3.0, 4.0)
    Em2tau = normal_gamma_moments(b)[4][0]
    assert Em2tau == pytest.approx(4.0 * 3.0 / 4.0, rel=1e-12)


def test_moments_match_monte_carlo(rng):
    p = random_map(rng, 3, 2)
    w, m, tau = sample_states(p, 400_000, rng)
    samples = [w, w * w, m, tau, tau * tau, m * tau, m * m * tau]
    for (name, exact), s in zip(map_moments(p).items(), samples):
        mean, se = s.mean(axis=0), s.std(axis=0) / math.sqrt(len(s))
        assert np.all(np.abs(mean - exact) < 5 * se), name


@settings(max_examples=200, deadline=None)
@given(mu=st.floats(-100, 100), lam=pos, alpha=pos, beta=pos)
def test_block_moment_roundtrip(mu, lam, alpha, beta):
    # 1/lam is recovered as E[m^2 tau] - E[m]^2 E[tau]; the subtraction loses
    # about log10(mu^2 lam alpha / beta) digits, so keep that ratio moderate
    assume(mu * mu * lam * alpha / beta < 1e5)
    p = MapParams([1.0, 2.0], [[mu], [0.0]], [[lam], [1.0]], [[alpha], [1.0]], [[beta], [1.0]])
    for projection in ("mean", "weighted"):
        q = project(map_moments(p), projection)
        np.testing.assert_allclose(q.flat(), p.flat(), rtol=1e-10, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(a=st.lists(pos, min_size=2, max_size=6))
def test_dirichlet_moment_roundtrip(a):
    K = len(a)
    p = MapParams(a, np.zeros((K, 1)), np.ones((K, 1)), np.ones((K, 1)), np.ones((K, 1)))
    np.testing.assert_allclose(project(map_moments(p)).a, a, rtol=1e-10)


def test_moment_check_flags_violations():
    good = map_moments(MapParams.uniform(2, 1))
    good.check()
    bad = PosteriorMoments(np.array([0.5, 0.6]), good.Ew2, good.Em, good.Etau, good.Etau2,
                           good.Emtau, good.Em2tau)
    with pytest.raises(ParameterError):
        bad.check()


# --- sampling -----------------------------------------------------------

def test_concentrated_dirichlet_sample(rng):
    p = MapParams.uniform(3, 1).replace(a=np.array([1e9, 1e-9, 1e-9]))
    for _ in range(20):
        th = sample_state(p, rng)
        np.testing.assert_allclose(th.w, [1, 0, 0], atol=1e-6)
        assert abs(th.w.sum() - 1) <= 1e-12


def test_sample_state_moments(rng):
    p = MapParams.uniform(2, 2, mu=0.3, lam=2.0, alpha=4.0, beta=2.0)
    w, m, tau = sample_states(p, 1_000_000, rng)
    se_m = m.std(axis=0) / 1000
    se_t = tau.std(axis=0) / 1000
    assert np.all(np.abs(m.mean(axis=0) - 0.3) < 4 * se_m)
    assert np.all(np.abs(tau.mean(axis=0) - 2.0) < 4 * se_t)


def test_sample_property_single_class_high_precision(rng):
    th = MapState([1.0], [[0.4, -1.2]], [[1e16, 1e16]])
    np.testing.assert_allclose(sample_property(th, rng), [0.4, -1.2], atol=1e-6)


def test_sample_property_independent_dims_and_class_freqs(rng):
    th = MapState([0.3, 0.7], [[0.0, 0.0], [0.0, 0.0]], [[1.0, 4.0], [1.0, 4.0]])
    ys = np.array([sample_property(th, rng) for _ in range(40_000)])
    cov = np.cov(ys.T)
    assert abs(cov[0, 1]) < 4 * math.sqrt(cov[0, 0] * cov[1, 1] / len(ys))
    labels = np.array([sample_class(th, rng) for _ in range(40_000)])
    freq = labels.mean()
    assert abs(freq - 0.7) < 4 * math.sqrt(0.21 / 40_000)


def test_sample_class_edge_cases(rng):
    assert all(sample_class(MapState([1.0, 0.0, 0.0], np.zeros((3, 1)), np.ones((3, 1))), rng) == 0
               for _ in range(100))
    assert sample_class(MapState([1.0], [[0.0]], [[1.0]]), rng) == 0
    th = MapState([0.5, 0.5], np.zeros((2, 1)), np.ones((2, 1)))
    freq = np.mean([sample_class(th, rng) == 0 for _ in range(100_000)])
    assert 0.49 <= freq <= 0.51


# --- predictive density -------------------------------------------------

def test_predictive_density_analytic_value():
    p = MapParams([1.0], [[0.0]], [[1.0]], [[1.0]], [[1.0]])
    assert predictive_density(p, [0.0]) == pytest.approx(0.25, rel=1e-14)


def test_predictive_density_integrates_to_one(rng):
    p = random_map(rng, 3, 1)
    total, _ = integrate.quad(lambda y: float(predictive_density(p, [y])), -np.inf, np.inf,
                              limit=400, epsabs=1e-10)
    assert total == pytest.approx(1.0, abs=1e-4)


def test_predictive_density_mirror_symmetry():
    p = MapParams([2.0, 2.0], [[-1.0], [1.0]], [[1.5], [1.5]], [[3.0], [3.0]], [[2.0], [2.0]])
    ys = np.linspace(-4, 4, 17)[:, None]
    np.testing.assert_allclose(predictive_density(p, ys), predictive_density(p, -ys), rtol=1e-13)


def test_predictive_density_positive_finite(rng):
    p = random_map(rng, 4, 3)
    ys = rng.normal(0, 30, (200, 3))
    d = predictive_density(p, ys)
    assert d.shape == (200,)
    assert np.all(np.isfinite(d)) and np.all(d >= 0)
