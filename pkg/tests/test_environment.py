import json

import numpy as np
import pytest

from rwre_lil import _rng
from rwre_lil.environment import (
    DRIFTED_KERNEL,
    EllipticPerturbation,
    EnvironmentModel,
    EnvironmentView,
    PointMass,
    TransitionKernel,
    TwoKernelMixture,
    environment_from_json,
    kernel_at,
    mean_drift,
    model_from_json,
    preset,
    step_covariance,
    validate_kernel,
)
from rwre_lil.errors import ConfigError, EllipticityViolation, NotStochastic


def test_validate_uniform_kernel():
    validate_kernel((0.25, 0.25, 0.25, 0.25), 0.25)


def test_validate_ellipticity_violation():
    with pytest.raises(EllipticityViolation):
        validate_kernel((0.7, 0.1, 0.1, 0.1), 0.2)


def test_validate_not_stochastic():
    with pytest.raises(NotStochastic):
        validate_kernel((0.4, 0.2, 0.2, 0.1), 0.05)


def test_kernel_is_read_only():
    k = TransitionKernel((0.25, 0.25, 0.25, 0.25))
    with pytest.raises(ValueError):
        k.probs[0] = 1.0


@pytest.mark.parametrize(
    "probs, want",
    [(DRIFTED_KERNEL, [0.3, 0.0]), ((0.25,) * 4, [0.0, 0.0]), ((0.8, 0.2), [0.6])],
)
def test_mean_drift(probs, want):
    np.testing.assert_allclose(mean_drift(probs), want, atol=1e-15)


def test_step_covariance_of_drifted_kernel():
    np.testing.assert_allclose(np.diag(step_covariance(DRIFTED_KERNEL)), [0.41, 0.5], atol=1e-15)


def test_point_mass_returns_base_everywhere():
    env = EnvironmentView(preset("drifted"), 5)
    for site in [(0, 0), (3, -7), (-100, 2)]:
        assert kernel_at(env, site) == TransitionKernel(DRIFTED_KERNEL)


def _sites(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(-10**6, 10**6, size=(n, 2))


@pytest.mark.parametrize("name", ["perturbed", "mixture"])
def test_random_kernels_are_valid(name):
    model = preset(name)
    env = EnvironmentView(model, 11)
    for site in _sites(10**4):
        p = kernel_at(env, site).probs
        assert abs(p.sum() - 1.0) <= 1e-12
        assert p.min() >= model.kappa


def test_same_site_same_kernel():
    env = EnvironmentView(preset("perturbed"), 3)
    a = kernel_at(env, (4, -2)).probs
    b = kernel_at(env, (4, -2)).probs
    assert a.tobytes() == b.tobytes()
    other = kernel_at(EnvironmentView(preset("perturbed"), 4), (4, -2)).probs
    assert a.tobytes() != other.tobytes()


def test_neighbouring_sites_uncorrelated():
    env = EnvironmentView(preset("perturbed"), 21)
    xs = np.arange(10**4)
    first = np.array([kernel_at(env, (x, 0)).probs[0] for x in xs])
    rho = np.corrcoef(first[:-1], first[1:])[0, 1]
    assert abs(rho) <= 0.03


def test_perturbation_mean_is_base_kernel():
    # E[w] is flat, so the site average is kappa + free * ((1-s) b + s / 2d)
    model = preset("perturbed")
    env = EnvironmentView(model, 8)
    p = np.array([kernel_at(env, s).probs for s in _sites(20000, 1)])
    kappa, s = model.kappa, model.variant.spread
    free = 1 - 4 * kappa
    b = (np.array(DRIFTED_KERNEL) - kappa) / free
    want = kappa + free * ((1 - s) * b + s / 4)
    se = p.std(axis=0) / np.sqrt(len(p))
    assert np.all(np.abs(p.mean(axis=0) - want) <= 4 * se)


def test_mixture_frequency():
    model = preset("mixture")
    env = EnvironmentView(model, 2)
    k1 = np.array(model.variant.k1.probs)
    hits = np.mean([np.array_equal(kernel_at(env, s).probs, k1) for s in _sites(10**4, 2)])
    assert abs(hits - model.variant.weight) <= 4 * np.sqrt(0.25 / 10**4)


def test_model_rejects_bad_kappa():
    with pytest.raises(ConfigError):
        EnvironmentModel(2, 0.3, PointMass((0.25,) * 4))


def test_model_rejects_kernel_below_kappa():
    with pytest.raises(EllipticityViolation):
        EnvironmentModel(2, 0.2, PointMass(DRIFTED_KERNEL))


def test_model_json_round_trip():
    for name in ["drifted", "perturbed", "mixture", "line"]:
        m = preset(name)
        back = model_from_json(json.loads(json.dumps(m.to_json())))
        assert back.to_json() == m.to_json()
    env = environment_from_json({**preset("perturbed").to_json(), "env_seed": 9})
    assert env.env_seed == 9


def test_unknown_preset():
    with pytest.raises(ConfigError):
        preset("nope")


def test_env_key_differs_from_walk_key():
    assert EnvironmentView(preset("drifted"), 1).key != _rng.stream_key_py(1, _rng.TAG_WALK)


def test_two_kernel_mixture_dimension_check():
    with pytest.raises(ConfigError):
        EnvironmentModel(2, 0.05, TwoKernelMixture(0.5, (0.25,) * 4, (0.5, 0.5)))


def test_perturbation_spread_bounds():
    with pytest.raises(ConfigError):
        EnvironmentModel(2, 0.05, EllipticPerturbation(DRIFTED_KERNEL, 1.5))
