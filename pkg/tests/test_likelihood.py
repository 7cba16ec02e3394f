import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contactnet.dyads import ThetaBinary, ThetaMultinomial, ThetaOrdinal
from contactnet.errors import InconsistentObservation, ZeroLikelihood
from contactnet.estimator import fit
from contactnet.likelihood import (
    DyadObservation,
    FitData,
    category_probs,
    dyad_outcome_prob_binary,
    dyad_outcome_prob_multinomial,
    dyad_outcome_prob_ordinal,
    get_model,
    joint_loglik,
    outcome_space,
    standard_loglik,
)
from contactnet.synthetic import simulate_fit_data

COLS = ("same_group", "distance")


def _logistic(z):
    return 1.0 / (1.0 + math.exp(-z))


def brute_ordinal_loglik(alpha, beta, p, X, cij, cji, d):
    """Term-by-term likelihood written straight from the model definition."""
    total = 0.0
    for x, a, b, k in zip(X, cij, cji, d):
        eta = sum(bi * xi for bi, xi in zip(beta, x))
        cum = [_logistic(ak - eta) for ak in alpha] + [1.0]
        P = [cum[0]] + [cum[m] - cum[m - 1] for m in range(1, 5)]
        if a == 0 and b == 0:
            prob = P[0] + sum(P[m] * (1 - p[m - 1]) ** 2 for m in range(1, 5))
        elif a == 1 and b == 1:
            prob = P[k] * p[k - 1] ** 2
        else:
            prob = P[k] * p[k - 1] * (1 - p[k - 1])
        total += math.log(prob)
    return total


def test_outcome_space_has_thirteen_patterns():
    space = outcome_space()
    assert len(space) == 13 and len(set(space)) == 13


def test_inconsistent_observation():
    with pytest.raises(InconsistentObservation):
        DyadObservation(1, 0, 0)
    with pytest.raises(InconsistentObservation):
        DyadObservation(0, 0, 2)


def test_binary_hand_arithmetic():
    # P(Y=1) = 0.1 via intercept logit(0.1)
    th = ThetaBinary([math.log(0.1 / 0.9)], [1, 0, 0, 0], [0.5, 1, 1, 1])
    assert dyad_outcome_prob_binary(th, np.zeros(0), (0, 0, 0)) == pytest.approx(0.925, abs=1e-15)
    perfect = ThetaBinary([0.3], [0.25] * 4, np.ones(4))
    assert dyad_outcome_prob_binary(perfect, np.zeros(0), (1, 0, 2)) == 0.0


def test_ordinal_hand_arithmetic():
    # P = (0.8, 0.2, 0, 0, 0) is approached with steep upper cutpoints
    alpha = [math.log(4), 40, 41, 42]
    th = ThetaOrdinal(alpha, [0.0], [0.5, 1, 1, 1])
    assert dyad_outcome_prob_ordinal(th, [0.0], (1, 1, 1)) == pytest.approx(0.05, abs=1e-12)
    th1 = ThetaOrdinal([0, 1, 2, 3], [0.4], np.ones(4))
    assert dyad_outcome_prob_ordinal(th1, [1.0], (0, 0, 0)) == pytest.approx(_logistic(-0.4), abs=1e-15)


def _random_thetas(rng):
    k = 2
    p = rng.uniform(0, 1, 4)
    yield dyad_outcome_prob_binary, ThetaBinary(rng.normal(0, 2, k + 1), rng.dirichlet(np.ones(4)), p)
    yield dyad_outcome_prob_ordinal, ThetaOrdinal(np.sort(rng.normal(0, 2, 4)) + np.arange(4) * 1e-3,
                                                  rng.normal(0, 1, k), p)
    yield dyad_outcome_prob_multinomial, ThetaMultinomial(rng.normal(0, 2, 4), rng.normal(0, 1, (4, k)), p)


def test_outcome_probabilities_sum_to_one(rng):
    for _ in range(50):
        x = rng.normal(0, 2, 2)
        for func, theta in _random_thetas(rng):
            total = math.fsum(func(theta, x, obs) for obs in outcome_space())
            assert total == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope="module")
def tiny():
    """Four nodes, six dyads covering every report pattern."""
    X = np.array([[1, 0.5], [0, 2.0], [1, 1.0], [0, 0.0], [1, 3.0], [0, 1.5]])
    cij = np.array([1, 1, 0, 0, 1, 0], dtype=np.int8)
    cji = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
    d = np.array([2, 1, 4, 0, 3, 0], dtype=np.int8)
    return FitData(X, cij, cji, d, COLS)


def test_brute_force_oracle(tiny):
    th = ThetaOrdinal([-0.3, 0.6, 1.1, 2.0], [0.8, -0.4], [0.6, 0.9, 0.85, 0.7])
    oracle = brute_ordinal_loglik(th.alpha, th.beta, th.p, tiny.X, tiny.c_ij, tiny.c_ji, tiny.d)
    assert joint_loglik("ordinal", th, tiny) == pytest.approx(oracle, abs=1e-12)


def test_single_dyad_and_concatenation(tiny):
    th = ThetaOrdinal([-0.3, 0.6, 1.1, 2.0], [0.8, -0.4], [0.6, 0.9, 0.85, 0.7])
    one = tiny.take([0])
    obs = DyadObservation(1, 1, 2)
    assert joint_loglik("ordinal", th, one) == pytest.approx(
        math.log(dyad_outcome_prob_ordinal(th, tiny.X[0], obs)), abs=1e-14)
    a, b = tiny.take([0, 1, 2]), tiny.take([3, 4, 5])
    assert joint_loglik("ordinal", th, a.concat(b)) == pytest.approx(
        joint_loglik("ordinal", th, a) + joint_loglik("ordinal", th, b), abs=1e-12)


def test_permutation_invariance_is_exact(tiny, rng):
    th = ThetaMultinomial(rng.normal(size=4), rng.normal(size=(4, 2)), [0.6, 0.9, 0.85, 0.7])
    base = joint_loglik("multinomial", th, tiny)
    for _ in range(5):
        assert joint_loglik("multinomial", th, tiny.take(rng.permutation(6))) == base


def test_perfect_reporting_reduces_to_standard(tiny):
    mutual = tiny.union()
    th = ThetaOrdinal([-0.3, 0.6, 1.1, 2.0], [0.8, -0.4], np.ones(4))
    assert joint_loglik("ordinal", th, mutual) == pytest.approx(standard_loglik("ordinal", th, mutual), abs=1e-12)
    with pytest.raises(ZeroLikelihood):
        joint_loglik("ordinal", th, tiny)  # one-sided reports impossible when p = 1


def test_zero_likelihood_for_impossible_category(tiny):
    th = ThetaBinary([0.1, 0.2, 0.3], [0.5, 0.5, 0.0, 0.0], [0.6, 0.9, 0.85, 0.7])
    with pytest.raises(ZeroLikelihood):
        joint_loglik("binary", th, tiny)


def test_intercept_only_standard_mle():
    d = np.array([1] * 25 + [0] * 75, dtype=np.int8)
    data = FitData(np.zeros((100, 0)), d, d.copy(), d.copy(), ())
    fitted = fit("binary_standard", data)
    assert fitted.result.x[0] == pytest.approx(math.log(0.25 / 0.75), abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(0.05, 0.95))
def test_latent_loglik_matches_category_probs(a, b, p1):
    th = ThetaBinary([a, b], [0.4, 0.3, 0.2, 0.1], [p1, 0.8, 0.9, 0.95])
    x = np.array([[0.7]])
    P = category_probs(th, x)[0]
    obs = DyadObservation(0, 0, 0)
    direct = P[0] + sum(P[k] * (1 - th.p[k - 1]) ** 2 for k in range(1, 5))
    assert dyad_outcome_prob_binary(th, x[0], obs) == pytest.approx(direct, rel=1e-12)


def test_standard_errors_smaller_than_latent(design50):
    """Ignoring reporting error understates uncertainty: over replicates the
    standard fit's SEs are at most the latent fit's for most coefficients."""
    X = design50.select(("same_group", "shared_projects")).X
    th = ThetaOrdinal([2.0, 3.2, 4.0, 5.5], [3.4, 1.0], [0.56, 0.9, 0.9, 0.95])
    wins = total = 0
    for rep in range(50):
        data, _ = simulate_fit_data(th, X, seed=500 + rep, columns=("same_group", "shared_projects"))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lat = fit("ordinal_latent", data)
            std = fit("ordinal_standard", data)
        for name in ("same_group", "shared_projects"):
            s_lat = next(r.se for r in lat.rows if r.name == name)
            s_std = next(r.se for r in std.rows if r.name == name)
            wins += s_std <= s_lat
            total += 1
    assert wins / total >= 0.9


def test_model_parameter_counts():
    counts = {kind: get_model(kind).n_params() for kind in
              ("ordinal_latent", "binary_latent", "multinomial_latent", "ordinal_standard", "binary_standard")}
    assert counts == {"ordinal_latent": 17, "binary_latent": 17, "multinomial_latent": 44,
                      "ordinal_standard": 13, "binary_standard": 10}
