import json
import math
import warnings

import numpy as np
import pytest
from scipy.optimize import rosen
from scipy.special import logit

from contactnet.dyads import ThetaOrdinal
from contactnet.errors import (
    DegenerateInterval,
    IndefiniteHessianAtOptimum,
    MaxIterations,
    NonFiniteEvaluation,
    SeparationDetected,
)
from contactnet.estimator import (
    FittedModel,
    MLEResult,
    closed_form_reporting,
    confidence_intervals,
    fit,
    format_table,
    maximize,
    numeric_derivatives,
    proportionality_test,
    wald_interval,
)
from contactnet.likelihood import FitData, get_model
from contactnet.synthetic import simulate_fit_data


def test_quadratic_derivatives(rng):
    theta = rng.normal(size=4)
    g, H = numeric_derivatives(lambda t: float(t @ t), theta)
    assert np.allclose(g, 2 * theta, atol=1e-6)
    assert np.allclose(H, 2 * np.eye(4), atol=1e-6)
    assert np.array_equal(H, H.T)


def test_constant_function_derivatives():
    g, H = numeric_derivatives(lambda t: 3.0, np.ones(3))
    assert not g.any() and not H.any()


def test_gradient_step_halving_self_oracle(design50):
    X = design50.select(("same_group", "distance")).X
    th = ThetaOrdinal([2.0, 3.0, 4.0, 5.5], [3.0, -0.2], [0.6, 0.9, 0.9, 0.9])
    data, _ = simulate_fit_data(th, X, seed=2, columns=("same_group", "distance"))
    model = get_model("ordinal_latent", data.columns)
    f = lambda v: model.loglik(v, data)  # noqa: E731
    v = model.pack(th) + 0.05
    g, _ = numeric_derivatives(f, v)
    fine = np.empty_like(g)
    for i in range(len(v)):
        h = 1e-6 * max(1.0, abs(v[i]))
        e = np.zeros_like(v)
        e[i] = h
        fine[i] = (f(v + e) - f(v - e)) / (2 * h)
    assert np.allclose(g, fine, rtol=1e-4, atol=1e-4)


def test_nonfinite_evaluation():
    with pytest.raises(NonFiniteEvaluation):
        with np.errstate(all="ignore"):
            numeric_derivatives(lambda t: np.log(t[0]), np.array([0.0]))


def test_parabola_optimum_and_se():
    res = maximize(lambda t: -(t[0] - 3.0) ** 2, [0.0])
    assert res.converged and res.x[0] == pytest.approx(3.0, abs=1e-8)
    assert res.se[0] == pytest.approx(1 / math.sqrt(2), abs=1e-6)
    assert res.aic == pytest.approx(2.0 - 2 * res.loglik)


def test_rosenbrock():
    res = maximize(lambda t: -rosen(t), [-1.2, 1.0])
    assert res.converged
    assert np.max(np.abs(res.x - 1.0)) < 1e-6
    assert res.grad_norm < 1e-6


def test_objective_never_decreases():
    seen = []

    def f(t):
        v = -rosen(t)
        seen.append(v)
        return v

    res = maximize(f, [-1.2, 1.0])
    assert res.loglik >= seen[0]


def test_max_iterations_warns():
    with pytest.warns(MaxIterations):
        res = maximize(lambda t: -rosen(t), [-1.2, 1.0], max_iter=3)
    assert not res.converged


def test_indefinite_hessian_warns():
    # saddle: gradient vanishes at the origin but curvature is mixed
    with pytest.warns(IndefiniteHessianAtOptimum):
        res = maximize(lambda t: -(t[0] ** 2) + t[1] ** 2, [0.0, 0.0])
    assert not res.hessian_ok


def test_covariance_inverts_information(design50):
    X = design50.select(("same_group",)).X
    th = ThetaOrdinal([2.0, 3.0, 4.0, 5.5], [3.0], [0.6, 0.9, 0.9, 0.9])
    data, _ = simulate_fit_data(th, X, seed=3, columns=("same_group",))
    fitted = fit("ordinal_latent", data)
    r = fitted.result
    assert np.max(np.abs(r.covariance @ (-r.hessian) - np.eye(len(r.x)))) < 1e-6


def test_intercept_only_logit_of_density():
    d = np.array([1] * 30 + [0] * 70, dtype=np.int8)
    data = FitData(np.zeros((100, 0)), d, d.copy(), d.copy(), ())
    fitted = fit("binary_standard", data)
    assert fitted.result.x[0] == pytest.approx(logit(0.3), abs=1e-8)


def test_wald_interval():
    lo, hi = wald_interval(0.0, 1.0)
    assert lo == pytest.approx(-1.959963984540054) and hi == pytest.approx(1.959963984540054)


def _boundary_fit():
    # every category-2 contact reported by both sides drives p[2] to 1
    X = np.zeros((400, 0))
    rng = np.random.default_rng(8)
    d = rng.choice([0, 1, 2, 3, 4], size=400, p=[0.5, 0.2, 0.15, 0.1, 0.05]).astype(np.int8)
    cij = (d > 0).astype(np.int8)
    cji = cij.copy()
    single = (d == 1) & (rng.random(400) < 0.4)
    cji[single] = 0
    single3 = (d == 3) & (rng.random(400) < 0.2)
    cji[single3] = 0
    single4 = (d == 4) & (rng.random(400) < 0.2)
    cji[single4] = 0
    data = FitData(X, cij, cji, d, ())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit("ordinal_latent", data), data


def test_boundary_probability_flagged_degenerate():
    fitted, _ = _boundary_fit()
    row = next(r for r in fitted.rows if r.name == "p[2]")
    assert row.flag == "degenerate"
    assert (row.ci_low, row.ci_high) == (0.0, 1.0)
    assert row.estimate == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DegenerateInterval):
        confidence_intervals(fitted.result, fitted.model(), strict=True)


def test_probability_intervals_inside_unit_interval():
    fitted, data = _boundary_fit()
    for r in fitted.rows:
        if r.name.startswith("p["):
            assert 0.0 <= r.ci_low <= r.estimate <= r.ci_high <= 1.0
    cf = closed_form_reporting(data)
    p_hat = [r.estimate for r in fitted.rows if r.name.startswith("p[")]
    assert np.allclose(p_hat, cf, atol=0.02)


def test_reparameterization_roundtrip(rng):
    model = get_model("ordinal_latent", ("a", "b"))
    th = ThetaOrdinal([-1.0, 0.2, 0.9, 2.5], [0.3, -0.7], [0.55, 0.9, 0.93, 0.97])
    back = model.unpack(model.pack(th))
    assert np.allclose(back.alpha, th.alpha, atol=1e-10)
    assert np.allclose(back.p, th.p, atol=1e-10)


def test_dyad_order_does_not_change_fit(design50):
    X = design50.select(("same_group", "distance")).X
    th = ThetaOrdinal([2.0, 3.0, 4.0, 5.5], [3.0, -0.2], [0.6, 0.9, 0.9, 0.9])
    data, _ = simulate_fit_data(th, X, seed=4, columns=("same_group", "distance"))
    model = get_model("ordinal_latent", data.columns)
    perm = np.random.default_rng(0).permutation(data.n_dyads)
    a = fit("ordinal_latent", data)
    b = fit("ordinal_latent", data.take(perm))
    assert a.loglik == b.loglik
    assert np.max(np.abs(a.result.x - b.result.x)) < 1e-8
    assert model.loglik(a.result.x, data) == model.loglik(a.result.x, data.take(perm))


def test_fitted_json_roundtrip(design50):
    X = design50.select(("same_group",)).X
    th = ThetaOrdinal([2.0, 3.0, 4.0, 5.5], [3.0], [0.6, 0.9, 0.9, 0.9])
    data, _ = simulate_fit_data(th, X, seed=5, columns=("same_group",))
    fitted = fit("ordinal_latent", data, distance="angular", day="Mon")
    doc = json.loads(json.dumps(fitted.to_json()))
    assert [p["name"] for p in doc["parameters"]] == fitted.model().names()
    assert doc["aic"] == pytest.approx(2 * 9 - 2 * doc["loglik"])
    back = FittedModel.from_json(doc)
    assert np.array_equal(back.result.x, fitted.result.x)
    assert back.covariates == ("same_group",)
    assert "alpha[0]" in format_table(fitted)


def test_proportionality_separation_flagged():
    rng = np.random.default_rng(1)
    m = 600
    x = rng.integers(0, 2, size=m).astype(float)
    d = rng.choice([0, 1, 2, 3], size=m, p=[0.4, 0.3, 0.2, 0.1]).astype(np.int8)
    d[x == 1] = np.minimum(d[x == 1], 3)
    d[(x == 0) & (d == 3)] = 4  # x = 0 perfectly predicts D > 60 among long contacts
    d[x == 1] = np.where(d[x == 1] == 3, 2, d[x == 1])
    y = (d > 0).astype(np.int8)
    data = FitData(x[:, None], y, y.copy(), d, ("same_floor",))
    with pytest.warns(SeparationDetected):
        table = proportionality_test(data)
    flagged = table[">60"][1]
    assert flagged.flag == "unbounded" and flagged.ci_low == -math.inf


def test_proportionality_slopes_agree_under_true_po(design50):
    cols = ("same_group",)
    th = ThetaOrdinal([1.0, 2.0, 3.0, 4.0], [2.0], np.ones(4))
    X = np.repeat(design50.select(cols).X, 2, axis=0)
    data, _ = simulate_fit_data(th, X, seed=6, columns=cols)
    table = proportionality_test(data)
    rows = [t[1] for t in table.values()]
    assert max(r.ci_low for r in rows) <= min(r.ci_high for r in rows)


def test_mle_result_defaults():
    r = MLEResult(np.zeros(2), 0.0, np.zeros(2), np.eye(2), None, 0, 1.0, True, "")
    assert np.isnan(r.se).all()
