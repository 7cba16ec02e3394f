from math import comb

import numpy as np
import pytest
from scipy.special import logit

from contactnet.data import DEFAULT_MINUTE_MAP
from contactnet.dyads import COVARIATES, ThetaOrdinal
from contactnet.errors import DimensionMismatch
from contactnet.netsim import (
    SimNetwork,
    mixing_targets,
    model_category_probs,
    random_mixing_network,
    read_edgelist,
    shuffle_edges,
    simulate_ensemble,
    simulate_network,
    write_edgelist,
)
from contactnet.synthetic import DEFAULT_THETA

MINUTES = np.array([0, 3, 10, 38, 120], dtype=float)


@pytest.fixture(scope="module")
def full_model(fitted_from_theta):
    return fitted_from_theta("ordinal_latent", DEFAULT_THETA, COVARIATES)


def _intercept_only(fitted_from_theta, probs):
    cum = np.cumsum(probs)[:4]
    theta = ThetaOrdinal(alpha=logit(cum), beta=[0.0], p=[0.5, 0.9, 0.9, 0.9])
    return fitted_from_theta("ordinal_latent", theta, ("same_floor",))


def _assert_valid(net):
    assert np.array_equal(net.minutes, net.minutes.T)
    assert np.all(np.diag(net.minutes) == 0)
    assert np.all(net.minutes >= 0)


def test_simnetwork_rejects_bad_matrices():
    with pytest.raises(ValueError):
        SimNetwork(("a", "b"), np.array([[0, 1], [2, 0]]))
    with pytest.raises(ValueError):
        SimNetwork(("a", "b"), np.array([[1, 0], [0, 0]]))
    with pytest.raises(DimensionMismatch):
        SimNetwork(("a", "b", "c"), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SimNetwork(("a", "b"), np.zeros((2, 2)), provenance="dreamt")


def test_all_mass_on_zero_gives_empty_network(fitted_from_theta, design50):
    fitted = _intercept_only(fitted_from_theta, [1 - 4e-16, 1e-16, 1e-16, 1e-16, 1e-16])
    net = simulate_network(fitted, design50, seed=3)
    assert net.n_edges == 0
    assert net.n == 50


def test_same_seed_same_network(full_model, design50):
    a = simulate_network(full_model, design50, seed=9)
    b = simulate_network(full_model, design50, seed=9)
    assert np.array_equal(a.minutes, b.minutes)
    _assert_valid(a)
    assert set(np.unique(a.minutes)) <= set(MINUTES)


def test_binary_standard_is_refused(fitted_from_theta, design50):
    from contactnet.dyads import ThetaBinary

    fitted = fitted_from_theta("binary_standard", ThetaBinary(beta=[-2.0, 0.5], gamma=[1, 0, 0, 0], p=[1, 1, 1, 1]),
                               ("same_floor",))
    with pytest.raises(ValueError):
        simulate_network(fitted, design50)


def test_density_matches_binomial_oracle(full_model, design50):
    P = model_category_probs(full_model, design50)
    q = P[:, 1:].sum(axis=1)
    draws = 500
    nets = simulate_ensemble(full_model, design50, draws, seed=5)
    mean_density = np.mean([net.density for net in nets])
    expected = q.mean()
    # the edge count of one draw is a sum of independent Bernoullis
    se = np.sqrt(np.sum(q * (1 - q))) / len(q) / np.sqrt(draws)
    assert abs(mean_density - expected) < 3 * se


def test_dyad_draws_are_independent(full_model, design50):
    nets = simulate_ensemble(full_model, design50, 500, seed=6)
    edges = np.array([net.dyad_values() > 0 for net in nets], dtype=float)
    a, b = edges[:, 0::2][:, :600], edges[:, 1::2][:, :600]
    cov = ((a - a.mean(0)) * (b - b.mean(0))).sum(0) / (len(edges) - 1)
    assert abs(cov.mean()) < 3 * cov.std(ddof=1) / np.sqrt(len(cov))


def test_ensemble_realizations_are_stable_under_count(full_model, design50):
    short = simulate_ensemble(full_model, design50, 3, seed=2)
    longer = simulate_ensemble(full_model, design50, 6, seed=2)
    for a, b in zip(short, longer):
        assert np.array_equal(a.minutes, b.minutes)
    assert short[1].seed == (2, 1)


def test_category_mix_conditional_on_contact(fitted_from_theta, design50):
    # a model whose implied mix among contacts is 0.45 / 0.20 / 0.25 / 0.09
    mix = np.array([0.45, 0.20, 0.25, 0.09])
    mix = mix / mix.sum()
    probs = np.concatenate([[0.7], 0.3 * mix])
    fitted = _intercept_only(fitted_from_theta, probs)
    nets = simulate_ensemble(fitted, design50, 300, seed=12)
    counts = np.zeros(5)
    for net in nets:
        v = net.dyad_values()
        counts += [np.sum(v == m) for m in MINUTES]
    freq = counts[1:] / counts[1:].sum()
    # the reference mix is quoted to two decimals, so allow half a unit
    # of rounding on top of about 3 Monte Carlo SEs
    se = np.sqrt(mix * (1 - mix) / counts[1:].sum())
    assert np.all(np.abs(freq - mix) < 0.005 + 3 * se)


def _clustered(n_cliques=10, size=5, minutes=10.0):
    n = n_cliques * size
    m = np.zeros((n, n))
    for c in range(n_cliques):
        block = slice(c * size, (c + 1) * size)
        m[block, block] = minutes
    np.fill_diagonal(m, 0)
    return SimNetwork(tuple(f"p{k}" for k in range(n)), m, "original")


def _transitivity(minutes):
    A = (minutes > 0).astype(float)
    deg = A.sum(1)
    triples = np.sum(deg * (deg - 1))
    return np.trace(A @ A @ A) / triples if triples else 0.0


def test_shuffle_zero_swaps_is_identity():
    net = _clustered()
    out = shuffle_edges(net, swaps=0, seed=1)
    assert np.array_equal(out.minutes, net.minutes)
    assert out.provenance == "shuffled"


def test_shuffle_conserves_values(full_model, design50):
    net = simulate_network(full_model, design50, seed=4)
    out = shuffle_edges(net, swaps=20_000, seed=8)
    assert np.array_equal(np.sort(out.dyad_values()), np.sort(net.dyad_values()))
    _assert_valid(out)
    assert not np.array_equal(out.minutes, net.minutes)


def test_shuffle_negative_swaps_rejected():
    with pytest.raises(ValueError):
        shuffle_edges(_clustered(), swaps=-1)


def test_shuffled_clustering_approaches_random_graph():
    net = _clustered()
    assert _transitivity(net.minutes) == 1.0
    shuffled = [_transitivity(shuffle_edges(net, 100_000, seed=s).minutes) for s in range(20)]
    # oracle: uniform graphs with the same edge count
    rng = np.random.default_rng(77)
    values = net.dyad_values()
    i, j = np.triu_indices(net.n, 1)
    oracle = []
    for _ in range(400):
        m = np.zeros((net.n, net.n))
        v = rng.permutation(values)
        m[i, j] = m[j, i] = v
        oracle.append(_transitivity(m))
    se = np.sqrt(np.var(shuffled, ddof=1) / len(shuffled) + np.var(oracle, ddof=1) / len(oracle))
    assert abs(np.mean(shuffled) - np.mean(oracle)) < 3 * se
    assert np.mean(shuffled) < 0.2


def test_random_mixing_from_ensemble(full_model, design50):
    ensemble = simulate_ensemble(full_model, design50, 20, seed=1)
    E, m, ids = mixing_targets(ensemble)
    assert E == pytest.approx(np.mean([net.n_edges for net in ensemble]))
    positive = np.concatenate([net.dyad_values()[net.dyad_values() > 0] for net in ensemble])
    assert m == pytest.approx(positive.mean())
    draws = [random_mixing_network(ensemble, seed=s) for s in range(1000)]
    counts = np.array([net.n_edges for net in draws])
    pairs = comb(50, 2)
    prob = E / pairs
    se = np.sqrt(pairs * prob * (1 - prob) / len(draws))
    assert abs(counts.mean() - E) < 3 * se
    for net in draws[:50]:
        v = net.dyad_values()
        assert np.all(v[v > 0] == m)
        assert net.provenance == "random_mixing"
        _assert_valid(net)


def test_random_mixing_from_fitted_model(full_model, design50):
    P = model_category_probs(full_model, design50)
    E, m, _ = mixing_targets(full_model, design50)
    assert E == pytest.approx(P[:, 1:].sum())
    want = (P[:, 1:] @ MINUTES[1:]).sum() / P[:, 1:].sum()
    assert m == pytest.approx(want)
    assert MINUTES[1] < m < MINUTES[4]
    net = random_mixing_network(full_model, seed=3, design=design50)
    assert len(set(net.dyad_values()[net.dyad_values() > 0])) == 1


def test_random_mixing_empty_reference():
    empty = SimNetwork(("a", "b", "c"), np.zeros((3, 3)), "original")
    net = random_mixing_network([empty], seed=0)
    assert net.n_edges == 0


def test_default_minute_map():
    assert DEFAULT_MINUTE_MAP == {1: 3, 2: 10, 3: 38, 4: 120}


def test_edgelist_round_trip(tmp_path, full_model, design50):
    net = simulate_network(full_model, design50, seed=21)
    path = tmp_path / "net.csv"
    write_edgelist(net, path)
    back = read_edgelist(path, ids=net.ids)
    assert np.array_equal(back.minutes, net.minutes)
    assert path.read_text().splitlines()[0] == "i,j,minutes"
    fractional = SimNetwork(("a", "b", "c"), np.array([[0, 2.5, 0], [2.5, 0, 0], [0, 0, 0]]))
    write_edgelist(fractional, path)
    again = read_edgelist(path, ids=("a", "b", "c"))
    assert np.array_equal(again.minutes, fractional.minutes)
    # without ids the isolated node is lost
    assert read_edgelist(path).n == 2


def test_edgelist_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("i,j\na,b\n")
    with pytest.raises(ValueError, match="minutes"):
        read_edgelist(path)
