"""Dyad design matrix and per-dyad contact / duration probability models."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .errors import CutpointsNotAscending, DimensionMismatch, InvalidProbability

COVARIATES = (
    "group1",           # members of group 1 in the dyad (0-2)
    "group2",           # members of group 2 in the dyad (0-2)
    "same_group",       # share at least one research group
    "distance",         # architectural desk distance
    "female",           # females in the dyad (0-2)
    "same_sex",
    "same_role",
    "same_floor",
    "shared_projects",  # directed project reports between the two (0-2)
)

# Covariate subsets; model1..model4 mirror the reduced models compared
# against the full model.
COVARIATE_SETS = {
    "full": COVARIATES,
    "model1": ("distance", "same_floor"),
    "model2": ("same_group", "shared_projects"),
    "model3": ("same_group",),
    "model4": tuple(c for c in COVARIATES if c not in ("group1", "group2")),
}

MODEL_KINDS = ("binary_latent", "ordinal_latent", "multinomial_latent", "ordinal_standard", "binary_standard")


def resolve_covariates(covariates):
    if covariates is None:
        return COVARIATES
    if isinstance(covariates, str):
        if covariates in COVARIATE_SETS:
            return COVARIATE_SETS[covariates]
        covariates = [c.strip() for c in covariates.split(",") if c.strip()]
    unknown = [c for c in covariates if c not in COVARIATES]
    if unknown:
        raise ValueError(f"unknown covariate(s): {', '.join(unknown)}")
    return tuple(covariates)


@dataclass(frozen=True)
class DyadDesign:
    """One row per unordered dyad ``i < j`` (row-major upper triangle)."""

    ids: tuple
    i: np.ndarray
    j: np.ndarray
    X: np.ndarray
    columns: tuple = COVARIATES

    @property
    def n(self):
        return len(self.ids)

    @property
    def n_dyads(self):
        return len(self.i)

    def select(self, covariates):
        cols = resolve_covariates(covariates)
        idx = [self.columns.index(c) for c in cols]
        return DyadDesign(self.ids, self.i, self.j, self.X[:, idx], cols)

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", *self.columns])
            for a, b, row in zip(self.i, self.j, self.X):
                w.writerow([self.ids[a], self.ids[b], *(repr(float(v)) for v in row)])


def dyad_index(n):
    return np.triu_indices(n, k=1)


def build_design(roster, distances):
    """Nine-covariate design for every unordered dyad of ``roster``.

    ``distances`` is an n x n matrix aligned with roster order.
    """
    distances = np.asarray(distances, dtype=float)
    n = roster.n
    if distances.shape != (n, n):
        raise DimensionMismatch(f"distance matrix is {distances.shape}, roster has {n} persons")
    persons = roster.persons
    g1 = np.array([1 in p.groups for p in persons], dtype=float)
    g2 = np.array([2 in p.groups for p in persons], dtype=float)
    fem = np.array([p.sex == "female" for p in persons], dtype=float)
    sex = np.array([p.sex for p in persons])
    role = [p.role for p in persons]
    floor = np.array([p.floor for p in persons])
    index = roster.index()
    proj = np.zeros((n, n))
    for a, b in roster.project_reports:
        proj[index[a], index[b]] = 1.0

    i, j = dyad_index(n)
    same_group = np.array([bool(persons[a].groups & persons[b].groups) for a, b in zip(i, j)], dtype=float)
    same_role = np.array([role[a] is not None and role[a] == role[b] for a, b in zip(i, j)], dtype=float)
    X = np.column_stack([
        g1[i] + g1[j],
        g2[i] + g2[j],
        same_group,
        distances[i, j],
        fem[i] + fem[j],
        (sex[i] == sex[j]).astype(float),
        same_role,
        (floor[i] == floor[j]).astype(float),
        proj[i, j] + proj[j, i],
    ])
    return DyadDesign(roster.ids, i, j, X, COVARIATES)


def _check_prob(p, name="p"):
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidProbability(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class ThetaBinary:
    beta: np.ndarray   # intercept followed by one effect per covariate
    gamma: np.ndarray  # duration mix over categories 1..4
    p: np.ndarray      # reporting probability per category 1..4

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        gamma = _check_prob(self.gamma, "gamma")
        if gamma.shape != (4,) or abs(gamma.sum() - 1.0) > 1e-9:
            raise InvalidProbability("gamma must be a 4-simplex")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "p", _check_prob(self.p))


@dataclass(frozen=True)
class ThetaOrdinal:
    alpha: np.ndarray  # cutpoints for D <= 0, <= 5, <= 15, <= 60 minutes
    beta: np.ndarray
    p: np.ndarray = field(default_factory=lambda: np.ones(4))

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (4,) or np.any(np.diff(alpha) <= 0):
            raise CutpointsNotAscending(f"cutpoints must be strictly increasing, got {alpha}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "p", _check_prob(self.p))


@dataclass(frozen=True)
class ThetaMultinomial:
    alpha: np.ndarray  # log-odds of categories 1..4 against non-contact
    B: np.ndarray      # 4 x k category-specific effects
    p: np.ndarray = field(default_factory=lambda: np.ones(4))

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "B", np.atleast_2d(np.asarray(self.B, dtype=float)))
        object.__setattr__(self, "p", _check_prob(self.p))


def _linear(beta, X):
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[-1] != beta.shape[-1]:
        raise DimensionMismatch(f"x has {X.shape[-1]} columns, coefficients have {beta.shape[-1]}")
    return X @ beta


def binary_logit(theta, X):
    return theta.beta[0] + _linear(theta.beta[1:], X)


def binary_prob(theta, X):
    """P(Y = 1) for each row of X (or a single covariate vector)."""
    return expit(binary_logit(theta, X))


def ordinal_cumulative(alpha, beta, X):
    """P(D <= k) for k = 0..3, shape (..., 4)."""
    eta = _linear(beta, X)
    return expit(np.asarray(alpha)[None, :] - np.atleast_1d(eta)[:, None]).reshape(np.shape(eta) + (4,))


def ordinal_probs(theta, X):
    """Category probabilities (..., 5) under the proportional-odds model."""
    cum = ordinal_cumulative(theta.alpha, theta.beta, X)
    probs = np.empty(cum.shape[:-1] + (5,))
    probs[..., 0] = cum[..., 0]
    probs[..., 1:4] = np.diff(cum, axis=-1)
    probs[..., 4] = 1.0 - cum[..., 3]
    return probs


def ordinal_log_probs(alpha, beta, X):
    """Log category probabilities, accurate in both tails."""
    alpha = np.asarray(alpha, dtype=float)
    eta = np.atleast_1d(_linear(beta, X))
    z = alpha[None, :] - eta[:, None]
    log_cdf = -np.logaddexp(0.0, -z)   # log expit(z)
    log_sf = log_cdf - z               # log expit(-z)
    out = np.empty((len(eta), 5))
    out[:, 0] = log_cdf[:, 0]
    out[:, 4] = log_sf[:, 3]
    # log(expit(b) - expit(a)) = log expit(b) + log expit(-a) + log(1 - e^(a-b)),
    # and a - b is a cutpoint gap shared by every dyad
    with np.errstate(divide="ignore"):
        gap = np.log(-np.expm1(alpha[:-1] - alpha[1:]))
    out[:, 1:4] = log_cdf[:, 1:] + log_sf[:, :3] + gap[None, :]
    return out


def multinomial_logits(theta, X):
    """Baseline-category logits (..., 5) with non-contact fixed at 0."""
    X = np.asarray(X, dtype=float)
    if theta.B.shape != (4, X.shape[-1]):
        raise DimensionMismatch(f"B is {theta.B.shape}, expected (4, {X.shape[-1]})")
    eta = theta.alpha + X @ theta.B.T
    zero = np.zeros(eta.shape[:-1] + (1,))
    return np.concatenate([zero, eta], axis=-1)


def multinomial_probs(theta, X):
    logits = multinomial_logits(theta, X)
    return np.exp(logits - logsumexp(logits, axis=-1, keepdims=True))


def multinomial_probs_direct(theta, X):
    """Same probabilities via the explicit ratio with an unshifted baseline."""
    logits = multinomial_logits(theta, X)
    e = np.exp(logits[..., 1:])
    denom = 1.0 + e.sum(axis=-1, keepdims=True)
    return np.concatenate([1.0 / denom, e / denom], axis=-1)
