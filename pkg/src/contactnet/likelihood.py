"""Joint likelihood of reported contacts and durations under reporting error.

Each unordered dyad contributes one of thirteen outcomes: a mutual report of
category k, a report by only one side (two orderings) of category k, or no
report at all. With category probabilities ``P`` (index 0 = no contact) and
reporting probabilities ``p``::

    mutual, k       P[k] * p[k]**2
    one-sided, k    P[k] * p[k] * (1 - p[k])       (each ordering)
    none            P[0] + sum_k P[k] * (1 - p[k])**2

Dyad terms are summed with ``math.fsum`` so the total does not depend on
dyad order.

Internal parameter vectors are unconstrained: reporting probabilities on the
logit scale, the duration mix as a softmax of three reals, and cutpoints as
the first cutpoint followed by log increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logit, softmax

from .data import symmetrize
from .dyads import (
    COVARIATES,
    DyadDesign,
    ThetaBinary,
    ThetaMultinomial,
    ThetaOrdinal,
    binary_logit,
    build_design,
    multinomial_logits,
    ordinal_log_probs,
    ordinal_probs,
)
from .errors import DimensionMismatch, InconsistentObservation, ZeroLikelihood

CATEGORIES = (1, 2, 3, 4)


@dataclass(frozen=True)
class DyadObservation:
    c_ij: int
    c_ji: int
    d: int

    def __post_init__(self):
        if self.c_ij not in (0, 1) or self.c_ji not in (0, 1) or self.d not in range(5):
            raise InconsistentObservation(f"invalid observation {self}")
        if (self.d > 0) != bool(self.c_ij or self.c_ji):
            raise InconsistentObservation(
                f"duration category {self.d} does not match reports ({self.c_ij}, {self.c_ji})")


@dataclass(frozen=True)
class FitData:
    """Per-dyad reports, symmetrized category and covariates."""

    X: np.ndarray
    c_ij: np.ndarray
    c_ji: np.ndarray
    d: np.ndarray
    columns: tuple = COVARIATES
    ids: tuple = ()
    pairs: tuple = ()

    def __post_init__(self):
        m = len(self.d)
        if self.X.shape[0] != m or len(self.c_ij) != m or len(self.c_ji) != m:
            raise DimensionMismatch("design rows and observations differ in length")
        if self.X.shape[1] != len(self.columns):
            raise DimensionMismatch("design columns and names differ")
        reported = (self.c_ij == 1) | (self.c_ji == 1)
        if np.any(reported != (self.d > 0)):
            bad = int(np.argmax(reported != (self.d > 0)))
            raise InconsistentObservation(f"dyad {bad}: reports and duration category disagree")

    @property
    def n_dyads(self):
        return len(self.d)

    def select(self, covariates):
        idx = [self.columns.index(c) for c in covariates]
        return FitData(self.X[:, idx], self.c_ij, self.c_ji, self.d, tuple(covariates), self.ids, self.pairs)

    def take(self, rows):
        rows = np.asarray(rows)
        pairs = tuple(self.pairs[r] for r in rows) if self.pairs else ()
        return FitData(self.X[rows], self.c_ij[rows], self.c_ji[rows], self.d[rows], self.columns, self.ids, pairs)

    def concat(self, other):
        return FitData(np.vstack([self.X, other.X]), np.concatenate([self.c_ij, other.c_ij]),
                       np.concatenate([self.c_ji, other.c_ji]), np.concatenate([self.d, other.d]),
                       self.columns)

    def union(self):
        """Data under the union rule: every contact reported by both sides."""
        y = (self.d > 0).astype(np.int8)
        return FitData(self.X, y, y.copy(), self.d, self.columns, self.ids, self.pairs)


def assemble(roster, reported, distances, covariates=COVARIATES):
    """Align a day's reports with the covariate design of present persons.

    ``distances`` is either a matrix in full-roster order or an
    ``(ids, matrix)`` pair.
    """
    if isinstance(distances, tuple):
        dist_ids, matrix = distances
    else:
        dist_ids, matrix = roster.ids, np.asarray(distances)
    pos = {pid: k for k, pid in enumerate(dist_ids)}
    missing = [pid for pid in reported.ids if pid not in pos]
    if missing:
        raise DimensionMismatch(f"no distances for {', '.join(missing)}")
    sub = roster.subset(reported.ids)
    if sub.ids != reported.ids:
        raise DimensionMismatch("reported network order differs from roster order")
    take = [pos[pid] for pid in reported.ids]
    design = build_design(sub, matrix[np.ix_(take, take)]).select(covariates)
    return from_design(design, reported.C, symmetrize(reported).D)


def from_design(design: DyadDesign, C, D):
    i, j = design.i, design.j
    C = np.asarray(C)
    D = np.asarray(D)
    pairs = tuple((design.ids[a], design.ids[b]) for a, b in zip(i, j)) if design.ids else ()
    return FitData(design.X, C[i, j].astype(np.int8), C[j, i].astype(np.int8),
                   D[i, j].astype(np.int8), design.columns, design.ids, pairs)


def _pattern_masks(data):
    reports = data.c_ij.astype(int) + data.c_ji.astype(int)
    return reports == 2, reports == 1, reports == 0


def latent_log_terms(logP, P, p_logit, data):
    """Per-dyad log-probabilities given category (log-)probabilities and logit(p)."""
    mutual, single, none = _pattern_masks(data)
    log_p = log_expit(p_logit)
    log_q = log_expit(-p_logit)
    q = expit(-p_logit)
    k = np.clip(data.d.astype(int) - 1, 0, 3)
    rows = np.arange(data.n_dyads)
    out = np.empty(data.n_dyads)
    logPk = logP[rows, data.d]
    out[mutual] = logPk[mutual] + 2.0 * log_p[k[mutual]]
    out[single] = logPk[single] + log_p[k[single]] + log_q[k[single]]
    p_none = P[none, 0] + P[none, 1:] @ (q * q)
    with np.errstate(divide="ignore"):
        out[none] = np.log(p_none)
    return out


def _total(terms):
    if not np.all(np.isfinite(terms)):
        bad = int(np.argmax(~np.isfinite(terms)))
        raise ZeroLikelihood(f"dyad {bad} has zero probability under these parameters")
    return math.fsum(terms)


class LatentModel:
    """Parameter packing and log-likelihood for one model kind."""

    kind = ""
    latent = True

    def __init__(self, columns=COVARIATES):
        self.columns = tuple(columns)
        self.k = len(self.columns)

    # subclasses: n_params, names, unpack, pack, category_log_probs

    def category_probs(self, vec, X):
        return np.exp(self.category_log_probs(vec, X))

    def loglik_terms(self, vec, data):
        vec = np.asarray(vec, dtype=float)
        logP = self.category_log_probs(vec, data.X)
        if not self.latent:
            return logP[np.arange(data.n_dyads), data.d]
        return latent_log_terms(logP, np.exp(logP), vec[-4:], data)

    def loglik(self, vec, data):
        return _total(self.loglik_terms(vec, data))

    def natural(self, vec):
        """Natural-scale parameter vector (same length and order as ``names``)."""
        return np.asarray(vec, dtype=float).copy()

    def natural_jacobian(self, vec):
        return np.eye(len(vec))


def _p_tail(vec):
    return expit(np.asarray(vec[-4:], dtype=float))


class BinaryLatent(LatentModel):
    kind = "binary_latent"

    def n_params(self):
        return 1 + self.k + 3 + 4

    def names(self):
        return (["intercept"] + list(self.columns)
                + [f"gamma[{k}]" for k in CATEGORIES] + [f"p[{k}]" for k in CATEGORIES])

    def internal_names(self):
        return (["intercept"] + list(self.columns)
                + [f"log_gamma_ratio[{k}]" for k in (2, 3, 4)] + [f"logit_p[{k}]" for k in CATEGORIES])

    def unpack(self, vec):
        vec = np.asarray(vec, dtype=float)
        nb = 1 + self.k
        gamma = softmax(np.concatenate([[0.0], vec[nb:nb + 3]]))
        return ThetaBinary(vec[:nb], gamma, _p_tail(vec))

    def pack(self, theta):
        # zero mixing weights or boundary p map to infinite internal values,
        # which the likelihood turns into exact zeros
        with np.errstate(divide="ignore"):
            log_gamma = np.log(theta.gamma)
        return np.concatenate([theta.beta, log_gamma[1:] - log_gamma[0], logit(theta.p)])

    def category_log_probs(self, vec, X):
        vec = np.asarray(vec, dtype=float)
        nb = 1 + self.k
        eta = vec[0] + np.asarray(X) @ vec[1:nb]
        z = np.concatenate([[0.0], vec[nb:nb + 3]])
        log_gamma = z - np.logaddexp.reduce(z)
        out = np.empty((len(eta), 5))
        out[:, 0] = log_expit(-eta)
        out[:, 1:] = log_expit(eta)[:, None] + log_gamma[None, :]
        return out

    def natural(self, vec):
        vec = np.asarray(vec, dtype=float)
        nb = 1 + self.k
        gamma = softmax(np.concatenate([[0.0], vec[nb:nb + 3]]))
        return np.concatenate([vec[:nb], gamma, _p_tail(vec)])

    def natural_jacobian(self, vec):
        vec = np.asarray(vec, dtype=float)
        nb = 1 + self.k
        J = np.zeros((self.n_params() + 1, self.n_params()))
        J[:nb, :nb] = np.eye(nb)
        gamma = softmax(np.concatenate([[0.0], vec[nb:nb + 3]]))
        dg = np.diag(gamma) - np.outer(gamma, gamma)  # d softmax / d z
        J[nb:nb + 4, nb:nb + 3] = dg[:, 1:]
        p = _p_tail(vec)
        J[nb + 4:, nb + 3:] = np.diag(p * (1 - p))
        return J


def _alpha_from_internal(u):
    return np.concatenate([[u[0]], u[0] + np.cumsum(np.exp(u[1:4]))])


def _alpha_to_internal(alpha):
    alpha = np.asarray(alpha, dtype=float)
    return np.concatenate([[alpha[0]], np.log(np.diff(alpha))])


def _alpha_jacobian(u):
    J = np.zeros((4, 4))
    J[:, 0] = 1.0
    e = np.exp(u[1:4])
    for row in range(1, 4):
        J[row, 1:row + 1] = e[:row]
    return J


class OrdinalLatent(LatentModel):
    kind = "ordinal_latent"

    def n_params(self):
        return 4 + self.k + (4 if self.latent else 0)

    def names(self):
        names = [f"alpha[{k}]" for k in range(4)] + list(self.columns)
        return names + ([f"p[{k}]" for k in CATEGORIES] if self.latent else [])

    def internal_names(self):
        names = ["alpha[0]"] + [f"log_alpha_step[{k}]" for k in (1, 2, 3)] + list(self.columns)
        return names + ([f"logit_p[{k}]" for k in CATEGORIES] if self.latent else [])

    def unpack(self, vec):
        vec = np.asarray(vec, dtype=float)
        alpha = _alpha_from_internal(vec[:4])
        p = _p_tail(vec) if self.latent else np.ones(4)
        return ThetaOrdinal(alpha, vec[4:4 + self.k], p)

    def pack(self, theta):
        parts = [_alpha_to_internal(theta.alpha), theta.beta]
        if self.latent:
            parts.append(logit(theta.p))
        return np.concatenate(parts)

    def category_log_probs(self, vec, X):
        vec = np.asarray(vec, dtype=float)
        return ordinal_log_probs(_alpha_from_internal(vec[:4]), vec[4:4 + self.k], X)

    def natural(self, vec):
        vec = np.asarray(vec, dtype=float)
        out = [_alpha_from_internal(vec[:4]), vec[4:4 + self.k]]
        if self.latent:
            out.append(_p_tail(vec))
        return np.concatenate(out)

    def natural_jacobian(self, vec):
        vec = np.asarray(vec, dtype=float)
        n = self.n_params()
        J = np.eye(n)
        J[:4, :4] = _alpha_jacobian(vec[:4])
        if self.latent:
            p = _p_tail(vec)
            J[-4:, -4:] = np.diag(p * (1 - p))
        return J


class OrdinalStandard(OrdinalLatent):
    kind = "ordinal_standard"
    latent = False


class BinaryStandard(LatentModel):
    kind = "binary_standard"
    latent = False

    def n_params(self):
        return 1 + self.k

    def names(self):
        return ["intercept"] + list(self.columns)

    internal_names = names

    def unpack(self, vec):
        return np.asarray(vec, dtype=float)

    def pack(self, theta):
        return np.asarray(getattr(theta, "beta", theta), dtype=float)

    def loglik_terms(self, vec, data):
        vec = np.asarray(vec, dtype=float)
        eta = vec[0] + data.X @ vec[1:]
        y = data.d > 0
        return np.where(y, log_expit(eta), log_expit(-eta))

    def category_log_probs(self, vec, X):
        vec = np.asarray(vec, dtype=float)
        eta = vec[0] + np.asarray(X) @ vec[1:]
        out = np.full((len(eta), 5), -np.inf)
        out[:, 0] = log_expit(-eta)
        out[:, 1] = log_expit(eta)
        return out


class MultinomialLatent(LatentModel):
    kind = "multinomial_latent"

    def n_params(self):
        return 4 + 4 * self.k + 4

    def names(self):
        names = [f"alpha[{k}]" for k in CATEGORIES]
        names += [f"{c}[{k}]" for k in CATEGORIES for c in self.columns]
        return names + [f"p[{k}]" for k in CATEGORIES]

    def internal_names(self):
        return self.names()[:-4] + [f"logit_p[{k}]" for k in CATEGORIES]

    def unpack(self, vec):
        vec = np.asarray(vec, dtype=float)
        return ThetaMultinomial(vec[:4], vec[4:4 + 4 * self.k].reshape(4, self.k), _p_tail(vec))

    def pack(self, theta):
        return np.concatenate([theta.alpha, np.asarray(theta.B).ravel(),
                               logit(theta.p)])

    def category_log_probs(self, vec, X):
        vec = np.asarray(vec, dtype=float)
        theta = ThetaMultinomial(vec[:4], vec[4:4 + 4 * self.k].reshape(4, self.k), np.ones(4))
        logits = multinomial_logits(theta, X)
        return logits - np.logaddexp.reduce(logits, axis=-1, keepdims=True)

    def natural(self, vec):
        vec = np.asarray(vec, dtype=float)
        return np.concatenate([vec[:-4], _p_tail(vec)])

    def natural_jacobian(self, vec):
        J = np.eye(len(vec))
        p = _p_tail(vec)
        J[-4:, -4:] = np.diag(p * (1 - p))
        return J


MODELS = {cls.kind: cls for cls in (BinaryLatent, OrdinalLatent, MultinomialLatent, OrdinalStandard, BinaryStandard)}


def get_model(kind, columns=COVARIATES):
    try:
        return MODELS[kind](columns)
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(MODELS)}") from None


def _columns_for(theta):
    if isinstance(theta, ThetaBinary):
        k = len(theta.beta) - 1
    elif isinstance(theta, ThetaOrdinal):
        k = len(theta.beta)
    elif isinstance(theta, ThetaMultinomial):
        k = theta.B.shape[1]
    else:
        k = len(np.asarray(theta)) - 1
    return COVARIATES[:k] if k <= len(COVARIATES) else tuple(f"x{c}" for c in range(k))


def category_probs(theta, X):
    """P(D = k), k = 0..4, for each dyad under a binary, ordinal or multinomial parameter set."""
    X = np.asarray(X, dtype=float)
    if isinstance(theta, ThetaOrdinal):
        return ordinal_probs(theta, X)
    if isinstance(theta, ThetaMultinomial):
        model = MultinomialLatent(_columns_for(theta))
        return model.category_probs(model.pack(theta), X)
    if isinstance(theta, ThetaBinary):
        py = np.atleast_1d(1.0 / (1.0 + np.exp(-binary_logit(theta, X))))
        return np.column_stack([1.0 - py, py[:, None] * theta.gamma[None, :]])
    raise TypeError(f"unsupported parameter type {type(theta).__name__}")


def _single_outcome_prob(P, p, obs):
    if not isinstance(obs, DyadObservation):
        obs = DyadObservation(*obs)
    P = np.asarray(P, dtype=float)
    if obs.d == 0:
        return float(P[0] + np.sum(P[1:] * (1 - p) ** 2))
    pk = p[obs.d - 1]
    if obs.c_ij and obs.c_ji:
        return float(P[obs.d] * pk * pk)
    return float(P[obs.d] * pk * (1 - pk))


def dyad_outcome_prob_binary(theta, x, obs):
    """Probability of one dyad's (c_ij, c_ji, d) outcome under the binary latent model."""
    P = category_probs(theta, np.atleast_2d(x))[0]
    return _single_outcome_prob(P, theta.p, obs)


def dyad_outcome_prob_ordinal(theta, x, obs):
    P = ordinal_probs(theta, np.atleast_2d(x))[0]
    return _single_outcome_prob(P, theta.p, obs)


def dyad_outcome_prob_multinomial(theta, x, obs):
    P = category_probs(theta, np.atleast_2d(x))[0]
    return _single_outcome_prob(P, theta.p, obs)


def outcome_space():
    """All 13 consistent (c_ij, c_ji, d) outcomes."""
    out = [DyadObservation(0, 0, 0)]
    for d in CATEGORIES:
        out += [DyadObservation(1, 1, d), DyadObservation(1, 0, d), DyadObservation(0, 1, d)]
    return out


_KIND_ALIASES = {"binary": "binary_latent", "ordinal": "ordinal_latent", "multinomial": "multinomial_latent"}


def joint_loglik(model_kind, theta, data):
    """Latent-model log-likelihood of the reported data at natural parameters ``theta``."""
    kind = _KIND_ALIASES.get(model_kind, model_kind)
    model = get_model(kind, data.columns)
    return model.loglik(model.pack(theta), data)


def standard_loglik(model_kind, theta, data):
    """Log-likelihood of union-rule data with no reporting parameters.

    ``theta`` is a ThetaOrdinal (its ``p`` is ignored) for the ordinal
    model, or the intercept-plus-effects vector (or a ThetaBinary) for the
    binary model.
    """
    kind = {"binary": "binary_standard", "ordinal": "ordinal_standard"}.get(model_kind, model_kind)
    model = get_model(kind, data.columns)
    if kind == "ordinal_standard":
        vec = np.concatenate([_alpha_to_internal(theta.alpha), theta.beta])
    else:
        vec = model.pack(theta)
    return model.loglik(vec, data)
