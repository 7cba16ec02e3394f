"""Maximum likelihood fitting: numerical derivatives, dogleg trust region,
Wald standard errors and model-fit orchestration."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .dyads import COVARIATES, ThetaOrdinal, resolve_covariates
from .errors import (
    DegenerateInterval,
    IndefiniteHessianAtOptimum,
    MaxIterations,
    NonFiniteEvaluation,
    SeparationDetected,
    ZeroLikelihood,
)
from .likelihood import CATEGORIES, FitData, get_model

EPS = 2.0 ** -52
Z95 = float(norm.ppf(0.975))
BOUNDARY_LOGIT = 15.0
SEPARATION_COEF = 10.0


def _eval(f, x):
    try:
        value = float(f(x))
    except ZeroLikelihood as exc:
        raise NonFiniteEvaluation(str(exc)) from None
    if not math.isfinite(value):
        raise NonFiniteEvaluation(f"objective is {value} at {x}")
    return value


def numeric_gradient(f, theta):
    theta = np.asarray(theta, dtype=float)
    h = EPS ** (1 / 3) * np.maximum(1.0, np.abs(theta))
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h[i]
        g[i] = (_eval(f, theta + e) - _eval(f, theta - e)) / (2 * h[i])
    return g


def numeric_derivatives(f, theta):
    """Central-difference gradient and Hessian of ``f`` at ``theta``.

    Gradient steps are ``eps**(1/3) * max(1, |theta_i|)``; the Hessian uses
    ``eps**(1/4) * max(1, |theta_i|)`` and is symmetrized.
    """
    theta = np.asarray(theta, dtype=float)
    k = len(theta)
    g = numeric_gradient(f, theta)
    h = EPS ** 0.25 * np.maximum(1.0, np.abs(theta))
    f0 = _eval(f, theta)
    H = np.empty((k, k))
    steps = np.diag(h)
    for i in range(k):
        fp = _eval(f, theta + steps[i])
        fm = _eval(f, theta - steps[i])
        H[i, i] = (fp - 2 * f0 + fm) / (h[i] * h[i])
        for j in range(i + 1, k):
            a, b = steps[i], steps[j]
            H[i, j] = (_eval(f, theta + a + b) - _eval(f, theta + a - b)
                       - _eval(f, theta - a + b) + _eval(f, theta - a - b)) / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return g, (H + H.T) / 2


def _dogleg(g, H, radius):
    """Step maximizing the quadratic model g.s + s.H.s/2 within ``radius``."""
    B = -H  # curvature of the minimized objective
    gg = float(g @ g)
    if gg == 0.0:
        return np.zeros_like(g)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        L = None
    if L is not None:
        newton = np.linalg.solve(L.T, np.linalg.solve(L, g))
        if np.linalg.norm(newton) <= radius:
            return newton
    curv = float(g @ B @ g)
    if curv <= 0:
        return radius * g / math.sqrt(gg)
    cauchy = (gg / curv) * g
    if L is None or np.linalg.norm(cauchy) >= radius:
        return min(1.0, radius / np.linalg.norm(cauchy)) * cauchy
    diff = newton - cauchy
    a = float(diff @ diff)
    b = 2 * float(cauchy @ diff)
    c = float(cauchy @ cauchy) - radius * radius
    tau = (-b + math.sqrt(b * b - 4 * a * c)) / (2 * a)
    return cauchy + tau * diff


@dataclass
class MLEResult:
    x: np.ndarray
    loglik: float
    grad: np.ndarray
    hessian: np.ndarray
    covariance: np.ndarray | None
    iterations: int
    radius: float
    converged: bool
    message: str
    hessian_ok: bool = True
    names: list = field(default_factory=list)

    @property
    def grad_norm(self):
        return float(np.max(np.abs(self.grad))) if len(self.grad) else 0.0

    @property
    def se(self):
        if self.covariance is None:
            return np.full(len(self.x), np.nan)
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.where(np.diag(self.covariance) >= 0, np.diag(self.covariance), np.nan))

    @property
    def n_params(self):
        return len(self.x)

    @property
    def aic(self):
        return 2 * self.n_params - 2 * self.loglik


def covariance_from_hessian(H):
    """Inverse of the observed information ``-H``; None if singular."""
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return None
    return (cov + cov.T) / 2


def _polish(f, x, fx, g, H):
    """One plain Newton step from a converged point, kept only if it does
    not lower the objective and does lower the gradient."""
    try:
        step = -np.linalg.solve(H, g)
        if np.max(np.abs(step)) > 1e-3:  # flat directions; leave them alone
            return x, fx, g, H
        f_new = _eval(f, x + step)
        if f_new < fx - 1e3 * EPS * max(1.0, abs(fx)):
            return x, fx, g, H
        g_new, H_new = numeric_derivatives(f, x + step)
    except (np.linalg.LinAlgError, NonFiniteEvaluation):
        return x, fx, g, H
    if np.max(np.abs(g_new)) < np.max(np.abs(g)):
        return x + step, f_new, g_new, H_new
    return x, fx, g, H


def maximize(f, theta0, gtol=1e-6, max_iter=500, radius=1.0, min_radius=1e-12,
             max_radius=1e3, names=None):
    """Maximize ``f`` with a dogleg trust-region Newton method.

    Derivatives are numerical. Stops when the gradient sup-norm drops below
    ``gtol``, the radius shrinks below ``min_radius`` or after ``max_iter``
    iterations. Only improving steps are accepted; once the predicted gain
    is below the objective's rounding noise, a step that lowers the gradient
    norm counts as an improvement. A converged point gets one final Newton
    step under the same rule.
    """
    x = np.asarray(theta0, dtype=float).copy()
    noise = 1e3 * EPS
    fx = _eval(f, x)
    g, H = numeric_derivatives(f, x)
    it = 0
    message = "max iterations reached"
    converged = False
    while it < max_iter:
        if np.max(np.abs(g)) < gtol:
            converged, message = True, "gradient tolerance met"
            break
        if radius < min_radius:
            message = "trust radius collapsed"
            break
        it += 1
        step = _dogleg(g, H, radius)
        predicted = float(g @ step + 0.5 * step @ H @ step)
        try:
            f_new = _eval(f, x + step)
        except NonFiniteEvaluation:
            f_new = -math.inf
        actual = f_new - fx
        rho = actual / predicted if predicted > 0 else (1.0 if actual > 0 else -1.0)
        if rho < 0.25:
            radius *= 0.25
        elif rho > 0.75:
            radius = min(2.0 * radius, max_radius)
        if actual > 0 and rho > 1e-4:
            x = x + step
            fx = f_new
            try:
                g, H = numeric_derivatives(f, x)
            except NonFiniteEvaluation:
                message = "objective not finite near the current point"
                break
        elif math.isfinite(f_new) and abs(predicted) < noise * max(1.0, abs(fx)):
            # gains below the objective's rounding floor: let the gradient decide
            try:
                g_new, H_new = numeric_derivatives(f, x + step)
            except NonFiniteEvaluation:
                continue
            if np.max(np.abs(g_new)) < np.max(np.abs(g)):
                x, fx, g, H = x + step, f_new, g_new, H_new
                radius = max(radius, 4.0 * np.linalg.norm(step))
    if not converged and message == "max iterations reached" and np.max(np.abs(g)) < gtol:
        converged, message = True, "gradient tolerance met"
    if converged:
        x, fx, g, H = _polish(f, x, fx, g, H)
    if not converged:
        warnings.warn(f"optimizer stopped: {message} (|grad|={np.max(np.abs(g)):.3g})",
                      MaxIterations, stacklevel=2)
    cov = covariance_from_hessian(H)
    hessian_ok = cov is not None and bool(np.all(np.linalg.eigvalsh(-H) > 0))
    if not hessian_ok:
        warnings.warn("Hessian at the optimum is not negative definite; standard errors unreliable",
                      IndefiniteHessianAtOptimum, stacklevel=2)
    return MLEResult(x, fx, g, H, cov, it, radius, converged, message, hessian_ok, list(names or []))


def wald_interval(estimate, se, level=0.95):
    z = float(norm.ppf(0.5 + level / 2))
    return estimate - z * se, estimate + z * se


@dataclass
class ParameterRow:
    name: str
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    flag: str = ""

    def as_dict(self):
        def clean(v):
            return None if v is None or not math.isfinite(v) else float(v)
        return {"name": self.name, "estimate": clean(self.estimate), "se": clean(self.se),
                "ci_low": clean(self.ci_low), "ci_high": clean(self.ci_high), "flag": self.flag}


def _is_probability(name):
    return name.startswith("p[")


def confidence_intervals(result, model, level=0.95, strict=False):
    """Per-parameter natural-scale estimates, SEs and Wald intervals.

    Reporting probabilities get the logistic image of their logit-scale
    interval; other parameters use delta-method SEs. A reporting probability
    on the boundary (|logit| > 15) is flagged ``degenerate`` and given the
    interval [0, 1] (``strict=True`` raises DegenerateInterval instead).
    """
    x = result.x
    nat = model.natural(x)
    J = model.natural_jacobian(x)
    cov = result.covariance
    nat_cov = J @ cov @ J.T if cov is not None else None
    internal_se = result.se
    names = model.names()
    rows = []
    p_start = len(names) - 4 if model.latent else len(names)
    z = float(norm.ppf(0.5 + level / 2))
    for idx, name in enumerate(names):
        est = float(nat[idx])
        var = nat_cov[idx, idx] if nat_cov is not None else np.nan
        se = math.sqrt(var) if var >= 0 else math.nan
        flag = ""
        if _is_probability(name):
            u = x[len(x) - (len(names) - idx)]
            use = internal_se[len(x) - (len(names) - idx)]
            if abs(u) > BOUNDARY_LOGIT or not math.isfinite(use):
                if strict:
                    raise DegenerateInterval(f"{name} is on the boundary (estimate {est:.3f})")
                flag = "degenerate"
                lo, hi = (0.0, 1.0)
            else:
                lo, hi = float(expit(u - z * use)), float(expit(u + z * use))
        elif name.startswith("gamma["):
            lo, hi = max(0.0, est - z * se), min(1.0, est + z * se)
        else:
            lo, hi = est - z * se, est + z * se
        if idx < p_start and not name.startswith("gamma[") and (
                abs(est) > SEPARATION_COEF and (not math.isfinite(se) or se > SEPARATION_COEF)):
            flag = "unbounded"
            lo, hi = -math.inf, math.inf
        rows.append(ParameterRow(name, est, se, lo, hi, flag))
    return rows


@dataclass
class FittedModel:
    kind: str
    covariates: tuple
    distance: str
    result: MLEResult
    rows: list
    n_dyads: int
    day: str = ""

    @property
    def loglik(self):
        return self.result.loglik

    @property
    def aic(self):
        return self.result.aic

    @property
    def converged(self):
        return self.result.converged

    def model(self):
        return get_model(self.kind, self.covariates)

    def theta(self):
        return self.model().unpack(self.result.x)

    def estimates(self):
        return {r.name: r.estimate for r in self.rows}

    def to_json(self):
        r = self.result
        return {
            "model": self.kind,
            "distance": self.distance,
            "day": self.day,
            "covariates": list(self.covariates),
            "parameters": [row.as_dict() for row in self.rows],
            "internal": [float(v) for v in r.x],
            "internal_names": list(self.model().internal_names()),
            "covariance": None if r.covariance is None else [[float(v) for v in row] for row in r.covariance],
            "loglik": float(r.loglik),
            "aic": float(r.aic),
            "n_params": r.n_params,
            "n_dyads": self.n_dyads,
            "diagnostics": {
                "converged": bool(r.converged),
                "message": r.message,
                "iterations": int(r.iterations),
                "gradient_norm": r.grad_norm,
                "trust_radius": float(r.radius),
                "hessian_negative_definite": bool(r.hessian_ok),
            },
        }

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        kind = doc["model"]
        covariates = tuple(doc["covariates"])
        x = np.array(doc["internal"], dtype=float)
        cov = None if doc.get("covariance") is None else np.array(doc["covariance"], dtype=float)
        diag = doc.get("diagnostics", {})
        k = len(x)
        result = MLEResult(x, doc["loglik"], np.zeros(k), np.full((k, k), np.nan), cov,
                           diag.get("iterations", 0), diag.get("trust_radius", math.nan),
                           diag.get("converged", True), diag.get("message", ""),
                           diag.get("hessian_negative_definite", True))
        rows = [ParameterRow(p["name"],
                             *(math.nan if p[key] is None else p[key] for key in ("estimate", "se")),
                             -math.inf if p["ci_low"] is None else p["ci_low"],
                             math.inf if p["ci_high"] is None else p["ci_high"], p.get("flag", ""))
                for p in doc["parameters"]]
        return cls(kind, covariates, doc.get("distance", ""), result, rows, doc.get("n_dyads", 0),
                   doc.get("day", ""))


def _frequencies(d):
    counts = np.bincount(np.asarray(d, dtype=int), minlength=5).astype(float)
    return counts


def _initial_standard(kind, data):
    counts = _frequencies(data.d) + 0.5
    k = len(data.columns)
    if kind == "binary_standard":
        density = counts[1:].sum() / counts.sum()
        return np.concatenate([[logit(density)], np.zeros(k)])
    cum = np.cumsum(counts)[:4] / counts.sum()
    alpha = logit(cum)
    return np.concatenate([[alpha[0]], np.log(np.diff(alpha)), np.zeros(k)])


DEFAULT_P0 = (0.5, 0.9, 0.9, 0.95)


def initial_values(kind, data, standard=None):
    """Starting point: effects from the standard fit, p = (0.5, 0.9, 0.9, 0.95),
    duration mix from observed category frequencies."""
    if kind in ("binary_standard", "ordinal_standard"):
        return _initial_standard(kind, data)
    counts = _frequencies(data.d)
    p_logit = logit(np.array(DEFAULT_P0))
    k = len(data.columns)
    if kind == "binary_latent":
        beta = standard if standard is not None else _initial_standard("binary_standard", data)
        gamma = (counts[1:] + 0.5) / (counts[1:] + 0.5).sum()
        return np.concatenate([beta, np.log(gamma[1:] / gamma[0]), p_logit])
    if kind == "ordinal_latent":
        base = standard if standard is not None else _initial_standard("ordinal_standard", data)
        return np.concatenate([base, p_logit])
    if kind == "multinomial_latent":
        smoothed = counts + 0.5
        alpha = np.log(smoothed[1:] / smoothed[0])
        return np.concatenate([alpha, np.zeros(4 * k), p_logit])
    raise ValueError(f"unknown model kind {kind!r}")


def _clip_standard(vec, limit=SEPARATION_COEF):
    # separated standard fits wander far out; keep the latent start sane
    return np.clip(vec, -limit, limit)


def fit(kind, data: FitData, covariates=None, distance="", day="", theta0=None, **options):
    """Fit one model kind to assembled dyad data and tabulate the estimates."""
    covariates = resolve_covariates(covariates) if covariates is not None else data.columns
    if tuple(covariates) != tuple(data.columns):
        data = data.select(covariates)
    model = get_model(kind, covariates)
    if theta0 is None:
        standard = None
        if kind in ("binary_latent", "ordinal_latent"):
            std_kind = "binary_standard" if kind == "binary_latent" else "ordinal_standard"
            std_data = data.union()
            std_model = get_model(std_kind, covariates)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                std = maximize(lambda v: std_model.loglik(v, std_data),
                               _initial_standard(std_kind, std_data), **options)
            standard = _clip_standard(std.x)
        theta0 = initial_values(kind, data, standard)
    if model.latent:
        objective = lambda v: model.loglik(v, data)  # noqa: E731
    else:
        union = data.union()
        objective = lambda v: model.loglik(v, union)  # noqa: E731
    result = maximize(objective, theta0, names=model.internal_names(), **options)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = confidence_intervals(result, model)
    return FittedModel(kind, tuple(covariates), distance, result, rows, data.n_dyads, day)


def closed_form_reporting(data):
    """Per-category 2a/(2a+b) estimate from mutual (a) and one-sided (b) reports."""
    reports = data.c_ij.astype(int) + data.c_ji.astype(int)
    out = []
    for k in CATEGORIES:
        in_k = data.d == k
        a = int(np.sum(in_k & (reports == 2)))
        b = int(np.sum(in_k & (reports == 1)))
        out.append(2 * a / (2 * a + b) if a + b else math.nan)
    return np.array(out)


CUTOFFS = ((1, ">0"), (2, ">5"), (3, ">15"), (4, ">60"))


def proportionality_test(data: FitData, covariates=None, **options):
    """Separate logistic fits of D above each duration cutpoint (union-rule data).

    Returns ``{cutoff label: [ParameterRow, ...]}``. Coefficients that run
    off to infinity because a cell is all-0 or all-1 get an unbounded
    interval and trigger a SeparationDetected warning.
    """
    covariates = resolve_covariates(covariates) if covariates is not None else data.columns
    if tuple(covariates) != tuple(data.columns):
        data = data.select(covariates)
    model = get_model("binary_standard", covariates)
    table = {}
    for k, label in CUTOFFS:
        y = (data.d >= k).astype(np.int8)
        dich = FitData(data.X, y, y.copy(), y.copy(), data.columns)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = maximize(lambda v, dd=dich: model.loglik(v, dd),
                           _initial_standard("binary_standard", dich), **options)
            rows = confidence_intervals(res, model)
        separated = [r.name for r in rows if r.flag == "unbounded"]
        if separated:
            warnings.warn(f"cutoff {label}: separation in {', '.join(separated)}", SeparationDetected,
                          stacklevel=2)
        table[label] = rows
    return table


def format_table(fitted):
    lines = [f"{fitted.kind}  distance={fitted.distance or '-'}  day={fitted.day or '-'}",
             f"{'parameter':<22}{'estimate':>10}{'se':>10}   95% CI"]
    for r in fitted.rows:
        ci = "[NA, NA]" if r.flag == "unbounded" else f"[{r.ci_low:.2f}, {r.ci_high:.2f}]"
        se = "NA" if not math.isfinite(r.se) or r.flag == "unbounded" else f"{r.se:.2f}"
        lines.append(f"{r.name:<22}{r.estimate:>10.2f}{se:>10}   {ci} {r.flag}".rstrip())
    res = fitted.result
    lines.append(f"loglik={res.loglik:.3f}  AIC={res.aic:.1f}  k={res.n_params}  "
                 f"iterations={res.iterations}  |grad|={res.grad_norm:.2e}  converged={res.converged}")
    return "\n".join(lines)

