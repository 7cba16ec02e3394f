"""Contact networks for the epidemic: observed, model-drawn and the two nulls.

All networks carry symmetric minute matrices with a zero diagonal; a zero
entry means no contact. Ensembles derive one independent generator per
realization from ``SeedSequence(seed).spawn``, so realization ``k`` does not
depend on how many others are drawn or in which order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np

from .data import DEFAULT_MINUTE_MAP, ReportedNetwork
from .dyads import DyadDesign, build_design, dyad_index
from .errors import DimensionMismatch
from .synthetic import draw_categories

PROVENANCES = ("original", "fitted", "shuffled", "random_mixing")


@dataclass(frozen=True)
class SimNetwork:
    ids: tuple
    minutes: np.ndarray
    provenance: str = "fitted"
    seed: object = None  # int, or (root seed, realization index) for ensembles

    def __post_init__(self):
        m = np.asarray(self.minutes, dtype=float)
        n = len(self.ids)
        if m.shape != (n, n):
            raise DimensionMismatch(f"minutes is {m.shape}, expected ({n}, {n})")
        if not np.array_equal(m, m.T):
            raise ValueError("minutes must be symmetric")
        if np.any(np.diag(m) != 0) or np.any(m < 0):
            raise ValueError("minutes must be nonnegative with a zero diagonal")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "minutes", m)

    @property
    def n(self):
        return len(self.ids)

    def dyad_values(self):
        i, j = dyad_index(self.n)
        return self.minutes[i, j]

    @property
    def n_edges(self):
        return int(np.count_nonzero(self.dyad_values()))

    @property
    def density(self):
        return self.n_edges / comb(self.n, 2) if self.n > 1 else 0.0


def _from_dyads(ids, values, provenance, seed):
    n = len(ids)
    i, j = dyad_index(n)
    m = np.zeros((n, n))
    m[i, j] = values
    m[j, i] = values
    return SimNetwork(tuple(ids), m, provenance, seed)


def _minute_lookup(minute_map):
    minute_map = minute_map or DEFAULT_MINUTE_MAP
    return np.array([0.0] + [float(minute_map[k]) for k in (1, 2, 3, 4)])


def _design_for(fitted, design, roster=None, distances=None):
    if design is None:
        if roster is None:
            raise ValueError("need a design or a roster with distances")
        n = roster.n
        distances = np.zeros((n, n)) if distances is None else distances
        design = build_design(roster, distances)
    if set(fitted.covariates) - set(design.columns):
        raise DimensionMismatch(f"design lacks covariates {sorted(set(fitted.covariates) - set(design.columns))}")
    return design.select(fitted.covariates)


def model_category_probs(fitted, design: DyadDesign):
    """(dyads, 5) category probabilities implied by ``fitted`` on ``design``."""
    if fitted.kind == "binary_standard":
        raise ValueError("binary_standard carries no duration model; fit an ordinal or multinomial model")
    design = _design_for(fitted, design)
    model = fitted.model()
    return model.category_probs(fitted.result.x, design.X)


def simulate_network(fitted, design=None, minute_map=None, seed=0, roster=None, distances=None):
    """Draw one network: a category per dyad from the fitted model, then minutes."""
    design = _design_for(fitted, design, roster, distances)
    P = model_category_probs(fitted, design)
    rng = np.random.default_rng(seed)
    d = draw_categories(P, rng)
    return _from_dyads(design.ids, _minute_lookup(minute_map)[d], "fitted", seed)


def simulate_ensemble(fitted, design, count, seed=0, minute_map=None):
    """``count`` independent realizations from per-index seed streams."""
    design = _design_for(fitted, design)
    P = model_category_probs(fitted, design)
    lookup = _minute_lookup(minute_map)
    nets = []
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        d = draw_categories(P, np.random.default_rng(child))
        nets.append(_from_dyads(design.ids, lookup[d], "fitted", (seed, k)))
    return nets


def original_network(reported: ReportedNetwork):
    """Union-rule network: a contact exists if either side reported it,
    with the longer of the two reported durations."""
    m = np.maximum(reported.minutes, reported.minutes.T).astype(float)
    return SimNetwork(reported.ids, m, "original", None)


def shuffle_edges(net: SimNetwork, swaps=100_000, seed=0):
    """Swap the values of two uniformly chosen dyads, ``swaps`` times.

    Dyads are drawn independently, so a dyad may be swapped with itself.
    The multiset of dyad values is preserved exactly.
    """
    if swaps < 0:
        raise ValueError("swaps must be nonnegative")
    values = net.dyad_values().copy()
    m = len(values)
    if m >= 2 and swaps:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, m, size=swaps)
        b = rng.integers(0, m, size=swaps)
        for x, y in zip(a.tolist(), b.tolist()):
            values[x], values[y] = values[y], values[x]
    return _from_dyads(net.ids, values, "shuffled", seed)


def mixing_targets(reference, design=None, minute_map=None):
    """Expected edge count and mean contact duration of ``reference``.

    ``reference`` is a fitted model (with its ``design``) or a sequence of
    networks, whose edge counts and positive durations are pooled.
    """
    if isinstance(reference, SimNetwork):
        reference = [reference]
    if isinstance(reference, (list, tuple)):
        edges = [net.n_edges for net in reference]
        positive = np.concatenate([v[v > 0] for v in (net.dyad_values() for net in reference)])
        mean = float(positive.mean()) if positive.size else 0.0
        return float(np.mean(edges)), mean, reference[0].ids
    design = _design_for(reference, design)
    P = model_category_probs(reference, design)
    lookup = _minute_lookup(minute_map)
    contact = P[:, 1:].sum()
    mean = float((P[:, 1:] @ lookup[1:]).sum() / contact) if contact > 0 else 0.0
    return float(contact), mean, design.ids


def random_mixing_network(reference, seed=0, design=None, minute_map=None):
    """Erdős–Rényi network at the reference's expected density, every edge
    lasting the reference mean duration."""
    expected, mean, ids = mixing_targets(reference, design, minute_map)
    n = len(ids)
    pairs = comb(n, 2)
    prob = min(1.0, expected / pairs) if pairs else 0.0
    rng = np.random.default_rng(seed)
    present = rng.random(pairs) < prob
    return _from_dyads(ids, np.where(present, mean, 0.0), "random_mixing", seed)


def _format_minutes(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_edgelist(net: SimNetwork, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "minutes"])
        i, j = dyad_index(net.n)
        for a, b, v in zip(i, j, net.minutes[i, j]):
            if v > 0:
                w.writerow([net.ids[a], net.ids[b], _format_minutes(v)])


def read_edgelist(path, ids=None, provenance="original"):
    """Read an (i, j, minutes) edge list. Without ``ids`` the node set is the
    endpoints in order of first appearance."""
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"i", "j", "minutes"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
        for row in reader:
            rows.append((row["i"].strip(), row["j"].strip(), float(row["minutes"])))
    if ids is None:
        seen = {}
        for a, b, _ in rows:
            seen.setdefault(a, None)
            seen.setdefault(b, None)
        ids = tuple(seen)
    index = {pid: k for k, pid in enumerate(ids)}
    m = np.zeros((len(ids), len(ids)))
    for a, b, v in rows:
        if a == b:
            raise ValueError(f"{path}: self loop at {a!r}")
        m[index[a], index[b]] = m[index[b], index[a]] = v
    return SimNetwork(tuple(ids), m, provenance, None)
