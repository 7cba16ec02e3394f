"""Synthetic rosters, office line maps and reported networks.

Reported networks are drawn from the generative model the likelihoods
assume: a true duration category per dyad from the dyad model, then each
side reports an existing contact independently with probability ``p[k]``.
Contacts are never fabricated.
"""

from __future__ import annotations

import math

import numpy as np

from .data import (
    DEFAULT_MINUTE_MAP,
    ROLES,
    WEEKDAYS,
    Person,
    ReportedNetwork,
    Roster,
    TrueNetwork,
)
from .dyads import COVARIATES, ThetaBinary, ThetaMultinomial, ThetaOrdinal, build_design
from .errors import InvalidProbability
from .likelihood import FitData, category_probs
from .spacesyntax import make_linemap

# Group-membership patterns and role counts of a 50-person institute:
# 21 only-group-1, 16 only-group-2, 10 only-group-3, 1 in all three,
# 2 in groups 1 and 2 (24 / 19 / 11 members per group); roles 15 / 24 / 6
# with 5 unreported.
_GROUP_PATTERNS = ((frozenset({1}), 21), (frozenset({2}), 16), (frozenset({3}), 10),
                   (frozenset({1, 2, 3}), 1), (frozenset({1, 2}), 2))
_ROLE_COUNTS = (("postdoc", 15), ("grad_student", 24), ("admin", 6), (None, 5))


def _scaled_counts(counts, n):
    total = sum(counts)
    raw = [c * n / total for c in counts]
    out = [math.floor(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda k: (out[k] - raw[k], k))
    for k in order[: n - sum(out)]:
        out[k] += 1
    return out


def synthetic_roster(n=50, seed=0, office_size=3, project_rate=0.25):
    """Roster whose margins match the 50-member institute (scaled for other n).

    Members of a group share floors and offices; shared-project reports are
    drawn within groups, each direction reported independently.
    """
    rng = np.random.default_rng(seed)
    patterns = []
    for (groups, _), count in zip(_GROUP_PATTERNS, _scaled_counts([c for _, c in _GROUP_PATTERNS], n)):
        patterns += [groups] * count
    roles = []
    for (role, _), count in zip(_ROLE_COUNTS, _scaled_counts([c for _, c in _ROLE_COUNTS], n)):
        roles += [role] * count
    roles = list(rng.permutation(np.array(roles, dtype=object)))
    sexes = ["female"] * (n // 2) + ["male"] * (n - n // 2)
    sexes = list(rng.permutation(sexes))
    ages = np.clip(np.round(rng.normal(31.7, 6.6, size=n)), 22, 65)

    # primary group decides the floor: group 1 downstairs, 2 upstairs, 3 split
    primary = [min(g) for g in patterns]
    floors = [0 if g == 1 else 1 if g == 2 else int(k % 2) for k, g in enumerate(primary)]
    persons = []
    office_fill = {}
    for k in range(n):
        key = (floors[k], primary[k])
        slot = office_fill.get(key, 0)
        office_fill[key] = slot + 1
        office = f"F{floors[k]}G{primary[k]}O{slot // office_size}"
        persons.append(Person(
            id=f"p{k + 1:02d}", age=float(ages[k]), sex=sexes[k], groups=patterns[k],
            role=roles[k], floor=floors[k], office_id=office, usual_days=frozenset(WEEKDAYS),
        ))

    reports = set()
    for a in range(n):
        for b in range(a + 1, n):
            if persons[a].groups & persons[b].groups and rng.random() < project_rate / 3:
                ia, ib = persons[a].id, persons[b].id
                both = rng.random() < 0.6
                if both or rng.random() < 0.5:
                    reports.add((ia, ib))
                if both or (ia, ib) not in reports:
                    reports.add((ib, ia))
    return Roster(tuple(persons), frozenset(reports))


def synthetic_linemap(roster, corridor_gap=6.0, desk_gap=1.2):
    """Office line map: one corridor per floor, one spur line per office.

    Offices alternate sides of the corridor; every third spur is drawn at
    60 degrees so angular and axial distances disagree. Corridors on
    neighbouring floors are joined by an 8 m stair link at their far ends.
    Desk ids equal person ids.
    """
    offices = {}
    for p in roster.persons:
        offices.setdefault((p.floor, p.office_id), []).append(p.id)
    floors = sorted({f for f, _ in offices})
    per_floor = {f: [o for (ff, o) in offices if ff == f] for f in floors}
    width = corridor_gap * (max(len(v) for v in per_floor.values()) + 1)

    lines, desks, stairs = [], {}, []
    for f in floors:
        corridor = f"C{f}"
        lines.append({"id": corridor, "floor": f, "points": [[0.0, 0.0], [width, 0.0]]})
        for k, office in enumerate(per_floor[f]):
            x = corridor_gap * (k + 1)
            side = 1.0 if k % 2 == 0 else -1.0
            angle = math.radians(60.0 if k % 3 == 2 else 90.0)
            members = offices[(f, office)]
            length = desk_gap * (len(members) + 1)
            dx, dy = math.cos(angle), side * math.sin(angle)
            spur = f"S{f}_{office}"
            lines.append({"id": spur, "floor": f,
                          "points": [[x, 0.0], [x + length * dx, length * dy]]})
            for slot, pid in enumerate(members, start=1):
                r = desk_gap * slot
                desks[pid] = {"line": spur, "point": [x + r * dx, r * dy]}
    for lower, upper in zip(floors, floors[1:]):
        stairs.append({"from": [f"C{lower}", 1], "to": [f"C{upper}", 1], "length": 8.0})
    return make_linemap(lines, desks, stairs)


# Ordinal latent parameters in full-covariate order, with desk distances in
# angular units; they give roughly one contact in three dyads.
DEFAULT_THETA = ThetaOrdinal(
    alpha=[2.65, 3.87, 4.58, 6.22],
    beta=[-0.18, 0.11, 3.42, -0.22, 0.31, 0.6, -0.18, -0.09, 1.06],
    p=[0.56, 0.96, 0.93, 0.999],
)


def _check_theta(theta):
    p = np.asarray(theta.p, dtype=float)
    if p.shape != (4,) or np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidProbability(f"reporting probabilities must lie in [0, 1], got {p}")


def draw_categories(P, rng):
    """One category per row of the (m, 5) probability matrix ``P``."""
    cum = np.cumsum(P, axis=1)
    u = rng.random(len(P))
    return np.minimum((u[:, None] >= cum[:, :4]).sum(axis=1), 4).astype(np.int8)


def draw_reports(d, p, rng):
    """Independent directed reports for true categories ``d``."""
    p = np.asarray(p, dtype=float)
    pk = np.where(d > 0, p[np.clip(d - 1, 0, 3)], 0.0)
    c_ij = (rng.random(len(d)) < pk).astype(np.int8)
    c_ji = (rng.random(len(d)) < pk).astype(np.int8)
    return c_ij, c_ji


def simulate_fit_data(theta, X, seed, columns=None):
    """Draw reported dyad data straight from a design matrix (no roster)."""
    _check_theta(theta)
    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=float)
    d_true = draw_categories(category_probs(theta, X), rng)
    c_ij, c_ji = draw_reports(d_true, theta.p, rng)
    d_obs = np.where((c_ij + c_ji) > 0, d_true, 0).astype(np.int8)
    columns = tuple(columns) if columns is not None else COVARIATES[: X.shape[1]]
    return FitData(X, c_ij, c_ji, d_obs, columns), d_true


def _theta_for(params, model_kind):
    if isinstance(params, (ThetaBinary, ThetaOrdinal, ThetaMultinomial)):
        return params
    if model_kind.startswith("binary"):
        return ThetaBinary(params["beta"], params["gamma"], params["p"])
    if model_kind.startswith("ordinal"):
        return ThetaOrdinal(params["alpha"], params["beta"], params.get("p", np.ones(4)))
    return ThetaMultinomial(params["alpha"], params["B"], params["p"])


def generate_synthetic(roster, params, model_kind="ordinal_latent", seed=0, distances=None,
                       covariates=COVARIATES, minute_map=None, day="Mon"):
    """Draw a true network and the diary reports it produces.

    ``params`` is a Theta* object or a dict of its fields. Reported minutes
    are the representative minutes of the true category (both sides agree).
    """
    theta = _theta_for(params, model_kind)
    _check_theta(theta)
    minute_map = minute_map or DEFAULT_MINUTE_MAP
    n = roster.n
    distances = np.zeros((n, n)) if distances is None else np.asarray(distances, dtype=float)
    design = build_design(roster, distances).select(covariates)
    rng = np.random.default_rng(seed)
    d_true = draw_categories(category_probs(theta, design.X), rng)
    c_ij, c_ji = draw_reports(d_true, theta.p, rng)

    D = np.zeros((n, n), dtype=np.int8)
    D[design.i, design.j] = d_true
    D[design.j, design.i] = d_true
    C = np.zeros((n, n), dtype=np.int8)
    C[design.i, design.j] = c_ij
    C[design.j, design.i] = c_ji
    lookup = np.array([0] + [minute_map[k] for k in (1, 2, 3, 4)])
    minutes = np.where(C == 1, lookup[D], 0).astype(np.int64)
    return TrueNetwork(roster.ids, D), ReportedNetwork(roster.ids, C, minutes, day)
