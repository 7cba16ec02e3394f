"""Contact-diary domain types, CSV ingestion and duration symmetrization.

Node order is always the roster row order (restricted to persons present on
the day for diary-derived networks); every matrix in the package is indexed
that way.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DanglingProjectRef,
    DuplicateReport,
    InputError,
    MinutesOutOfRange,
    MissingColumn,
    SelfReport,
    UnknownPerson,
    UnknownRole,
)

ROLES = ("postdoc", "grad_student", "admin")
WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri")
ROSTER_COLUMNS = ("id", "age", "sex", "group1", "group2", "group3", "role", "floor", "office", "days")
DIARY_COLUMNS = ("reporter", "reportee", "minutes")
PROJECT_COLUMNS = ("reporter", "reportee")

MAX_MINUTES = 480
# Upper bound (inclusive) of categories 1..4; category 0 is non-contact.
CATEGORY_UPPER = (5, 15, 60, MAX_MINUTES)
CATEGORY_LABELS = ("0", "1-5", "6-15", "16-60", "61-480")
N_CATEGORIES = 5
# Representative minutes used when a model-drawn category needs a duration.
DEFAULT_MINUTE_MAP = {1: 3, 2: 10, 3: 38, 4: 120}

_SEX_ALIASES = {"female": "female", "f": "female", "male": "male", "m": "male"}


def duration_category(minutes):
    """Map contact minutes (scalar or array) to ordinal codes 0..4."""
    m = np.asarray(minutes)
    if np.any(m < 0) or np.any(m > MAX_MINUTES):
        raise MinutesOutOfRange(f"minutes must lie in [0, {MAX_MINUTES}]")
    codes = np.searchsorted(np.array((0,) + CATEGORY_UPPER), m, side="left")
    return codes.astype(np.int8) if codes.ndim else int(codes)


@dataclass(frozen=True)
class Person:
    id: str
    age: float
    sex: str
    groups: frozenset
    role: str | None
    floor: int
    office_id: str
    usual_days: frozenset = frozenset(WEEKDAYS)

    def __post_init__(self):
        if not self.groups:
            raise ValueError(f"person {self.id!r} belongs to no group")
        if self.sex not in ("female", "male"):
            raise ValueError(f"person {self.id!r}: sex must be female or male")
        if self.role is not None and self.role not in ROLES:
            raise UnknownRole(f"person {self.id!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Roster:
    persons: tuple
    project_reports: frozenset = frozenset()

    def __post_init__(self):
        ids = [p.id for p in self.persons]
        if len(set(ids)) != len(ids):
            raise ValueError("person ids must be unique")
        known = set(ids)
        for a, b in self.project_reports:
            if a not in known or b not in known:
                raise DanglingProjectRef(f"project report ({a}, {b}) references an unknown id")

    @property
    def ids(self):
        return tuple(p.id for p in self.persons)

    @property
    def n(self):
        return len(self.persons)

    def index(self):
        return {p.id: i for i, p in enumerate(self.persons)}

    def subset(self, ids):
        """Roster restricted to ``ids`` (kept in roster order)."""
        keep = set(ids)
        persons = tuple(p for p in self.persons if p.id in keep)
        reports = frozenset((a, b) for a, b in self.project_reports if a in keep and b in keep)
        return Roster(persons, reports)


@dataclass(frozen=True)
class ReportedNetwork:
    """Directed 0/1 reports ``C`` and the minutes attached to each report."""

    ids: tuple
    C: np.ndarray
    minutes: np.ndarray
    day: str = "Mon"

    def __post_init__(self):
        n = len(self.ids)
        if self.C.shape != (n, n) or self.minutes.shape != (n, n):
            raise ValueError("C and minutes must be n x n")
        if np.any(np.diag(self.C)):
            raise SelfReport("diagonal of C must be zero")
        if np.any((self.minutes > 0) != (self.C == 1)):
            raise ValueError("minutes > 0 must coincide with C == 1")
        if np.any(self.minutes > MAX_MINUTES) or np.any(self.minutes < 0):
            raise MinutesOutOfRange(f"minutes must lie in [0, {MAX_MINUTES}]")

    @property
    def n(self):
        return len(self.ids)


@dataclass(frozen=True)
class DurationMatrix:
    ids: tuple
    D: np.ndarray

    @property
    def n(self):
        return len(self.ids)


@dataclass(frozen=True)
class TrueNetwork:
    ids: tuple
    D_true: np.ndarray
    Y: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "Y", (self.D_true > 0).astype(np.int8))


def _read_rows(path, required):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s) {', '.join(missing)}", path=path, row=1)
        reader.fieldnames = header
        # data rows start at line 2
        return [(i, {k: (v or "").strip() for k, v in row.items() if k is not None})
                for i, row in enumerate(reader, start=2)]


def _flag(value, path, row, column):
    if value in ("1", "true", "True", "yes"):
        return True
    if value in ("0", "", "false", "False", "no"):
        return False
    raise InputError(f"column {column}: expected 0/1, got {value!r}", path=path, row=row)


def load_roster(path, projects_path=None):
    """Read ``roster.csv`` and its companion ``projects.csv``.

    The projects file defaults to ``projects.csv`` next to the roster; a
    missing file means no shared projects were reported.
    """
    path = Path(path)
    persons = []
    for row_no, row in _read_rows(path, ROSTER_COLUMNS):
        role = row["role"] or None
        if role is not None and role not in ROLES:
            raise UnknownRole(f"unknown role {role!r}", path=path, row=row_no)
        sex = _SEX_ALIASES.get(row["sex"].lower())
        if sex is None:
            raise InputError(f"unknown sex {row['sex']!r}", path=path, row=row_no)
        groups = frozenset(g for g in (1, 2, 3) if _flag(row[f"group{g}"], path, row_no, f"group{g}"))
        if not groups:
            raise InputError("person belongs to no group", path=path, row=row_no)
        days = frozenset(d.strip() for d in row["days"].replace(",", ";").split(";") if d.strip())
        unknown_days = days - set(WEEKDAYS)
        if unknown_days:
            raise InputError(f"unknown weekday(s) {sorted(unknown_days)}", path=path, row=row_no)
        try:
            age = float(row["age"]) if row["age"] else float("nan")
            floor = int(row["floor"])
        except ValueError as exc:
            raise InputError(str(exc), path=path, row=row_no) from None
        persons.append(Person(
            id=row["id"], age=age, sex=sex, groups=groups, role=role,
            floor=floor, office_id=row["office"], usual_days=days or frozenset(WEEKDAYS),
        ))
    ids = [p.id for p in persons]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate person id", path=path)

    projects_path = Path(projects_path) if projects_path is not None else path.with_name("projects.csv")
    reports = set()
    if projects_path.exists():
        known = set(ids)
        for row_no, row in _read_rows(projects_path, PROJECT_COLUMNS):
            a, b = row["reporter"], row["reportee"]
            for pid in (a, b):
                if pid not in known:
                    raise DanglingProjectRef(f"unknown id {pid!r}", path=projects_path, row=row_no)
            reports.add((a, b))
    return Roster(tuple(persons), frozenset(reports))


def write_roster(roster, path, projects_path=None):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROSTER_COLUMNS)
        for p in roster.persons:
            age = "" if np.isnan(p.age) else f"{p.age:g}"
            days = ";".join(d for d in WEEKDAYS if d in p.usual_days)
            w.writerow([p.id, age, p.sex, *(int(g in p.groups) for g in (1, 2, 3)),
                        p.role or "", p.floor, p.office_id, days])
    projects_path = Path(projects_path) if projects_path is not None else path.with_name("projects.csv")
    order = roster.index()
    with projects_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROJECT_COLUMNS)
        for a, b in sorted(roster.project_reports, key=lambda ab: (order[ab[0]], order[ab[1]])):
            w.writerow([a, b])


def load_diary(path, roster, day="Mon"):
    """Read one day's diary into a :class:`ReportedNetwork`.

    Persons with no incident report (in either direction) are treated as
    absent and dropped from the node set. Extra columns (e.g. contact type)
    are ignored.
    """
    path = Path(path)
    index = roster.index()
    reports = {}
    for row_no, row in _read_rows(path, DIARY_COLUMNS):
        a, b = row["reporter"], row["reportee"]
        for pid in (a, b):
            if pid not in index:
                raise UnknownPerson(f"unknown id {pid!r}", path=path, row=row_no)
        if a == b:
            raise SelfReport(f"{a!r} reported contact with self", path=path, row=row_no)
        if (a, b) in reports:
            raise DuplicateReport(f"pair ({a}, {b}) reported twice", path=path, row=row_no)
        try:
            minutes = int(row["minutes"])
        except ValueError:
            raise MinutesOutOfRange(f"minutes {row['minutes']!r} is not an integer",
                                    path=path, row=row_no) from None
        if not 1 <= minutes <= MAX_MINUTES:
            raise MinutesOutOfRange(f"minutes {minutes} outside 1..{MAX_MINUTES}", path=path, row=row_no)
        reports[(a, b)] = minutes

    present = {pid for pair in reports for pid in pair}
    ids = tuple(pid for pid in roster.ids if pid in present)
    local = {pid: i for i, pid in enumerate(ids)}
    n = len(ids)
    C = np.zeros((n, n), dtype=np.int8)
    minutes = np.zeros((n, n), dtype=np.int64)
    for (a, b), m in reports.items():
        C[local[a], local[b]] = 1
        minutes[local[a], local[b]] = m
    return ReportedNetwork(ids, C, minutes, day)


def write_diary(reported, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIARY_COLUMNS)
        for i, j in zip(*np.nonzero(reported.C)):
            w.writerow([reported.ids[i], reported.ids[j], int(reported.minutes[i, j])])


def symmetrize(reported):
    """Resolve discordant durations by keeping the longer report."""
    longest = np.maximum(reported.minutes, reported.minutes.T)
    return DurationMatrix(reported.ids, duration_category(longest))
