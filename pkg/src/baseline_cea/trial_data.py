"""Trial datasets: loading, validation, QALY/cost aggregation and CC/AC case sets.

Utilities and costs are held as ``(n, J + 1)`` float arrays with ``NaN``
marking a missing cell.  Column 0 is the baseline wave.  When a trial did not
collect baseline costs the cost array still has ``J + 1`` columns but column
0 is all-``NaN`` and ``has_baseline_cost`` is False.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import InsufficientDataError, ParseError, ValidationError

UTILITY_MIN = -1.0
UTILITY_MAX = 1.0001
MISSING_TOKENS = frozenset({"", "na"})

CC = "CC"
AC = "AC"
POOLED = "pooled"
PER_ARM = "per-arm"


@dataclass(frozen=True)
class TimeSchedule:
    """Fractions of a year covered by consecutive measurement intervals."""

    deltas: tuple[float, ...]

    def __post_init__(self):
        deltas = tuple(float(x) for x in self.deltas)
        object.__setattr__(self, "deltas", deltas)
        if not deltas:
            raise ValidationError("schedule needs at least one follow-up interval")
        if any(not (d > 0) for d in deltas):
            raise ValidationError(f"schedule deltas must be positive, got {deltas}")
        if sum(deltas) > 1 + 1e-9:
            raise ValidationError(f"schedule deltas sum to {sum(deltas)} > 1")

    @property
    def J(self) -> int:
        return len(self.deltas)

    @classmethod
    def uniform(cls, J: int) -> "TimeSchedule":
        return cls(tuple([1.0 / J] * J))


@dataclass(frozen=True)
class IndividualRecord:
    id: str
    arm: int
    site: int
    utilities: tuple[float | None, ...]
    costs: tuple[float | None, ...]
    covariates: tuple[str | None, ...]


@dataclass(frozen=True)
class OutcomePair:
    e: float
    c: float


def _readonly(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Immutable two-arm trial with per-wave utilities and costs.

    ``covariates`` maps a covariate name to integer level codes (``-1`` for
    missing) indexing into ``covariate_levels[name]``.  The first declared
    level is the reference level used by the regression designs.
    """

    ids: np.ndarray
    arm: np.ndarray
    site: np.ndarray
    utilities: np.ndarray
    costs: np.ndarray
    schedule: TimeSchedule
    has_baseline_cost: bool = True
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    covariate_levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    arm_labels: tuple[str, str] = ("control", "intervention")
    site_count: int = 1

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "ids", _readonly([str(i) for i in self.ids], dtype=object))
        set_(self, "arm", _readonly(self.arm, dtype=np.int64))
        set_(self, "site", _readonly(self.site, dtype=np.int64))
        set_(self, "utilities", _readonly(self.utilities, dtype=float))
        costs = np.array(self.costs, dtype=float, copy=True)
        if not self.has_baseline_cost and costs.ndim == 2 and costs.shape[1] > 0:
            costs[:, 0] = np.nan
        costs.setflags(write=False)
        set_(self, "costs", costs)
        set_(self, "covariates",
             {k: _readonly(v, dtype=np.int64) for k, v in self.covariates.items()})
        set_(self, "covariate_levels",
             {k: tuple(str(x) for x in v) for k, v in self.covariate_levels.items()})
        set_(self, "arm_labels", tuple(self.arm_labels))
        set_(self, "site_count", int(self.site_count))
        self._validate()

    def _validate(self):
        n, width = self.n, self.schedule.J + 1
        if self.utilities.shape != (n, width) or self.costs.shape != (n, width):
            raise ValidationError(
                f"utility/cost arrays must have shape ({n}, {width}); got "
                f"{self.utilities.shape} and {self.costs.shape}")
        if self.arm.shape != (n,) or self.site.shape != (n,):
            raise ValidationError("arm and site vectors must match the number of individuals")
        if len(set(self.ids.tolist())) != n:
            raise ValidationError("individual ids must be unique")
        bad = np.flatnonzero((self.arm != 0) & (self.arm != 1))
        if bad.size:
            raise ValidationError(f"arm must be 0 or 1 for individual {self.ids[bad[0]]}")
        if self.site_count < 1:
            raise ValidationError("site_count must be positive")
        bad = np.flatnonzero((self.site < 0) | (self.site >= self.site_count))
        if bad.size:
            raise ValidationError(
                f"site {self.site[bad[0]]} of individual {self.ids[bad[0]]} "
                f"outside [0, {self.site_count})")
        u = self.utilities
        bad = np.argwhere(~np.isnan(u) & ((u < UTILITY_MIN) | (u > UTILITY_MAX)))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(
                f"utility u{j}={u[i, j]} of individual {self.ids[i]} outside "
                f"[{UTILITY_MIN}, {UTILITY_MAX}]")
        bad = np.argwhere(~np.isnan(self.costs) & (self.costs < 0))
        if bad.size:
            i, j = bad[0]
            raise ValidationError(f"cost c{j} of individual {self.ids[i]} is negative")
        for name, codes in self.covariates.items():
            levels = self.covariate_levels.get(name)
            if levels is None:
                raise ValidationError(f"covariate {name!r} has no declared levels")
            if codes.shape != (n,) or np.any((codes < -1) | (codes >= len(levels))):
                raise ValidationError(f"covariate {name!r} has invalid level codes")

    @property
    def n(self) -> int:
        return int(self.ids.shape[0])

    @property
    def J(self) -> int:
        return self.schedule.J

    @property
    def covariate_names(self) -> list[str]:
        return list(self.covariates)

    def arm_counts(self) -> tuple[int, int]:
        return int(np.sum(self.arm == 0)), int(np.sum(self.arm == 1))

    @property
    def individuals(self) -> list[IndividualRecord]:
        def opt(x):
            return None if np.isnan(x) else float(x)

        names = self.covariate_names
        out = []
        for i in range(self.n):
            covs = []
            for name in names:
                code = self.covariates[name][i]
                covs.append(None if code < 0 else self.covariate_levels[name][code])
            out.append(IndividualRecord(
                id=self.ids[i], arm=int(self.arm[i]), site=int(self.site[i]),
                utilities=tuple(opt(x) for x in self.utilities[i]),
                costs=tuple(opt(x) for x in self.costs[i]),
                covariates=tuple(covs)))
        return out

    def take(self, index) -> "TrialDataset":
        """Row subset (or resample, when ``index`` repeats rows).

        Repeated rows get suffixed ids so the result stays a valid dataset.
        """
        index = np.asarray(index, dtype=np.int64)
        ids = self.ids[index]
        if len(set(ids.tolist())) != len(ids):
            ids = np.array([f"{x}#{k}" for k, x in enumerate(ids)], dtype=object)
        return TrialDataset(
            ids=ids, arm=self.arm[index], site=self.site[index],
            utilities=self.utilities[index], costs=self.costs[index],
            schedule=self.schedule, has_baseline_cost=self.has_baseline_cost,
            covariates={k: v[index] for k, v in self.covariates.items()},
            covariate_levels=self.covariate_levels, arm_labels=self.arm_labels,
            site_count=self.site_count)

    def with_values(self, utilities=None, costs=None) -> "TrialDataset":
        return TrialDataset(
            ids=self.ids, arm=self.arm, site=self.site,
            utilities=self.utilities if utilities is None else utilities,
            costs=self.costs if costs is None else costs,
            schedule=self.schedule, has_baseline_cost=self.has_baseline_cost,
            covariates=self.covariates, covariate_levels=self.covariate_levels,
            arm_labels=self.arm_labels, site_count=self.site_count)


# --------------------------------------------------------------------------
# Input / output
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Schema:
    """Maps file columns to dataset roles.

    ``utilities``/``costs`` default to auto-detected ``u0..uJ`` and
    ``c0..cJ`` (``c0`` optional).  ``covariates=None`` treats every column
    without another role as a covariate.  ``deltas=None`` spreads the
    follow-up waves evenly over one year.
    """

    id: str = "id"
    arm: str = "arm"
    site: str | None = "site"
    utilities: tuple[str, ...] | None = None
    costs: tuple[str, ...] | None = None
    covariates: tuple[str, ...] | None = None
    covariate_levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    arm_codes: Mapping[str, int] = field(default_factory=lambda: {"0": 0, "1": 1})
    arm_labels: tuple[str, str] = ("control", "intervention")
    deltas: tuple[float, ...] | None = None
    site_count: int | None = None

    @classmethod
    def from_mapping(cls, m: Mapping) -> "Schema":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(m) - known
        if unknown:
            raise ValidationError(f"unknown schema keys: {sorted(unknown)}")
        kw = dict(m)
        for key in ("utilities", "costs", "covariates", "deltas", "arm_labels"):
            if key in kw and kw[key] is not None:
                kw[key] = tuple(kw[key])
        if "covariate_levels" in kw:
            kw["covariate_levels"] = {k: tuple(v) for k, v in kw["covariate_levels"].items()}
        if "arm_codes" in kw:
            kw["arm_codes"] = {str(k): int(v) for k, v in kw["arm_codes"].items()}
        return cls(**kw)


def _wave_columns(header, prefix):
    found = {}
    for name in header:
        m = re.fullmatch(prefix + r"(\d+)", name)
        if m:
            found[int(m.group(1))] = name
    return found


def _cell(text: str, row: int, column: str) -> float:
    value = text.strip()
    if value.lower() in MISSING_TOKENS:
        return math.nan
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row) from None
    if not math.isfinite(x):
        raise ParseError(f"column {column!r}: non-finite value {text!r}", row)
    return x


def _sort_labels(labels):
    try:
        return sorted(labels, key=lambda s: float(s))
    except ValueError:
        return sorted(labels)


def load_dataset(path, schema: Schema | None = None) -> TrialDataset:
    """Read a comma-delimited trial file into a validated :class:`TrialDataset`.

    Missing cells are empty or ``NA`` (any case).  Errors carry the file line
    number, counting the header as line 1.
    """
    schema = schema or Schema()
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("file is empty") from None
        rows = list(reader)

    for col in (schema.id, schema.arm):
        if col not in header:
            raise ParseError(f"required column {col!r} missing from header", 1)
    site_col = schema.site if schema.site in header else None

    if schema.utilities is not None:
        u_cols = list(schema.utilities)
    else:
        found = _wave_columns(header, "u")
        if 0 not in found or len(found) < 2 or sorted(found) != list(range(len(found))):
            raise ParseError("utility columns must be a contiguous u0..uJ block", 1)
        u_cols = [found[j] for j in range(len(found))]
    J = len(u_cols) - 1

    if schema.costs is not None:
        c_cols = list(schema.costs)
        has_c0 = len(c_cols) == J + 1
        if not has_c0 and len(c_cols) != J:
            raise ParseError(f"expected {J} or {J + 1} cost columns, got {len(c_cols)}", 1)
    else:
        found = _wave_columns(header, "c")
        has_c0 = 0 in found
        wanted = list(range(0 if has_c0 else 1, J + 1))
        if sorted(found) != wanted:
            raise ParseError(f"cost columns must be c1..c{J} with optional c0", 1)
        c_cols = [found[j] for j in wanted]
    for col in u_cols + c_cols:
        if col not in header:
            raise ParseError(f"column {col!r} missing from header", 1)

    taken = {schema.id, schema.arm, site_col, *u_cols, *c_cols}
    if schema.covariates is None:
        cov_cols = [h for h in header if h not in taken]
    else:
        cov_cols = list(schema.covariates)
        for col in cov_cols:
            if col not in header:
                raise ParseError(f"covariate column {col!r} missing from header", 1)

    pos = {name: k for k, name in enumerate(header)}
    n = len(rows)
    ids, arms, sites = [], np.empty(n, dtype=np.int64), []
    U = np.full((n, J + 1), np.nan)
    C = np.full((n, J + 1), np.nan)
    cov_raw = {name: [] for name in cov_cols}
    c_offset = 0 if has_c0 else 1

    for k, fields in enumerate(rows):
        line = k + 2
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(fields)}", line)
        ids.append(fields[pos[schema.id]].strip())
        code = fields[pos[schema.arm]].strip()
        if code not in schema.arm_codes:
            raise ValidationError(
                f"unknown arm code {code!r} (known: {sorted(schema.arm_codes)})", line)
        arms[k] = schema.arm_codes[code]
        sites.append(fields[pos[site_col]].strip() if site_col else "0")
        for j, col in enumerate(u_cols):
            x = _cell(fields[pos[col]], line, col)
            if not math.isnan(x) and not (UTILITY_MIN <= x <= UTILITY_MAX):
                raise ValidationError(
                    f"utility {col}={x} outside [{UTILITY_MIN}, {UTILITY_MAX}]", line)
            U[k, j] = x
        for j, col in enumerate(c_cols):
            x = _cell(fields[pos[col]], line, col)
            if x < 0:
                raise ValidationError(f"cost {col}={x} is negative", line)
            C[k, j + c_offset] = x
        for col in cov_cols:
            s = fields[pos[col]].strip()
            cov_raw[col].append(None if s.lower() in MISSING_TOKENS else s)

    if any(s.lower() in MISSING_TOKENS for s in sites):
        raise ValidationError("site column has missing entries")
    if all(re.fullmatch(r"\d+", s) for s in sites):
        site_idx = np.array([int(s) for s in sites], dtype=np.int64)
        site_count = int(site_idx.max()) + 1 if n else 1
    else:
        labels = _sort_labels(set(sites))
        lookup = {s: i for i, s in enumerate(labels)}
        site_idx = np.array([lookup[s] for s in sites], dtype=np.int64)
        site_count = len(labels)
    if schema.site_count is not None:
        site_count = int(schema.site_count)

    covariates, levels = {}, {}
    for col in cov_cols:
        observed = {x for x in cov_raw[col] if x is not None}
        declared = schema.covariate_levels.get(col)
        if declared is None:
            declared = tuple(_sort_labels(observed))
        else:
            extra = observed - set(declared)
            if extra:
                raise ValidationError(f"covariate {col!r} has undeclared levels {sorted(extra)}")
        lookup = {s: i for i, s in enumerate(declared)}
        covariates[col] = np.array([-1 if x is None else lookup[x] for x in cov_raw[col]])
        levels[col] = tuple(declared)

    schedule = TimeSchedule(schema.deltas) if schema.deltas is not None else TimeSchedule.uniform(J)
    if schedule.J != J:
        raise ValidationError(f"schedule has {schedule.J} intervals but file has {J} follow-up waves")

    return TrialDataset(
        ids=ids, arm=arms, site=site_idx, utilities=U, costs=C, schedule=schedule,
        has_baseline_cost=has_c0, covariates=covariates, covariate_levels=levels,
        arm_labels=schema.arm_labels, site_count=site_count)


def _fmt(x: float) -> str:
    return "NA" if math.isnan(x) else repr(float(x))


def write_dataset(d: TrialDataset, path) -> None:
    """Write ``d`` in the input format; :func:`load_dataset` reads it back exactly."""
    J = d.J
    cost_waves = range(0 if d.has_baseline_cost else 1, J + 1)
    header = ["id", "arm", "site"] + [f"u{j}" for j in range(J + 1)]
    header += [f"c{j}" for j in cost_waves] + d.covariate_names
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(d.n):
            row = [d.ids[i], int(d.arm[i]), int(d.site[i])]
            row += [_fmt(x) for x in d.utilities[i]]
            row += [_fmt(d.costs[i, j]) for j in cost_waves]
            for name in d.covariate_names:
                code = d.covariates[name][i]
                row.append("NA" if code < 0 else d.covariate_levels[name][code])
            w.writerow(row)


def schema_for(d: TrialDataset) -> Schema:
    """Schema that reloads a file written by :func:`write_dataset` losslessly."""
    return Schema(covariates=tuple(d.covariate_names),
                  covariate_levels=dict(d.covariate_levels),
                  arm_labels=d.arm_labels, deltas=d.schedule.deltas,
                  site_count=d.site_count)


# --------------------------------------------------------------------------
# Outcomes and case sets
# --------------------------------------------------------------------------

def outcome_arrays(d: TrialDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-individual QALYs and total follow-up costs, NaN where incomplete."""
    U = d.utilities
    delta = np.asarray(d.schedule.deltas)
    e = ((U[:, 1:] + U[:, :-1]) * (delta / 2.0)).sum(axis=1)
    c = d.costs[:, 1:].sum(axis=1)
    return e, c


def compute_outcomes(d: TrialDataset) -> dict[str, OutcomePair]:
    """QALYs by trapezoidal area under the utility curve, and summed follow-up costs.

    Baseline cost is not part of the total.  Individuals with any missing
    utility or follow-up cost are left out.
    """
    e, c = outcome_arrays(d)
    ok = np.isfinite(e) & np.isfinite(c)
    return {d.ids[i]: OutcomePair(float(e[i]), float(c[i])) for i in np.flatnonzero(ok)}


@dataclass(frozen=True, eq=False)
class CaseSet:
    kind: str
    mask: np.ndarray
    member_ids: frozenset
    counts: tuple[int, int]

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def _caseset(d: TrialDataset, kind: str, mask: np.ndarray) -> CaseSet:
    mask = _readonly(mask, dtype=bool)
    counts = (int(np.sum(mask & (d.arm == 0))), int(np.sum(mask & (d.arm == 1))))
    return CaseSet(kind, mask, frozenset(d.ids[mask].tolist()), counts)


def case_masks(d: TrialDataset) -> tuple[np.ndarray, np.ndarray]:
    cost_cols = slice(0, None) if d.has_baseline_cost else slice(1, None)
    cc = ~np.isnan(d.utilities).any(axis=1) & ~np.isnan(d.costs[:, cost_cols]).any(axis=1)
    ac = ~np.isnan(d.utilities[:, 0])
    if d.has_baseline_cost:
        ac &= ~np.isnan(d.costs[:, 0])
    return cc, ac


def case_partition(d: TrialDataset) -> tuple[CaseSet, CaseSet]:
    """Complete cases (every wave observed) and available cases (baseline observed)."""
    cc, ac = case_masks(d)
    return _caseset(d, CC, cc), _caseset(d, AC, ac)


@dataclass(frozen=True)
class BaselineMeans:
    """Baseline means indexed by arm.

    With pooled means both entries hold the same value.  ``c0`` is None when
    the trial has no baseline costs.  ``covariate_shares[name][t][level]`` is
    the proportion of that level among the case set (per-arm or pooled).
    """

    kind: str
    pooling: str
    u0: tuple[float, float]
    c0: tuple[float, float] | None
    covariate_shares: Mapping[str, tuple[Mapping[str, float], Mapping[str, float]]] = field(
        default_factory=dict)


def _fmean(x) -> float:
    return math.fsum(x) / len(x)


def baseline_means(d: TrialDataset, cs: CaseSet, pooling: str = POOLED) -> BaselineMeans:
    """Arithmetic baseline means over a case set.

    Sums are exactly rounded, so the result does not depend on row order.
    """
    if pooling not in (POOLED, PER_ARM):
        raise ValueError(f"pooling must be {POOLED!r} or {PER_ARM!r}")
    if cs.mask.shape != (d.n,):
        raise ValueError("case set does not belong to this dataset")
    if pooling == POOLED:
        groups = [cs.mask, cs.mask]
    else:
        groups = [cs.mask & (d.arm == 0), cs.mask & (d.arm == 1)]
    for t, g in enumerate(groups):
        if not g.any():
            where = "" if pooling == POOLED else f" in arm {t}"
            raise InsufficientDataError(f"{cs.kind} case set is empty{where}")
    u0 = tuple(_fmean(d.utilities[g, 0].tolist()) for g in groups)
    c0 = None
    if d.has_baseline_cost:
        c0 = tuple(_fmean(d.costs[g, 0].tolist()) for g in groups)
    shares = {}
    for name, codes in d.covariates.items():
        levels = d.covariate_levels[name]
        per = []
        for g in groups:
            sub = codes[g]
            sub = sub[sub >= 0]
            per.append({level: float(np.sum(sub == k)) / max(len(sub), 1)
                        for k, level in enumerate(levels)})
        shares[name] = tuple(per)
    return BaselineMeans(cs.kind, pooling, u0, c0, shares)


# --------------------------------------------------------------------------
# Missingness description
# --------------------------------------------------------------------------

def _stats(x: np.ndarray):
    if x.size == 0:
        return None, None
    m = _fmean(x.tolist())
    sd = math.sqrt(math.fsum(((x - m) ** 2).tolist()) / (x.size - 1)) if x.size > 1 else 0.0
    return m, sd


@dataclass(frozen=True)
class BaselineComparison:
    variable: str
    arm: int
    n_cc: int
    n_ac: int
    cc_mean: float | None
    cc_sd: float | None
    ac_mean: float | None
    ac_sd: float | None
    difference: float | None
    bin_edges: tuple[float, ...]
    cc_counts: tuple[int, ...]
    ac_counts: tuple[int, ...]


@dataclass(frozen=True)
class MissingnessReport:
    n: tuple[int, int]
    completion: tuple[float, float]
    baseline_available: tuple[float, float]
    comparisons: tuple[BaselineComparison, ...]

    def comparison(self, variable: str, arm: int) -> BaselineComparison:
        for c in self.comparisons:
            if c.variable == variable and c.arm == arm:
                return c
        raise KeyError((variable, arm))

    def to_dict(self) -> dict:
        return {
            "n": list(self.n),
            "completion": list(self.completion),
            "baseline_available": list(self.baseline_available),
            "comparisons": [
                {**c.__dict__, "bin_edges": list(c.bin_edges),
                 "cc_counts": list(c.cc_counts), "ac_counts": list(c.ac_counts)}
                for c in self.comparisons],
        }

    def to_text(self) -> str:
        lines = []
        for t in (0, 1):
            lines.append(f"arm{t}.n = {self.n[t]}")
            lines.append(f"arm{t}.completion = {self.completion[t]:.4f}")
            lines.append(f"arm{t}.baseline_available = {self.baseline_available[t]:.4f}")
        for c in self.comparisons:
            key = f"{c.variable}.arm{c.arm}"
            lines.append(f"{key}.n_cc = {c.n_cc}")
            lines.append(f"{key}.n_ac = {c.n_ac}")
            for label in ("cc_mean", "cc_sd", "ac_mean", "ac_sd", "difference"):
                v = getattr(c, label)
                lines.append(f"{key}.{label} = {'NA' if v is None else f'{v:.6g}'}")
        return "\n".join(lines) + "\n"


def describe_missingness(d: TrialDataset, bins: int = 20) -> MissingnessReport:
    """Per-arm completion rates and CC-versus-AC baseline distributions.

    ``difference`` is AC mean minus CC mean.  Histograms for a variable/arm
    share bin edges so the CC and AC counts can be overlaid.
    """
    cc, ac = case_masks(d)
    n = d.arm_counts()
    completion = tuple(float(np.sum(cc & (d.arm == t))) / n[t] if n[t] else 0.0 for t in (0, 1))
    available = tuple(float(np.sum(ac & (d.arm == t))) / n[t] if n[t] else 0.0 for t in (0, 1))
    variables = [("u0", d.utilities[:, 0])]
    if d.has_baseline_cost:
        variables.append(("c0", d.costs[:, 0]))
    comps = []
    for name, values in variables:
        for t in (0, 1):
            x_cc = values[cc & (d.arm == t)]
            x_ac = values[ac & (d.arm == t)]
            m_cc, s_cc = _stats(x_cc)
            m_ac, s_ac = _stats(x_ac)
            diff = None if m_cc is None or m_ac is None else m_ac - m_cc
            if x_ac.size:
                lo, hi = float(x_ac.min()), float(x_ac.max())
                if hi <= lo:
                    hi = lo + 1.0
                edges = np.linspace(lo, hi, bins + 1)
                counts_cc = np.histogram(x_cc, edges)[0]
                counts_ac = np.histogram(x_ac, edges)[0]
            else:
                edges, counts_cc, counts_ac = np.array([]), np.array([]), np.array([])
            comps.append(BaselineComparison(
                name, t, int(x_cc.size), int(x_ac.size), m_cc, s_cc, m_ac, s_ac, diff,
                tuple(float(x) for x in edges), tuple(int(x) for x in counts_cc),
                tuple(int(x) for x in counts_ac)))
    return MissingnessReport(n, completion, available, tuple(comps))


__all__ = [
    "AC", "CC", "PER_ARM", "POOLED", "BaselineComparison", "BaselineMeans", "CaseSet",
    "IndividualRecord", "MissingnessReport", "OutcomePair", "Schema", "TimeSchedule",
    "TrialDataset", "baseline_means", "case_masks", "case_partition", "compute_outcomes",
    "describe_missingness", "load_dataset", "outcome_arrays", "schema_for", "write_dataset",
]

