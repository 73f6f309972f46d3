"""The model ladder and the regression inputs it implies.

A model is a pair of Gaussian linear regressions fitted on complete cases:
QALYs on baseline utility and cost on baseline cost, optionally with
categorical covariates, site-level random effects, and (joint family) the
individual QALY entering the cost equation so that ``p(e, c) = p(e) p(c | e)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, ValidationError
from .trial_data import TrialDataset, case_masks, outcome_arrays

INDEPENDENT = "independent"
JOINT = "joint"
FAMILIES = (INDEPENDENT, JOINT)

BASIC = "basic"
COVARIATE = "covariate"
ML_SLOPE = "multilevel-slope"
ML_INTERCEPT = "multilevel-intercept"
STRUCTURES = (BASIC, COVARIATE, ML_SLOPE, ML_INTERCEPT)
MULTILEVEL = (ML_SLOPE, ML_INTERCEPT)

STRATIFIED = "arm-stratified"
SHARED = "shared-slope"
PARAMETERIZATIONS = (STRATIFIED, SHARED)

# Site slopes as zero-mean deviations around the fixed baseline slope, or
# as literal zero-mean slopes with no fixed baseline slope at all.
CENTERINGS = ("common", "zero")

_ALIASES = {"joint-factorized": JOINT, "ind": INDEPENDENT, "multilevel": ML_SLOPE,
            "stratified": STRATIFIED, "shared": SHARED}


@dataclass(frozen=True)
class PriorSet:
    """Normal(0, coef_sd) on every regression coefficient; Uniform bounds on log-sds."""

    coef_sd: float = 1000.0
    log_sd_bounds: tuple[float, float] = (-5.0, 10.0)
    re_log_sd_bounds: tuple[float, float] = (-5.0, 10.0)

    def __post_init__(self):
        if not self.coef_sd > 0:
            raise ConfigurationError("coef_sd must be positive")
        for lo, hi in (self.log_sd_bounds, self.re_log_sd_bounds):
            if not lo < hi:
                raise ConfigurationError(f"log-sd bounds must satisfy lower < upper, got {(lo, hi)}")


@dataclass(frozen=True)
class ModelSpec:
    family: str = INDEPENDENT
    structure: str = BASIC
    parameterization: str = STRATIFIED
    covariates: tuple[str, ...] = ()
    reference_levels: Mapping[str, str] = field(default_factory=dict)
    priors: PriorSet = field(default_factory=PriorSet)
    slope_centering: str = "common"
    fit_cases: str = "CC"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.structure not in STRUCTURES:
            raise ConfigurationError(
                f"unknown structure {self.structure!r}; expected one of {STRUCTURES}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ConfigurationError(
                f"unknown parameterization {self.parameterization!r}; "
                f"expected one of {PARAMETERIZATIONS}")
        if self.slope_centering not in CENTERINGS:
            raise ConfigurationError(f"slope_centering must be one of {CENTERINGS}")
        if self.fit_cases != "CC":
            raise ConfigurationError("models are always fitted on complete cases")
        if self.structure == COVARIATE and not self.covariates:
            raise ConfigurationError("covariate structure needs at least one covariate")
        if self.structure == BASIC and self.covariates:
            raise ConfigurationError("basic structure takes no covariates")
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "reference_levels", dict(self.reference_levels))

    @property
    def joint(self) -> bool:
        return self.family == JOINT

    @property
    def multilevel(self) -> bool:
        return self.structure in MULTILEVEL

    @property
    def stratified(self) -> bool:
        return self.parameterization == STRATIFIED

    @property
    def label(self) -> str:
        return f"{self.family}.{self.structure}"


def _canon(value, choices, what):
    value = _ALIASES.get(value, value)
    if value not in choices:
        raise ConfigurationError(f"unknown {what} {value!r}; expected one of {choices}")
    return value


def build_spec(config: Mapping, d: TrialDataset | None = None) -> ModelSpec:
    """Validate a model configuration (optionally against a dataset) into a spec.

    Multilevel structures and covariate-bearing structures default to every
    covariate in ``d`` when no covariate list is given.
    """
    config = dict(config)
    family = _canon(config.pop("family", INDEPENDENT), FAMILIES, "family")
    structure = _canon(config.pop("structure", BASIC), STRUCTURES, "structure")
    param = _canon(config.pop("parameterization", STRATIFIED), PARAMETERIZATIONS,
                   "parameterization")
    covariates = config.pop("covariates", None)
    refs = dict(config.pop("reference_levels", {}))
    centering = config.pop("slope_centering", "common")
    priors = config.pop("priors", None)
    if isinstance(priors, Mapping):
        priors = PriorSet(**{k: tuple(v) if isinstance(v, list) else v for k, v in priors.items()})
    priors = priors or PriorSet()
    if config:
        raise ConfigurationError(f"unknown model keys: {sorted(config)}")

    if covariates is None:
        if structure in (COVARIATE, *MULTILEVEL) and d is not None:
            covariates = tuple(d.covariate_names)
        else:
            covariates = ()
    covariates = tuple(covariates)

    if d is not None:
        if structure in MULTILEVEL and d.site_count < 2:
            raise ConfigurationError(
                f"{structure} structure needs more than one site; dataset has {d.site_count}")
        for name in covariates:
            if name not in d.covariates:
                raise ConfigurationError(f"covariate {name!r} not in dataset")
        for name, level in refs.items():
            if name in d.covariates and level not in d.covariate_levels[name]:
                raise ConfigurationError(f"reference level {level!r} not a level of {name!r}")
    return ModelSpec(family, structure, param, covariates, refs, priors, centering)


# --------------------------------------------------------------------------
# Regression inputs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Column:
    """One design column.

    ``role`` is one of intercept, arm, u0, c0, qaly, covariate, site-slope,
    site-intercept.  ``arm`` is set for arm-stratified columns, ``site`` for
    random-effect columns, ``level`` for covariate indicators as
    ``(covariate, level)``.
    """

    name: str
    role: str
    arm: int | None = None
    site: int | None = None
    level: tuple[str, str] | None = None

    @property
    def random(self) -> bool:
        return self.role in ("site-slope", "site-intercept")


_NAME = re.compile(r"(?P<eq>[ec]):(?P<body>[^\[]+)(?:\[(?P<idx>\d+)\])?")


def parse_column(name: str) -> Column | None:
    """Recover column metadata from a parameter name; ``None`` for sd parameters."""
    m = _NAME.fullmatch(name)
    if m is None:
        raise ValueError(f"not a model parameter name: {name!r}")
    body, idx = m.group("body"), m.group("idx")
    idx = None if idx is None else int(idx)
    if body.startswith("sigma"):
        return None
    if body in ("site-slope", "site-intercept"):
        return Column(name, body, site=idx)
    if body in ("(intercept)", "arm", "u0", "c0", "qaly"):
        role = "intercept" if body == "(intercept)" else body
        return Column(name, role, arm=idx)
    if "=" in body:
        cov, level = body.split("=", 1)
        return Column(name, "covariate", arm=idx, level=(cov, level))
    raise ValueError(f"unrecognised parameter name: {name!r}")


@dataclass(frozen=True, eq=False)
class EquationInputs:
    """Response, design, and variance structure of one regression equation.

    Random-effect columns follow the fixed ones.  ``resid_group[i]`` selects
    which residual sd applies to row ``i`` (the arm under arm-stratified
    parameterization, else 0).
    """

    name: str
    y: np.ndarray
    X: np.ndarray
    columns: tuple[Column, ...]
    resid_group: np.ndarray
    resid_names: tuple[str, ...]
    re_names: tuple[str, ...] = ()

    @property
    def n_fixed(self) -> int:
        return sum(not c.random for c in self.columns)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, role: str, arm: int | None = None) -> list[int]:
        return [k for k, c in enumerate(self.columns)
                if c.role == role and (arm is None or c.arm is None or c.arm == arm)]


@dataclass(frozen=True, eq=False)
class RegressionInputs:
    spec: ModelSpec
    qaly: EquationInputs
    cost: EquationInputs
    ids: np.ndarray
    arm: np.ndarray
    site: np.ndarray
    site_count: int
    has_baseline_cost: bool
    covariate_levels: Mapping[str, tuple[str, ...]]

    @property
    def equations(self) -> tuple[EquationInputs, EquationInputs]:
        return self.qaly, self.cost

    @property
    def cost_includes_qaly(self) -> bool:
        return self.spec.joint

    def site_sizes(self) -> np.ndarray:
        return np.bincount(self.site, minlength=self.site_count)


def _reference(spec: ModelSpec, name: str, levels: tuple[str, ...]) -> str:
    return spec.reference_levels.get(name, levels[0])


def _indicator_columns(spec, d, mask):
    """One-hot blocks, ``levels - 1`` columns each, against the reference level."""
    out = []
    for name in spec.covariates:
        levels = d.covariate_levels[name]
        codes = d.covariates[name][mask]
        if np.any(codes < 0):
            raise ValidationError(f"covariate {name!r} is missing for some complete cases")
        ref = _reference(spec, name, levels)
        for k, level in enumerate(levels):
            if level == ref:
                continue
            out.append(((name, level), (codes == k).astype(float)))
    return out


def _design(name, spec, arm, baseline, baseline_role, covs, site, site_count, qaly):
    strat = spec.stratified
    cols, data = [], []
    n = arm.shape[0]
    arm_ind = [(arm == t).astype(float) for t in (0, 1)]

    def add(col, values):
        cols.append(col)
        data.append(values)

    if strat:
        for t in (0, 1):
            add(Column(f"{name}:(intercept)[{t}]", "intercept", arm=t), arm_ind[t])
    else:
        add(Column(f"{name}:(intercept)", "intercept"), np.ones(n))
        add(Column(f"{name}:arm", "arm"), arm.astype(float))

    slope_is_random = spec.structure == ML_SLOPE and baseline is not None
    fixed_slope = baseline is not None and not (slope_is_random and spec.slope_centering == "zero")
    if fixed_slope:
        if strat:
            for t in (0, 1):
                add(Column(f"{name}:{baseline_role}[{t}]", baseline_role, arm=t),
                    arm_ind[t] * baseline)
        else:
            add(Column(f"{name}:{baseline_role}", baseline_role), baseline.copy())

    for (cov, level), ind in covs:
        label = f"{cov}={level}"
        if strat:
            for t in (0, 1):
                add(Column(f"{name}:{label}[{t}]", "covariate", arm=t, level=(cov, level)),
                    arm_ind[t] * ind)
        else:
            add(Column(f"{name}:{label}", "covariate", level=(cov, level)), ind)

    if qaly is not None:
        if strat:
            for t in (0, 1):
                add(Column(f"{name}:qaly[{t}]", "qaly", arm=t), arm_ind[t] * qaly)
        else:
            add(Column(f"{name}:qaly", "qaly"), qaly.copy())

    re_names = ()
    if slope_is_random or spec.structure == ML_INTERCEPT:
        role = "site-slope" if slope_is_random else "site-intercept"
        base = baseline if slope_is_random else np.ones(n)
        for s in range(site_count):
            add(Column(f"{name}:{role}[{s}]", role, site=s), (site == s) * base)
        re_names = (f"{name}:sigma_site",)

    X = np.column_stack(data) if data else np.zeros((n, 0))
    if strat:
        resid_group, resid_names = arm.copy(), (f"{name}:sigma[0]", f"{name}:sigma[1]")
    else:
        resid_group, resid_names = np.zeros(n, dtype=np.int64), (f"{name}:sigma",)
    return X, tuple(cols), resid_group, resid_names, re_names


def build_inputs(spec: ModelSpec, d: TrialDataset) -> RegressionInputs:
    """Assemble both regression equations on the complete cases of ``d``."""
    if spec.multilevel and d.site_count < 2:
        raise ConfigurationError(f"{spec.structure} structure needs more than one site")
    for name in spec.covariates:
        if name not in d.covariates:
            raise ConfigurationError(f"covariate {name!r} not in dataset")
    cc, _ = case_masks(d)
    arm = d.arm[cc]
    counts = [int(np.sum(arm == t)) for t in (0, 1)]
    if min(counts) < 2:
        raise InsufficientDataError(
            f"need at least 2 complete cases per arm, have {counts[0]} and {counts[1]}")
    e_all, c_all = outcome_arrays(d)
    e, c = e_all[cc], c_all[cc]
    site = d.site[cc]
    u0 = d.utilities[cc, 0]
    c0 = d.costs[cc, 0] if d.has_baseline_cost else None
    covs = _indicator_columns(spec, d, cc)

    Xe, cols_e, rg_e, rn_e, re_e = _design("e", spec, arm, u0, "u0", covs, site,
                                           d.site_count, None)
    Xc, cols_c, rg_c, rn_c, re_c = _design("c", spec, arm, c0, "c0", covs, site,
                                           d.site_count, e if spec.joint else None)
    qaly = EquationInputs("e", e.copy(), Xe, cols_e, rg_e, rn_e, re_e)
    cost = EquationInputs("c", c.copy(), Xc, cols_c, rg_c, rn_c, re_c)
    return RegressionInputs(spec, qaly, cost, d.ids[cc], arm.copy(), site.copy(),
                            d.site_count, d.has_baseline_cost, dict(d.covariate_levels))


__all__ = [
    "BASIC", "COVARIATE", "Column", "EquationInputs", "FAMILIES", "INDEPENDENT", "JOINT",
    "ML_INTERCEPT", "ML_SLOPE", "ModelSpec", "PARAMETERIZATIONS", "PriorSet",
    "RegressionInputs", "SHARED", "STRATIFIED", "STRUCTURES", "build_inputs", "build_spec",
    "parse_column",
]
