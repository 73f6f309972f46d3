"""Synthetic two-arm trials with known ground truth and configurable dropout.

Outcomes follow the arm-stratified regressions

    e = a0[t] + a2[t] * u0 + covariate effects + site effect + eps_e
    c = b0[t] + b2[t] * c0 + covariate effects + site effect + eps_c

with ``(eps_e, eps_c)`` correlated through a Gaussian copula.  The QALY is
turned into a utility profile (baseline ``u0``, then one flat follow-up
value) whose trapezoidal area equals ``e``; total cost is split across the
follow-up waves in proportion to their length.

Missingness is applied afterwards: baseline utility is deleted with a
per-arm probability, and each individual drops out with probability
``logistic(a[t] + b[t] * z)``, losing every wave from a uniformly chosen
one onward.  ``z`` is constant (MCAR), a covariate level (MAR) or the
standardised baseline utility (MNAR).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import ConfigurationError
from .trial_data import TimeSchedule, TrialDataset

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

UTILITY_FLOOR = -0.594

MCAR = "MCAR"
MAR = "MAR"
MNAR = "MNAR"
MECHANISMS = (MCAR, MAR, MNAR)
_MECH_ALIASES = {"mar-on-covariates": MAR, "mnar-on-baseline": MNAR}

NORMAL = "normal"
LOGNORMAL = "lognormal"

PRESETS = ("menss", "menss-mcar", "pbs", "standard")


def _pair(x, what) -> tuple[float, float]:
    if isinstance(x, (int, float)):
        return float(x), float(x)
    x = tuple(float(v) for v in x)
    if len(x) != 2:
        raise ConfigurationError(f"{what} needs one value per arm")
    return x


@dataclass(frozen=True)
class Covariate:
    levels: tuple[str, ...]
    probs: tuple[float, ...]
    effect_e: tuple[float, ...] = ()
    effect_c: tuple[float, ...] = ()

    def __post_init__(self):
        k = len(self.levels)
        if len(self.probs) != k or abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ConfigurationError("covariate level probabilities must sum to 1")
        for eff in (self.effect_e, self.effect_c):
            if eff and len(eff) != k:
                raise ConfigurationError("one covariate effect per level is needed")


@dataclass(frozen=True)
class ScenarioConfig:
    """Generative model of a complete two-arm trial (arm 0 control, arm 1 intervention)."""

    n: tuple[int, int]
    deltas: tuple[float, ...]
    qaly_intercept: tuple[float, float]
    qaly_slope: tuple[float, float]
    sigma_e: tuple[float, float]
    cost_intercept: tuple[float, float]
    cost_slope: tuple[float, float] = (0.0, 0.0)
    sigma_c: tuple[float, float] = (1.0, 1.0)
    rho: float = 0.0
    cost_noise: str = NORMAL
    u0_mean: tuple[float, float] = (0.7, 0.7)
    u0_sd: tuple[float, float] = (0.15, 0.15)
    c0_mean: tuple[float, float] | None = None
    c0_sd: tuple[float, float] | None = None
    covariates: Mapping[str, Covariate] = field(default_factory=dict)
    site_count: int = 1
    site_arms: tuple[int, ...] | None = None
    site_effect: str = "slope"
    site_sd_e: float = 0.0
    site_sd_c: float = 0.0
    arm_labels: tuple[str, str] = ("control", "intervention")
    name: str = "custom"

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise ConfigurationError("rho must lie in (-1, 1)")
        if min(self.n) < 1:
            raise ConfigurationError("each arm needs at least one individual")
        if min(self.sigma_e) <= 0 or min(self.sigma_c) <= 0:
            raise ConfigurationError("residual standard deviations must be positive")
        if self.site_sd_e < 0 or self.site_sd_c < 0:
            raise ConfigurationError("site standard deviations must be non-negative")
        if self.cost_noise not in (NORMAL, LOGNORMAL):
            raise ConfigurationError(f"cost_noise must be {NORMAL!r} or {LOGNORMAL!r}")
        if self.site_effect not in ("slope", "intercept"):
            raise ConfigurationError("site_effect must be 'slope' or 'intercept'")
        if (self.c0_mean is None) != (self.c0_sd is None):
            raise ConfigurationError("baseline cost needs both a mean and an sd")
        for m, s in zip(self.u0_mean, self.u0_sd):
            if not (0 < m < 1 and 0 < s * s < m * (1 - m)):
                raise ConfigurationError(f"no beta distribution with mean {m} and sd {s}")
        if self.site_arms is not None:
            if len(self.site_arms) != self.site_count:
                raise ConfigurationError("site_arms needs one arm per site")
            if not {0, 1} <= set(self.site_arms):
                raise ConfigurationError("each arm needs at least one site")
        TimeSchedule(self.deltas)

    @property
    def has_baseline_cost(self) -> bool:
        return self.c0_mean is not None

    def u0_distribution(self, arm: int):
        """Beta distribution of baseline utility, matched to the mean and sd."""
        m, s = self.u0_mean[arm], self.u0_sd[arm]
        k = m * (1 - m) / (s * s) - 1
        return stats.beta(m * k, (1 - m) * k)


@dataclass(frozen=True)
class MechanismConfig:
    """Dropout ``P = logistic(a[t] + b[t] * z)`` plus baseline deletion rates."""

    kind: str = MCAR
    a: tuple[float, float] = (-math.inf, -math.inf)
    b: tuple[float, float] = (0.0, 0.0)
    baseline_missing: tuple[float, float] = (0.0, 0.0)
    baseline_cost_missing: tuple[float, float] = (0.0, 0.0)
    covariate: str | None = None
    center: float | None = None
    scale: float | None = None

    def __post_init__(self):
        kind = _MECH_ALIASES.get(str(self.kind).lower(), str(self.kind).upper())
        if kind not in MECHANISMS:
            raise ConfigurationError(f"unknown missingness mechanism {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        for p in (*self.baseline_missing, *self.baseline_cost_missing):
            if not 0 <= p <= 1:
                raise ConfigurationError("baseline missingness probabilities must lie in [0, 1]")
        if kind == MAR and not self.covariate:
            raise ConfigurationError("MAR mechanism needs a covariate")
        if self.scale is not None and self.scale <= 0:
            raise ConfigurationError("scale must be positive")

    @classmethod
    def mcar(cls, dropout=(0.0, 0.0), baseline_missing=(0.0, 0.0)) -> "MechanismConfig":
        a = tuple(float(special.logit(p)) for p in _pair(dropout, "dropout"))
        return cls(MCAR, a, (0.0, 0.0), _pair(baseline_missing, "baseline_missing"))

    def dropout_probability(self, arm, z) -> np.ndarray:
        a = np.asarray(self.a)[arm]
        b = np.asarray(self.b)[arm]
        if self.kind == MCAR:
            return special.expit(a + 0 * np.asarray(z, dtype=float))
        return special.expit(a + b * z)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Parameters and latent quantities behind a generated dataset."""

    scenario: ScenarioConfig
    beta3: tuple[float, float] | None
    e_linear: np.ndarray
    c_linear: np.ndarray
    site_effect_e: np.ndarray
    site_effect_c: np.ndarray
    clipped: int


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) % 2**64))


def _sites(sc: ScenarioConfig, arm, rng) -> np.ndarray:
    if sc.site_count == 1:
        return np.zeros(arm.size, dtype=np.int64)
    site = np.empty(arm.size, dtype=np.int64)
    for t in (0, 1):
        rows = np.flatnonzero(arm == t)
        if sc.site_arms is None:
            pool = np.arange(sc.site_count)
        else:
            pool = np.flatnonzero(np.asarray(sc.site_arms) == t)
        # every site of the arm gets at least one individual when possible
        base = np.resize(pool, min(rows.size, pool.size))
        rest = rng.choice(pool, size=rows.size - base.size)
        site[rows] = rng.permutation(np.concatenate([base, rest]))
    return site


def generate(sc: ScenarioConfig, seed: int) -> tuple[TrialDataset, GroundTruth]:
    """Draw a complete dataset from ``sc``; identical seeds give identical data."""
    rng = _rng(seed)
    n0, n1 = sc.n
    n = n0 + n1
    arm = np.repeat([0, 1], [n0, n1])
    site = _sites(sc, arm, rng)
    sched = TimeSchedule(sc.deltas)
    deltas = np.asarray(sched.deltas)
    T = float(deltas.sum())

    u0 = np.empty(n)
    for t in (0, 1):
        u0[arm == t] = sc.u0_distribution(t).rvs(size=int(np.sum(arm == t)), random_state=rng)
    if sc.has_baseline_cost:
        c0 = np.empty(n)
        for t in (0, 1):
            m, s = sc.c0_mean[t], sc.c0_sd[t]
            sl = math.sqrt(math.log1p((s / m) ** 2))
            c0[arm == t] = rng.lognormal(math.log(m) - sl * sl / 2, sl, size=int(np.sum(arm == t)))
    else:
        c0 = np.zeros(n)

    codes, levels = {}, {}
    e_lin = np.asarray(sc.qaly_intercept)[arm] + np.asarray(sc.qaly_slope)[arm] * u0
    c_lin = np.asarray(sc.cost_intercept)[arm] + np.asarray(sc.cost_slope)[arm] * c0
    for name, cov in sc.covariates.items():
        k = rng.choice(len(cov.levels), size=n, p=np.asarray(cov.probs))
        codes[name], levels[name] = k, cov.levels
        if cov.effect_e:
            e_lin += np.asarray(cov.effect_e)[k]
        if cov.effect_c:
            c_lin += np.asarray(cov.effect_c)[k]

    re_e = rng.normal(0.0, 1.0, sc.site_count) * sc.site_sd_e
    re_c = rng.normal(0.0, 1.0, sc.site_count) * sc.site_sd_c
    if sc.site_effect == "slope":
        e_lin += re_e[site] * u0
        c_lin += re_c[site] * c0
    else:
        e_lin += re_e[site]
        c_lin += re_c[site]

    z = rng.standard_normal((n, 2))
    z_c = sc.rho * z[:, 0] + math.sqrt(1 - sc.rho ** 2) * z[:, 1]
    e = e_lin + np.asarray(sc.sigma_e)[arm] * z[:, 0]
    if sc.cost_noise == NORMAL:
        cost = np.maximum(c_lin + np.asarray(sc.sigma_c)[arm] * z_c, 0.0)
    else:
        level = np.asarray(sc.cost_intercept) + np.asarray(sc.cost_slope) * np.asarray(
            sc.c0_mean if sc.has_baseline_cost else (0.0, 0.0))
        sl = np.sqrt(np.log1p((np.asarray(sc.sigma_c) / level) ** 2))[arm]
        cost = np.maximum(c_lin, 1e-6) * np.exp(sl * z_c - sl * sl / 2)

    # flat follow-up utility whose trapezoidal area is e
    h = deltas[0] / 2
    v = (e - h * u0) / (T - h)
    clipped = int(np.sum((v < UTILITY_FLOOR) | (v > 1.0)))
    v = np.clip(v, UTILITY_FLOOR, 1.0)
    J = sched.J
    U = np.column_stack([u0] + [v] * J)
    C = np.column_stack([c0 if sc.has_baseline_cost else np.full(n, np.nan)]
                        + [cost * (dj / T) for dj in deltas])

    d = TrialDataset(
        ids=[f"{'CI'[t]}{i:04d}" for i, t in enumerate(arm)], arm=arm, site=site,
        utilities=U, costs=C, schedule=sched, has_baseline_cost=sc.has_baseline_cost,
        covariates=codes, covariate_levels=levels, arm_labels=sc.arm_labels,
        site_count=sc.site_count)
    beta3 = None
    if sc.cost_noise == NORMAL:
        beta3 = tuple(sc.rho * sc.sigma_c[t] / sc.sigma_e[t] for t in (0, 1))
    return d, GroundTruth(sc, beta3, e_lin, c_lin, re_e, re_c, clipped)


def _conditioning(d: TrialDataset, mc: MechanismConfig) -> np.ndarray:
    if mc.kind == MCAR:
        return np.zeros(d.n)
    if mc.kind == MAR:
        if mc.covariate not in d.covariates:
            raise ConfigurationError(f"dataset has no covariate {mc.covariate!r}")
        codes = d.covariates[mc.covariate].astype(float)
        k = len(d.covariate_levels[mc.covariate])
        return codes - (k - 1) / 2
    u0 = d.utilities[:, 0]
    center = np.nanmean(u0) if mc.center is None else mc.center
    scale = np.nanstd(u0) if mc.scale is None else mc.scale
    return (u0 - center) / scale


def apply_missingness(d: TrialDataset, mc: MechanismConfig, seed: int) -> TrialDataset:
    """Delete cells from a complete dataset according to ``mc``.

    Dropout is monotone: a dropped individual loses utilities and costs from
    a uniformly chosen follow-up wave to the end.
    """
    if np.isnan(d.utilities).any():
        raise ConfigurationError("missingness must be applied to a complete dataset")
    rng = _rng(seed)
    n, J = d.n, d.J
    p = mc.dropout_probability(d.arm, _conditioning(d, mc))
    drop = rng.random(n) < p
    wave = rng.integers(1, J + 1, size=n)
    miss_u0 = rng.random(n) < np.asarray(mc.baseline_missing)[d.arm]
    miss_c0 = rng.random(n) < np.asarray(mc.baseline_cost_missing)[d.arm]

    U = d.utilities.copy()
    C = d.costs.copy()
    later = drop[:, None] & (np.arange(J + 1)[None, :] >= wave[:, None])
    U[later] = np.nan
    C[later] = np.nan
    U[miss_u0, 0] = np.nan
    if d.has_baseline_cost:
        C[miss_c0, 0] = np.nan
    return d.with_values(U, C)


def simulate_trial(sc: ScenarioConfig, mc: MechanismConfig, seed: int):
    """Generate and thin one replication; the two stages use seeds ``2*seed`` and ``2*seed+1``."""
    d, truth = generate(sc, 2 * int(seed))
    return apply_missingness(d, mc, 2 * int(seed) + 1), truth


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------

def expected_selection(sc: ScenarioConfig, mc: MechanismConfig, arm: int) -> dict[str, float]:
    """Population completion share, availability share, and AC-CC baseline gap.

    Integrates the dropout model against the baseline-utility distribution;
    valid for MCAR and MNAR mechanisms.
    """
    if mc.kind == MAR:
        raise ConfigurationError("expected_selection does not cover MAR mechanisms")
    dist = sc.u0_distribution(arm)
    center = float(np.mean(sc.u0_mean)) if mc.center is None else mc.center
    scale = float(np.mean(sc.u0_sd)) if mc.scale is None else mc.scale

    def stay(u):
        return 1.0 - float(mc.dropout_probability(arm, (u - center) / scale))

    r = integrate.quad(lambda u: stay(u) * dist.pdf(u), 0, 1)[0]
    ur = integrate.quad(lambda u: u * stay(u) * dist.pdf(u), 0, 1)[0]
    avail = 1.0 - mc.baseline_missing[arm]
    if sc.has_baseline_cost:
        avail *= 1.0 - mc.baseline_cost_missing[arm]
    return {"completion": avail * r, "available": avail, "gap": dist.mean() - ur / r}


def calibrate_mechanism(sc: ScenarioConfig, completion, gap, available=(1.0, 1.0),
                        center: float | None = None, scale: float | None = None) -> MechanismConfig:
    """MNAR-on-baseline mechanism hitting per-arm completion, availability and gap targets.

    Solves for the logistic coefficients ``(a, b)`` of each arm against the
    population integrals of :func:`expected_selection`.
    """
    completion, gap, available = (_pair(x, k) for x, k in (
        (completion, "completion"), (gap, "gap"), (available, "available")))
    pooled_mean = float(np.mean(sc.u0_mean))
    center = pooled_mean if center is None else center
    scale = float(np.mean(sc.u0_sd)) if scale is None else scale
    a, b = [0.0, 0.0], [0.0, 0.0]
    for t in (0, 1):
        if not 0 < completion[t] < available[t] <= 1:
            raise ConfigurationError("need 0 < completion < availability <= 1")

        def resid(x, t=t):
            mc = MechanismConfig(MNAR, (x[0], x[0]), (x[1], x[1]),
                                 (1 - available[t],) * 2, center=center, scale=scale)
            got = expected_selection(sc, mc, t)
            return [got["completion"] - completion[t], (got["gap"] - gap[t]) * 10]

        keep = completion[t] / available[t]
        sol = optimize.root(resid, [float(special.logit(1 - keep)), -np.sign(gap[t])], tol=1e-10)
        if not sol.success:
            raise ConfigurationError(f"cannot calibrate arm {t}: {sol.message}")
        a[t], b[t] = (float(v) for v in sol.x)
    return MechanismConfig(MNAR, tuple(a), tuple(b), tuple(1 - x for x in available),
                           center=center, scale=scale)


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

def scenario_from_mapping(m: Mapping) -> ScenarioConfig:
    m = dict(m)
    s = dict(m.get("scenario", {}))
    base = dict(m.get("baseline", {}))
    q = dict(m.get("qaly", {}))
    c = dict(m.get("cost", {}))
    sites = dict(m.get("sites", {}))
    covs = {name: Covariate(tuple(v["levels"]), tuple(float(p) for p in v["probs"]),
                            tuple(float(x) for x in v.get("effect_e", ())),
                            tuple(float(x) for x in v.get("effect_c", ())))
            for name, v in m.get("covariates", {}).items()}
    kw = dict(
        n=tuple(int(x) for x in _pair(s["n"], "n")),
        deltas=tuple(float(x) for x in s["deltas"]),
        qaly_intercept=_pair(q["intercept"], "qaly intercept"),
        qaly_slope=_pair(q["slope"], "qaly slope"),
        sigma_e=_pair(q["sigma"], "qaly sigma"),
        cost_intercept=_pair(c["intercept"], "cost intercept"),
        cost_slope=_pair(c.get("slope", 0.0), "cost slope"),
        sigma_c=_pair(c["sigma"], "cost sigma"),
        rho=float(c.get("rho", 0.0)),
        cost_noise=c.get("noise", NORMAL),
        u0_mean=_pair(base["u0_mean"], "u0_mean"),
        u0_sd=_pair(base["u0_sd"], "u0_sd"),
        covariates=covs,
        site_count=int(sites.get("count", 1)),
        site_arms=tuple(int(x) for x in sites["arms"]) if "arms" in sites else None,
        site_effect=sites.get("effect", "slope"),
        site_sd_e=float(sites.get("sd_e", 0.0)),
        site_sd_c=float(sites.get("sd_c", 0.0)),
        name=s.get("name", "custom"),
    )
    if "c0_mean" in base:
        kw["c0_mean"] = _pair(base["c0_mean"], "c0_mean")
        kw["c0_sd"] = _pair(base["c0_sd"], "c0_sd")
    if "arm_labels" in s:
        kw["arm_labels"] = tuple(s["arm_labels"])
    return ScenarioConfig(**kw)


def mechanism_from_mapping(m: Mapping, sc: ScenarioConfig) -> MechanismConfig:
    """Mechanism from a ``[mechanism]`` table, or calibrated from ``[targets]``."""
    mech = dict(m.get("mechanism", {}))
    targets = m.get("targets")
    if targets is not None:
        kind = str(mech.get("kind", MNAR)).upper()
        if kind == MCAR:
            keep = np.divide(_pair(targets["completion"], "completion"),
                             _pair(targets["available"], "available"))
            return MechanismConfig.mcar(tuple(1 - keep), tuple(1 - np.asarray(
                _pair(targets["available"], "available"))))
        return calibrate_mechanism(sc, targets["completion"], targets["gap"],
                                   targets.get("available", (1.0, 1.0)),
                                   mech.get("center"), mech.get("scale"))
    if not mech:
        return MechanismConfig()
    kw = {"kind": mech.get("kind", MCAR)}
    for key in ("a", "b", "baseline_missing", "baseline_cost_missing"):
        if key in mech:
            kw[key] = _pair(mech[key], key)
    for key in ("covariate", "center", "scale"):
        if key in mech:
            kw[key] = mech[key]
    if "dropout" in mech:
        kw["a"] = tuple(float(special.logit(p)) for p in _pair(mech["dropout"], "dropout"))
    return MechanismConfig(**kw)


def load_scenario(path_or_text, *, text: bool = False) -> tuple[ScenarioConfig, MechanismConfig]:
    """Scenario and mechanism from a TOML file (or TOML text with ``text=True``)."""
    if text:
        m = tomllib.loads(path_or_text)
    else:
        with open(path_or_text, "rb") as fh:
            m = tomllib.load(fh)
    sc = scenario_from_mapping(m)
    return sc, mechanism_from_mapping(m, sc)


@functools.lru_cache(maxsize=None)
def load_preset(name: str) -> tuple[ScenarioConfig, MechanismConfig]:
    """Shipped scenario by name; calibration runs once per process."""
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    source = resources.files("baseline_cea").joinpath("presets", f"{name}.toml")
    return load_scenario(source.read_text(), text=True)


def calibrate_menss() -> tuple[ScenarioConfig, MechanismConfig]:
    """Single-site trial without baseline costs and informative dropout on baseline utility."""
    return load_preset("menss")


def calibrate_pbs() -> tuple[ScenarioConfig, MechanismConfig]:
    """Cluster-randomised 23-site trial with baseline costs and three covariates."""
    return load_preset("pbs")


__all__ = ["Covariate", "GroundTruth", "LOGNORMAL", "MAR", "MCAR", "MNAR", "MechanismConfig",
           "NORMAL", "PRESETS", "ScenarioConfig", "apply_missingness", "calibrate_mechanism",
           "calibrate_menss", "calibrate_pbs", "expected_selection", "generate", "load_preset",
           "load_scenario", "simulate_trial"]
