"""Analysis configuration read from TOML.

Sections (all optional)::

    seed = 20190725

    [model]    family, structure, parameterization, covariates,
               reference_levels, slope_centering
    [priors]   coef_sd, log_sd_bounds, re_log_sd_bounds
    [mcmc]     chains, iterations, burn_in, thin, step, adapt
    [adjust]   pooling ("pooled" | "per-arm"), covariates_at, site_weights
    [econ]     wtp_max, wtp_step, bootstrap
    [data]     column mapping, see Schema
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .adjust import MEANS, REFERENCE
from .econ import DEFAULT_WTP_MAX, DEFAULT_WTP_STEP
from .errors import ConfigurationError
from .sampler import McmcSettings
from .trial_data import PER_ARM, POOLED, Schema

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

_SECTIONS = {"seed", "model", "priors", "mcmc", "adjust", "econ", "data"}


@dataclass(frozen=True)
class AnalysisConfig:
    model: Mapping = field(default_factory=dict)
    priors: Mapping = field(default_factory=dict)
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    pooling: str = POOLED
    covariates_at: str = REFERENCE
    site_weights: tuple[float, ...] | None = None
    wtp_max: float = DEFAULT_WTP_MAX
    wtp_step: float = DEFAULT_WTP_STEP
    bootstrap: int = 0
    schema: Schema = field(default_factory=Schema)
    digest: str = ""

    def __post_init__(self):
        if self.pooling not in (POOLED, PER_ARM):
            raise ConfigurationError(f"pooling must be {POOLED!r} or {PER_ARM!r}")
        if self.covariates_at not in (REFERENCE, MEANS):
            raise ConfigurationError(f"covariates_at must be {REFERENCE!r} or {MEANS!r}")
        if self.bootstrap < 0:
            raise ConfigurationError("bootstrap replicate count must be non-negative")

    @property
    def seed(self) -> int:
        return self.mcmc.seed

    def model_config(self, overrides: Mapping | None = None) -> dict:
        """Keyword mapping for :func:`~baseline_cea.model_spec.build_spec`."""
        m = dict(self.model)
        m.update(overrides or {})
        if self.priors:
            m["priors"] = dict(self.priors)
        return m

    def with_seed(self, seed: int) -> "AnalysisConfig":
        return replace(self, mcmc=replace(self.mcmc, seed=int(seed)))


def config_from_mapping(m: Mapping, digest: str = "") -> AnalysisConfig:
    unknown = set(m) - _SECTIONS
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    mcmc = dict(m.get("mcmc", {}))
    if "seed" in m:
        mcmc["seed"] = m["seed"]
    try:
        settings = McmcSettings(**mcmc)
    except TypeError as exc:
        raise ConfigurationError(f"bad [mcmc] section: {exc}") from None
    adj = dict(m.get("adjust", {}))
    econ = dict(m.get("econ", {}))
    extra = (set(adj) - {"pooling", "covariates_at", "site_weights"}) | (
        set(econ) - {"wtp_max", "wtp_step", "bootstrap"})
    if extra:
        raise ConfigurationError(f"unknown [adjust]/[econ] keys: {sorted(extra)}")
    weights = adj.get("site_weights")
    return AnalysisConfig(
        model=dict(m.get("model", {})),
        priors=dict(m.get("priors", {})),
        mcmc=settings,
        pooling=adj.get("pooling", POOLED),
        covariates_at=adj.get("covariates_at", REFERENCE),
        site_weights=None if weights is None else tuple(float(w) for w in weights),
        wtp_max=float(econ.get("wtp_max", DEFAULT_WTP_MAX)),
        wtp_step=float(econ.get("wtp_step", DEFAULT_WTP_STEP)),
        bootstrap=int(econ.get("bootstrap", 0)),
        schema=Schema.from_mapping(m.get("data", {})),
        digest=digest,
    )


def load_config(path) -> AnalysisConfig:
    raw = Path(path).read_bytes()
    try:
        m = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}") from None
    return config_from_mapping(m, hashlib.sha256(raw).hexdigest())


__all__ = ["AnalysisConfig", "config_from_mapping", "load_config"]
