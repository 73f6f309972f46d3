"""Fit-then-adjust workflow shared by the command line and the simulation harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .adjust import AdjustmentResult, adjusted_means, site_size_weights
from .config import AnalysisConfig
from .diagnostics import ConvergenceReport, rhat
from .model_spec import ModelSpec, RegressionInputs, build_inputs, build_spec
from .sampler import McmcSettings, PosteriorDraws, run_chains
from .trial_data import BaselineMeans, TrialDataset, baseline_means, case_partition


@dataclass(frozen=True, eq=False)
class Analysis:
    spec: ModelSpec
    inputs: RegressionInputs
    draws: PosteriorDraws
    convergence: ConvergenceReport | None
    means: tuple[BaselineMeans, BaselineMeans]
    cc: AdjustmentResult
    ac: AdjustmentResult
    site_weights: np.ndarray | None

    def result(self, convention: str) -> AdjustmentResult:
        return self.cc if convention.upper() == "CC" else self.ac


def parse_model(text: str) -> dict:
    """``"family.structure"`` (either part optional) as a model mapping."""
    family, _, structure = text.partition(".")
    out = {}
    if family:
        out["family"] = family
    if structure:
        out["structure"] = structure
    return out


def analyse(d: TrialDataset, cfg: AnalysisConfig, model: Mapping | None = None,
            settings: McmcSettings | None = None, diagnostics: bool = True) -> Analysis:
    spec = build_spec(cfg.model_config(model), d)
    inputs = build_inputs(spec, d)
    draws = run_chains(inputs, spec, settings or cfg.mcmc)
    report = rhat(draws) if diagnostics and draws.n_chains >= 2 else None
    cc_set, ac_set = case_partition(d)
    means = baseline_means(d, cc_set, cfg.pooling), baseline_means(d, ac_set, cfg.pooling)
    weights = None
    if spec.multilevel:
        weights = (np.asarray(cfg.site_weights) if cfg.site_weights is not None
                   else site_size_weights(inputs))
    cc, ac = adjusted_means(draws, spec, means[0], means[1], weights, cfg.covariates_at)
    return Analysis(spec, inputs, draws, report, means, cc, ac, weights)


__all__ = ["Analysis", "analyse", "parse_model"]
