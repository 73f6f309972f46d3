"""Baseline-adjusted population means per arm, under CC and AC baseline means.

For each posterior draw the fitted regressions are evaluated at the baseline
means of one case convention:

    mu_e[t] = intercept_t + arm effect * t + slope_t * u0_bar  [+ covariates]
    mu_c[t] = intercept_t + arm effect * t + slope_t * c0_bar  [+ beta3_t * mu_e[t]]

Both conventions reuse the same draws; only the baseline means differ.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError
from .model_spec import Column, ModelSpec, RegressionInputs, parse_column
from .trial_data import AC, CC, BaselineMeans

REFERENCE = "reference"
MEANS = "means"


def summarize(x: np.ndarray, level: float = 0.95) -> dict[str, float]:
    """Posterior mean and central credible interval."""
    x = np.asarray(x, dtype=float)
    lo, hi = np.quantile(x, [(1 - level) / 2, (1 + level) / 2])
    return {"mean": math.fsum(x.tolist()) / x.size, "lower": float(lo), "upper": float(hi)}


@dataclass(frozen=True, eq=False)
class AdjustmentResult:
    """Per-draw adjusted means; columns of ``mu_e``/``mu_c`` are arm 0 and arm 1."""

    convention: str
    mu_e: np.ndarray
    mu_c: np.ndarray
    delta_e: np.ndarray
    delta_c: np.ndarray
    means: BaselineMeans | None = None
    model: str = ""

    def __post_init__(self):
        for a in (self.mu_e, self.mu_c, self.delta_e, self.delta_c):
            a.setflags(write=False)

    @classmethod
    def from_means(cls, convention, mu_e, mu_c, means=None, model=""):
        mu_e = np.array(mu_e, dtype=float)
        mu_c = np.array(mu_c, dtype=float)
        return cls(convention, mu_e, mu_c, mu_e[:, 1] - mu_e[:, 0], mu_c[:, 1] - mu_c[:, 0],
                   means, model)

    @property
    def n_draws(self) -> int:
        return int(self.delta_e.shape[0])

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for t in (0, 1):
            out[f"mu_e{t + 1}"] = summarize(self.mu_e[:, t])
            out[f"mu_c{t + 1}"] = summarize(self.mu_c[:, t])
        out["delta_e"] = summarize(self.delta_e)
        out["delta_c"] = summarize(self.delta_c)
        return out

    def to_dict(self) -> dict:
        m = self.means
        return {
            "convention": self.convention,
            "model": self.model,
            "draws": self.n_draws,
            "baseline_means": None if m is None else {
                "pooling": m.pooling, "u0": list(m.u0),
                "c0": None if m.c0 is None else list(m.c0)},
            "summary": self.summary(),
        }

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["draw", "mu_e1", "mu_e2", "mu_c1", "mu_c2", "delta_e", "delta_c"])
            for k in range(self.n_draws):
                w.writerow([k, *(repr(float(v)) for v in (
                    self.mu_e[k, 0], self.mu_e[k, 1], self.mu_c[k, 0], self.mu_c[k, 1],
                    self.delta_e[k], self.delta_c[k]))])


def site_size_weights(inputs: RegressionInputs) -> np.ndarray:
    """Share of complete cases in each site."""
    sizes = inputs.site_sizes().astype(float)
    return sizes / sizes.sum()


def _check_weights(weights, n_sites):
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_sites,):
        raise ValidationError(f"site weights must have length {n_sites}, got {w.shape}")
    if np.any(w < 0) or abs(math.fsum(w.tolist()) - 1.0) > 1e-9:
        raise ValidationError("site weights must be non-negative and sum to 1")
    return w


def _columns(names: Sequence[str], prefix: str) -> list[tuple[int, Column]]:
    out = []
    for k, name in enumerate(names):
        if not name.startswith(prefix + ":"):
            continue
        col = parse_column(name)
        if col is not None:
            out.append((k, col))
    return out


def design_values(cols, t, means: BaselineMeans, weights, covariates_at=REFERENCE):
    """Evaluation point for arm ``t``: one value per (non-qaly) column.

    Returns ``(indices, values, qaly_index)`` so that the adjusted mean is
    ``coef[indices] @ values`` plus ``coef[qaly_index] * mu_e`` when present.
    """
    idx, vals, qaly = [], [], None
    for k, col in cols:
        if col.arm is not None and col.arm != t:
            continue
        role = col.role
        if role == "qaly":
            qaly = k
            continue
        if role == "intercept":
            v = 1.0
        elif role == "arm":
            v = float(t)
        elif role == "u0":
            v = means.u0[t]
        elif role == "c0":
            if means.c0 is None:
                raise ValidationError("model uses baseline cost but no baseline cost mean given")
            v = means.c0[t]
        elif role == "covariate":
            if covariates_at == REFERENCE:
                v = 0.0
            else:
                cov, level = col.level
                v = means.covariate_shares[cov][t][level]
        elif role == "site-slope":
            base = means.u0[t] if col.name.startswith("e:") else means.c0[t]
            v = weights[col.site] * base
        elif role == "site-intercept":
            v = weights[col.site]
        else:
            raise ValueError(f"unknown column role {role!r}")
        idx.append(k)
        vals.append(v)
    return np.array(idx, dtype=np.int64), np.array(vals, dtype=float), qaly


def _evaluate(coef, names, means, weights, covariates_at):
    """Adjusted means for a coefficient matrix ``coef`` of shape (draws, params)."""
    e_cols = _columns(names, "e")
    c_cols = _columns(names, "c")
    D = coef.shape[0]
    mu_e = np.empty((D, 2))
    mu_c = np.empty((D, 2))
    for t in (0, 1):
        idx, vals, _ = design_values(e_cols, t, means, weights, covariates_at)
        mu_e[:, t] = coef[:, idx] @ vals
        idx, vals, q = design_values(c_cols, t, means, weights, covariates_at)
        mu_c[:, t] = coef[:, idx] @ vals
        if q is not None:
            mu_c[:, t] += coef[:, q] * mu_e[:, t]
    return mu_e, mu_c


def _needs_weights(names) -> int:
    cols = [parse_column(n) for n in names]
    sites = [c.site for c in cols if c is not None and c.random]
    return max(sites) + 1 if sites else 0


def adjusted_means(draws, spec: ModelSpec | None, means_cc: BaselineMeans,
                   means_ac: BaselineMeans, site_weights=None,
                   covariates_at: str = REFERENCE) -> tuple[AdjustmentResult, AdjustmentResult]:
    """CC- and AC-adjusted means from one set of posterior draws.

    ``draws`` is a :class:`~baseline_cea.sampler.PosteriorDraws`.  Multilevel
    models need ``site_weights`` (non-negative, summing to 1); each draw's
    site effects are averaged with these weights.  Covariates sit at their
    reference level unless ``covariates_at="means"``, which uses the level
    shares of each convention's case set.
    """
    if covariates_at not in (REFERENCE, MEANS):
        raise ConfigurationError("covariates_at must be 'reference' or 'means'")
    names = tuple(draws.names)
    coef = draws.draws.reshape(-1, len(names))
    n_sites = _needs_weights(names)
    weights = None
    if n_sites:
        if site_weights is None:
            raise ValidationError("multilevel model needs site weights for adjustment")
        weights = _check_weights(site_weights, n_sites)
    label = spec.label if spec is not None else ""
    out = []
    for conv, means in ((CC, means_cc), (AC, means_ac)):
        mu_e, mu_c = _evaluate(coef, names, means, weights, covariates_at)
        out.append(AdjustmentResult.from_means(conv, mu_e, mu_c, means, label))
    return out[0], out[1]


def adjust_coefficients(coef: Mapping[str, float], means: BaselineMeans, site_weights=None,
                        covariates_at: str = REFERENCE) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in adjusted means ``(mu_e, mu_c)`` for a single coefficient set (e.g. OLS)."""
    names = tuple(coef)
    row = np.array([[coef[n] for n in names]])
    n_sites = _needs_weights(names)
    weights = _check_weights(site_weights, n_sites) if n_sites else None
    mu_e, mu_c = _evaluate(row, names, means, weights, covariates_at)
    return mu_e[0], mu_c[0]


@dataclass(frozen=True)
class Increments:
    delta_e: np.ndarray
    delta_c: np.ndarray
    summary: dict


def increments(result: AdjustmentResult) -> Increments:
    """Per-draw QALY and cost increments (arm 1 minus arm 0) with summaries."""
    de = result.mu_e[:, 1] - result.mu_e[:, 0]
    dc = result.mu_c[:, 1] - result.mu_c[:, 0]
    return Increments(de, dc, {"delta_e": summarize(de), "delta_c": summarize(dc)})


def write_summary(path, results: Sequence[AdjustmentResult], extra: Mapping | None = None) -> None:
    payload = {"results": [r.to_dict() for r in results]}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


__all__ = ["AdjustmentResult", "Increments", "MEANS", "REFERENCE", "adjust_coefficients",
           "adjusted_means", "design_values", "increments", "site_size_weights", "summarize",
           "write_summary"]
