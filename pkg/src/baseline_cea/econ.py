"""Decision outputs from incremental draws, and the OLS + bootstrap route to them."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adjust import REFERENCE, AdjustmentResult, adjust_coefficients
from .errors import ConfigurationError, InsufficientDataError, NumericalError
from .model_spec import ModelSpec, build_inputs
from .sampler import ols_fit
from .trial_data import AC, CC, POOLED, TrialDataset, baseline_means, case_masks, case_partition

DEFAULT_WTP_MAX = 40000.0
DEFAULT_WTP_STEP = 100.0
MIN_DRAWS = 100
MIN_REPLICATES = 100


def default_grid(wtp_max: float = DEFAULT_WTP_MAX, step: float = DEFAULT_WTP_STEP) -> np.ndarray:
    """Willingness-to-pay values ``0, step, ..., wtp_max``."""
    if step <= 0 or wtp_max < 0:
        raise ConfigurationError("willingness-to-pay grid needs step > 0 and max >= 0")
    count = int(math.floor(wtp_max / step + 1e-9))
    return np.arange(count + 1) * float(step)


def _increments(result) -> tuple[np.ndarray, np.ndarray, str, str]:
    if isinstance(result, AdjustmentResult):
        return result.delta_e, result.delta_c, result.convention, result.model
    de, dc = result
    return np.asarray(de, dtype=float), np.asarray(dc, dtype=float), "", ""


@dataclass(frozen=True, eq=False)
class CeacCurve:
    grid: np.ndarray
    p: np.ndarray
    convention: str = ""
    model: str = ""

    def at(self, k: float) -> float:
        i = int(np.searchsorted(self.grid, k))
        if i >= self.grid.size or self.grid[i] != k:
            raise KeyError(f"k={k} is not on the grid")
        return float(self.p[i])

    def distance(self, other: "CeacCurve") -> float:
        """Sup-norm distance to a curve on the same grid."""
        if not np.array_equal(self.grid, other.grid):
            raise ValueError("curves are on different grids")
        return float(np.max(np.abs(self.p - other.p)))


def ceac(result, grid: Sequence[float] | None = None) -> CeacCurve:
    """Share of draws with positive incremental net benefit ``k*de - dc`` at each k.

    ``result`` is an :class:`AdjustmentResult` or a ``(delta_e, delta_c)`` pair.
    Ties count as not cost-effective.
    """
    de, dc, conv, model = _increments(result)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("willingness-to-pay grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("willingness-to-pay grid must be strictly increasing")
    if de.size == 0:
        raise InsufficientDataError("no draws")
    if de.size < MIN_DRAWS:
        warnings.warn(f"CEAC from only {de.size} draws", RuntimeWarning, stacklevel=2)
    # compare instead of subtracting so k=0 reduces to dc < 0 exactly
    p = np.array([np.count_nonzero(k * de > dc) for k in grid], dtype=float) / de.size
    return CeacCurve(grid, p, conv, model)


def ceac_limit_threshold(delta_e, delta_c) -> float:
    """Smallest k beyond which the CEAC is the share of draws with ``de > 0``.

    Above ``max|dc| / min|de|`` (over non-zero ``de``) every INB has the sign
    of ``de``.
    """
    de = np.abs(np.asarray(delta_e, dtype=float))
    dc = np.abs(np.asarray(delta_c, dtype=float))
    nz = de[de > 0]
    if nz.size == 0:
        return math.inf
    return float(dc.max() / nz.min())


QUADRANTS = ("NE", "NW", "SE", "SW")


@dataclass(frozen=True, eq=False)
class CepCloud:
    """Cost-effectiveness plane: east means more QALYs, north means more cost."""

    delta_e: np.ndarray
    delta_c: np.ndarray
    mean_e: float
    mean_c: float
    icer: float
    icer_defined: bool
    quadrants: dict
    convention: str = ""
    model: str = ""

    def acceptable_share(self, k: float) -> float:
        """Share of points below the line ``dc = k * de``."""
        return float(np.mean(k * self.delta_e > self.delta_c))

    def to_dict(self) -> dict:
        return {"convention": self.convention, "model": self.model,
                "mean_delta_e": self.mean_e, "mean_delta_c": self.mean_c,
                "icer": self.icer if self.icer_defined else None,
                "icer_defined": self.icer_defined, "quadrants": dict(self.quadrants)}


def cep(result) -> CepCloud:
    de, dc, conv, model = _increments(result)
    if de.size == 0:
        raise InsufficientDataError("no draws")
    mean_e = math.fsum(de.tolist()) / de.size
    mean_c = math.fsum(dc.tolist()) / dc.size
    defined = abs(mean_e) >= 1e-12
    icer = mean_c / mean_e if defined else math.nan
    east, north = de > 0, dc > 0
    n = de.size
    quads = {"NE": np.count_nonzero(east & north) / n, "NW": np.count_nonzero(~east & north) / n,
             "SE": np.count_nonzero(east & ~north) / n, "SW": np.count_nonzero(~east & ~north) / n}
    return CepCloud(de, dc, mean_e, mean_c, icer, defined, quads, conv, model)


def write_ceac_csv(path, curves: Sequence[CeacCurve]) -> None:
    """One row per grid point, one column per curve (named model/convention)."""
    grid = curves[0].grid
    if any(not np.array_equal(c.grid, grid) for c in curves):
        raise ValueError("curves are on different grids")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", *(f"{c.model}/{c.convention}" if c.model else c.convention
                           for c in curves)])
        for i, k in enumerate(grid):
            w.writerow([repr(float(k)), *(repr(float(c.p[i])) for c in curves)])


def write_cep_csv(path, clouds: Sequence[CepCloud]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "convention", "draw", "delta_e", "delta_c"])
        for cl in clouds:
            for k in range(cl.delta_e.size):
                w.writerow([cl.model, cl.convention, k, repr(float(cl.delta_e[k])),
                            repr(float(cl.delta_c[k]))])


# --------------------------------------------------------------------------
# Bootstrap
# --------------------------------------------------------------------------

Resampler = Callable[[np.random.Generator, Sequence[np.ndarray]], np.ndarray]


def resample_within(rng: np.random.Generator, groups: Sequence[np.ndarray]) -> np.ndarray:
    """Draw each group's rows with replacement, keeping the group sizes."""
    parts = [g[rng.integers(0, g.size, size=g.size)] for g in groups if g.size]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def identity_resample(rng, groups):
    """Every row once, in original order (a replicate equal to the data)."""
    return np.sort(np.concatenate([np.asarray(g) for g in groups]))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """Replicate adjusted means; ``mu_e[conv]`` has shape ``(B, 2)``."""

    B: int
    seed: int
    mu_e: dict
    mu_c: dict
    dropped: int
    model: str = ""

    def as_adjustment(self, convention: str) -> AdjustmentResult:
        return AdjustmentResult.from_means(convention, self.mu_e[convention],
                                           self.mu_c[convention], model=self.model)

    @property
    def delta_e(self) -> dict:
        return {k: v[:, 1] - v[:, 0] for k, v in self.mu_e.items()}

    @property
    def delta_c(self) -> dict:
        return {k: v[:, 1] - v[:, 0] for k, v in self.mu_c.items()}


def _strata(d: TrialDataset) -> list[np.ndarray]:
    cc, ac = case_masks(d)
    return [np.flatnonzero(m & (d.arm == t)) for m in (cc, ac & ~cc) for t in (0, 1)]


def _plug_in(d, spec, pooling, covariates_at, means=None):
    inputs = build_inputs(spec, d)
    fits = ols_fit(inputs)
    coef = {**fits["e"].as_dict(), **fits["c"].as_dict()}
    if means is None:
        cc, ac = case_partition(d)
        means = baseline_means(d, cc, pooling), baseline_means(d, ac, pooling)
    return [adjust_coefficients(coef, m, covariates_at=covariates_at) for m in means]


def bootstrap_analysis(d: TrialDataset, spec: ModelSpec, B: int = 2000, seed: int = 20190725,
                       pooling: str = POOLED, covariates_at: str = REFERENCE,
                       recompute_means: bool = True,
                       resampler: Resampler = resample_within) -> BootstrapResult:
    """Nonparametric bootstrap of the OLS-adjusted means.

    Each replicate resamples individuals with replacement within the four
    strata arm x (complete, baseline-only), refits OLS on the resampled
    complete cases and evaluates the fit at the resample's CC and AC
    baseline means (or at the original ones with ``recompute_means=False``).
    Replicate ``b`` uses the Philox stream ``seed + b``.  Replicates whose
    design is degenerate are dropped and counted.
    """
    if spec.joint or spec.multilevel:
        raise ConfigurationError("the bootstrap covers independent, single-level models only")
    if B < 1:
        raise ConfigurationError("need at least one bootstrap replicate")
    if B < MIN_REPLICATES:
        warnings.warn(f"only {B} bootstrap replicates", RuntimeWarning, stacklevel=2)
    strata = _strata(d)
    fixed_means = None
    if not recompute_means:
        cc, ac = case_partition(d)
        fixed_means = baseline_means(d, cc, pooling), baseline_means(d, ac, pooling)
    mu_e = {CC: [], AC: []}
    mu_c = {CC: [], AC: []}
    dropped = 0
    for b in range(B):
        rng = np.random.Generator(np.random.Philox((int(seed) + b) % 2**64))
        sample = d.take(resampler(rng, strata))
        try:
            res = _plug_in(sample, spec, pooling, covariates_at, fixed_means)
        except (NumericalError, InsufficientDataError):
            dropped += 1
            continue
        for conv, (e, c) in zip((CC, AC), res):
            mu_e[conv].append(e)
            mu_c[conv].append(c)
    if dropped == B:
        raise NumericalError("every bootstrap replicate had a degenerate design", block="bootstrap")
    return BootstrapResult(B - dropped, int(seed),
                           {k: np.array(v) for k, v in mu_e.items()},
                           {k: np.array(v) for k, v in mu_c.items()}, dropped, spec.label)


def plug_in_means(d: TrialDataset, spec: ModelSpec, pooling: str = POOLED,
                  covariates_at: str = REFERENCE) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """OLS-adjusted ``(mu_e, mu_c)`` on the original data, per convention."""
    if spec.multilevel:
        raise ConfigurationError("plug-in means need a single-level model")
    cc, ac = _plug_in(d, spec, pooling, covariates_at)
    return {CC: cc, AC: ac}


__all__ = ["BootstrapResult", "CeacCurve", "CepCloud", "DEFAULT_WTP_MAX", "DEFAULT_WTP_STEP",
           "QUADRANTS", "bootstrap_analysis", "ceac", "ceac_limit_threshold", "cep",
           "default_grid", "identity_resample", "plug_in_means", "resample_within",
           "write_ceac_csv", "write_cep_csv"]
