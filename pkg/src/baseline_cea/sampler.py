"""Seeded MCMC for the regression ladder, plus the least-squares oracle.

Each equation ``y = X beta + eps`` is sampled with a blocked scheme:

* all coefficients (fixed and site-level random effects) jointly from their
  Gaussian full conditional given the current standard deviations;
* each residual log-sd and each random-effect log-sd by random-walk
  Metropolis, since a uniform prior on the log scale is not conjugate;
* for site-level models, a second random-walk move on the site log-sd that
  rescales the site effects with it, which breaks the strong coupling
  between the effects and their sd.

Chain ``c`` draws from a Philox generator keyed by ``seed + c``, so a run is
bit-reproducible on any platform.  The two equations share no parameters and
are updated in turn inside each iteration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.linalg import lapack, qr

from .errors import ConfigurationError, NumericalError
from .model_spec import EquationInputs, ModelSpec, RegressionInputs

FLOOR_MARGIN = 0.5


@dataclass(frozen=True)
class McmcSettings:
    chains: int = 2
    iterations: int = 30000
    burn_in: int = 15000
    thin: int = 1
    seed: int = 20190725
    step: float = 0.2
    adapt: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ConfigurationError("need at least one chain")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigurationError("burn-in must be non-negative and below the iteration count")
        if self.thin < 1:
            raise ConfigurationError("thinning must be at least 1")
        if not self.step > 0:
            raise ConfigurationError("Metropolis step must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox((int(seed) + chain) % 2**64))


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """Retained draws, shape ``(chains, draws, parameters)``."""

    names: tuple[str, ...]
    draws: np.ndarray
    acceptance: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    steps: Mapping[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    settings: McmcSettings | None = None

    def __post_init__(self):
        if self.draws.shape[2] != len(self.names):
            raise ValueError("draw matrix does not match parameter names")
        if len(set(self.names)) != len(self.names):
            raise ValueError("parameter names must be unique")
        self.draws.setflags(write=False)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def __contains__(self, name) -> bool:
        return name in self.names

    def chains_of(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.index(name)]

    def __getitem__(self, name: str) -> np.ndarray:
        """Pooled draws of one parameter, chains concatenated in order."""
        return self.draws[:, :, self.index(name)].reshape(-1)

    def mean(self, name: str) -> float:
        return float(np.mean(self[name]))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", *self.names])
            thin = self.settings.thin if self.settings else 1
            start = self.settings.burn_in if self.settings else 0
            for c in range(self.draws.shape[0]):
                for k in range(self.draws.shape[1]):
                    it = start + (k + 1) * thin
                    w.writerow([c, it, *(repr(float(x)) for x in self.draws[c, k])])

    @classmethod
    def from_csv(cls, path) -> "PosteriorDraws":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0][2:])
        chain = np.array([int(r[0]) for r in rows[1:]])
        values = np.array([[float(x) for x in r[2:]] for r in rows[1:]])
        m = int(chain.max()) + 1
        return cls(names, values.reshape(m, -1, len(names)).copy())


class _Equation:
    """Precomputed sufficient statistics and state for one regression."""

    def __init__(self, eq: EquationInputs, priors, fixed_sigma: Mapping[str, float]):
        X, y = eq.X, eq.y
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NumericalError("non-finite values in design or response", block=eq.name)
        self.name = eq.name
        self.p = X.shape[1]
        scale = np.sqrt(np.mean(X ** 2, axis=0))
        scale[scale == 0] = 1.0
        self.scale = scale
        Xs = X / scale
        groups = eq.resid_group
        self.n_groups = len(eq.resid_names)
        self.G = [Xs[groups == g].T @ Xs[groups == g] for g in range(self.n_groups)]
        self.h = [Xs[groups == g].T @ y[groups == g] for g in range(self.n_groups)]
        self.yy = [float(y[groups == g] @ y[groups == g]) for g in range(self.n_groups)]
        self.n = [int(np.sum(groups == g)) for g in range(self.n_groups)]
        self.resid_names = eq.resid_names
        self.re_names = eq.re_names
        self.coef_names = tuple(eq.column_names)

        random_cols = np.array([c.random for c in eq.columns], dtype=bool)
        self.random_idx = np.flatnonzero(random_cols)
        self.fixed_prec = np.where(random_cols, 0.0, 1.0 / (scale * priors.coef_sd) ** 2)
        self.re_inv_scale2 = 1.0 / scale[self.random_idx] ** 2
        self.bounds_resid = priors.log_sd_bounds
        self.bounds_re = priors.re_log_sd_bounds

        sd_names = list(self.resid_names) + list(self.re_names)
        self.sd_names = tuple(sd_names)
        self.fixed = {k: math.log(fixed_sigma[name]) for k, name in enumerate(sd_names)
                      if name in fixed_sigma}
        ystd = [float(np.std(y[groups == g])) if self.n[g] > 1 else 1.0
                for g in range(self.n_groups)]
        self._init_resid = [math.log(max(s, 1e-3)) for s in ystd]

    @property
    def names(self) -> tuple[str, ...]:
        return self.coef_names + self.sd_names

    @property
    def n_metropolis(self) -> int:
        return len(self.sd_names)

    def initial(self, rng: np.random.Generator) -> list[float]:
        ls = []
        for g in range(self.n_groups):
            lo, hi = self.bounds_resid
            ls.append(float(np.clip(self._init_resid[g] + 0.5 * rng.standard_normal(), lo + 1e-3, hi - 1e-3)))
        for _ in self.re_names:
            lo, hi = self.bounds_re
            ls.append(float(np.clip(0.5 * rng.standard_normal(), lo + 1e-3, hi - 1e-3)))
        for k, v in self.fixed.items():
            ls[k] = v
        return ls

    def draw_coefficients(self, ls, z):
        Q = np.diag(self.fixed_prec)
        b = np.zeros(self.p)
        for g in range(self.n_groups):
            w = math.exp(-2.0 * ls[g])
            Q += self.G[g] * w
            b += self.h[g] * w
        if self.re_names:
            q = math.exp(-2.0 * ls[self.n_groups])
            Q[self.random_idx, self.random_idx] += self.re_inv_scale2 * q
        L, info = lapack.dpotrf(Q, lower=1, clean=1)
        if info != 0:
            raise NumericalError("coefficient precision matrix is not positive definite",
                                 block=f"{self.name} coefficients")
        mean, info = lapack.dpotrs(L, b, lower=1)
        noise, info2 = lapack.dtrtrs(L, z, lower=1, trans=1)
        beta = mean + noise
        if info != 0 or info2 != 0 or not np.all(np.isfinite(beta)):
            raise NumericalError("non-finite coefficient draw", block=f"{self.name} coefficients")
        return beta

    def log_sd_targets(self, beta_s):
        """(count, sum of squares) pairs driving each Metropolis block."""
        out = []
        for g in range(self.n_groups):
            rss = self.yy[g] - 2.0 * float(beta_s @ self.h[g]) + float(beta_s @ self.G[g] @ beta_s)
            out.append((self.n[g], max(rss, 0.0)))
        if self.re_names:
            eta = beta_s[self.random_idx] / self.scale[self.random_idx]
            out.append((len(eta), float(eta @ eta)))
        return out


    def rescale(self, beta_s, ls, eps):
        """Multiply the site effects by ``e**eps``; return the new coefficients and
        the change in residual log-likelihood.

        Paired with the same shift of the site log-sd this move leaves the
        site-effect prior unchanged, and its Jacobian cancels the prior's
        normalising term, so the acceptance ratio is the likelihood ratio alone.
        """
        new = beta_s.copy()
        new[self.random_idx] *= math.exp(eps)
        delta = 0.0
        for g in range(self.n_groups):
            w = 0.5 * math.exp(-2.0 * ls[g])
            old_rss = self.yy[g] - 2.0 * float(beta_s @ self.h[g]) + float(beta_s @ self.G[g] @ beta_s)
            new_rss = self.yy[g] - 2.0 * float(new @ self.h[g]) + float(new @ self.G[g] @ new)
            delta -= w * (new_rss - old_rss)
        return new, delta


def _loglik(ls, count, ss):
    return -count * ls - ss * 0.5 * math.exp(-2.0 * ls)


def _run_chain(eqs, settings, chain):
    rng = chain_rng(settings.seed, chain)
    ls = [eq.initial(rng) for eq in eqs]
    iters = settings.iterations
    z_coef = [rng.standard_normal((iters, eq.p)) for eq in eqs]
    z_mh = [rng.standard_normal((iters, eq.n_metropolis)) for eq in eqs]
    log_u = [np.log(rng.random((iters, eq.n_metropolis))) for eq in eqs]
    # site-effect scale moves; drawn last so single-level streams are unaffected
    z_sc = [rng.standard_normal(iters) if eq.re_names else None for eq in eqs]
    log_u_sc = [np.log(rng.random(iters)) if eq.re_names else None for eq in eqs]
    steps = [[settings.step] * eq.n_metropolis for eq in eqs]
    accepted = [[0] * eq.n_metropolis for eq in eqs]
    window = [[0] * eq.n_metropolis for eq in eqs]
    retained = settings.retained
    out = [np.empty((retained, len(eq.names))) for eq in eqs]
    adapt_until = settings.burn_in // 2 if settings.adapt else 0
    k_out = 0
    for it in range(iters):
        keep = it >= settings.burn_in and (it - settings.burn_in + 1) % settings.thin == 0
        for e, eq in enumerate(eqs):
            beta_s = eq.draw_coefficients(ls[e], z_coef[e][it])
            targets = eq.log_sd_targets(beta_s)
            cur = ls[e]
            for k, (count, ss) in enumerate(targets):
                if k in eq.fixed:
                    continue
                lo, hi = eq.bounds_resid if k < eq.n_groups else eq.bounds_re
                prop = cur[k] + steps[e][k] * z_mh[e][it, k]
                if lo < prop < hi:
                    logr = _loglik(prop, count, ss) - _loglik(cur[k], count, ss)
                    if log_u[e][it, k] < logr:
                        cur[k] = prop
                        window[e][k] += 1
                        if it >= settings.burn_in:
                            accepted[e][k] += 1
            k = eq.n_groups
            if eq.re_names and k not in eq.fixed:
                eps = steps[e][k] * z_sc[e][it]
                lo, hi = eq.bounds_re
                if lo < cur[k] + eps < hi:
                    moved, logr = eq.rescale(beta_s, cur, eps)
                    if log_u_sc[e][it] < logr:
                        beta_s = moved
                        cur[k] += eps
            if keep and k_out < retained:
                row = out[e][k_out]
                row[:eq.p] = beta_s / eq.scale
                row[eq.p:] = np.exp(cur)
        if keep:
            k_out += 1
        if it < adapt_until and (it + 1) % 100 == 0:
            for e, eq in enumerate(eqs):
                for k in range(eq.n_metropolis):
                    rate = window[e][k] / 100.0
                    if rate < 0.2:
                        steps[e][k] *= 0.8
                    elif rate > 0.5:
                        steps[e][k] *= 1.25
                    window[e][k] = 0
    n_post = iters - settings.burn_in
    rates = [[a / n_post for a in acc] for acc in accepted]
    return np.concatenate(out, axis=1), rates, steps


def run_chains(inputs: RegressionInputs, spec: ModelSpec | None = None,
               settings: McmcSettings | None = None,
               fixed_sigma: Mapping[str, float] | None = None) -> PosteriorDraws:
    """Sample the posterior of both equations.

    ``fixed_sigma`` pins named sd parameters (e.g. ``{"e:sigma": 1.0}``) at
    given values; their Metropolis updates are skipped, which leaves the
    coefficient updates as exact draws from the conjugate posterior.
    """
    if spec is not None and spec != inputs.spec:
        raise ConfigurationError("inputs were built for a different model spec")
    settings = settings or McmcSettings()
    fixed_sigma = dict(fixed_sigma or {})
    eqs = [_Equation(eq, inputs.spec.priors, fixed_sigma) for eq in inputs.equations]
    names = tuple(n for eq in eqs for n in eq.names)
    unknown = set(fixed_sigma) - set(names)
    if unknown:
        raise ConfigurationError(f"fixed_sigma names unknown parameters: {sorted(unknown)}")

    chains, acc, steps = [], {}, {}
    for c in range(settings.chains):
        draws, rates, final_steps = _run_chain(eqs, settings, c)
        chains.append(draws)
        for eq, r, s in zip(eqs, rates, final_steps):
            for k, name in enumerate(eq.sd_names):
                if k in eq.fixed:
                    continue
                acc.setdefault(name, []).append(r[k])
                steps[name] = s[k]
    arr = np.stack(chains)

    flags = []
    for eq in eqs:
        for k, name in enumerate(eq.sd_names):
            lo = (eq.bounds_resid if k < eq.n_groups else eq.bounds_re)[0]
            col = arr[:, :, names.index(name)]
            if np.mean(np.log(col) < lo + FLOOR_MARGIN) > 0.5:
                flags.append(f"{name} at prior floor")
    return PosteriorDraws(names, arr, {k: tuple(v) for k, v in acc.items()}, steps,
                          tuple(flags), settings)


# --------------------------------------------------------------------------
# Least squares
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OLSResult:
    names: tuple[str, ...]
    coef: np.ndarray
    fitted: np.ndarray
    resid_var: tuple[float, ...]

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(c) for n, c in zip(self.names, self.coef)}


def ols(X, y, names=None, groups=None) -> OLSResult:
    """Least-squares fit; a rank-deficient design raises naming the collinear columns.

    ``groups`` gives one residual variance per group label, with degrees of
    freedom reduced by the columns that are non-zero within that group.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(p))
    if p == 0:
        return OLSResult(names, np.zeros(0), np.zeros(n), (float(y @ y) / max(n, 1),))
    _, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, p) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < p:
        bad = sorted(names[k] for k in piv[rank:])
        raise NumericalError(f"rank-deficient design; collinear columns: {bad}", block="ols")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    resid = y - fitted
    if groups is None:
        resid_var = (float(resid @ resid) / max(n - p, 1),)
    else:
        groups = np.asarray(groups)
        resid_var = []
        for g in np.unique(groups):
            rows = groups == g
            used = int(np.sum(np.any(X[rows] != 0, axis=0)))
            resid_var.append(float(resid[rows] @ resid[rows]) / max(int(rows.sum()) - used, 1))
        resid_var = tuple(resid_var)
    return OLSResult(names, coef, fitted, resid_var)


def _no_pool_columns(eq: EquationInputs) -> list[int]:
    roles = {c.role for c in eq.columns if c.random}
    if not roles:
        return list(range(len(eq.columns)))
    if roles == {"site-slope"}:
        drop = {"u0", "c0"}
    else:
        drop = {"intercept", "arm"}
    return [k for k, c in enumerate(eq.columns) if c.role not in drop]


def ols_fit(inputs: RegressionInputs, pooling: str = "complete") -> dict[str, OLSResult]:
    """Least-squares fit of each equation.

    ``pooling="complete"`` drops site-level random effects (one common
    baseline slope or intercept); ``pooling="none"`` estimates them as fixed
    site effects in place of the common term.
    """
    if pooling not in ("complete", "none"):
        raise ValueError("pooling must be 'complete' or 'none'")
    out = {}
    for eq in inputs.equations:
        if pooling == "complete":
            keep = [k for k, c in enumerate(eq.columns) if not c.random]
        else:
            keep = _no_pool_columns(eq)
            X = eq.X[:, keep]
            # sites without complete cases give empty columns
            keep = [k for k, col in zip(keep, X.T) if np.any(col != 0)]
        groups = eq.resid_group if len(eq.resid_names) > 1 else None
        out[eq.name] = ols(eq.X[:, keep], eq.y, [eq.columns[k].name for k in keep], groups)
    return out


__all__ = ["McmcSettings", "OLSResult", "PosteriorDraws", "chain_rng", "ols", "ols_fit",
           "run_chains"]
