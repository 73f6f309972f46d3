"""Split-chain potential scale reduction factor and effective sample size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

RHAT_THRESHOLD = 1.05


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected an array of shape (chains, draws)")
    if x.shape[0] < 2:
        raise InsufficientDataError("convergence diagnostics need at least 2 chains")
    if x.shape[1] < 10:
        raise InsufficientDataError("convergence diagnostics need at least 10 draws per chain")
    return x


def split_chains(x: np.ndarray) -> np.ndarray:
    """Halve every chain; an odd middle draw is discarded."""
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n:]], axis=0)


def _variances(x):
    m, n = x.shape
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    B_over_n = float(np.var(np.mean(x, axis=1), ddof=1))
    var_plus = (n - 1) / n * W + B_over_n
    return W, var_plus


def split_rhat(x) -> float:
    """Split R-hat for one parameter, ``x`` of shape ``(chains, draws)``.

    Returns ``nan`` for zero within-chain variance; :func:`rhat` turns that
    into 1 plus a zero-variance flag.
    """
    s = split_chains(_as_chains(x))
    W, var_plus = _variances(s)
    if W <= 0:
        if var_plus <= 0:
            return float("nan")
        return float("inf")
    return float(np.sqrt(var_plus / W))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via zero-padded FFT."""
    m, n = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return acov / n


def effective_sample_size(x) -> float:
    """Multi-chain ESS from the split chains.

    Autocorrelations are combined across chains and summed over Geyer's
    initial monotone positive sequence.
    """
    s = split_chains(_as_chains(x))
    m, n = s.shape
    acov = _autocovariance(s)
    W, var_plus = _variances(s)
    if var_plus <= 0:
        return float(m * n)
    chain_var = acov[:, 0] * n / (n - 1)
    rho = 1.0 - (np.mean(chain_var) - np.mean(acov, axis=0)) / var_plus
    rho[0] = 1.0
    tau = 0.0
    prev = np.inf
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += pair
        prev = pair
        k += 1
    tau = 2.0 * tau - 1.0
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def mcse_mean(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(effective_sample_size(x)))


def mcse_sd(x) -> float:
    """Monte Carlo standard error of the posterior sd (delta method on x^2)."""
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    ess = effective_sample_size((x - x.mean()) ** 2)
    return sd / np.sqrt(2.0 * ess)


@dataclass(frozen=True)
class ConvergenceReport:
    names: tuple[str, ...]
    rhat: tuple[float, ...]
    rhat_raw: tuple[float, ...]
    ess: tuple[float, ...]
    flagged: tuple[str, ...]
    zero_variance: tuple[str, ...]

    @property
    def converged(self) -> bool:
        return not self.flagged

    @property
    def max_rhat(self) -> float:
        return max(self.rhat) if self.rhat else float("nan")

    def as_rows(self) -> list[dict]:
        return [{"parameter": n, "rhat": r, "rhat_raw": rr, "ess": e,
                 "flag": n in self.flagged, "zero_variance": n in self.zero_variance}
                for n, r, rr, e in zip(self.names, self.rhat, self.rhat_raw, self.ess)]

    def to_text(self) -> str:
        width = max((len(n) for n in self.names), default=9)
        lines = [f"{'parameter':<{width}}  {'Rhat':>7}  {'ESS':>9}"]
        for row in self.as_rows():
            mark = " *" if row["flag"] else (" (constant)" if row["zero_variance"] else "")
            lines.append(f"{row['parameter']:<{width}}  {row['rhat']:7.4f}  {row['ess']:9.1f}{mark}")
        return "\n".join(lines) + "\n"


def rhat(draws, names=None, threshold: float = RHAT_THRESHOLD) -> ConvergenceReport:
    """Convergence report for every parameter.

    ``draws`` is a :class:`~baseline_cea.sampler.PosteriorDraws` or an array of
    shape ``(chains, draws, parameters)``.  Reported R-hat is floored at 1
    (the raw split estimate can dip just below 1 by sampling noise); constant
    parameters get R-hat 1 and a zero-variance flag.
    """
    if hasattr(draws, "draws"):
        names = draws.names
        arr = draws.draws
    else:
        arr = np.asarray(draws, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        names = tuple(names) if names is not None else tuple(f"p{k}" for k in range(arr.shape[2]))
    if arr.shape[0] < 2:
        raise InsufficientDataError("convergence diagnostics need at least 2 chains")
    rh, raw, ess, flagged, const = [], [], [], [], []
    for k, name in enumerate(names):
        x = arr[:, :, k]
        r = split_rhat(x)
        if np.isnan(r):
            const.append(name)
            raw.append(1.0)
            rh.append(1.0)
            ess.append(float(x.size))
            continue
        raw.append(r)
        rh.append(max(r, 1.0))
        ess.append(effective_sample_size(x))
        if r > threshold:
            flagged.append(name)
    return ConvergenceReport(tuple(names), tuple(rh), tuple(raw), tuple(ess),
                             tuple(flagged), tuple(const))
