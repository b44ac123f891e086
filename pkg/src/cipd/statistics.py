"""Photon-number histograms, Poisson fits and derived detector figures."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MIN_EXPECTED = 5.0

_GAMMA_EPS = 1e-15
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


class Estimate(NamedTuple):
    value: float
    std_error: float


@dataclass
class Histogram:
    counts_by_k: dict[int, int] = field(default_factory=dict)
    n_samples: int = 0

    def __post_init__(self):
        if any(k < 0 for k in self.counts_by_k):
            raise ValueError("histogram keys must be >= 0")
        if sum(self.counts_by_k.values()) != self.n_samples:
            raise ValueError("occurrences must sum to n_samples")

    def mean(self) -> float:
        if self.n_samples == 0:
            raise ValueError("empty histogram has no mean")
        return sum(k * c for k, c in self.counts_by_k.items()) / self.n_samples

    def dense(self) -> np.ndarray:
        """Occurrences for k = 0..max_k as an array."""
        if not self.counts_by_k:
            return np.zeros(0, dtype=np.int64)
        out = np.zeros(max(self.counts_by_k) + 1, dtype=np.int64)
        for k, c in self.counts_by_k.items():
            out[k] = c
        return out


@dataclass
class PoissonFit:
    lambda_hat: float
    std_error: float
    n_samples: int
    chi_square: float | None = None
    dof: int | None = None
    p_value: float | None = None
    merged_bins: list[tuple[int, int | None, int, float]] = field(default_factory=list)

    @property
    def gof_available(self) -> bool:
        return self.p_value is not None


def build_histogram(counts) -> Histogram:
    values = [int(v) for v in np.asarray(counts).reshape(-1)]
    if any(v < 0 for v in values):
        raise ValueError("counts must be non-negative")
    table = Counter(values)
    return Histogram(dict(sorted(table.items())), len(values))


def poisson_logpmf(lam: float, k):
    k = np.asarray(k)
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("lambda must be finite and >= 0")
    if lam == 0:
        return np.where(k == 0, 0.0, -np.inf)
    lgk = np.vectorize(math.lgamma, otypes=[float])(k + 1.0)
    return k * math.log(lam) - lam - lgk


def poisson_pmf(lam: float, k):
    """e^-lam lam^k / k!, evaluated through logs."""
    out = np.exp(poisson_logpmf(lam, k))
    return float(out) if np.ndim(out) == 0 else out


def _gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cfrac(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x), modified Lentz."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x)/Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cfrac(a, x)


def chi2_sf(x: float, dof: int) -> float:
    """Survival function of the chi-square distribution."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if x <= 0:
        return 1.0
    return gamma_q(0.5 * dof, 0.5 * x)


def merge_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = MIN_EXPECTED):
    """Merge adjacent bins left to right until each expected count >= min_expected.

    The final bin is open-ended; a short remainder is folded into the
    previous merged bin. Returns ``[(k_lo, k_hi, observed, expected)]`` with
    ``k_hi=None`` for the open tail.
    """
    merged = []
    lo = 0
    o_acc = 0
    e_acc = 0.0
    last = observed.size - 1
    for k in range(observed.size):
        o_acc += int(observed[k])
        e_acc += float(expected[k])
        if e_acc >= min_expected and k < last:
            merged.append([lo, k, o_acc, e_acc])
            lo, o_acc, e_acc = k + 1, 0, 0.0
    if merged and e_acc < min_expected:
        merged[-1][1] = None
        merged[-1][2] += o_acc
        merged[-1][3] += e_acc
    else:
        merged.append([lo, None, o_acc, e_acc])
    return [tuple(m) for m in merged]


def fit_poisson(hist: Histogram, min_expected: float = MIN_EXPECTED) -> PoissonFit:
    """Maximum-likelihood Poisson fit (the sample mean) with Pearson GOF.

    Bins ``0..max_k`` are compared against the fitted model, the last bin
    taking the whole upper tail. Goodness of fit uses ``merged - 2`` degrees
    of freedom and is omitted (``p_value=None``) with fewer than 3 merged bins.
    """
    if hist.n_samples < 1:
        raise ValueError("cannot fit an empty histogram")
    n = hist.n_samples
    lam = hist.mean()
    fit = PoissonFit(lam, math.sqrt(lam / n), n)

    observed = hist.dense()
    k = np.arange(observed.size)
    probs = poisson_pmf(lam, k) if observed.size > 1 else np.array([1.0])
    probs = np.atleast_1d(probs).astype(float)
    probs[-1] = max(0.0, 1.0 - probs[:-1].sum())
    bins = merge_bins(observed, n * probs, min_expected)
    fit.merged_bins = bins
    if len(bins) < 3:
        return fit
    chi = sum((o - e) ** 2 / e for _, _, o, e in bins)
    fit.chi_square = float(chi)
    fit.dof = len(bins) - 2
    fit.p_value = chi2_sf(chi, fit.dof)
    return fit


def estimate_qe(
    measured_mean: float,
    incident_mean: float,
    measured_std_error: float | None = None,
    n_samples: int | None = None,
) -> Estimate:
    """Quantum efficiency as measured carrier mean over incident photon mean.

    The error is propagated from the carrier mean's standard error; if that is
    not given, the Poisson value ``sqrt(mean / n_samples)`` is used.
    """
    if not incident_mean > 0:
        raise ValueError("incident_mean must be positive")
    if measured_mean < 0:
        raise ValueError("measured_mean must be non-negative")
    if measured_std_error is None:
        measured_std_error = math.sqrt(measured_mean / n_samples) if n_samples else 0.0
    return Estimate(measured_mean / incident_mean, measured_std_error / incident_mean)


def estimate_dark_rate(counts, window: float) -> Estimate:
    """Carriers per second from per-window counts.

    ``counts`` may be integer counts or signed real electron estimates; the
    rate is ``total / (n * window)`` with Poisson error ``sqrt(total)``.
    """
    if not window > 0:
        raise ValueError("window must be positive")
    arr = np.asarray(counts, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("no windows")
    total = float(arr.sum())
    span = arr.size * window
    return Estimate(total / span, math.sqrt(max(total, 0.0)) / span)
