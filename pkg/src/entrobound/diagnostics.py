"""Equality-condition diagnostics for the prediction bounds: innovations
must be (asymptotically) white, Gaussian, and carry no information about
the past.

"White" is tested two ways, reflecting that independence and
uncorrelatedness differ off the Gaussian case: a portmanteau test on
autocorrelations (Ljung-Box; multivariate trace form for vector
innovations) and a nearest-neighbor mutual-information test against
lagged blocks.  Multi-path sample sets sum the per-path portmanteau
statistics, which keeps the chi-square reference exact for independent
paths.

The diagnostic gate is a conjunction without multiple-testing correction:
it feeds the "equality" label in bound reports, which is a Monte Carlo
resolution statement, not a hypothesis-testing claim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateSeriesError
from .infotheory import DEFAULT_K, ksg_mutual_info
from .predict import PredictorReport
from .procgen import SampleSet

MI_THRESHOLD_BITS = 0.02
DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class DiagnosticVerdict:
    """Outcome of one diagnostic test.

    ``p_value`` is NaN for the mutual-information tests, which compare an
    estimate against a calibrated threshold instead of a null
    distribution; ``details`` carries the threshold and estimator SE.
    """

    test: str
    statistic: float
    p_value: float
    passed: bool
    alpha: float
    details: dict

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "pass": self.passed,
            "alpha": self.alpha,
            "details": self.details,
        }


def _check_not_constant(data: np.ndarray) -> None:
    if np.max(np.var(data, axis=1)) < 1e-24:
        raise DegenerateSeriesError("series is (numerically) constant")


def ljung_box(innovations: SampleSet, n_lags: int = 20,
              alpha: float = DEFAULT_ALPHA) -> DiagnosticVerdict:
    """Portmanteau whiteness test on innovation autocorrelations.

    Vector innovations use the trace form
    N(N+2) sum_l tr(C_l^T C_0^{-1} C_l C_0^{-1})/(N-l), which reduces to
    the classic Ljung-Box statistic for n = 1.  Per-path statistics are
    summed; the reference is chi-square with paths * n^2 * n_lags degrees
    of freedom.
    """
    data = innovations.data
    P, N, n = data.shape
    if N <= 10 * n_lags:
        raise ValueError(f"need length > {10 * n_lags} for {n_lags} lags, got {N}")
    _check_not_constant(data)
    q_total = 0.0
    for p in range(P):
        e = data[p] - data[p].mean(axis=0)
        c0 = e.T @ e / N
        c0_inv = np.linalg.inv(c0)
        q = 0.0
        for lag in range(1, n_lags + 1):
            cl = e[:- lag].T @ e[lag:] / N
            q += float(np.trace(cl.T @ c0_inv @ cl @ c0_inv)) / (N - lag)
        q_total += N * (N + 2.0) * q
    dof = P * n * n * n_lags
    p_value = float(chi2.sf(q_total, dof))
    return DiagnosticVerdict(test="ljung_box", statistic=q_total, p_value=p_value,
                             passed=p_value > alpha, alpha=alpha,
                             details={"n_lags": n_lags, "dof": dof, "paths": P})


def jarque_bera(innovations: SampleSet,
                alpha: float = DEFAULT_ALPHA) -> DiagnosticVerdict:
    """Skewness/kurtosis Gaussianity test, summed over paths and channels."""
    data = innovations.data
    P, N, n = data.shape
    if N < 1000:
        raise ValueError(f"need length >= 1000, got {N}")
    _check_not_constant(data)
    centered = data - data.mean(axis=1, keepdims=True)
    m2 = np.mean(centered ** 2, axis=1)
    if np.min(m2) < 1e-24:
        raise DegenerateSeriesError("a channel is (numerically) constant")
    skew = np.mean(centered ** 3, axis=1) / m2 ** 1.5
    kurt = np.mean(centered ** 4, axis=1) / m2 ** 2
    jb = N * (skew ** 2 / 6.0 + (kurt - 3.0) ** 2 / 24.0)
    stat = float(np.sum(jb))
    dof = 2 * P * n
    p_value = float(chi2.sf(stat, dof))
    return DiagnosticVerdict(test="jarque_bera", statistic=stat, p_value=p_value,
                             passed=p_value > alpha, alpha=alpha,
                             details={"dof": dof, "paths": P})


def _lagged_mi(head: SampleSet, past: SampleSet, lag_start: int, embed: int,
               k: int, threshold_bits: float, max_points: int,
               seed: int, test_name: str) -> DiagnosticVerdict:
    """MI between head[t] and the embedded block of past at lags
    lag_start..lag_start+embed-1, where head index t aligns with past
    index t + offset (offset inferred from the length difference)."""
    h = head.data
    y = past.data
    offset = y.shape[1] - h.shape[1]
    if offset < 0:
        raise ValueError("past series must be at least as long as the head series")
    t_min = max(0, lag_start + embed - 1 - offset)
    L = h.shape[1] - t_min
    if L < 10 * k + 5:
        raise ValueError("not enough aligned samples for the MI test")
    head_cloud = h[:, t_min:, :].reshape(-1, h.shape[2])
    blocks = []
    for i in range(embed):
        start = t_min + offset - lag_start - i
        blocks.append(y[:, start: start + L, :])
    past_cloud = np.concatenate(blocks, axis=2).reshape(-1, embed * y.shape[2])
    if head_cloud.shape[0] > max_points:
        idx = np.random.Generator(np.random.Philox(key=seed)).choice(
            head_cloud.shape[0], size=max_points, replace=False)
        idx.sort()
        head_cloud, past_cloud = head_cloud[idx], past_cloud[idx]
    est = ksg_mutual_info(head_cloud, past_cloud, k=k, se_seed=seed)
    se = est.std_error if math.isfinite(est.std_error) else 0.0
    threshold = threshold_bits + 2.0 * se
    passed = (not est.saturated) and est.value < threshold
    return DiagnosticVerdict(
        test=test_name, statistic=est.value, p_value=float("nan"),
        passed=passed, alpha=float("nan"),
        details={"threshold_bits": threshold, "std_error": est.std_error,
                 "lag_start": lag_start, "embed": embed,
                 "n_points": head_cloud.shape[0],
                 "saturated": est.saturated})


def innovation_independence(innovations: SampleSet, past: SampleSet,
                            embed: int = 2, k: int = DEFAULT_K,
                            threshold_bits: float = MI_THRESHOLD_BITS,
                            max_points: int = 20_000, seed: int = 0) -> DiagnosticVerdict:
    """Estimated I(innovation at k; past block) must sit below the
    calibrated threshold (0.02 bits + 2 SE by default).

    ``past`` is normally the sample set the predictor ran on; index
    alignment uses the length difference between the two sets, so pass
    the innovations exactly as run_predictor produced them.
    """
    return _lagged_mi(innovations, past, lag_start=1, embed=embed, k=k,
                      threshold_bits=threshold_bits, max_points=max_points,
                      seed=seed, test_name="innovation_independence")


def colored_order_check(innovations: SampleSet, m: int, k: int = DEFAULT_K,
                        embed: int = 2, threshold_bits: float = MI_THRESHOLD_BITS,
                        max_points: int = 20_000, seed: int = 0) -> DiagnosticVerdict:
    """m-step equality condition: the innovation at k must be independent
    of innovations at lags >= m ("colored up to order m-1").

    For m = 1 this is exactly innovation_independence run against the
    innovation stream itself.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    verdict = _lagged_mi(innovations, innovations, lag_start=m, embed=embed, k=k,
                         threshold_bits=threshold_bits, max_points=max_points,
                         seed=seed, test_name="colored_order_check")
    return DiagnosticVerdict(test=verdict.test, statistic=verdict.statistic,
                             p_value=verdict.p_value, passed=verdict.passed,
                             alpha=verdict.alpha,
                             details={**verdict.details, "m": m})


@dataclass(frozen=True)
class ConjunctionVerdict:
    """All-of gate over an arbitrary set of diagnostic verdicts (used for
    m-step equality conditions, where plain whiteness is the wrong test)."""

    verdicts: tuple

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        return {"pass": self.passed,
                "tests": [v.to_dict() for v in self.verdicts]}


@dataclass(frozen=True)
class GaussianWhiteningVerdict:
    """Conjunction gate for the equality label: innovations must look
    white (Ljung-Box), Gaussian (Jarque-Bera), and independent of the
    past (mutual information)."""

    whiteness: DiagnosticVerdict
    gaussianity: DiagnosticVerdict
    independence: DiagnosticVerdict

    @property
    def passed(self) -> bool:
        return (self.whiteness.passed and self.gaussianity.passed
                and self.independence.passed)

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "whiteness": self.whiteness.to_dict(),
            "gaussianity": self.gaussianity.to_dict(),
            "independence": self.independence.to_dict(),
        }


def gaussian_whitening_check(report: PredictorReport, samples: SampleSet,
                             alpha: float = DEFAULT_ALPHA, n_lags: int = 20,
                             embed: int = 2, k: int = DEFAULT_K,
                             max_points: int = 20_000,
                             seed: int = 0) -> GaussianWhiteningVerdict:
    """Run the full innovation gate on a predictor report.

    ``samples`` must be the sample set the report was produced on."""
    innov = report.innovations
    return GaussianWhiteningVerdict(
        whiteness=ljung_box(innov, n_lags=n_lags, alpha=alpha),
        gaussianity=jarque_bera(innov, alpha=alpha),
        independence=innovation_independence(innov, samples, embed=embed, k=k,
                                             max_points=max_points, seed=seed),
    )
