"""Method-agreement statistics for comparing threshold measurements:
Spearman rank correlation, Bland-Altman bias with 95% limits of agreement,
and the intraclass correlation ICC(2,k) (two-way, absolute agreement,
average of k measures).

Thresholds repeatedly hit the measurement ceiling in practice, so ranks use
mid-ranks (average rank across ties) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps


class AgreementDataError(ValueError):
    """Input vectors unusable for the requested statistic."""


class DegenerateVarianceError(ArithmeticError):
    """A variance term required by the statistic is zero."""


@dataclass(frozen=True)
class PairedSeries:
    """Two equal-length measurement vectors (e.g. thresholds from two modes)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if a.ndim != 1 or a.shape != b.shape:
            raise AgreementDataError("paired series must be 1-d and equal-length")
        if len(a) < 3:
            raise AgreementDataError("need at least 3 pairs")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise AgreementDataError("non-finite entries in paired series")


def spearman(a, b) -> float:
    """Pearson correlation of mid-ranks."""
    series = PairedSeries(a, b)
    ra = sps.rankdata(series.a, method="average")
    rb = sps.rankdata(series.b, method="average")
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = np.sqrt((da**2).sum() * (db**2).sum())
    if denom == 0:
        raise DegenerateVarianceError("rank variance is zero; correlation undefined")
    return float((da * db).sum() / denom)


@dataclass(frozen=True)
class BlandAltmanResult:
    bias: float
    loa_low: float
    loa_high: float

    def to_json(self) -> dict:
        return {"bias": self.bias, "loa_low": self.loa_low, "loa_high": self.loa_high}


def bland_altman(a, b) -> BlandAltmanResult:
    """Bias = mean(a - b); limits of agreement = bias +/- 1.96 sample sd."""
    series = PairedSeries(a, b)
    d = series.a - series.b
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return BlandAltmanResult(bias=bias, loa_low=bias - 1.96 * sd, loa_high=bias + 1.96 * sd)


def icc_2k(ratings) -> float:
    """ICC(2,k): two-way random effects, absolute agreement, average measures.

    ratings is an n x k matrix (n subjects rated by k methods/raters):
    ICC = (MS_R - MS_E) / (MS_R + (MS_C - MS_E) / n).
    """
    m = np.asarray(ratings, dtype=float)
    if m.ndim != 2:
        raise AgreementDataError("ratings must be a 2-d matrix")
    n, k = m.shape
    if n < 3 or k < 2:
        raise AgreementDataError(f"need at least 3 subjects and 2 raters, got {n}x{k}")
    if not np.all(np.isfinite(m)):
        raise AgreementDataError("non-finite entries in ratings")

    grand = m.mean()
    row_means = m.mean(axis=1)
    col_means = m.mean(axis=0)
    ss_rows = k * ((row_means - grand) ** 2).sum()
    ss_cols = n * ((col_means - grand) ** 2).sum()
    ss_total = ((m - grand) ** 2).sum()
    ss_err = ss_total - ss_rows - ss_cols

    ms_rows = ss_rows / (n - 1)
    ms_cols = ss_cols / (k - 1)
    ms_err = ss_err / ((n - 1) * (k - 1))

    denom = ms_rows + (ms_cols - ms_err) / n
    if denom == 0:
        raise DegenerateVarianceError("ICC denominator is zero; agreement undefined")
    return float((ms_rows - ms_err) / denom)
