"""
Goodness of fit: residuals from the time change of the fitted compensator and Kolmogorov-Smirnov tests against the
unit exponential law.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
import pandas as pd
from scipy.stats import kstwobign

from msdhawkes.likelihood import compensator_increments
from msdhawkes.util import LowPowerWarning, ValidationError, zip

logger = logging.getLogger(__name__)

# below this sample size the asymptotic Kolmogorov distribution is unreliable
LOW_POWER_SIZE = 35


class KsResult(NamedTuple):
    statistic: float
    p_value: float


def ks_test_exp1(sample):
    """
    One-sample Kolmogorov-Smirnov test of ``sample`` against the CDF :math:`1 - e^{-x}` with the asymptotic
    Kolmogorov distribution for the p-value.

    :param sample: non-empty array of non-negative values
    :return: :class:`KsResult`
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("KS test requires a non-empty sample")
    cdf = -np.expm1(-x)
    d_plus = np.max(np.arange(1, n + 1) / n - cdf)
    d_minus = np.max(cdf - np.arange(n) / n)
    statistic = float(np.clip(max(d_plus, d_minus), 0.0, 1.0))
    p_value = float(np.clip(kstwobign.sf(np.sqrt(n) * statistic), 0.0, 1.0))
    return KsResult(statistic=statistic, p_value=p_value)


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    """
    Residuals :math:`r^e_i = \\int_{t^e_i}^{t^e_{i+1}} \\lambda^e(s) ds` between consecutive events of each type,
    with their KS tests.

    :ivar residuals: one array per coordinate
    :ivar statistics: KS statistic per coordinate (``nan`` without residuals)
    :ivar p_values: KS p-value per coordinate (``nan`` without residuals)
    :ivar level: significance level of the tests
    """
    residuals: Tuple[np.ndarray, ...]
    statistics: np.ndarray
    p_values: np.ndarray
    level: float = 0.05

    @property
    def passed(self):
        with np.errstate(invalid="ignore"):
            return self.p_values >= self.level

    @property
    def low_power(self):
        return np.array([len(r) < LOW_POWER_SIZE for r in self.residuals])

    @property
    def all_passed(self):
        return bool(np.all(self.passed))

    def to_frame(self):
        """One column ``r_<type>`` per coordinate (1-based), shorter columns padded with missing values."""
        length = max((len(r) for r in self.residuals), default=0)
        return pd.DataFrame({f"r_{e + 1}": np.r_[r, np.full(length - len(r), np.nan)]
                             for e, r in enumerate(self.residuals)})

    def summary_frame(self):
        return pd.DataFrame(dict(type=np.arange(1, len(self.residuals) + 1),
                                 n=[len(r) for r in self.residuals],
                                 statistic=self.statistics, p_value=self.p_values,
                                 passed=self.passed, low_power=self.low_power))


def residuals(params, events, state, level=0.05):
    """
    Residuals of all coordinates by exact segment-wise integration of the fitted intensity.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param events: strict :class:`~msdhawkes.core.EventStream`
    :param state: :class:`~msdhawkes.core.StateTrajectory`
    :param level: significance level of the KS tests
    :return: :class:`ResidualSeries`
    """
    if not 0 < level < 1:
        raise ValidationError(f"level = {level} must lie in (0, 1)")
    arrays, increments = compensator_increments(params, events, state)
    series, statistics, p_values = [], [], []
    for e, (points, inc) in enumerate(zip(arrays.points, increments)):
        cumulative = np.r_[0.0, np.cumsum(inc)]
        r = np.maximum(np.diff(cumulative[points]), 0.0)
        series.append(r)
        if len(r) == 0:
            statistics.append(np.nan)
            p_values.append(np.nan)
            continue
        if len(r) < LOW_POWER_SIZE:
            warnings.warn(f"only {len(r)} residuals for type {e + 1}: the KS test has low power", LowPowerWarning)
        ks = ks_test_exp1(r)
        statistics.append(ks.statistic)
        p_values.append(ks.p_value)
        logger.debug(f"type {e + 1}: {len(r)} residuals, KS statistic {ks.statistic}, p-value {ks.p_value}")
    return ResidualSeries(residuals=tuple(series), statistics=np.array(statistics), p_values=np.array(p_values),
                          level=level)


@dataclass(frozen=True, eq=False)
class FitReport:
    """Diagnostic record of a fit: AIC and per-coordinate KS verdicts; validated if all coordinates pass."""
    model: str
    method: str
    log_likelihood: float
    aic: float
    n_params: int
    residuals: ResidualSeries

    @property
    def all_passed(self):
        return self.residuals.all_passed

    def to_dict(self):
        return dict(model=self.model, method=self.method, log_likelihood=self.log_likelihood, aic=self.aic,
                    n_params=self.n_params,
                    statistics=[None if np.isnan(s) else float(s) for s in self.residuals.statistics],
                    p_values=[None if np.isnan(p) else float(p) for p in self.residuals.p_values],
                    passed=[bool(p) for p in self.residuals.passed],
                    low_power=[bool(p) for p in self.residuals.low_power],
                    level=self.residuals.level,
                    all_passed=self.all_passed)


def fit_report(fit, events, state, level=0.05):
    """
    Residual diagnostics of ``fit`` on ``(events, state)``. If ``state`` carries more named covariates than the
    fitted model, the fitted ones are selected by name.

    :param fit: :class:`~msdhawkes.core.FitResult`
    :return: :class:`FitReport`
    """
    if state.d_x != fit.shape.d_x and fit.covariates is not None:
        state = state.select(fit.covariates)
    return FitReport(model=fit.model_code, method=fit.method.value, log_likelihood=fit.log_likelihood,
                     aic=fit.aic, n_params=fit.n_params, residuals=residuals(fit.params, events, state, level))


def qq_points(sample):
    """
    Exponential QQ data: theoretical quantiles :math:`-\\log(1 - (i - 1/2) / n)` against the sorted sample.

    :return: :class:`pandas.DataFrame` with columns ``theoretical`` and ``empirical``
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    probabilities = (np.arange(1, n + 1) - 0.5) / n
    return pd.DataFrame(dict(theoretical=-np.log1p(-probabilities), empirical=x))
