"""
Simulation studies: estimator accuracy on replicated synthetic data, AIC order selection (with exponential or
power-law generating kernels) and the :math:`T^{-1/2}` rate of the estimator spread.

Replicate ``r`` of a study with seed ``s`` draws its state, events and optimiser starts from
``stream(s, r)``, so every row of a result table can be reproduced on its own.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from msdhawkes.core import HawkesParams, FitMethod
from msdhawkes.estimate import MleOptions, EmOptions, fit_mle, fit_em, select_model
from msdhawkes.simulate import (SimulationOptions, PowerLawKernelParams, simulate_state, simulate_msd,
                                simulate_powerlaw)
from msdhawkes.util import stream, parallel_map, ValidationError, MsdHawkesError

logger = logging.getLogger(__name__)


def parameter_labels(shape):
    """
    Flat labels of all parameters with 1-based indices: ``nu_e``, ``alpha_e_e'_n``, ``beta_e_e'_n``,
    ``theta_e_i``.
    """
    labels = [f"nu_{e + 1}" for e in range(shape.d_e)]
    for name in ["alpha", "beta"]:
        labels += [f"{name}_{e + 1}_{e_ + 1}_{n + 1}"
                   for e in range(shape.d_e) for e_ in range(shape.d_e) for n in range(shape.d_n)]
    labels += [f"theta_{e + 1}_{i + 1}" for e in range(shape.d_e) for i in range(shape.d_x)]
    return labels


def flatten_params(params):
    """Parameter values in the order of :func:`parameter_labels`, as a dictionary."""
    values = np.r_[params.nu, params.alpha.ravel(), params.beta.ravel(), params.theta.ravel()]
    return dict(zip(parameter_labels(params.shape), values.tolist()))


@dataclass(frozen=True, eq=False)
class _Replicate:
    index: int
    horizon: float
    seed: Optional[int]
    params: Optional[HawkesParams]
    powerlaw: Optional[Tuple[PowerLawKernelParams, np.ndarray, np.ndarray]]
    simulation: SimulationOptions


def _simulate(task):
    """Synthetic ``(events, state, rng)`` of one replicate."""
    rng = stream(task.seed, task.index)
    if task.params is not None:
        state = simulate_state(task.simulation.state_rate, task.params.shape.d_x, task.horizon, rng)
        events = simulate_msd(task.params, state, task.horizon, rng, max_events=task.simulation.max_events)
    else:
        kernels, nu, theta = task.powerlaw
        state = simulate_state(task.simulation.state_rate, np.shape(theta)[1], task.horizon, rng)
        events = simulate_powerlaw(kernels, nu, theta, state, task.horizon, rng,
                                   max_events=task.simulation.max_events)
    return events, state, rng


def _fit(events, state, shape, method, options, rng):
    # starts of every replicate come from its own stream
    options = replace(options, seed=int(rng.integers(2 ** 32)))
    if method == FitMethod.EM:
        return fit_em(events, state, shape, options)
    return fit_mle(events, state, shape, replace(options, jobs=1))


def _default_options(method, options):
    if options is not None:
        return options
    return EmOptions() if method == FitMethod.EM else MleOptions()


def _estimation_replicate(args):
    task, method, options = args
    row = dict(replicate=task.index, horizon=task.horizon)
    try:
        events, state, rng = _simulate(task)
        row["n_events"] = len(events)
        fit = _fit(events, state, task.params.shape, method, options, rng)
    except MsdHawkesError as err:
        logger.warning(f"replicate {task.index} failed: {err}")
        return dict(row, error=f"{type(err).__name__}: {err}")
    return dict(row, log_likelihood=fit.log_likelihood, converged=fit.converged, method=fit.method.value,
                optimizer=fit.optimizer, **flatten_params(fit.params))


def replicate_estimation(params, horizon, n_replicates, seed=None, method=FitMethod.MLE, options=None,
                         simulation=None, jobs=1, progress=False, optimizer=None):
    """
    Simulate ``n_replicates`` independent data sets from ``params`` (with a synthetic state process) and estimate a
    model of the same shape on each.

    :param params: true :class:`~msdhawkes.core.HawkesParams`
    :param method: ``"MLE"`` or ``"EM"``
    :param options: :class:`~msdhawkes.estimate.MleOptions` or :class:`~msdhawkes.estimate.EmOptions`
    :param optimizer: overrides :attr:`~msdhawkes.estimate.MleOptions.optimizer` of a direct maximisation
    :param simulation: :class:`~msdhawkes.simulate.SimulationOptions`
    :return: :class:`pandas.DataFrame`, one row per replicate with the estimates (columns of
        :func:`parameter_labels`)
    """
    method = FitMethod(method)
    options = _default_options(method, options)
    if optimizer is not None:
        if method != FitMethod.MLE:
            raise ValidationError(f"an optimizer can only be chosen for MLE, not {method.value}")
        options = replace(options, optimizer=optimizer)
    simulation = SimulationOptions() if simulation is None else simulation
    tasks = [(_Replicate(r, float(horizon), seed, params, None, simulation), method, options)
             for r in range(n_replicates)]
    rows = parallel_map(_estimation_replicate, tasks, jobs=jobs, progress=progress, desc="estimation")
    return pd.DataFrame(rows)


def estimation_summary(estimates, params):
    """
    Median and interquartile range of every parameter over the replicates of :func:`replicate_estimation`.

    :return: :class:`pandas.DataFrame` indexed by parameter label with columns ``true``, ``median``, ``q25``,
        ``q75``, ``iqr`` and ``bias`` (median minus true value)
    """
    truth = flatten_params(params)
    rows = []
    for label, value in truth.items():
        sample = estimates[label].dropna().to_numpy(dtype=float) if label in estimates else np.empty(0)
        if len(sample) == 0:
            q25 = median = q75 = np.nan
        else:
            q25, median, q75 = np.quantile(sample, [0.25, 0.5, 0.75])
        rows.append(dict(parameter=label, true=value, median=median, q25=q25, q75=q75, iqr=q75 - q25,
                         bias=median - value))
    return pd.DataFrame(rows).set_index("parameter")


def _order_replicate(args):
    task, d_n_values, method, options = args
    try:
        events, state, rng = _simulate(task)
    except MsdHawkesError as err:
        logger.warning(f"replicate {task.index} failed: {err}")
        return dict(replicate=task.index, horizon=task.horizon, selected=np.nan,
                    error=f"{type(err).__name__}: {err}")
    options = replace(options, seed=int(rng.integers(2 ** 32)))
    if method == FitMethod.MLE:
        options = replace(options, jobs=1)
    covariates = tuple(range(state.d_x))
    table = select_model(events, state, [(d_n, covariates) for d_n in d_n_values], options=options,
                         method=method)
    row = dict(replicate=task.index, horizon=task.horizon, n_events=len(events))
    for entry in table.entries:
        row[f"aic_{entry.d_n}"] = np.nan if entry.fit is None else entry.fit.aic
    row["selected"] = table.best.d_n if table.ranked else np.nan
    return row


def replicate_order_selection(params=None, horizon=1000.0, n_replicates=20, d_n_values=range(1, 6), seed=None,
                              powerlaw=None, method=FitMethod.MLE, options=None, simulation=None, jobs=1,
                              progress=False):
    """
    AIC choice of the number of exponential terms on replicated synthetic data. Data come from ``params``
    (exponential kernels) or, if given, from ``powerlaw = (PowerLawKernelParams, nu, theta)``; candidates keep all
    covariates of the generating model and vary ``d_n``.

    :return: :class:`pandas.DataFrame`, one row per replicate with ``aic_<d_n>`` per candidate and ``selected``
    """
    if (params is None) == (powerlaw is None):
        raise ValidationError("pass exactly one of params and powerlaw")
    d_n_values = tuple(int(d) for d in d_n_values)
    if not d_n_values:
        raise ValidationError("no candidate d_n")
    method = FitMethod(method)
    options = _default_options(method, options)
    simulation = SimulationOptions() if simulation is None else simulation
    if powerlaw is not None:
        kernels, nu, theta = powerlaw
        powerlaw = (kernels, np.asarray(nu, dtype=float), np.atleast_2d(np.asarray(theta, dtype=float)))
    tasks = [(_Replicate(r, float(horizon), seed, params, powerlaw, simulation), d_n_values, method, options)
             for r in range(n_replicates)]
    rows = parallel_map(_order_replicate, tasks, jobs=jobs, progress=progress, desc="order selection")
    frame = pd.DataFrame(rows)
    logger.info(f"T = {horizon}: selected d_n counts {frame['selected'].value_counts().to_dict()}")
    return frame


def replicate_convergence_rate(params, horizons=(1000.0, 4000.0), n_replicates=20, seed=None,
                               method=FitMethod.MLE, options=None, simulation=None, jobs=1, progress=False):
    """
    Standard deviation of every estimate at each horizon. With a :math:`T^{-1/2}` rate the ratio of the spreads at
    ``T`` and ``4 T`` is close to 2.

    :return: ``(estimates, spreads)``: the concatenated per-replicate estimates and a table indexed by parameter
        with one ``std_<T>`` column per horizon and ``ratio`` (first over last horizon)
    """
    horizons = [float(h) for h in horizons]
    if len(horizons) < 2:
        raise ValidationError("at least two horizons are required")
    frames = [replicate_estimation(params, h, n_replicates, seed=seed, method=method, options=options,
                                   simulation=simulation, jobs=jobs, progress=progress) for h in horizons]
    estimates = pd.concat(frames, ignore_index=True)
    labels = parameter_labels(params.shape)
    spreads = pd.DataFrame(index=pd.Index(labels, name="parameter"))
    for h, frame in zip(horizons, frames):
        spreads[f"std_{h:g}"] = [frame[label].std(ddof=1) if label in frame else np.nan for label in labels]
    spreads["ratio"] = spreads.iloc[:, 0] / spreads.iloc[:, -1]
    return estimates, spreads

