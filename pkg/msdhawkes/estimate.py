"""
Parameter estimation: direct likelihood maximisation with random restarts, the EM algorithm built on the
branching structure, and AIC model selection.

The log-likelihood separates over coordinates, so every estimator solves one independent problem per event type
``e`` on the parameters ``(nu_e, alpha_e, beta_e, theta_e)``.
"""
import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from functools import cmp_to_key
from typing import Optional, Tuple, NamedTuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize, brentq

from msdhawkes.core import HawkesParams, ModelShape, FitResult, FitMethod, StateTrajectory
from msdhawkes.likelihood import (prepare, coordinate_terms, recursion_cache, segment_compensator, decayed_sums,
                                  TimelineArrays)
from msdhawkes.util import (decay, stream, parallel_map, ValidationError, ConvergenceWarning,
                            UnidentifiableCoordinateWarning, zip)

logger = logging.getLogger(__name__)

OPTIMIZERS = ("L-BFGS-B", "TNC")


def _as_mask(mask, d_e=None):
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ValidationError(f"alpha_mask must be a square boolean matrix, got shape {mask.shape}")
    if d_e is not None and mask.shape[0] != d_e:
        raise ValidationError(f"alpha_mask has shape {mask.shape} but d_e = {d_e}")
    return tuple(tuple(bool(v) for v in row) for row in mask)


@dataclass(frozen=True)
class MleOptions:
    """
    Options of :func:`fit_mle`.

    :ivar n_starts: number of random starting points per coordinate
    :ivar nu_bounds: box for baseline intensities
    :ivar alpha_bounds: box for kernel amplitudes
    :ivar beta_bounds: box for decay rates
    :ivar theta_max: box ``[-theta_max, theta_max]`` for state sensitivities
    :ivar optimizer: ``"L-BFGS-B"`` (limited-memory quasi-Newton) or ``"TNC"`` (truncated Newton)
    :ivar ftol: function-change tolerance of the optimiser
    :ivar gtol: projected-gradient tolerance of the optimiser
    :ivar max_iterations: iteration limit per start (function-evaluation limit for TNC)
    :ivar seed: seed of the random starts (``None`` for fresh entropy)
    :ivar alpha_mask: ``d_e x d_e`` booleans; ``False`` fixes the kernel ``alpha[e, e']`` to zero
    :ivar init: starting parameters tried before the random starts
    :ivar jobs: number of worker processes for the starts (``None`` for all cores)
    """
    n_starts: int = 12
    nu_bounds: Tuple[float, float] = (1e-8, 1e4)
    alpha_bounds: Tuple[float, float] = (1e-8, 1e4)
    beta_bounds: Tuple[float, float] = (1e-6, 1e4)
    theta_max: float = 10.0
    optimizer: str = "L-BFGS-B"
    ftol: float = 1e-12
    gtol: float = 1e-7
    max_iterations: int = 3000
    seed: Optional[int] = None
    alpha_mask: Optional[Tuple[Tuple[bool, ...], ...]] = None
    init: Optional[HawkesParams] = None
    jobs: Optional[int] = 1

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValidationError(f"n_starts = {self.n_starts} must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer = {self.optimizer!r} must be one of {OPTIMIZERS}")
        for name in ["nu_bounds", "alpha_bounds", "beta_bounds"]:
            low, high = getattr(self, name)
            if not (np.isfinite(low) and np.isfinite(high) and 0 <= low < high):
                raise ValidationError(f"{name} = {(low, high)} must be finite and ordered")
            object.__setattr__(self, name, (float(low), float(high)))
        if self.beta_bounds[0] <= 0:
            raise ValidationError(f"beta_bounds[0] = {self.beta_bounds[0]} must be > 0")
        if not (np.isfinite(self.theta_max) and self.theta_max > 0):
            raise ValidationError(f"theta_max = {self.theta_max} must be a positive real")
        if self.ftol <= 0 or self.gtol <= 0 or self.max_iterations < 1:
            raise ValidationError("tolerances must be > 0 and max_iterations >= 1")
        object.__setattr__(self, "alpha_mask", _as_mask(self.alpha_mask))

    def no_cross_excitation(self, d_e):
        """Options restricting the model to self-excitation only."""
        return replace(self, alpha_mask=np.eye(d_e, dtype=bool))

    def mask(self, d_e):
        if self.alpha_mask is None:
            return np.ones((d_e, d_e), dtype=bool)
        return np.array(_as_mask(self.alpha_mask, d_e))


@dataclass(frozen=True)
class EmOptions:
    """
    Options of :func:`fit_em`.

    :ivar max_sweeps: maximal number of EM sweeps per coordinate
    :ivar tol_loglik: stop once the observed log-likelihood changes by less than this (absolute)
    :ivar tol_params: the largest relative parameter change must also be below this to stop
    :ivar theta_tol: gradient-norm tolerance of the inner Newton solver for theta
    :ivar theta_max_iterations: iteration limit of the inner Newton solver
    :ivar beta_xtol: absolute tolerance of the root finder for beta
    :ivar monotone_slack: tolerated decrease of the observed log-likelihood between sweeps
    """
    max_sweeps: int = 2000
    tol_loglik: float = 1e-9
    tol_params: float = 1e-7
    theta_tol: float = 1e-8
    theta_max_iterations: int = 100
    beta_xtol: float = 1e-12
    monotone_slack: float = 1e-8
    nu_min: float = 1e-8
    beta_bounds: Tuple[float, float] = (1e-6, 1e4)
    theta_max: float = 10.0
    seed: Optional[int] = None
    alpha_mask: Optional[Tuple[Tuple[bool, ...], ...]] = None
    init: Optional[HawkesParams] = None

    def __post_init__(self):
        for name in ["tol_loglik", "tol_params", "theta_tol", "beta_xtol", "monotone_slack", "nu_min",
                     "theta_max"]:
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} = {getattr(self, name)} must be > 0")
        if self.max_sweeps < 1 or self.theta_max_iterations < 1:
            raise ValidationError("iteration limits must be >= 1")
        low, high = self.beta_bounds
        if not 0 < low < high < np.inf:
            raise ValidationError(f"beta_bounds = {self.beta_bounds} must be positive, finite and ordered")
        object.__setattr__(self, "alpha_mask", _as_mask(self.alpha_mask))

    def mask(self, d_e):
        if self.alpha_mask is None:
            return np.ones((d_e, d_e), dtype=bool)
        return np.array(_as_mask(self.alpha_mask, d_e))


def _prepare_fit(events, state, shape):
    if not isinstance(shape, ModelShape):
        raise TypeError(f"shape must be a ModelShape, got {type(shape).__name__}")
    if state.d_x != shape.d_x:
        raise ValidationError(f"shape has d_x = {shape.d_x} but the state has {state.d_x} covariates")
    if len(events) == 0:
        raise ValidationError("cannot fit a model to an empty event stream")
    if events.types.max() >= shape.d_e:
        raise ValidationError(f"events contain type {events.types.max()} but the shape has d_e = {shape.d_e}")
    return prepare(HawkesParams.zeros(shape), events, state)


def _pack(nu, alpha, beta, theta):
    return np.concatenate([[nu], np.ravel(alpha), np.ravel(beta), np.ravel(theta)])


def _unpack(x, shape):
    d_e, d_n = shape.d_e, shape.d_n
    k = d_e * d_n
    return (float(x[0]), x[1:1 + k].reshape(d_e, d_n), x[1 + k:1 + 2 * k].reshape(d_e, d_n),
            np.array(x[1 + 2 * k:]))


def random_start(shape, n_events, horizon, rng, options=None):
    """
    Random starting point of one coordinate: ``nu`` uniform in ``[0.5, 2] * n_events / horizon``, ``beta``
    log-uniform in ``[0.1, 1000]`` (sorted decreasingly), ``alpha`` such that every kernel's
    :math:`\\sum_n \\alpha^n / \\beta^n` is uniform in ``[0, 0.8]``, ``theta`` uniform in ``[-1, 1]``.

    :return: ``(nu, alpha, beta, theta)`` with ``alpha``, ``beta`` of shape ``(d_e, d_n)``
    """
    d_e, d_n, d_x = shape.d_e, shape.d_n, shape.d_x
    rate = max(n_events, 1) / horizon
    nu = rng.uniform(0.5 * rate, 2.0 * rate)
    beta = -np.sort(-np.exp(rng.uniform(np.log(1e-1), np.log(1e3), size=(d_e, d_n))), axis=-1)
    ratio = rng.uniform(0, 0.8, size=(d_e, 1))
    weights = rng.uniform(size=(d_e, d_n))
    alpha = ratio * weights / weights.sum(axis=-1, keepdims=True) * beta
    theta = rng.uniform(-1, 1, size=d_x)
    if options is not None:
        nu = float(np.clip(nu, *options.nu_bounds))
        alpha = np.clip(alpha, *options.alpha_bounds)
        beta = np.clip(beta, *options.beta_bounds)
        theta = np.clip(theta, -options.theta_max, options.theta_max)
    return nu, alpha, beta, theta


class _StartTask(NamedTuple):
    arrays: TimelineArrays
    e: int
    shape: ModelShape
    x0: np.ndarray
    bounds: list
    options: MleOptions
    index: int


def _negative_log_likelihood(x, arrays, e, shape):
    ll, (d_nu, d_alpha, d_beta, d_theta) = coordinate_terms(arrays, e, *_unpack(x, shape))
    return -ll, -_pack(d_nu, d_alpha, d_beta, d_theta)


def _run_start(task):
    options = task.options
    if options.optimizer == "TNC":
        limits = dict(maxfun=options.max_iterations, ftol=options.ftol, gtol=options.gtol)
    else:
        limits = dict(maxiter=options.max_iterations, ftol=options.ftol, gtol=options.gtol)
    result = minimize(_negative_log_likelihood, task.x0, args=(task.arrays, task.e, task.shape), jac=True,
                      method=options.optimizer, bounds=task.bounds, options=limits)
    logger.debug(f"coordinate {task.e} start {task.index}: log-likelihood {-result.fun} "
                 f"after {result.get('nit', result.nfev)} iterations ({result.message})")
    return result


def _bounds(shape, mask_row, beta0, options):
    d_e, d_n = shape.d_e, shape.d_n
    bounds = [options.nu_bounds]
    bounds += [options.alpha_bounds if mask_row[e_] else (0.0, 0.0) for e_ in range(d_e) for _ in range(d_n)]
    bounds += [options.beta_bounds if mask_row[e_] else (beta0[e_, n], beta0[e_, n])
               for e_ in range(d_e) for n in range(d_n)]
    bounds += [(-options.theta_max, options.theta_max)] * shape.d_x
    return bounds


def coordinate_starts(shape, e, n_events, horizon, options):
    """Starting points ``(nu, alpha, beta, theta)`` of coordinate ``e``; user-supplied ``init`` comes first."""
    starts = []
    if options.init is not None:
        if options.init.shape != shape:
            raise ValidationError(f"init has shape {options.init.shape}, expected {shape}")
        nu, alpha, beta, theta = options.init.coordinate(e)
        starts.append((float(np.clip(nu, *options.nu_bounds)), np.clip(alpha, *options.alpha_bounds),
                       np.clip(beta, *options.beta_bounds), np.clip(theta, -options.theta_max, options.theta_max)))
    for s in range(options.n_starts):
        starts.append(random_start(shape, n_events, horizon, stream(options.seed, s, e), options))
    return starts


def fit_mle(events, state, shape, options=None):
    """
    Maximum-likelihood estimate by bound-constrained optimisation (L-BFGS-B or truncated Newton, see
    :attr:`MleOptions.optimizer`) with analytic gradients, restarted from several random points per coordinate.
    The exponential terms of every kernel are sorted by decreasing beta in the result.

    :param events: strict :class:`~msdhawkes.core.EventStream`
    :param state: :class:`~msdhawkes.core.StateTrajectory` with ``shape.d_x`` covariates
    :param shape: :class:`~msdhawkes.core.ModelShape`
    :param options: :class:`MleOptions`
    :return: :class:`~msdhawkes.core.FitResult`
    """
    options = MleOptions() if options is None else options
    started = time.perf_counter()
    arrays = _prepare_fit(events, state, shape)
    mask = options.mask(shape.d_e)
    horizon = events.horizon
    flags = []
    converged = True
    coordinates = []
    n_starts = 0
    for e in range(shape.d_e):
        n_events = len(arrays.points[e])
        if n_events == 0:
            flags.append(f"no-events-type-{e + 1}")
            warnings.warn(f"no events of type {e + 1}: its excitation and state parameters are not identifiable",
                          UnidentifiableCoordinateWarning)
        tasks = []
        for s, (nu, alpha, beta, theta) in enumerate(coordinate_starts(shape, e, n_events, horizon, options)):
            alpha = np.where(mask[e][:, None], alpha, 0.0)
            tasks.append(_StartTask(arrays=arrays, e=e, shape=shape, x0=_pack(nu, alpha, beta, theta),
                                    bounds=_bounds(shape, mask[e], beta, options), options=options, index=s))
        results = parallel_map(_run_start, tasks, jobs=options.jobs)
        n_starts = len(results)
        finite = [r for r in results if np.isfinite(r.fun)]
        if not finite:
            raise ValidationError(f"no start produced a finite log-likelihood for coordinate {e}")
        best = min(finite, key=lambda r: r.fun)
        if not best.success:
            converged = False
            flags.append(f"not-converged-type-{e + 1}")
            warnings.warn(f"optimiser did not converge for coordinate {e}: {best.message}", ConvergenceWarning)
        logger.info(f"coordinate {e}: best log-likelihood {-best.fun} over {len(results)} starts")
        coordinates.append(_unpack(best.x, shape))
    params = _assemble(coordinates, shape)
    per_coordinate = [coordinate_terms(arrays, e, *params.coordinate(e), gradient=False) for e in range(shape.d_e)]
    return FitResult(params=params, per_coordinate_loglik=per_coordinate, n_params=shape.n_params(mask),
                     method=FitMethod.MLE, optimizer=options.optimizer, starts_used=n_starts, converged=converged,
                     elapsed=time.perf_counter() - started, flags=tuple(flags), covariates=state.names)


def _assemble(coordinates, shape):
    nu, alpha, beta, theta = [np.array(v) for v in zip(*coordinates)]
    return HawkesParams.from_arrays(nu=nu, alpha=alpha, beta=beta, theta=theta.reshape(shape.d_e, shape.d_x))


@dataclass(frozen=True, eq=False)
class BranchingSums:
    """
    Aggregated branching probabilities.

    :ivar immigrants: expected number of immigrants per type, shape ``(d_e,)``
    :ivar offspring: expected number of type-``e`` children of type-``e'`` parents through term ``n``,
        shape ``(d_e, d_e, d_n)``
    :ivar lag_weighted: the same, weighted by the parent-child lag, shape ``(d_e, d_e, d_n)``
    """
    immigrants: np.ndarray
    offspring: np.ndarray
    lag_weighted: np.ndarray


@dataclass(frozen=True, eq=False)
class BranchingProbabilities:
    """
    Probabilities of the immediate ancestor of every event.

    :ivar times: event times
    :ivar types: event types
    :ivar immigrant: probability that event ``i`` is an immigrant, shape ``(k,)``
    :ivar offspring: probability ``offspring[i, j, n]`` that event ``i`` was triggered by the earlier event ``j``
        through exponential term ``n``, shape ``(k, k, d_n)``
    """
    times: np.ndarray
    types: np.ndarray
    immigrant: np.ndarray
    offspring: np.ndarray

    def row_sums(self):
        return self.immigrant + self.offspring.sum(axis=(1, 2))

    def aggregate(self, d_e=None):
        """Sum the probabilities by (child type, parent type, term); see :class:`BranchingSums`."""
        d_e = int(self.types.max()) + 1 if d_e is None else d_e
        d_n = self.offspring.shape[2]
        lag = self.times[:, None] - self.times[None, :]
        immigrants = np.bincount(self.types, weights=self.immigrant, minlength=d_e)
        offspring = np.zeros((d_e, d_e, d_n))
        lag_weighted = np.zeros((d_e, d_e, d_n))
        for e in range(d_e):
            for e_ in range(d_e):
                block = self.offspring[np.ix_(self.types == e, self.types == e_)]
                offspring[e, e_] = block.sum(axis=(0, 1))
                lags = lag[np.ix_(self.types == e, self.types == e_)]
                lag_weighted[e, e_] = np.einsum("ijn,ij->n", block, lags)
        return BranchingSums(immigrants=immigrants, offspring=offspring, lag_weighted=lag_weighted)


def compute_branching(params, events, state=None):
    """
    Branching probabilities of all events by direct evaluation. The state factor cancels, so ``state`` only
    serves validation. Memory grows as :math:`O(k^2 d_n)`; meant for inspection of moderate samples.

    :return: :class:`BranchingProbabilities`
    """
    events.require_strict()
    if state is not None:
        prepare(params, events, state)
    t, types = events.times, events.types
    lag = t[:, None] - t[None, :]
    past = lag > 0
    terms = params.alpha[types][:, types] * decay(params.beta[types][:, types], np.where(past, lag, 0)[..., None])
    terms = np.where(past[..., None], terms, 0.0)
    hawkes = params.nu[types] + terms.sum(axis=(1, 2))
    return BranchingProbabilities(times=t, types=types, immigrant=params.nu[types] / hawkes,
                                  offspring=terms / hawkes[:, None, None])


def _coordinate_branching(arrays, e, cache, nu, alpha):
    intensity = nu + np.einsum("ab,abk->k", alpha, cache.R)
    inv = 1.0 / intensity
    return (float(nu * inv.sum()), alpha * (cache.R @ inv), alpha * (cache.G @ inv))


def branching_sums(params, events, state):
    """
    :class:`BranchingSums` computed from the likelihood recursions in :math:`O(k)`, without forming individual
    probabilities.
    """
    arrays = prepare(params, events, state)
    d_e = params.shape.d_e
    immigrants = np.zeros(d_e)
    offspring = np.zeros_like(params.alpha)
    lag_weighted = np.zeros_like(params.alpha)
    for e in range(d_e):
        nu, alpha, beta, theta = params.coordinate(e)
        cache = recursion_cache(arrays, e, beta, theta)
        immigrants[e], offspring[e], lag_weighted[e] = _coordinate_branching(arrays, e, cache, nu, alpha)
    return BranchingSums(immigrants=immigrants, offspring=offspring, lag_weighted=lag_weighted)


def expected_complete_log_likelihood(params, events, state, branching):
    """
    Expected complete-data log-likelihood under the branching probabilities ``branching``
    (a :class:`BranchingProbabilities` usually computed at other parameters).
    """
    arrays = prepare(params, events, state)
    sums = branching.aggregate(params.shape.d_e)
    value = 0.0
    for e in range(params.shape.d_e):
        nu, alpha, beta, theta = params.coordinate(e)
        cache = recursion_cache(arrays, e, beta, theta, with_beta=False)
        value -= cache.weights @ segment_compensator(arrays, cache, nu, alpha, beta)
        value += sums.immigrants[e] * np.log(nu) + arrays.state_term(e, theta)
        with np.errstate(divide="ignore"):
            log_alpha = np.where(sums.offspring[e] > 0, np.log(alpha), 0.0)
        value += np.sum(sums.offspring[e] * log_alpha - beta * sums.lag_weighted[e])
    return float(value)


def _decay_integral(arrays, e_, beta, weights, with_derivative=True):
    """:math:`A(\\beta) = \\sum_m w_m D_m (1 - e^{-\\beta L_m})` for type-``e_`` sources and its derivative."""
    d_sum, g_sum = decayed_sums(arrays.times, arrays.incidence[e_], beta, with_lag=with_derivative)
    one_minus = -np.expm1(-beta * arrays.lengths)
    value = weights @ (d_sum[:-1] * one_minus)
    if not with_derivative:
        return value
    derivative = weights @ (-g_sum[:-1] * one_minus + d_sum[:-1] * arrays.lengths * decay(beta, arrays.lengths))
    return value, derivative


def _profile(arrays, e_, weights, offspring, lag_weighted, beta):
    """Expected complete log-likelihood of one kernel term with ``rho = alpha / beta`` profiled out."""
    value = _decay_integral(arrays, e_, beta, weights, with_derivative=False)
    return offspring * np.log(offspring * beta / value) - beta * lag_weighted


def _update_beta(arrays, e_, weights, offspring, lag_weighted, beta, options):
    """
    Maximise the profiled term over beta by solving its stationarity equation
    :math:`P / \\beta - P A'(\\beta) / A(\\beta) - M = 0` with a bracketing root finder.

    :return: ``(beta, bracketed)``
    """
    def score(b):
        value, derivative = _decay_integral(arrays, e_, b, weights)
        return offspring / b - offspring * derivative / value - lag_weighted

    low_bound, high_bound = options.beta_bounds
    low, high = max(beta / 100, low_bound), min(beta * 100, high_bound)
    f_low, f_high = score(low), score(high)
    for _ in range(4):
        if f_low > 0 > f_high:
            break
        if f_low <= 0 and low > low_bound:
            low = max(low / 10, low_bound)
            f_low = score(low)
        if f_high >= 0 and high < high_bound:
            high = min(high * 10, high_bound)
            f_high = score(high)
    if not f_low > 0 > f_high:
        return beta, False
    new_beta = brentq(score, low, high, xtol=options.beta_xtol, rtol=4 * np.finfo(float).eps)
    # keep the previous rate unless the root improves the profiled objective
    if (_profile(arrays, e_, weights, offspring, lag_weighted, new_beta)
            < _profile(arrays, e_, weights, offspring, lag_weighted, beta)):
        return beta, True
    return new_beta, True


def _update_theta(arrays, e, compensator, theta, options):
    """
    Maximise :math:`Q(\\theta) = -\\sum_m c_m e^{\\langle \\theta, x_m \\rangle} + \\langle \\theta, s \\rangle`
    by damped Newton steps inside the box ``[-theta_max, theta_max]``.
    """
    if len(theta) == 0:
        return theta
    x = arrays.values
    s = arrays.pre_values[arrays.points[e]].sum(axis=0)

    def objective(th):
        w = np.exp(x @ th)
        return -(w @ compensator) + th @ s, w

    value, w = objective(theta)
    for _ in range(options.theta_max_iterations):
        grad = s - (w * compensator) @ x
        if np.linalg.norm(grad) < options.theta_tol:
            break
        hessian = (x.T * (w * compensator)) @ x
        step = np.linalg.lstsq(hessian, grad, rcond=None)[0]
        size = 1.0
        while size > 1e-12:
            candidate = np.clip(theta + size * step, -options.theta_max, options.theta_max)
            candidate_value, candidate_w = objective(candidate)
            if candidate_value >= value:
                break
            size /= 2
        else:
            break
        if np.array_equal(candidate, theta):
            break
        theta, value, w = candidate, candidate_value, candidate_w
    return theta


def _em_coordinate(arrays, e, shape, start, mask_row, options):
    nu, alpha, beta, theta = start
    alpha = np.where(mask_row[:, None], alpha, 0.0)
    flags = []
    ll = coordinate_terms(arrays, e, nu, alpha, beta, theta, gradient=False)
    trace = [ll]
    best = (ll, (nu, alpha, beta, theta))
    converged = False
    for sweep in range(options.max_sweeps):
        cache = recursion_cache(arrays, e, beta, theta)
        immigrants, offspring, lag_weighted = _coordinate_branching(arrays, e, cache, nu, alpha)
        compensator = segment_compensator(arrays, cache, nu, alpha, beta)
        new_theta = _update_theta(arrays, e, compensator, theta, options)
        weights = arrays.weights(new_theta)
        new_nu = max(immigrants / (weights @ arrays.lengths), options.nu_min)
        new_alpha, new_beta = np.zeros_like(alpha), beta.copy()
        for e_ in range(shape.d_e):
            for n in range(shape.d_n):
                if not mask_row[e_] or offspring[e_, n] <= 0:
                    continue
                b, bracketed = _update_beta(arrays, e_, weights, offspring[e_, n], lag_weighted[e_, n],
                                            beta[e_, n], options)
                if not bracketed:
                    flag = f"beta-bracket-type-{e + 1}-{e_ + 1}-{n + 1}"
                    if flag not in flags:
                        flags.append(flag)
                        warnings.warn(f"no sign change bracketing the beta root of kernel ({e}, {e_}, {n}); "
                                      f"keeping the previous value", ConvergenceWarning)
                new_beta[e_, n] = b
                new_alpha[e_, n] = offspring[e_, n] / _decay_integral(arrays, e_, b, weights,
                                                                      with_derivative=False) * b
        new_ll = coordinate_terms(arrays, e, new_nu, new_alpha, new_beta, new_theta, gradient=False)
        trace.append(new_ll)
        logger.debug(f"EM coordinate {e} sweep {sweep}: log-likelihood {new_ll}")
        if new_ll < ll - options.monotone_slack and f"non-monotone-type-{e + 1}" not in flags:
            flags.append(f"non-monotone-type-{e + 1}")
            warnings.warn(f"EM sweep {sweep} decreased the log-likelihood of coordinate {e} by {ll - new_ll}",
                          ConvergenceWarning)
        change = max(_relative_change(a, b) for a, b in zip((nu, alpha, beta, theta),
                                                           (new_nu, new_alpha, new_beta, new_theta)))
        ll_change = abs(new_ll - ll)
        nu, alpha, beta, theta, ll = new_nu, new_alpha, new_beta, new_theta, new_ll
        if ll > best[0]:
            best = (ll, (nu, alpha, beta, theta))
        if ll_change < options.tol_loglik and change < options.tol_params:
            converged = True
            break
    return best[1], converged, flags, trace


def _relative_change(old, new):
    old, new = np.atleast_1d(old), np.atleast_1d(new)
    if old.size == 0:
        return 0.0
    return float(np.max(np.abs(new - old) / np.maximum(np.abs(old), 1e-12)))


def fit_em(events, state, shape, options=None):
    """
    Estimate by the EM algorithm. Every sweep computes the branching probabilities at the current parameters, then
    updates theta (damped Newton on the expected complete log-likelihood), nu (closed form with the new theta) and
    every kernel term's pair (alpha, beta) (beta from the profiled stationarity equation, then
    ``alpha = beta * P / A(beta)``). The reported log-likelihood is the exact observed-data log-likelihood of the
    best sweep.

    :param options: :class:`EmOptions`
    :return: :class:`~msdhawkes.core.FitResult` with ``trace`` holding the observed log-likelihood per sweep
        (coordinates summed)
    """
    options = EmOptions() if options is None else options
    started = time.perf_counter()
    arrays = _prepare_fit(events, state, shape)
    mask = options.mask(shape.d_e)
    flags = []
    converged = True
    coordinates = []
    traces = []
    for e in range(shape.d_e):
        n_events = len(arrays.points[e])
        if n_events == 0:
            flags.append(f"no-events-type-{e + 1}")
            warnings.warn(f"no events of type {e + 1}: its excitation and state parameters are not identifiable",
                          UnidentifiableCoordinateWarning)
            coordinates.append((options.nu_min, np.zeros((shape.d_e, shape.d_n)),
                                np.broadcast_to(np.arange(shape.d_n, 0, -1, dtype=float),
                                                (shape.d_e, shape.d_n)).copy(), np.zeros(shape.d_x)))
            traces.append([coordinate_terms(arrays, e, *coordinates[-1], gradient=False)])
            continue
        if options.init is not None:
            start = options.init.coordinate(e)
        else:
            start = random_start(shape, n_events, events.horizon, stream(options.seed, 0, e))
        coordinate, coordinate_converged, coordinate_flags, trace = _em_coordinate(
            arrays, e, shape, tuple(np.array(v, dtype=float) for v in start), mask[e], options)
        if not coordinate_converged:
            converged = False
            coordinate_flags.append(f"not-converged-type-{e + 1}")
            warnings.warn(f"EM reached {options.max_sweeps} sweeps without converging for coordinate {e}",
                          ConvergenceWarning)
        logger.info(f"EM coordinate {e}: log-likelihood {max(trace)} after {len(trace) - 1} sweeps")
        flags.extend(coordinate_flags)
        coordinates.append(coordinate)
        traces.append(trace)
    params = _assemble(coordinates, shape)
    per_coordinate = [coordinate_terms(arrays, e, *params.coordinate(e), gradient=False) for e in range(shape.d_e)]
    length = max(len(t) for t in traces)
    trace = np.sum([np.r_[t, np.full(length - len(t), t[-1])] for t in traces], axis=0)
    return FitResult(params=params, per_coordinate_loglik=per_coordinate, n_params=shape.n_params(mask),
                     method=FitMethod.EM, starts_used=1, converged=converged,
                     elapsed=time.perf_counter() - started, flags=tuple(flags), covariates=state.names,
                     trace=tuple(trace))


@dataclass(frozen=True, eq=False)
class SelectionEntry:
    d_n: int
    covariates: Tuple
    fit: Optional[FitResult] = None
    error: Optional[str] = None

    @property
    def code(self):
        names = [c if isinstance(c, str) else f"x{int(c) + 1}" for c in self.covariates]
        return ModelShape(d_e=1, d_n=self.d_n, d_x=len(names)).code(names)


def _compare(a, b):
    if abs(a.fit.aic - b.fit.aic) > 1e-9:
        return -1 if a.fit.aic < b.fit.aic else 1
    return (a.fit.n_params > b.fit.n_params) - (a.fit.n_params < b.fit.n_params) or (a.d_n > b.d_n) - (a.d_n < b.d_n)


@dataclass(frozen=True, eq=False)
class SelectionTable:
    """Candidates of :func:`select_model` in input order; :attr:`ranked` sorts the successful ones by AIC."""
    entries: Tuple[SelectionEntry, ...] = field(default_factory=tuple)

    @property
    def ranked(self):
        return sorted([entry for entry in self.entries if entry.fit is not None], key=cmp_to_key(_compare))

    @property
    def best(self):
        ranked = self.ranked
        if not ranked:
            raise ValidationError("no candidate model could be fitted")
        return ranked[0]

    def to_frame(self):
        rank = {id(entry): r + 1 for r, entry in enumerate(self.ranked)}
        rows = []
        for entry in self.entries:
            fit = entry.fit
            rows.append(dict(model=entry.code, d_n=entry.d_n, covariates=" ".join(str(c) for c in entry.covariates),
                             n_params=None if fit is None else fit.n_params,
                             log_likelihood=None if fit is None else fit.log_likelihood,
                             aic=None if fit is None else fit.aic,
                             converged=None if fit is None else fit.converged,
                             rank=rank.get(id(entry)), error=entry.error))
        return pd.DataFrame(rows).sort_values("rank", na_position="last", kind="stable").reset_index(drop=True)


def _fit_candidate(task):
    events, state, d_n, covariates, method, options = task
    try:
        if covariates:
            sub_state = state.select(covariates)
        else:
            sub_state = StateTrajectory.constant(0, state.horizon)
        shape = ModelShape(d_e=max(events.d_e, 1), d_n=d_n, d_x=sub_state.d_x)
        fit = fit_em(events, sub_state, shape, options) if method == FitMethod.EM else \
            fit_mle(events, sub_state, shape, options)
        return SelectionEntry(d_n=d_n, covariates=tuple(covariates), fit=fit)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        logger.warning(f"candidate d_n={d_n} covariates={covariates} failed: {err}")
        return SelectionEntry(d_n=d_n, covariates=tuple(covariates), error=f"{type(err).__name__}: {err}")


def select_model(events, state, candidates, options=None, method=FitMethod.MLE, jobs=1, progress=False):
    """
    Fit every candidate and rank by ascending AIC (ties within 1e-9: fewer parameters, then smaller ``d_n``). A
    failing candidate is recorded with its error and does not abort the sweep.

    :param candidates: iterable of ``(d_n, covariates)`` with ``covariates`` a sequence of covariate names or
        indices of ``state`` (empty for the standard Hawkes model)
    :param options: :class:`MleOptions` or :class:`EmOptions` matching ``method``
    :param jobs: number of worker processes over candidates
    :return: :class:`SelectionTable`
    """
    method = FitMethod(method)
    if jobs != 1 and isinstance(options, MleOptions):
        # candidates already run in worker processes
        options = replace(options, jobs=1)
    tasks = [(events, state, int(d_n), tuple(covariates), method, options) for d_n, covariates in candidates]
    entries = parallel_map(_fit_candidate, tasks, jobs=jobs, progress=progress, desc="candidates")
    table = SelectionTable(entries=tuple(entries))
    if table.ranked:
        logger.info(f"selected {table.best.code} with AIC {table.best.fit.aic}")
    return table
