"""
Kernels and intensities with left-limit semantics: events located exactly at the query time are excluded.
"""
from dataclasses import dataclass

import numpy as np

from msdhawkes.util import decay, ValidationError, zip


@dataclass(frozen=True, eq=False)
class IntensityValue:
    """
    Intensity at a time point, factorised as :math:`\\lambda^e = \\lambda^{H,e} \\exp(\\langle \\theta^e, X_{t-}
    \\rangle)`.
    """
    hawkes_part: np.ndarray
    state_factor: np.ndarray

    @property
    def total(self):
        return self.hawkes_part * self.state_factor


def kernel_value(params, e, e_, dt):
    """
    Evaluate the multi-exponential kernel :math:`\\phi_{ee'}(\\Delta t) = \\sum_n \\alpha^n_{ee'}
    e^{-\\beta^n_{ee'} \\Delta t}`.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param e: excited type
    :param e_: exciting type
    :param dt: non-negative lag (scalar or array)
    :return: kernel value(s) with the shape of ``dt``
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError(f"kernel lag must be non-negative, got {dt.min()}")
    values = np.sum(params.alpha[e, e_] * decay(params.beta[e, e_], dt[..., None]), axis=-1)
    return float(values) if values.ndim == 0 else values


def _check_time(t, horizon):
    if not 0 <= t <= horizon:
        raise ValidationError(f"time {t} outside [0, {horizon}]")


def hawkes_intensity_left(params, events, t):
    """
    Hawkes part :math:`\\lambda^{H,e}(t-)` of all coordinates by direct summation over the events strictly
    before ``t``.

    :return: array of shape ``(d_e,)``
    """
    _check_time(t, events.horizon)
    past = events.times < t
    lags = t - events.times[past]
    types = events.types[past]
    # alpha[:, types] has shape (d_e, k, d_n)
    contrib = params.alpha[:, types] * decay(params.beta[:, types], lags[None, :, None])
    return params.nu + contrib.sum(axis=(1, 2))


def msd_intensity_left(params, events, state, t):
    """
    Full intensity :math:`\\lambda^e(t-)` with its decomposition.

    :return: :class:`IntensityValue`
    """
    hawkes = hawkes_intensity_left(params, events, t)
    _check_time(t, state.horizon)
    factor = np.exp(params.theta @ state.value_before(t))
    return IntensityValue(hawkes_part=hawkes, state_factor=factor)


class IncrementalIntensity:
    """
    Sequential evaluator carrying one decay accumulator per ``(e, e', n)``. Time only moves forward: call
    :meth:`advance_to` with nondecreasing times, read :meth:`left_limit` (which excludes events added at the current
    time only if read before :meth:`add_event`) and register events with :meth:`add_event`.

    Instances are single-owner and must not be shared between threads.
    """

    def __init__(self, params, start=0.0):
        self.params = params
        self.time = float(start)
        self._acc = np.zeros_like(params.alpha)

    def advance_to(self, t):
        if t < self.time:
            raise ValueError(f"cannot move back in time from {self.time} to {t}")
        if t > self.time:
            self._acc *= decay(self.params.beta, t - self.time)
            self.time = float(t)

    def add_event(self, e):
        self._acc[:, e, :] += self.params.alpha[:, e, :]

    def left_limit(self):
        """Hawkes part of the intensity of every coordinate at the current time."""
        return self.params.nu + self._acc.sum(axis=(1, 2))

    def intensity(self, x):
        """Full intensity at the current time for state value ``x``."""
        return self.left_limit() * np.exp(self.params.theta @ x)


def intensity_path(params, events, state, grid):
    """
    Evaluate :math:`\\lambda^e(t-)` on a nondecreasing time grid in a single forward pass.

    :param grid: query times in ``[0, T]``
    :return: array of shape ``(len(grid), d_e)``
    """
    grid = np.asarray(grid, dtype=float)
    if len(grid) and (np.any(np.diff(grid) < 0) or grid[0] < 0 or grid[-1] > events.horizon):
        raise ValidationError(f"grid must be nondecreasing within [0, {events.horizon}]")
    out = np.empty((len(grid), len(params.nu)))
    evaluator = IncrementalIntensity(params)
    # events strictly before each grid point
    n_before = np.searchsorted(events.times, grid, side="left")
    added = 0
    for i, (t, n) in enumerate(zip(grid, n_before)):
        while added < n:
            evaluator.advance_to(events.times[added])
            evaluator.add_event(events.types[added])
            added += 1
        evaluator.advance_to(t)
        out[i] = evaluator.intensity(state.value_before(t))
    return out


def powerlaw_kernel_value(params, e, e_, dt):
    """
    Power-law kernel :math:`\\alpha_{ee'} (1 + \\Delta t / \\tau_{ee'})^{-(1 + \\beta_{ee'})}`.

    :param params: :class:`~msdhawkes.simulate.PowerLawKernelParams`
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError(f"kernel lag must be non-negative, got {dt.min()}")
    return params.alpha[e, e_] * (1 + dt / params.tau[e, e_]) ** (-(1 + params.beta[e, e_]))


def powerlaw_intensity_left(params, nu, times, types, t):
    """
    Hawkes part of a power-law kernel process at ``t-`` by direct summation over past events.

    :param params: :class:`~msdhawkes.simulate.PowerLawKernelParams`
    :param nu: baseline intensities
    :param times: event times (any order)
    :param types: 0-based event types
    :return: array of shape ``(d_e,)``
    """
    times = np.asarray(times, dtype=float)
    types = np.asarray(types, dtype=np.int64)
    past = times < t
    lags = t - times[past]
    types = types[past]
    kernel = params.alpha[:, types] * (1 + lags / params.tau[:, types]) ** (-(1 + params.beta[:, types]))
    return np.asarray(nu, dtype=float) + kernel.sum(axis=1)
