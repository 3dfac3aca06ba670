"""
Exact simulation by thinning, synthetic state processes, power-law kernel processes and reference parameter sets.

Random numbers come from :class:`numpy.random.Generator` with the PCG64 bit generator. Replicate ``r`` of a run with
seed ``s`` uses the stream ``SeedSequence(s, spawn_key=(r,))`` (see :func:`msdhawkes.util.stream`), so replicates are
reproducible individually and independent of how they are distributed over worker processes.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from msdhawkes.core import EventStream, StateTrajectory, HawkesParams
from msdhawkes.intensity import IncrementalIntensity, powerlaw_intensity_left
from msdhawkes.util import as_rng, stream, parallel_map, EventCapExceededError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationOptions:
    """
    :ivar max_events: abort once more events than this have been accepted
    :ivar state_rate: jump rate of the synthetic state process
    """
    max_events: int = 1_000_000
    state_rate: float = 1.0

    def __post_init__(self):
        if self.max_events < 1:
            raise ValidationError(f"max_events = {self.max_events} must be >= 1")
        if not self.state_rate > 0:
            raise ValidationError(f"state_rate = {self.state_rate} must be > 0")


@dataclass(frozen=True, eq=False)
class PowerLawKernelParams:
    r"""
    Power-law kernels :math:`\phi_{ee'}(t) = \alpha_{ee'} (1 + t / \tau_{ee'})^{-(1 + \beta_{ee'})}`.

    :ivar alpha: amplitudes, shape ``(d_e, d_e)``, >= 0
    :ivar beta: tail exponents, shape ``(d_e, d_e)``, > 0
    :ivar tau: time scales in seconds, shape ``(d_e, d_e)``, > 0
    """
    alpha: np.ndarray
    beta: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ["alpha", "beta", "tau"]:
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValidationError(f"{name} must be a square matrix, got shape {a.shape}")
            a.setflags(write=False)
            arrays[name] = a
        if not arrays["alpha"].shape == arrays["beta"].shape == arrays["tau"].shape:
            raise ValidationError("alpha, beta and tau must have the same shape")
        if np.any(arrays["alpha"] < 0):
            raise ValidationError("alpha must be >= 0")
        for name in ["beta", "tau"]:
            if np.any(arrays[name] <= 0):
                raise ValidationError(f"{name} must be > 0")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    def l1_norms(self):
        """Kernel integrals :math:`\\alpha \\tau / \\beta`."""
        return self.alpha * self.tau / self.beta


def simulate_state(rate, d_x, horizon, seed=None):
    """
    Synthetic state process: breakpoints from a homogeneous Poisson process with intensity ``rate`` on
    ``(0, horizon)``, values independent and uniform on :math:`[-1, 1]^{d_x}`.

    :return: :class:`~msdhawkes.core.StateTrajectory`
    """
    if not rate > 0:
        raise ValidationError(f"rate = {rate} must be > 0")
    if d_x == 0:
        return StateTrajectory.constant(0, horizon)
    rng = as_rng(seed)
    n = rng.poisson(rate * horizon)
    jumps = np.unique(rng.uniform(0, horizon, size=n))
    jumps = jumps[(jumps > 0) & (jumps < horizon)]
    values = rng.uniform(-1, 1, size=(len(jumps) + 1, d_x))
    return StateTrajectory(breakpoints=np.r_[0.0, jumps, horizon], values=values)


def _thinning(intensity_at, add_event, state, horizon, rng, max_events):
    """
    Ogata thinning driver. ``intensity_at(t, x)`` returns the intensity vector at ``t`` for state value ``x`` and
    must be nonincreasing between calls of ``add_event`` and state breakpoints.
    """
    times, types = [], []
    breakpoints = state.breakpoints
    t = 0.0
    j = 0
    while j < len(state.values):
        x = state.values[j]
        segment_end = min(breakpoints[j + 1], horizon)
        bound = intensity_at(t, x).sum()
        t_candidate = t + rng.exponential(1.0 / bound)
        if t_candidate >= segment_end:
            # restart the bound at the breakpoint
            t = segment_end
            j += 1
            continue
        t = t_candidate
        intensity = intensity_at(t, x)
        u = rng.uniform(0, bound)
        if u < intensity.sum():
            e = int(np.searchsorted(np.cumsum(intensity), u, side="right"))
            e = min(e, len(intensity) - 1)
            times.append(t)
            types.append(e)
            add_event(t, e)
            if len(times) > max_events:
                raise EventCapExceededError(f"simulation exceeded {max_events} events at t = {t} "
                                            f"(the process is likely explosive)")
    return np.array(times), np.array(types, dtype=np.int64)


def simulate_msd(params, state, horizon=None, seed=None, max_events=1_000_000):
    """
    Simulate a msdHawkes process by thinning. The dominating rate is the total intensity at the current point,
    re-anchored after every accepted event and every state breakpoint.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param state: :class:`~msdhawkes.core.StateTrajectory` covering ``[0, horizon]``
    :param horizon: defaults to the state horizon
    :param seed: integer, seed sequence or generator
    :param max_events: explosion guard
    :raises EventCapExceededError: more than ``max_events`` events
    :return: strict :class:`~msdhawkes.core.EventStream`
    """
    horizon = state.horizon if horizon is None else float(horizon)
    if not np.isclose(horizon, state.horizon, rtol=1e-12, atol=0):
        raise ValidationError(f"horizon {horizon} differs from the state horizon {state.horizon}")
    if state.d_x != params.shape.d_x:
        raise ValidationError(f"state has {state.d_x} covariates, parameters expect {params.shape.d_x}")
    rng = as_rng(seed)
    evaluator = IncrementalIntensity(params)

    def intensity_at(t, x):
        evaluator.advance_to(t)
        return evaluator.intensity(x)

    def add_event(t, e):
        evaluator.add_event(e)

    times, types = _thinning(intensity_at, add_event, state, horizon, rng, max_events)
    logger.debug(f"simulated {len(times)} events on [0, {horizon}]")
    return EventStream(times=times, types=types, horizon=horizon, d_e=params.shape.d_e)


def simulate_powerlaw(params, nu, theta, state, horizon=None, seed=None, max_events=1_000_000):
    """
    Simulate a state-dependent Hawkes process with power-law kernels by thinning; intensities are evaluated by
    direct summation over the past, :math:`O(k)` per candidate.

    :param params: :class:`PowerLawKernelParams`
    :param nu: baseline intensities, shape ``(d_e,)``
    :param theta: state sensitivities, shape ``(d_e, d_x)``
    """
    horizon = state.horizon if horizon is None else float(horizon)
    nu = np.asarray(nu, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(len(nu), state.d_x)
    if np.any(nu <= 0):
        raise ValidationError("nu must be > 0")
    rng = as_rng(seed)
    past_times = np.empty(1024)
    past_types = np.empty(1024, dtype=np.int64)
    count = 0

    def intensity_at(t, x):
        # events at the current time have already happened: evaluate the right limit
        hawkes = powerlaw_intensity_left(params, nu, past_times[:count], past_types[:count], np.nextafter(t, np.inf))
        return hawkes * np.exp(theta @ x)

    def add_event(t, e):
        nonlocal past_times, past_types, count
        if count == len(past_times):
            past_times = np.r_[past_times, np.empty(count)]
            past_types = np.r_[past_types, np.empty(count, dtype=np.int64)]
        past_times[count] = t
        past_types[count] = e
        count += 1

    times, types = _thinning(intensity_at, add_event, state, horizon, rng, max_events)
    return EventStream(times=times, types=types, horizon=horizon, d_e=len(nu))


def _simulate_replicate(task):
    params, horizon, seed, options = task
    rng = as_rng(seed)
    state = simulate_state(options.state_rate, params.shape.d_x, horizon, rng)
    events = simulate_msd(params, state, horizon, rng, max_events=options.max_events)
    return events, state


def simulate_replicates(params, horizon, n_replicates, seed=None, options=None, jobs=1, progress=False):
    """
    Independent (events, state) replicates, each with a synthetic state process of rate ``options.state_rate``.
    Replicate ``r`` depends only on ``(seed, r)``.

    :return: list of ``(EventStream, StateTrajectory)``
    """
    options = SimulationOptions() if options is None else options
    tasks = [(params, horizon, stream(seed, r), options)
             for r in range(n_replicates)]
    return parallel_map(_simulate_replicate, tasks, jobs=jobs, progress=progress, desc="simulate")


def single_exponential_params():
    """
    Two event types, one exponential per kernel and two state covariates: ``nu = (0.5, 0.25)``,
    ``alpha = [[4, 0.4], [1, 0.2]]``, ``beta = [[8, 2], [8, 2]]``, ``theta = [[0.25, -0.25], [-0.25, 0.25]]``.
    """
    return HawkesParams.from_arrays(nu=[0.5, 0.25],
                                    alpha=[[4.0, 0.4], [1.0, 0.2]],
                                    beta=[[8.0, 2.0], [8.0, 2.0]],
                                    theta=[[0.25, -0.25], [-0.25, 0.25]])


def multi_exponential_params():
    """Two event types with three exponential terms per kernel and the state sensitivities of
    :func:`single_exponential_params`."""
    alpha = np.array([[[5.0, 2.0, 0.1], [5.0, 2.0, 0.1]],
                      [[10.0, 2.0, 0.2], [10.0, 2.0, 0.2]]])
    beta = np.array([[[50.0, 10.0, 1.0], [100.0, 20.0, 2.0]],
                     [[200.0, 40.0, 4.0], [100.0, 20.0, 2.0]]])
    return HawkesParams(nu=np.array([0.5, 0.25]), alpha=alpha, beta=beta,
                        theta=np.array([[0.25, -0.25], [-0.25, 0.25]]))


def powerlaw_reference():
    """
    Power-law kernel set used to study misspecified exponential fits.

    :return: ``(PowerLawKernelParams, nu, theta)``
    """
    kernels = PowerLawKernelParams(alpha=[[0.5, 0.25], [0.25, 0.5]], beta=[[1.0, 2.0], [2.0, 1.0]],
                                   tau=np.ones((2, 2)))
    return kernels, np.array([0.5, 0.5]), np.array([[0.25, -0.5], [-0.25, 0.5]])


def expected_event_rate(params, x: Optional[np.ndarray] = None):
    """
    Stationary mean event rate per type :math:`(I - K)^{-1} m \\nu` of the process with the state frozen at ``x``
    (zero state by default), where :math:`K_{ee'} = m_e \\sum_n \\alpha^n_{ee'} / \\beta^n_{ee'}`.
    """
    shape = params.shape
    x = np.zeros(shape.d_x) if x is None else np.asarray(x, dtype=float)
    m = np.exp(params.theta @ x)
    kernel = m[:, None] * (params.alpha / params.beta).sum(axis=-1)
    return np.linalg.solve(np.eye(shape.d_e) - kernel, m * params.nu)

