r"""
Exact log-likelihood of a msdHawkes sample and its analytic gradient.

On the merged timeline with points :math:`t_0 = 0 \le \dots \le t_M = T`, the log-likelihood of coordinate
:math:`e` is

.. math::
    \ell_e = -\sum_{m} w_m \Big(\nu_e L_m + \sum_{e', n} \frac{\alpha^n_{ee'}}{\beta^n_{ee'}} S^{ee'n}_m\Big)
    + \sum_{i} \Big[\log\Big(\nu_e + \sum_{e', n} \alpha^n_{ee'} R^{ee'n}_i\Big)
    + \langle \theta^e, X_{t^e_i-} \rangle\Big]

with segment lengths :math:`L_m`, state weights :math:`w_m = e^{\langle \theta^e, x_m \rangle}`, decay sums
:math:`R^{ee'n}_i = \sum_{t^{e'}_j < t^e_i} e^{-\beta^n_{ee'}(t^e_i - t^{e'}_j)}` and segment integrals
:math:`S^{ee'n}_m = D^{e'n}_m (1 - e^{-\beta^n_{ee'} L_m})` where :math:`D^{e'n}_m` sums the decayed type
:math:`e'` events up to and including point :math:`m`. All of these are obtained from one forward recursion per
:math:`(e', \beta)` (see :func:`decayed_sums`), so a full evaluation costs :math:`O((k + N) d_e^2 d_n)`.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from msdhawkes.core import build_merged_timeline
from msdhawkes.util import decay, as_tensor, ValidationError, zip

logger = logging.getLogger(__name__)

# largest exponent beta * (t - anchor) inside one block of the recursion
_BLOCK_SPAN = 300.0


def decayed_sums(times, counts, beta, with_lag=True):
    """
    For sorted points :math:`t_0 \\le \\dots \\le t_M` carrying ``counts[m]`` events, compute

    .. math::
        D_k = \\sum_{m \\le k} c_m e^{-\\beta (t_k - t_m)}, \\qquad
        G_k = \\sum_{m \\le k} c_m (t_k - t_m) e^{-\\beta (t_k - t_m)}.

    The recursion :math:`D_k = e^{-\\beta (t_k - t_{k-1})} D_{k-1} + c_k` is evaluated in vectorised blocks: inside
    a block all terms are rescaled to the block's first point, and the sums are carried from block to block.

    :param times: sorted points
    :param counts: event counts at the points
    :param beta: decay rate
    :param with_lag: also compute :math:`G` (needed for derivatives in beta)
    :return: ``(D, G)``; ``G`` is ``None`` unless ``with_lag``
    """
    n = len(times)
    d_sum = np.empty(n)
    g_sum = np.empty(n) if with_lag else None
    if n == 0:
        return d_sum, g_sum
    block = np.floor(beta * (times - times[0]) / _BLOCK_SPAN)
    starts = np.flatnonzero(np.r_[True, block[1:] != block[:-1]])
    ends = np.r_[starts[1:], n]
    carry_d = carry_g = 0.0
    previous = times[0]
    for s, f in zip(starts, ends):
        anchor = times[s]
        lag = anchor - previous
        fade = decay(beta, lag)
        carry_g = (carry_g + lag * carry_d) * fade
        carry_d = carry_d * fade
        dt = times[s:f] - anchor
        up = np.exp(beta * dt)
        down = decay(beta, dt)
        c = counts[s:f]
        cum = carry_d + np.cumsum(c * up)
        d_sum[s:f] = down * cum
        if with_lag:
            g_sum[s:f] = down * (carry_g + dt * cum - np.cumsum(c * dt * up))
            carry_g = g_sum[f - 1]
        carry_d = d_sum[f - 1]
        previous = times[f - 1]
    return d_sum, g_sum


class TimelineArrays(NamedTuple):
    """Plain arrays extracted once from a :class:`~msdhawkes.core.MergedTimeline` for repeated evaluations."""
    times: np.ndarray
    lengths: np.ndarray
    values: np.ndarray
    pre_values: np.ndarray
    incidence: np.ndarray
    points: tuple

    @classmethod
    def from_timeline(cls, timeline, d_e=None):
        d_e = timeline.d_e if d_e is None else d_e
        types = timeline.event_types
        incidence = np.zeros((d_e, len(timeline.times)))
        is_event = types >= 0
        incidence[types[is_event], np.flatnonzero(is_event)] = 1.0
        return cls(times=np.asarray(timeline.times), lengths=np.diff(timeline.times),
                   values=np.asarray(timeline.values), pre_values=np.asarray(timeline.pre_values),
                   incidence=incidence, points=tuple(np.flatnonzero(types == e) for e in range(d_e)))

    @property
    def d_e(self):
        return len(self.incidence)

    def weights(self, theta):
        """State factors :math:`e^{\\langle \\theta, x_m \\rangle}` of all segments."""
        return np.exp(self.values @ theta)

    def state_term(self, e, theta):
        return float(np.sum(self.pre_values[self.points[e]] @ theta))


@dataclass(frozen=True, eq=False)
class RecursionCache:
    """
    Recursion coefficients of one coordinate ``e`` for given decay rates and state sensitivities.

    :ivar R: decay sums at the type-``e`` events, shape ``(d_e, d_n, k_e)``
    :ivar S: unweighted segment integrals, shape ``(d_e, d_n, M)``
    :ivar weights: segment state factors, shape ``(M,)``
    :ivar R_beta: derivative of ``R`` in beta (``None`` if not requested)
    :ivar S_beta: derivative of ``S`` in beta (``None`` if not requested)
    """
    R: np.ndarray
    S: np.ndarray
    weights: np.ndarray
    R_beta: np.ndarray = None
    S_beta: np.ndarray = None

    @property
    def G(self):
        """Lag-weighted decay sums at the type-``e`` events, the negative of ``R_beta`` (``None`` without it)."""
        return None if self.R_beta is None else -self.R_beta


def recursion_cache(arrays, e, beta, theta, with_beta=True):
    """
    Compute the :class:`RecursionCache` of coordinate ``e``.

    :param arrays: :class:`TimelineArrays`
    :param beta: decay rates of coordinate ``e``, shape ``(d_e, d_n)``
    :param theta: state sensitivities of coordinate ``e``, shape ``(d_x,)``
    :param with_beta: also compute the derivatives in beta
    """
    d_e, d_n = beta.shape
    points = arrays.points[e]
    n_seg = len(arrays.lengths)
    R = np.zeros((d_e, d_n, len(points)))
    S = np.zeros((d_e, d_n, n_seg))
    R_beta = np.zeros_like(R) if with_beta else None
    S_beta = np.zeros_like(S) if with_beta else None
    for e_ in range(d_e):
        inc = arrays.incidence[e_]
        if not inc.any():
            continue
        for n in range(d_n):
            b = beta[e_, n]
            d_sum, g_sum = decayed_sums(arrays.times, inc, b, with_lag=with_beta)
            one_minus = -np.expm1(-b * arrays.lengths)
            # the event located at the point itself is not part of its own past
            R[e_, n] = d_sum[points] - inc[points]
            S[e_, n] = d_sum[:-1] * one_minus
            if with_beta:
                R_beta[e_, n] = -g_sum[points]
                S_beta[e_, n] = (-g_sum[:-1] * one_minus
                                 + d_sum[:-1] * arrays.lengths * decay(b, arrays.lengths))
    return RecursionCache(R=R, S=S, weights=arrays.weights(theta), R_beta=R_beta, S_beta=S_beta)


def segment_compensator(arrays, cache, nu, alpha, beta):
    """Unweighted Hawkes part of the compensator on every segment, :math:`\\nu L_m + \\sum (\\alpha/\\beta) S_m`."""
    return nu * arrays.lengths + np.einsum("ab,abm->m", alpha / beta, cache.S)


def coordinate_terms(arrays, e, nu, alpha, beta, theta, gradient=True, cache=None):
    """
    Log-likelihood of coordinate ``e`` and, optionally, its gradient.

    :return: ``ll`` or ``(ll, (d_nu, d_alpha, d_beta, d_theta))``
    """
    if cache is None:
        cache = recursion_cache(arrays, e, beta, theta, with_beta=gradient)
    w = cache.weights
    points = arrays.points[e]
    base = w @ arrays.lengths
    ratio = alpha / beta
    s_total = cache.S @ w
    intensity = nu + np.einsum("ab,abk->k", alpha, cache.R)
    with np.errstate(divide="ignore"):
        ll = -nu * base - np.sum(ratio * s_total) + np.sum(np.log(intensity)) + arrays.state_term(e, theta)
    if not gradient:
        return float(ll)
    inv = 1.0 / intensity
    d_nu = -base + inv.sum()
    d_alpha = -s_total / beta + cache.R @ inv
    d_beta = ratio / beta * s_total - ratio * (cache.S_beta @ w) + alpha * (cache.R_beta @ inv)
    compensator = w * segment_compensator(arrays, cache, nu, alpha, beta)
    d_theta = arrays.pre_values[points].sum(axis=0) - compensator @ arrays.values
    return float(ll), (float(d_nu), d_alpha, d_beta, d_theta)


@dataclass(frozen=True, eq=False)
class HawkesGradient:
    """Gradient of the log-likelihood with the layout of :class:`~msdhawkes.core.HawkesParams`."""
    nu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray

    def ravel(self):
        return np.concatenate([self.nu.ravel(), self.alpha.ravel(), self.beta.ravel(), self.theta.ravel()])


def prepare(params, events, state, allow_ties=False):
    """
    Validate inputs and build the :class:`TimelineArrays` shared by all coordinates.

    :raises DuplicateTimestampError: co-timed events without ``allow_ties``
    :raises HorizonMismatchError: event and state horizons differ
    """
    shape = params.shape
    if state.d_x != shape.d_x:
        raise ValidationError(f"state has {state.d_x} covariates but the parameters expect {shape.d_x}")
    if len(events) and events.types.max() >= shape.d_e:
        raise ValidationError(f"events contain type {events.types.max()} but the parameters have d_e = {shape.d_e}")
    timeline = build_merged_timeline(events, state, allow_ties=allow_ties)
    return TimelineArrays.from_timeline(timeline, d_e=shape.d_e)


def log_likelihood(params, events, state, allow_ties=False):
    """
    Exact log-likelihood.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param events: :class:`~msdhawkes.core.EventStream` (strict unless ``allow_ties``)
    :param state: :class:`~msdhawkes.core.StateTrajectory`
    :param allow_ties: evaluate samples with co-timed events, where later events see earlier ones at lag zero
    :return: ``(total, per_coordinate)``
    """
    arrays = prepare(params, events, state, allow_ties=allow_ties)
    per_coordinate = np.array([coordinate_terms(arrays, e, *params.coordinate(e), gradient=False)
                               for e in range(arrays.d_e)])
    return float(per_coordinate.sum()), per_coordinate


def log_likelihood_coordinate(params, events, state, e, allow_ties=False):
    arrays = prepare(params, events, state, allow_ties=allow_ties)
    return coordinate_terms(arrays, e, *params.coordinate(e), gradient=False)


def grad_log_likelihood_coordinate(params, events, state, e):
    """Gradient ``(d_nu, d_alpha, d_beta, d_theta)`` of coordinate ``e`` with respect to its own parameters."""
    arrays = prepare(params, events, state)
    return coordinate_terms(arrays, e, *params.coordinate(e), gradient=True)[1]


def grad_log_likelihood(params, events, state):
    """
    Analytic gradient of the total log-likelihood.

    :return: :class:`HawkesGradient`
    """
    arrays = prepare(params, events, state)
    shape = params.shape
    grad = HawkesGradient(nu=np.zeros(shape.d_e), alpha=np.zeros_like(params.alpha),
                          beta=np.zeros_like(params.beta), theta=np.zeros_like(params.theta))
    for e in range(shape.d_e):
        _, (d_nu, d_alpha, d_beta, d_theta) = coordinate_terms(arrays, e, *params.coordinate(e))
        grad.nu[e] = d_nu
        grad.alpha[e] = d_alpha
        grad.beta[e] = d_beta
        grad.theta[e] = d_theta
    return grad


def compensator_increments(params, events, state, allow_ties=False):
    """
    Exact integral of :math:`\\lambda^e` over every merged-timeline segment.

    :return: ``(arrays, increments)`` with the :class:`TimelineArrays` of the merged timeline and increments of shape
        ``(d_e, M)``
    """
    arrays = prepare(params, events, state, allow_ties=allow_ties)
    increments = np.empty((arrays.d_e, len(arrays.lengths)))
    for e in range(arrays.d_e):
        nu, alpha, beta, theta = params.coordinate(e)
        cache = recursion_cache(arrays, e, beta, theta, with_beta=False)
        increments[e] = cache.weights * segment_compensator(arrays, cache, nu, alpha, beta)
    return arrays, increments


def _torch_log_likelihood(nu, alpha, beta, theta, events, state):
    timeline = build_merged_timeline(events, state)
    t = as_tensor(events.times)
    types = torch.as_tensor(events.types, dtype=torch.long)
    zero = torch.zeros((), dtype=torch.float64)

    # log-intensity at the events, direct O(k^2) sums over strictly earlier events
    lag = t[:, None] - t[None, :]
    past = lag > 0
    safe_lag = torch.where(past, lag, zero)
    a = alpha[types][:, types]
    b = beta[types][:, types]
    kernel = (a * torch.exp(-b * safe_lag[..., None])).sum(-1)
    hawkes = nu[types] + torch.where(past, kernel, zero).sum(1)
    x_before = as_tensor(state.value_before(events.times))
    log_term = torch.log(hawkes).sum() + (theta[types] * x_before).sum()

    # compensator, integrated analytically segment by segment
    left = as_tensor(timeline.times[:-1])
    right = as_tensor(timeline.times[1:])
    w = torch.exp(as_tensor(timeline.values) @ theta.T)
    compensator = (nu[None, :] * w * (right - left)[:, None]).sum()
    lag_left = left[:, None] - t[None, :]
    lag_right = right[:, None] - t[None, :]
    active = lag_left >= 0
    lag_left = torch.where(active, lag_left, zero)[..., None]
    lag_right = torch.where(active, lag_right, zero)[..., None]
    for e in range(len(nu)):
        a = alpha[e][types]
        b = beta[e][types]
        integral = (a / b) * (torch.exp(-b * lag_left) - torch.exp(-b * lag_right))
        compensator = compensator + (w[:, e][:, None] * torch.where(active, integral.sum(-1), zero)).sum()
    return log_term - compensator


def _brute_force(params, events, state, max_events, requires_grad):
    if len(events) > max_events:
        raise ValidationError(f"brute-force evaluation limited to {max_events} events, got {len(events)}")
    events.require_strict()
    prepare(params, events, state)
    tensors = [as_tensor(a, requires_grad=requires_grad)
               for a in (params.nu, params.alpha, params.beta, params.theta)]
    return tensors, _torch_log_likelihood(*tensors, events, state)


def brute_force_log_likelihood(params, events, state, max_events=5000):
    """
    Reference log-likelihood by direct :math:`O(k^2)` intensity sums and segment-wise analytic integration of the
    compensator. Only meant for testing.
    """
    with torch.no_grad():
        _, value = _brute_force(params, events, state, max_events, requires_grad=False)
    return float(value)


def brute_force_grad_log_likelihood(params, events, state, max_events=5000):
    """Gradient of :func:`brute_force_log_likelihood` obtained by automatic differentiation."""
    (nu, alpha, beta, theta), value = _brute_force(params, events, state, max_events, requires_grad=True)
    value.backward()
    logger.debug(f"brute-force log-likelihood {value.item()}")
    return HawkesGradient(*[t.grad.detach().numpy().copy() if t.grad is not None else np.zeros(t.shape)
                            for t in (nu, alpha, beta, theta)])
