"""
Domain types shared by the whole package: model dimensions, parameters, event streams, state trajectories, the
merged timeline used by all integral computations and the record returned by estimators.

All types are immutable after construction (arrays are copied and marked read-only) and can be shared freely
between worker processes.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from msdhawkes.util import ValidationError, HorizonMismatchError, DuplicateTimestampError, zip


def _frozen_array(a, dtype=float, ndim=None, name="array"):
    a = np.array(a, dtype=dtype)
    if ndim is not None and a.ndim != ndim:
        raise ValidationError(f"{name} must have {ndim} dimension(s), got shape {a.shape}")
    a.setflags(write=False)
    return a


def _first_violation(mask):
    return tuple(int(i) for i in np.argwhere(mask)[0])


@dataclass(frozen=True)
class ModelShape:
    """
    Dimensions of a msdHawkes model.

    :ivar d_e: number of event types
    :ivar d_n: number of exponential terms per kernel
    :ivar d_x: number of state covariates (0 recovers the standard Hawkes process)
    """
    d_e: int
    d_n: int
    d_x: int = 0

    def __post_init__(self):
        for name, low in [("d_e", 1), ("d_n", 1), ("d_x", 0)]:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ValidationError(f"{name} must be an integer, got {value!r}")
            if value < low:
                raise ValidationError(f"{name} = {value} must be >= {low}")
            object.__setattr__(self, name, int(value))

    def n_params(self, alpha_mask=None):
        """
        Number of free parameters :math:`d_e (1 + 2 d_e d_n + d_x)`. Kernels switched off in ``alpha_mask`` (a
        :math:`d_e \\times d_e` boolean array) do not count.
        """
        if alpha_mask is None:
            n_kernels = self.d_e * self.d_e
        else:
            alpha_mask = np.asarray(alpha_mask, dtype=bool)
            if alpha_mask.shape != (self.d_e, self.d_e):
                raise ValidationError(f"alpha_mask must have shape {(self.d_e, self.d_e)}, got {alpha_mask.shape}")
            n_kernels = int(alpha_mask.sum())
        return self.d_e * (1 + self.d_x) + 2 * self.d_n * n_kernels

    def code(self, names=None):
        """
        Short model code: ``std-<d_n>`` without covariates, otherwise ``msd-<covariates>-<d_n>`` such as
        ``msd-I-S2-3``.
        """
        if self.d_x == 0:
            return f"std-{self.d_n}"
        if names is None:
            names = [f"x{i + 1}" for i in range(self.d_x)]
        return "-".join(["msd", *names, str(self.d_n)])


@dataclass(frozen=True)
class HawkesParams:
    r"""
    Parameters of a msdHawkes model with intensity

    .. math::
        \lambda^e(t) = \Big(\nu_e + \sum_{e'} \int_{]0,t[} \sum_n \alpha^n_{ee'} e^{-\beta^n_{ee'}(t-s)}
        dN^{e'}_s\Big) \exp(\langle \theta^e, X_{t-} \rangle)

    :ivar nu: baseline intensities, shape ``(d_e,)``, all > 0
    :ivar alpha: kernel amplitudes, shape ``(d_e, d_e, d_n)``, all >= 0; ``alpha[e, e']`` is the excitation of
        type ``e`` by events of type ``e'``
    :ivar beta: kernel decay rates, shape ``(d_e, d_e, d_n)``, all > 0 and strictly decreasing along the last axis
    :ivar theta: state sensitivities, shape ``(d_e, d_x)``
    """
    nu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        nu = _frozen_array(self.nu, ndim=1, name="nu")
        alpha = _frozen_array(self.alpha, ndim=3, name="alpha")
        beta = _frozen_array(self.beta, ndim=3, name="beta")
        theta = _frozen_array(np.reshape(self.theta, (len(nu), -1)) if np.size(self.theta) == 0 else self.theta,
                              ndim=2, name="theta")
        d_e = len(nu)
        if d_e < 1:
            raise ValidationError("nu must have at least one entry")
        if alpha.shape[:2] != (d_e, d_e) or alpha.shape[2] < 1:
            raise ValidationError(f"alpha must have shape ({d_e}, {d_e}, d_n), got {alpha.shape}")
        if beta.shape != alpha.shape:
            raise ValidationError(f"beta must have the shape of alpha {alpha.shape}, got {beta.shape}")
        if theta.shape[0] != d_e:
            raise ValidationError(f"theta must have shape ({d_e}, d_x), got {theta.shape}")
        for name, a in [("nu", nu), ("alpha", alpha), ("beta", beta), ("theta", theta)]:
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name}{list(_first_violation(~np.isfinite(a)))} is not finite")
        if np.any(nu <= 0):
            idx = _first_violation(nu <= 0)
            raise ValidationError(f"nu{list(idx)} = {nu[idx]} must be > 0")
        if np.any(alpha < 0):
            idx = _first_violation(alpha < 0)
            raise ValidationError(f"alpha{list(idx)} = {alpha[idx]} must be >= 0")
        if np.any(beta <= 0):
            idx = _first_violation(beta <= 0)
            raise ValidationError(f"beta{list(idx)} = {beta[idx]} must be > 0")
        unordered = beta[:, :, 1:] >= beta[:, :, :-1]
        if np.any(unordered):
            e, e_, n = _first_violation(unordered)
            raise ValidationError(f"beta[{e}, {e_}, {n + 1}] = {beta[e, e_, n + 1]} must be < "
                                  f"beta[{e}, {e_}, {n}] = {beta[e, e_, n]} (decreasing order of exponential terms)")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta", theta)

    @property
    def shape(self):
        return ModelShape(d_e=self.alpha.shape[0], d_n=self.alpha.shape[2], d_x=self.theta.shape[1])

    @classmethod
    def from_arrays(cls, nu, alpha, beta, theta=None):
        """
        Build parameters from loosely shaped arrays: ``alpha``/``beta`` may be ``(d_e, d_e)`` for a single
        exponential term and ``theta`` may be omitted for a standard Hawkes model. Exponential terms are sorted by
        decreasing ``beta`` (see :meth:`canonical`).
        """
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        alpha = np.asarray(alpha, dtype=float)
        beta = np.asarray(beta, dtype=float)
        if alpha.ndim == 2:
            alpha = alpha[:, :, None]
        if beta.ndim == 2:
            beta = beta[:, :, None]
        if theta is None:
            theta = np.zeros((len(nu), 0))
        alpha, beta = _sort_terms(alpha, beta)
        return cls(nu=nu, alpha=alpha, beta=beta, theta=theta)

    @classmethod
    def zeros(cls, shape, nu=1.0):
        """Poisson parameters: constant baseline ``nu``, no excitation, no state dependence."""
        d_n = shape.d_n
        beta = np.broadcast_to(np.arange(d_n, 0, -1, dtype=float), (shape.d_e, shape.d_e, d_n))
        return cls(nu=np.full(shape.d_e, float(nu)),
                   alpha=np.zeros((shape.d_e, shape.d_e, d_n)),
                   beta=beta,
                   theta=np.zeros((shape.d_e, shape.d_x)))

    @classmethod
    def random(cls, shape, rng, branching_ratio=0.8, beta_range=(1e-1, 1e3), theta_range=1.0, nu_range=(0.5, 2.0)):
        """
        Draw random parameters: ``nu`` uniform in ``nu_range``, ``beta`` log-uniform in ``beta_range`` (sorted),
        ``alpha`` such that each kernel's :math:`\\sum_n \\alpha^n / \\beta^n` is uniform in
        ``[0, branching_ratio]``, ``theta`` uniform in ``[-theta_range, theta_range]``.

        :param shape: :class:`ModelShape`
        :param rng: :class:`numpy.random.Generator`
        """
        d_e, d_n, d_x = shape.d_e, shape.d_n, shape.d_x
        nu = rng.uniform(*nu_range, size=d_e)
        beta = -np.sort(-np.exp(rng.uniform(*np.log(beta_range), size=(d_e, d_e, d_n))), axis=-1)
        ratio = rng.uniform(0, branching_ratio, size=(d_e, d_e, 1))
        weights = rng.uniform(size=(d_e, d_e, d_n))
        alpha = ratio * weights / weights.sum(axis=-1, keepdims=True) * beta
        theta = rng.uniform(-theta_range, theta_range, size=(d_e, d_x))
        return cls(nu=nu, alpha=alpha, beta=beta, theta=theta)

    def canonical(self):
        """Return parameters with the exponential terms of every kernel sorted jointly in (alpha, beta) by
        decreasing beta."""
        alpha, beta = _sort_terms(self.alpha, self.beta)
        return HawkesParams(nu=self.nu, alpha=alpha, beta=beta, theta=self.theta)

    def n_params(self, alpha_mask=None):
        return self.shape.n_params(alpha_mask=alpha_mask)

    def with_theta(self, theta):
        return HawkesParams(nu=self.nu, alpha=self.alpha, beta=self.beta, theta=theta)

    def coordinate(self, e):
        """The parameters ``(nu_e, alpha_e, beta_e, theta_e)`` that coordinate ``e`` of the likelihood depends on."""
        return self.nu[e], self.alpha[e], self.beta[e], self.theta[e]

    def to_dict(self):
        return dict(nu=self.nu.tolist(), alpha=self.alpha.tolist(), beta=self.beta.tolist(),
                    theta=self.theta.tolist())

    @classmethod
    def from_dict(cls, d):
        nu = np.asarray(d["nu"], dtype=float)
        theta = np.asarray(d.get("theta", []), dtype=float).reshape(len(nu), -1)
        return cls(nu=nu, alpha=d["alpha"], beta=d["beta"], theta=theta)

    def __eq__(self, other):
        if not isinstance(other, HawkesParams):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(
            [self.nu, self.alpha, self.beta, self.theta],
            [other.nu, other.alpha, other.beta, other.theta]))

    __hash__ = None


def _sort_terms(alpha, beta):
    """Sort exponential terms jointly by decreasing beta; exact ties are split to the next representable float."""
    order = np.argsort(-beta, axis=-1, kind="stable")
    alpha = np.take_along_axis(alpha, order, axis=-1)
    beta = np.array(np.take_along_axis(beta, order, axis=-1))
    for n in range(1, beta.shape[-1]):
        tied = beta[..., n] >= beta[..., n - 1]
        beta[..., n] = np.where(tied, np.nextafter(beta[..., n - 1], 0), beta[..., n])
    return alpha, beta


@dataclass(frozen=True)
class EventStream:
    """
    Timestamped typed events on :math:`[0, T]`.

    :ivar times: event times in seconds, sorted nondecreasing, all in ``(0, horizon]``
    :ivar types: 0-based event types
    :ivar horizon: observation horizon :math:`T` in seconds
    :ivar d_e: number of event types (defaults to ``max(types) + 1``)
    :ivar strict: whether times are strictly increasing (duplicate timestamps removed); inferred when ``None``
    """
    times: np.ndarray
    types: np.ndarray
    horizon: float
    d_e: Optional[int] = None
    strict: Optional[bool] = None

    def __post_init__(self):
        times = _frozen_array(self.times, ndim=1, name="times")
        types = np.asarray(self.types)
        if types.size == 0:
            types = types.astype(np.int64)
        if not np.issubdtype(types.dtype, np.integer):
            if not np.all(np.mod(types, 1) == 0):
                raise ValidationError("types must be integers")
        types = _frozen_array(types, dtype=np.int64, ndim=1, name="types")
        horizon = float(self.horizon)
        if len(times) != len(types):
            raise ValidationError(f"times ({len(times)}) and types ({len(types)}) differ in length")
        if not np.isfinite(horizon) or horizon <= 0:
            raise ValidationError(f"horizon = {horizon} must be a positive real")
        if not np.all(np.isfinite(times)):
            raise ValidationError("times must be finite")
        if len(times):
            if times[0] <= 0:
                raise ValidationError(f"times[0] = {times[0]} must be > 0")
            if times[-1] > horizon:
                raise ValidationError(f"times[{len(times) - 1}] = {times[-1]} exceeds the horizon {horizon}")
            step = np.diff(times)
            if np.any(step < 0):
                i = int(np.argmax(step < 0)) + 1
                raise ValidationError(f"times[{i}] = {times[i]} is smaller than times[{i - 1}] = {times[i - 1]}")
            if np.any(types < 0):
                i = int(np.argmax(types < 0))
                raise ValidationError(f"types[{i}] = {types[i]} must be >= 0")
        d_e = self.d_e
        if d_e is None:
            d_e = int(types.max()) + 1 if len(types) else 1
        d_e = int(d_e)
        if d_e < 1:
            raise ValidationError(f"d_e = {d_e} must be >= 1")
        if len(types) and types.max() >= d_e:
            i = int(np.argmax(types >= d_e))
            raise ValidationError(f"types[{i}] = {types[i]} is not a valid type for d_e = {d_e}")
        has_ties = bool(np.any(np.diff(times) == 0))
        strict = self.strict
        if strict is None:
            strict = not has_ties
        elif strict and has_ties:
            i = int(np.argmax(np.diff(times) == 0)) + 1
            raise DuplicateTimestampError(f"strict stream has duplicate timestamp times[{i}] = {times[i]}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "d_e", d_e)
        object.__setattr__(self, "strict", bool(strict))

    def __len__(self):
        return len(self.times)

    def counts(self):
        """Number of events of each type, shape ``(d_e,)``."""
        return np.bincount(self.types, minlength=self.d_e)

    def of_type(self, e):
        """Times of the events of type ``e``."""
        return self.times[self.types == e]

    def require_strict(self):
        if not self.strict:
            raise DuplicateTimestampError("events must have strictly increasing times; "
                                          "apply dedup_same_timestamp first")

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.horizon == other.horizon and self.d_e == other.d_e
                and np.array_equal(self.times, other.times) and np.array_equal(self.types, other.types))

    __hash__ = None


@dataclass(frozen=True)
class StateTrajectory:
    """
    Piecewise-constant covariate path. Value ``values[j]`` holds on the right-open segment
    ``[breakpoints[j], breakpoints[j + 1])``; at an event time the pre-event value :math:`X_{t-}` applies
    (see :meth:`value_before`).

    :ivar breakpoints: :math:`0 = \\tau_0 < \\dots < \\tau_N = T`
    :ivar values: shape ``(N, d_x)``, every component in ``[-1, 1]``
    :ivar names: optional covariate labels
    """
    breakpoints: np.ndarray
    values: np.ndarray
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        breakpoints = _frozen_array(self.breakpoints, ndim=1, name="breakpoints")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        values = _frozen_array(values, ndim=2, name="values")
        if len(breakpoints) < 2:
            raise ValidationError("breakpoints must contain at least 0 and the horizon")
        if breakpoints[0] != 0:
            raise ValidationError(f"breakpoints[0] = {breakpoints[0]} must be 0")
        if not np.all(np.isfinite(breakpoints)):
            raise ValidationError("breakpoints must be finite")
        step = np.diff(breakpoints)
        if np.any(step <= 0):
            i = int(np.argmax(step <= 0)) + 1
            raise ValidationError(f"breakpoints[{i}] = {breakpoints[i]} must be > breakpoints[{i - 1}]")
        if len(values) != len(breakpoints) - 1:
            raise ValidationError(f"{len(breakpoints)} breakpoints require {len(breakpoints) - 1} values, "
                                  f"got {len(values)}")
        outside = ~(np.abs(values) <= 1)
        if np.any(outside):
            j, i = _first_violation(outside)
            raise ValidationError(f"values[{j}, {i}] = {values[j, i]} is outside [-1, 1]")
        names = self.names
        if names is not None:
            names = tuple(str(n) for n in names)
            if len(names) != values.shape[1]:
                raise ValidationError(f"{len(names)} names given for {values.shape[1]} covariates")
        object.__setattr__(self, "breakpoints", breakpoints)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @classmethod
    def constant(cls, d_x, horizon, value=None, names=None):
        """Trajectory with a single segment; ``value`` defaults to zeros."""
        value = np.zeros(d_x) if value is None else np.asarray(value, dtype=float).reshape(d_x)
        return cls(breakpoints=[0.0, float(horizon)], values=value[None, :], names=names)

    @property
    def horizon(self):
        return float(self.breakpoints[-1])

    @property
    def d_x(self):
        return self.values.shape[1]

    def value_at(self, t):
        """Right-open segment value: the value on the segment containing ``t`` (the last value at ``t = T``)."""
        j = np.searchsorted(self.breakpoints, t, side="right") - 1
        return self.values[np.clip(j, 0, len(self.values) - 1)]

    def value_before(self, t):
        """Pre-event value :math:`X_{t-}`: the value on the segment with left endpoint < t <= right endpoint
        (the first value at ``t = 0``)."""
        j = np.searchsorted(self.breakpoints, t, side="left") - 1
        return self.values[np.clip(j, 0, len(self.values) - 1)]

    def select(self, columns):
        """
        Sub-trajectory on the covariates ``columns`` (indices or names); breakpoints whose neighbouring values
        become equal are merged.
        """
        idx = []
        for c in columns:
            if isinstance(c, str):
                if self.names is None or c not in self.names:
                    raise ValidationError(f"unknown covariate {c!r}, available: {self.names}")
                idx.append(self.names.index(c))
            else:
                if not 0 <= int(c) < self.d_x:
                    raise ValidationError(f"covariate index {c} out of range for d_x = {self.d_x}")
                idx.append(int(c))
        values = self.values[:, idx]
        keep = np.r_[True, np.any(values[1:] != values[:-1], axis=1)]
        names = None if self.names is None else tuple(self.names[i] for i in idx)
        return StateTrajectory(breakpoints=np.r_[self.breakpoints[:-1][keep], self.breakpoints[-1]],
                               values=values[keep], names=names)

    def __eq__(self, other):
        if not isinstance(other, StateTrajectory):
            return NotImplemented
        return (self.values.shape == other.values.shape and np.array_equal(self.breakpoints, other.breakpoints)
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MergedTimeline:
    """
    Union of state breakpoints and event times. Points ``times[0] = 0 <= ... <= times[M] = T`` delimit ``M``
    segments on which the state is constant.

    :ivar times: the ``M + 1`` points
    :ivar event_types: type of the event located at each point, ``-1`` for pure state breakpoints
    :ivar values: state value on each segment ``[times[m], times[m + 1])``, shape ``(M, d_x)``
    :ivar pre_values: pre-point value :math:`X_{t-}` at each point, shape ``(M + 1, d_x)``
    :ivar d_e: number of event types
    """
    times: np.ndarray
    event_types: np.ndarray
    values: np.ndarray
    pre_values: np.ndarray
    d_e: int

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def lengths(self):
        return np.diff(self.times)

    def event_points(self, e):
        """Indices of the points carrying events of type ``e``, in time order."""
        return np.flatnonzero(self.event_types == e)

    def incidence(self):
        """Array of shape ``(d_e, M + 1)`` with a one where a point carries an event of the given type."""
        inc = np.zeros((self.d_e, len(self.times)))
        is_event = self.event_types >= 0
        inc[self.event_types[is_event], np.flatnonzero(is_event)] = 1.0
        return inc

    def to_state(self):
        """The state trajectory on the merged breakpoints (refines the original one without changing values)."""
        keep = np.r_[self.lengths > 0]
        return StateTrajectory(breakpoints=np.r_[self.times[:-1][keep], self.times[-1]], values=self.values[keep])


def check_compatible(events, state):
    if not np.isclose(events.horizon, state.horizon, rtol=1e-12, atol=0):
        raise HorizonMismatchError(f"event horizon {events.horizon} differs from state horizon {state.horizon}")


def build_merged_timeline(events, state, allow_ties=False):
    """
    Merge event times and state breakpoints into one sorted partition of :math:`[0, T]`.

    :param events: :class:`EventStream`; must be strict unless ``allow_ties`` is set
    :param state: :class:`StateTrajectory` with the same horizon
    :param allow_ties: keep co-timed events as zero-length segments in input order
    :return: :class:`MergedTimeline`
    """
    check_compatible(events, state)
    if not allow_ties:
        events.require_strict()
    breakpoints = state.breakpoints
    # a breakpoint coinciding with an event is represented by the event point
    extra = breakpoints[~np.isin(breakpoints, events.times)]
    times = np.concatenate([extra, events.times])
    types = np.concatenate([np.full(len(extra), -1, dtype=np.int64), events.types])
    order = np.argsort(times, kind="stable")
    times, types = times[order], types[order]
    times[-1] = max(times[-1], state.horizon)
    seg = np.clip(np.searchsorted(breakpoints, times[:-1], side="right") - 1, 0, len(state.values) - 1)
    pre = np.clip(np.searchsorted(breakpoints, times, side="left") - 1, 0, len(state.values) - 1)
    return MergedTimeline(times=_frozen_array(times), event_types=_frozen_array(types, dtype=np.int64),
                          values=_frozen_array(state.values[seg]), pre_values=_frozen_array(state.values[pre]),
                          d_e=events.d_e)


class FitMethod(str, Enum):
    MLE = "MLE"
    EM = "EM"


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    Outcome of an estimation run. ``aic`` and ``log_likelihood`` are derived from ``per_coordinate_loglik`` and
    ``n_params``. ``optimizer`` names the numerical optimiser of a direct maximisation and is ``None`` for EM.
    """
    params: HawkesParams
    per_coordinate_loglik: np.ndarray
    n_params: int
    method: FitMethod
    optimizer: Optional[str] = None
    starts_used: int = 1
    converged: bool = True
    elapsed: float = 0.0
    flags: Tuple[str, ...] = ()
    covariates: Optional[Tuple[str, ...]] = None
    trace: Optional[Tuple[float, ...]] = None
    log_likelihood: float = field(init=False)
    aic: float = field(init=False)

    def __post_init__(self):
        per_coordinate = _frozen_array(self.per_coordinate_loglik, ndim=1, name="per_coordinate_loglik")
        if len(per_coordinate) != len(self.params.nu):
            raise ValidationError(f"per_coordinate_loglik has {len(per_coordinate)} entries for "
                                  f"d_e = {len(self.params.nu)}")
        object.__setattr__(self, "per_coordinate_loglik", per_coordinate)
        object.__setattr__(self, "method", FitMethod(self.method))
        object.__setattr__(self, "n_params", int(self.n_params))
        object.__setattr__(self, "flags", tuple(self.flags))
        if self.covariates is not None:
            object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.trace is not None:
            object.__setattr__(self, "trace", tuple(float(v) for v in self.trace))
        log_likelihood = float(np.sum(per_coordinate))
        object.__setattr__(self, "log_likelihood", log_likelihood)
        object.__setattr__(self, "aic", 2 * self.n_params - 2 * log_likelihood)

    @property
    def shape(self):
        return self.params.shape

    @property
    def model_code(self):
        return self.shape.code(self.covariates)

    def to_dict(self):
        """The ``FITRESULT.json`` payload."""
        shape = self.shape
        return dict(model=self.model_code,
                    method=self.method.value,
                    optimizer=self.optimizer,
                    shape=dict(d_e=shape.d_e, d_n=shape.d_n, d_x=shape.d_x),
                    covariates=None if self.covariates is None else list(self.covariates),
                    params=self.params.to_dict(),
                    log_likelihood=self.log_likelihood,
                    per_coordinate_loglik=self.per_coordinate_loglik.tolist(),
                    aic=self.aic,
                    n_params=self.n_params,
                    starts_used=self.starts_used,
                    converged=self.converged,
                    elapsed=self.elapsed,
                    flags=list(self.flags),
                    trace=None if self.trace is None else list(self.trace))

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(params=HawkesParams.from_dict(d["params"]),
                       per_coordinate_loglik=d["per_coordinate_loglik"],
                       n_params=d["n_params"],
                       method=d["method"],
                       optimizer=d.get("optimizer"),
                       starts_used=d.get("starts_used", 1),
                       converged=d.get("converged", True),
                       elapsed=d.get("elapsed", 0.0),
                       flags=tuple(d.get("flags", ())),
                       covariates=d.get("covariates"),
                       trace=d.get("trace"))
        except KeyError as err:
            raise ValidationError(f"fit result record misses the field {err}") from err
