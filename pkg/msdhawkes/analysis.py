"""
State-dependent endogeneity and the next-event-type prediction exercise.

Prediction methods:

* ``model``: the type with the largest intensity :math:`\\lambda^e(t-)`; co-timed events all see the intensity
  before their common time, and ties go to the smallest type index
* ``last``: the type of the previous event (the first event is not predicted)
* ``imbalance``: type 0 (bid) when the imbalance covariate is <= 0 just before the event, type 1 (ask) otherwise
"""
import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import pandas as pd

from msdhawkes.intensity import IncrementalIntensity
from msdhawkes.util import ValidationError

logger = logging.getLogger(__name__)


def spectral_radius(matrix, tol=1e-14, max_iterations=100_000):
    """
    Spectral radius of a square matrix. Sizes up to two use closed-form eigenvalues; larger non-negative matrices
    use power iteration on :math:`M + I` (whose Perron root is the radius plus one), falling back to a dense
    eigensolver if the iteration does not settle.
    """
    matrix = np.asarray(matrix, dtype=float)
    d = len(matrix)
    if d == 1:
        return abs(float(matrix[0, 0]))
    if d == 2:
        (a, b), (c, d_) = matrix
        half_trace = (a + d_) / 2
        discriminant = ((a - d_) / 2) ** 2 + b * c
        if discriminant >= 0:
            root = np.sqrt(discriminant)
            return float(max(abs(half_trace + root), abs(half_trace - root)))
        # complex conjugate pair
        return float(np.sqrt(a * d_ - b * c))
    if np.any(matrix < 0):
        return float(np.max(np.abs(np.linalg.eigvals(matrix))))
    shifted = matrix + np.eye(d)
    v = np.ones(d) / np.sqrt(d)
    estimate = 0.0
    for _ in range(max_iterations):
        w = shifted @ v
        norm = np.linalg.norm(w)
        v = w / norm
        if abs(norm - estimate) <= tol * norm:
            return float(norm - 1)
        estimate = norm
    logger.debug("power iteration did not converge, using a dense eigensolver")
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


@dataclass(frozen=True, eq=False)
class EndogeneityReport:
    """
    :ivar x: state value
    :ivar matrix: branching matrix :math:`m_i \\sum_n \\alpha^n_{ij} / \\beta^n_{ij}` with
        :math:`m_i = e^{\\langle \\theta^i, x \\rangle}`
    :ivar radius: its spectral radius
    :ivar baseline_radius: the spectral radius with :math:`\\theta = 0`
    """
    x: np.ndarray
    matrix: np.ndarray
    radius: float
    baseline_radius: float


def branching_matrix(params, x=None):
    norms = (params.alpha / params.beta).sum(axis=-1)
    if x is None:
        return norms
    return np.exp(params.theta @ np.asarray(x, dtype=float))[:, None] * norms


def endogeneity(params, x):
    """
    State-dependent endogeneity: with the state frozen at ``x`` the process is a standard Hawkes process with
    baseline :math:`m_i \\nu_i` and kernels :math:`m_i \\alpha_{ij}`; report its branching matrix and radius.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param x: state vector in :math:`[-1, 1]^{d_x}`
    :return: :class:`EndogeneityReport`
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) != params.shape.d_x:
        raise ValidationError(f"state vector has {len(x)} entries, parameters expect {params.shape.d_x}")
    if np.any(np.abs(x) > 1):
        raise ValidationError(f"state vector {x} outside [-1, 1]")
    matrix = branching_matrix(params, x)
    return EndogeneityReport(x=x, matrix=matrix, radius=spectral_radius(matrix),
                             baseline_radius=spectral_radius(branching_matrix(params)))


def endogeneity_grid(params, imbalance_grid, spread_values=(-1.0, 1.0), imbalance_index=0, spread_index=1):
    """
    Spectral radius over a grid of imbalance values for each spread regime; all other covariates are set to 0.
    ``spread_index=None`` evaluates the imbalance alone.

    :return: :class:`pandas.DataFrame` with columns ``imbalance``, ``spread``, ``radius``, ``baseline``
    """
    d_x = params.shape.d_x
    for name, index in [("imbalance_index", imbalance_index), ("spread_index", spread_index)]:
        if index is not None and not 0 <= index < d_x:
            raise ValidationError(f"{name} = {index} out of range for d_x = {d_x}")
    if spread_index is None:
        spread_values = [np.nan]
    baseline = spectral_radius(branching_matrix(params))
    rows = []
    for s in spread_values:
        for i in imbalance_grid:
            x = np.zeros(d_x)
            x[imbalance_index] = i
            if spread_index is not None:
                x[spread_index] = s
            rows.append(dict(imbalance=float(i), spread=float(s), radius=endogeneity(params, x).radius,
                             baseline=baseline))
    return pd.DataFrame(rows)


@dataclass(frozen=True, eq=False)
class PredictionOutcome:
    """
    Predicted next-event types per method. Entries of ``-1`` mark events a method does not predict.

    :ivar times: event times
    :ivar truth: observed types
    :ivar predictions: method name to predicted types
    """
    times: np.ndarray
    truth: np.ndarray
    predictions: Dict[str, np.ndarray] = field(default_factory=dict)

    def counts(self, method):
        """``(correct, predicted)`` numbers of events of ``method``."""
        predicted = self.predictions[method]
        valid = predicted >= 0
        return int(np.sum(predicted[valid] == self.truth[valid])), int(valid.sum())

    def accuracy(self, method):
        correct, total = self.counts(method)
        return correct / total if total else float("nan")

    @property
    def accuracies(self):
        return {method: self.accuracy(method) for method in self.predictions}

    def excess_accuracy(self, method="model"):
        """Accuracy of ``method`` minus that of the ``last`` benchmark."""
        return self.accuracy(method) - self.accuracy("last")

    def summary(self):
        rows = []
        for method in self.predictions:
            correct, total = self.counts(method)
            rows.append(dict(method=method, correct=correct, total=total, accuracy=self.accuracy(method),
                             excess_vs_last=self.excess_accuracy(method)))
        return pd.DataFrame(rows)

    def to_frame(self):
        """Per-event table with 1-based types (0 where a method makes no prediction)."""
        columns = dict(time_s=self.times, type=self.truth + 1)
        for method, predicted in self.predictions.items():
            columns[method] = predicted + 1
        return pd.DataFrame(columns)


def _covariate_index(state, covariate):
    if isinstance(covariate, str):
        if state.names is None or covariate not in state.names:
            raise ValidationError(f"state has no covariate named {covariate!r}")
        return state.names.index(covariate)
    covariate = int(covariate)
    if not 0 <= covariate < state.d_x:
        raise ValidationError(f"covariate index {covariate} out of range for d_x = {state.d_x}")
    return covariate


def model_predictions(params, events, state):
    """Argmax-intensity prediction for every event, evaluated at the left limit of its (possibly shared) time."""
    times, types = events.times, events.types
    predicted = np.empty(len(times), dtype=np.int64)
    evaluator = IncrementalIntensity(params)
    i = 0
    while i < len(times):
        t = times[i]
        j = i
        while j < len(times) and times[j] == t:
            j += 1
        evaluator.advance_to(t)
        predicted[i:j] = int(np.argmax(evaluator.intensity(state.value_before(t))))
        for m in range(i, j):
            evaluator.add_event(types[m])
        i = j
    return predicted


def predict_next_type(params, events, state, imbalance=None):
    """
    Out-of-sample prediction of the type of every event with the model (parameters of a previous period) and the
    ``last`` and ``imbalance`` benchmarks. Streams with co-timed events are allowed.

    :param params: :class:`~msdhawkes.core.HawkesParams`
    :param events: :class:`~msdhawkes.core.EventStream` (strict or not)
    :param state: :class:`~msdhawkes.core.StateTrajectory` with the model's covariates
    :param imbalance: name or index of the imbalance covariate in ``state``; ``None`` skips that benchmark
    :return: :class:`PredictionOutcome`
    """
    if state.d_x != params.shape.d_x:
        raise ValidationError(f"state has {state.d_x} covariates, parameters expect {params.shape.d_x}")
    if not np.isclose(events.horizon, state.horizon, rtol=1e-12, atol=0):
        raise ValidationError(f"event horizon {events.horizon} differs from state horizon {state.horizon}")
    predictions = dict(model=model_predictions(params, events, state))
    last = np.full(len(events), -1, dtype=np.int64)
    last[1:] = events.types[:-1]
    predictions["last"] = last
    if imbalance is not None:
        if params.shape.d_e != 2:
            raise ValidationError("the imbalance benchmark needs exactly two event types (bid, ask)")
        index = _covariate_index(state, imbalance)
        before = state.value_before(events.times)[:, index] if len(events) else np.empty(0)
        predictions["imbalance"] = np.where(before > 0, 1, 0).astype(np.int64)
    outcome = PredictionOutcome(times=events.times, truth=events.types, predictions=predictions)
    logger.info(", ".join(f"{method} accuracy {accuracy:.4f}" for method, accuracy in outcome.accuracies.items()))
    return outcome


def empirical_intensity_by_state(events, state, covariate, bins=10, event_type=None):
    """
    Empirical intensity as a function of one covariate: per bin, the number of events whose pre-event covariate
    lies in the bin divided by the time the covariate spends in the bin.

    :param covariate: name or index of the covariate
    :param bins: increasing bin edges, or a number of equal bins on ``[-1, 1]``
    :param event_type: count only events of this type
    :return: :class:`pandas.DataFrame` with columns ``left``, ``right``, ``count``, ``occupancy``, ``rate``;
        ``rate`` is missing (NaN) for bins the covariate never visits
    """
    index = _covariate_index(state, covariate)
    edges = np.linspace(-1, 1, int(bins) + 1) if np.ndim(bins) == 0 else np.asarray(bins, dtype=float)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValidationError("bin edges must be strictly increasing")
    n_bins = len(edges) - 1

    def which(v):
        b = np.searchsorted(edges, v, side="right") - 1
        b[v == edges[-1]] = n_bins - 1
        return b

    times = events.times if event_type is None else events.of_type(event_type)
    bin_events = which(state.value_before(times)[:, index] if len(times) else np.empty(0))
    inside = (bin_events >= 0) & (bin_events < n_bins)
    counts = np.bincount(bin_events[inside], minlength=n_bins)
    bin_segments = which(state.values[:, index])
    inside = (bin_segments >= 0) & (bin_segments < n_bins)
    occupancy = np.bincount(bin_segments[inside], weights=np.diff(state.breakpoints)[inside], minlength=n_bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(occupancy > 0, counts / occupancy, np.nan)
    return pd.DataFrame(dict(left=edges[:-1], right=edges[1:], count=counts, occupancy=occupancy, rate=rate))
