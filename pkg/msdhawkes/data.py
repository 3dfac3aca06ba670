"""
Limit order book ingestion, session windowing, same-timestamp deduplication, covariate construction and the
canonical event/state file formats.

Event files (``timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size``) carry 1-based event types and
milliseconds since midnight. Canonical event files (``time_s,type``) and state files (``tau_s,<covariates>``)
use seconds and end with a horizon row holding :math:`T` and empty value cells.
"""
import logging
import re
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
import pandas as pd

from msdhawkes.core import EventStream, StateTrajectory
from msdhawkes.util import (DataFormatError, ValidationError, EmptyWindowWarning, SpreadSupportWarning,
                            DroppedEventsWarning)

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ("timestamp_ms", "event_type", "bid_price", "ask_price", "bid_size", "ask_size")
COVARIATES = ("I", "S1", "S2", "S3")
_CLOCK = re.compile(r"^(\d{1,2}):(\d{2})(?::(\d{2})(?:\.(\d{1,3}))?)?$")


class LobSnapshotRow(NamedTuple):
    timestamp_ms: int
    event_type: int
    bid_price: float
    ask_price: float
    bid_size: int
    ask_size: int
    tick_size: float

    @property
    def spread(self):
        return self.ask_price - self.bid_price

    @property
    def imbalance(self):
        return (self.bid_size - self.ask_size) / (self.bid_size + self.ask_size)


def parse_clock(value):
    """
    Milliseconds since midnight of a clock time ``HH:MM[:SS[.fff]]``; integers are taken as milliseconds already.
    """
    if isinstance(value, (int, np.integer)):
        return int(value)
    match = _CLOCK.match(str(value).strip())
    if match is None:
        raise ValidationError(f"invalid clock time {value!r}, expected HH:MM[:SS[.fff]]")
    hours, minutes, seconds, millis = match.groups()
    hours, minutes, seconds = int(hours), int(minutes), int(seconds or 0)
    millis = int((millis or "0").ljust(3, "0"))
    if hours > 24 or minutes > 59 or seconds > 59:
        raise ValidationError(f"invalid clock time {value!r}")
    return ((hours * 60 + minutes) * 60 + seconds) * 1000 + millis


def _numeric(frame, column, integer):
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() | ~np.isfinite(values)
    if integer:
        bad |= values != np.round(values)
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataFormatError(f"column {column} has invalid value {frame[column].iloc[i]!r}", line=i + 2)
    return values.astype(np.int64) if integer else values.astype(float)


def load_events(path, tick_size=None, origin_ms=0):
    """
    Read an event file. Rows are kept in file order; ``time_s`` holds the timestamps in seconds relative to
    ``origin_ms``.

    :param path: CSV file with the header ``timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size``
    :param tick_size: price tick (stored with the rows for the spread covariates)
    :param origin_ms: session start in milliseconds since midnight (or a clock string)
    :raises DataFormatError: malformed header or row, crossed book, non-positive sizes (with the line number)
    :return: :class:`pandas.DataFrame` with the file columns plus ``time_s``
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError as err:
        raise DataFormatError("empty file", line=1) from err
    except pd.errors.ParserError as err:
        raise DataFormatError(f"cannot parse file: {err}") from err
    if tuple(raw.columns) != EVENT_COLUMNS:
        raise DataFormatError(f"header must be {','.join(EVENT_COLUMNS)}, got {','.join(raw.columns)}", line=1)
    rows = pd.DataFrame({column: _numeric(raw, column, integer=column not in ("bid_price", "ask_price"))
                         for column in EVENT_COLUMNS})
    checks = [(rows["ask_price"] <= rows["bid_price"], "crossed or locked book (ask_price <= bid_price)"),
              (rows["event_type"] < 1, "event_type must be >= 1"),
              ((rows["bid_size"] <= 0) | (rows["ask_size"] <= 0), "sizes must be > 0")]
    for bad, message in checks:
        if bad.any():
            i = int(np.flatnonzero(bad.to_numpy())[0])
            raise DataFormatError(message, line=i + 2)
    origin_ms = parse_clock(origin_ms)
    rows["time_s"] = (rows["timestamp_ms"] - origin_ms) / 1000.0
    if tick_size is not None:
        if not tick_size > 0:
            raise ValidationError(f"tick_size = {tick_size} must be > 0")
        rows.attrs["tick_size"] = float(tick_size)
    logger.info(f"loaded {len(rows)} rows from {path}")
    return rows


def snapshots(rows, tick_size=None):
    """Iterate over the rows as :class:`LobSnapshotRow` records."""
    tick_size = _tick_size(rows, tick_size, required=False)
    for r in rows.itertuples(index=False):
        yield LobSnapshotRow(int(r.timestamp_ms), int(r.event_type), float(r.bid_price), float(r.ask_price),
                             int(r.bid_size), int(r.ask_size), tick_size)


def _tick_size(rows, tick_size, required=True):
    tick_size = rows.attrs.get("tick_size") if tick_size is None else float(tick_size)
    if tick_size is None and required:
        raise ValidationError("tick_size is required for spread covariates")
    return tick_size


def window_session(rows, start, end):
    """
    Restrict rows to the half-open window ``[start, end)`` and re-base ``time_s`` to the window start.

    :param start: window start (clock string like ``"10:00"`` or milliseconds)
    :param end: window end
    :return: ``(rows, horizon)`` with ``horizon = end - start`` in seconds (also stored in ``rows.attrs``)
    """
    start, end = parse_clock(start), parse_clock(end)
    if not start < end:
        raise ValidationError(f"window start {start} ms must precede its end {end} ms")
    inside = (rows["timestamp_ms"] >= start) & (rows["timestamp_ms"] < end)
    windowed = rows.loc[inside].reset_index(drop=True)
    windowed["time_s"] = (windowed["timestamp_ms"] - start) / 1000.0
    horizon = (end - start) / 1000.0
    windowed.attrs = dict(rows.attrs, horizon=horizon)
    if windowed.empty:
        warnings.warn(f"no rows inside the window [{start}, {end}) ms", EmptyWindowWarning)
    return windowed, horizon


def dedup_same_timestamp(rows):
    """
    Keep only the last row of every run of equal timestamps.

    :raises ValidationError: rows not sorted by time
    """
    timestamps = rows["timestamp_ms"].to_numpy()
    if np.any(np.diff(timestamps) < 0):
        i = int(np.argmax(np.diff(timestamps) < 0)) + 1
        raise ValidationError(f"rows must be sorted by timestamp (row {i} goes back in time)")
    kept = rows.loc[~rows["timestamp_ms"].duplicated(keep="last")].reset_index(drop=True)
    kept.attrs = dict(rows.attrs)
    if len(kept) < len(rows):
        logger.info(f"removed {len(rows) - len(kept)} rows sharing a timestamp")
    return kept


def spread_in_ticks(rows, tick_size=None):
    tick_size = _tick_size(rows, tick_size)
    return np.rint((rows["ask_price"].to_numpy() - rows["bid_price"].to_numpy()) / tick_size).astype(np.int64)


def imbalance(rows):
    bid, ask = rows["bid_size"].to_numpy(dtype=float), rows["ask_size"].to_numpy(dtype=float)
    return (bid - ask) / (bid + ask)


@dataclass(frozen=True, eq=False)
class SpreadDistribution:
    """
    Time-weighted distribution of the spread in ticks.

    :ivar values: observed spreads in ticks, increasing
    :ivar masses: probability of each value
    :ivar median: weighted median spread
    """
    values: np.ndarray
    masses: np.ndarray
    median: int

    @property
    def p_min(self):
        return float(self.masses.min())

    @property
    def p_max(self):
        return float(self.masses.max())

    def mass(self, spread):
        """Probability of each spread value; 0 outside the support."""
        spread = np.asarray(spread)
        i = np.clip(np.searchsorted(self.values, spread), 0, len(self.values) - 1)
        return np.where(self.values[i] == spread, self.masses[i], 0.0)

    def to_frame(self):
        return pd.DataFrame(dict(spread_ticks=self.values, mass=self.masses))


def spread_distribution(rows, tick_size=None, horizon=None):
    """
    Spread distribution weighted by occupation time: each row's spread holds until the next row (the last one until
    ``horizon``, or for no time if no horizon is known). Without any positive duration, rows are counted.

    :return: :class:`SpreadDistribution`
    """
    if len(rows) == 0:
        raise ValidationError("spread distribution of an empty sample")
    spreads = spread_in_ticks(rows, tick_size)
    times = rows["time_s"].to_numpy(dtype=float)
    horizon = rows.attrs.get("horizon", times[-1]) if horizon is None else horizon
    durations = np.diff(np.r_[times, max(horizon, times[-1])])
    if np.any(durations < 0):
        raise ValidationError("rows must be sorted by time")
    if not durations.sum() > 0:
        durations = np.ones_like(durations)
    values, inverse = np.unique(spreads, return_inverse=True)
    masses = np.bincount(inverse, weights=durations, minlength=len(values))
    masses = masses / masses.sum()
    median = int(values[np.searchsorted(np.cumsum(masses), 0.5 - 1e-12)])
    return SpreadDistribution(values=values, masses=masses, median=median)


def trajectory_from_rows(times, values, horizon, names=None):
    """
    Piecewise-constant trajectory from timestamped values: the value of the last row at or before time 0 (or of the
    first row) holds from 0, each later row in ``(0, horizon)`` starts a new segment if it changes the value, and
    among rows sharing a time the last one wins.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    values = np.clip(values, -1.0, 1.0)
    if len(times) == 0:
        return StateTrajectory.constant(values.shape[1], horizon, names=names)
    last_of_time = np.r_[times[1:] != times[:-1], True]
    times, values = times[last_of_time], values[last_of_time]
    initial = max(int(np.searchsorted(times, 0.0, side="right")) - 1, 0)
    later = np.flatnonzero((times > 0) & (times < horizon))
    later = later[later > initial]
    candidates = np.vstack([values[initial][None, :], values[later]])
    changed = np.any(candidates[1:] != candidates[:-1], axis=1)
    return StateTrajectory(breakpoints=np.r_[0.0, times[later][changed], horizon],
                           values=np.vstack([values[initial][None, :], values[later][changed]]), names=names)


def covariate_values(rows, spec, dist=None, tick_size=None, s3_mode="prose"):
    """
    Covariate values at every row, one column per entry of ``spec`` (a sequence over ``I``, ``S1``, ``S2``,
    ``S3``):

    * ``I``: imbalance :math:`(q^B - q^A) / (q^B + q^A)`
    * ``S1``: -1 if the spread is at most the median spread of ``dist``, +1 otherwise
    * ``S2``: -1 if the spread is one tick, +1 otherwise
    * ``S3``: with ``s3_mode="prose"`` the affine map :math:`2 (p(s) - \\min p) / (\\max p - \\min p) - 1` of the
      probability :math:`p(s)` of the spread under ``dist``; with ``s3_mode="literal"`` the map
      :math:`(s - \\min p) / (\\max p - \\min p)`; 0 if all probabilities are equal

    Values are clamped to ``[-1, 1]``.

    :return: ``(values, flags)``
    """
    spec = tuple(spec)
    unknown = [c for c in spec if c not in COVARIATES]
    if unknown:
        raise ValidationError(f"unknown covariates {unknown}, expected a subset of {COVARIATES}")
    if s3_mode not in ("prose", "literal"):
        raise ValidationError(f"s3_mode must be 'prose' or 'literal', got {s3_mode!r}")
    needs_spread = any(c != "I" for c in spec)
    spreads = spread_in_ticks(rows, tick_size) if needs_spread else None
    if any(c in ("S1", "S3") for c in spec) and dist is None:
        raise ValidationError("S1 and S3 require a spread distribution")
    flags = []
    columns = []
    for c in spec:
        if c == "I":
            columns.append(imbalance(rows))
        elif c == "S1":
            columns.append(np.where(spreads <= dist.median, -1.0, 1.0))
        elif c == "S2":
            columns.append(np.where(spreads == 1, -1.0, 1.0))
        else:
            p = dist.mass(spreads)
            if np.any(p == 0):
                flags.append("spread-outside-support")
                warnings.warn(f"{int(np.sum(p == 0))} spreads outside the support of the spread distribution",
                              SpreadSupportWarning)
            width = dist.p_max - dist.p_min
            if width == 0:
                flags.append("degenerate-spread-distribution")
                columns.append(np.zeros(len(rows)))
            elif s3_mode == "prose":
                columns.append(2 * (p - dist.p_min) / width - 1)
            else:
                columns.append((spreads - dist.p_min) / width)
    values = np.clip(np.column_stack(columns), -1.0, 1.0) if columns else np.zeros((len(rows), 0))
    return values, tuple(flags)


def build_covariates(rows, spec, dist=None, tick_size=None, horizon=None, s3_mode="prose"):
    """
    State trajectory of the covariates ``spec`` (see :func:`covariate_values`) with a breakpoint at every row
    where some covariate changes. Before the first row the first row's value applies.

    :param horizon: defaults to the horizon stored by :func:`window_session`
    :return: :class:`~msdhawkes.core.StateTrajectory` named after ``spec``
    """
    horizon = rows.attrs.get("horizon") if horizon is None else horizon
    if horizon is None:
        raise ValidationError("horizon unknown: window the rows first or pass horizon")
    values, _ = covariate_values(rows, spec, dist=dist, tick_size=tick_size, s3_mode=s3_mode)
    return trajectory_from_rows(rows["time_s"].to_numpy(dtype=float), values, horizon, names=tuple(spec))


def to_event_stream(rows, horizon=None, d_e=None):
    """
    Event stream of the rows with times in ``(0, horizon]``; types become 0-based. Rows at or before the origin
    are dropped with a :class:`~msdhawkes.util.DroppedEventsWarning`.
    """
    horizon = rows.attrs.get("horizon") if horizon is None else horizon
    if horizon is None:
        raise ValidationError("horizon unknown: window the rows first or pass horizon")
    times = rows["time_s"].to_numpy(dtype=float)
    at_origin = int(np.sum(times <= 0))
    if at_origin:
        warnings.warn(f"dropped {at_origin} rows at or before t = 0: events live on (0, {horizon}]",
                      DroppedEventsWarning)
    keep = (times > 0) & (times <= horizon)
    if np.sum(~keep) > at_origin:
        logger.debug(f"dropped {int(np.sum(~keep)) - at_origin} rows after the horizon {horizon}")
    return EventStream(times=times[keep], types=rows["event_type"].to_numpy()[keep] - 1, horizon=horizon, d_e=d_e)


def _with_horizon_row(frame, horizon):
    tail = pd.DataFrame({column: [""] for column in frame.columns})
    tail.iloc[0, 0] = repr(float(horizon))
    return pd.concat([frame.astype(object), tail], ignore_index=True)


def write_event_stream(events, path):
    """Write ``time_s,type`` rows (1-based types) followed by the horizon row."""
    frame = pd.DataFrame(dict(time_s=[repr(float(t)) for t in events.times], type=events.types + 1))
    _with_horizon_row(frame, events.horizon).to_csv(path, index=False)


def _read_canonical(path, first_column):
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as err:
        raise DataFormatError("empty file", line=1) from err
    except pd.errors.ParserError as err:
        raise DataFormatError(f"cannot parse file: {err}") from err
    if len(frame.columns) == 0 or frame.columns[0] != first_column:
        raise DataFormatError(f"first column must be {first_column}", line=1)
    if len(frame) == 0:
        raise DataFormatError("missing horizon row", line=2)
    last = frame.iloc[-1]
    if last.iloc[1:].notna().any() or pd.isna(last.iloc[0]):
        raise DataFormatError("the last row must hold the horizon and empty value cells", line=len(frame) + 1)
    body = frame.iloc[:-1]
    if body.iloc[:, 1:].isna().any().any() or body.iloc[:, 0].isna().any():
        i = int(np.flatnonzero(body.isna().any(axis=1).to_numpy())[0])
        raise DataFormatError("missing value", line=i + 2)
    return body, float(last.iloc[0])


def read_event_stream(path, d_e=None):
    """Read a file written by :func:`write_event_stream`."""
    body, horizon = _read_canonical(path, "time_s")
    if tuple(body.columns) != ("time_s", "type"):
        raise DataFormatError("header must be time_s,type", line=1)
    types = body["type"].to_numpy(dtype=float)
    if np.any(types != np.round(types)) or np.any(types < 1):
        i = int(np.flatnonzero((types != np.round(types)) | (types < 1))[0])
        raise DataFormatError(f"invalid type {types[i]}", line=i + 2)
    return EventStream(times=body["time_s"].to_numpy(dtype=float), types=types.astype(np.int64) - 1,
                       horizon=horizon, d_e=d_e)


def write_state(state, path):
    """Write ``tau_s,<covariates>`` rows (covariate names, or ``x_1 ... x_dx``) followed by the horizon row."""
    names = state.names or tuple(f"x_{i + 1}" for i in range(state.d_x))
    frame = pd.DataFrame({"tau_s": [repr(float(t)) for t in state.breakpoints[:-1]]})
    for i, name in enumerate(names):
        frame[name] = [repr(float(v)) for v in state.values[:, i]]
    _with_horizon_row(frame, state.horizon).to_csv(path, index=False)


def _state_names(columns):
    names = tuple(str(c) for c in columns)
    return None if names == tuple(f"x_{i + 1}" for i in range(len(names))) else names


def read_state(path):
    """Read a file written by :func:`write_state`."""
    body, horizon = _read_canonical(path, "tau_s")
    return StateTrajectory(breakpoints=np.r_[body["tau_s"].to_numpy(dtype=float), horizon],
                           values=body.iloc[:, 1:].to_numpy(dtype=float).reshape(len(body), -1),
                           names=_state_names(body.columns[1:]))


def read_state_csv_ms(path, horizon, origin_ms=0):
    """
    Read pre-built covariates ``timestamp_ms,x_1,...,x_dx`` (milliseconds since midnight) into a state trajectory
    on ``[0, horizon]`` with time 0 at ``origin_ms``.
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as err:
        raise DataFormatError(f"cannot parse file: {err}") from err
    if len(frame.columns) == 0 or frame.columns[0] != "timestamp_ms":
        raise DataFormatError("first column must be timestamp_ms", line=1)
    if frame.isna().any().any():
        i = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise DataFormatError("missing value", line=i + 2)
    values = frame.iloc[:, 1:].to_numpy(dtype=float)
    if np.any(np.abs(values) > 1):
        i = int(np.flatnonzero(np.any(np.abs(values) > 1, axis=1))[0])
        raise DataFormatError("covariate outside [-1, 1]", line=i + 2)
    times = (frame["timestamp_ms"].to_numpy(dtype=float) - parse_clock(origin_ms)) / 1000.0
    if np.any(np.diff(times) < 0):
        raise DataFormatError("rows must be sorted by timestamp_ms")
    return trajectory_from_rows(times, values, horizon, names=_state_names(frame.columns[1:]))
