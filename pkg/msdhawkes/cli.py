"""
Command-line interface. Every subcommand reads its inputs from files, writes data to files or stdout and logs to
stderr; failures end with a one-line JSON error record on stderr and a nonzero exit code.
"""
import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from msdhawkes.analysis import endogeneity_grid, predict_next_type
from msdhawkes.core import FitMethod, FitResult, HawkesParams, ModelShape, StateTrajectory
from msdhawkes.data import (COVARIATES, load_events, window_session, dedup_same_timestamp, spread_distribution,
                            build_covariates, to_event_stream, read_event_stream, read_state, read_state_csv_ms,
                            write_event_stream, write_state)
from msdhawkes.diagnostics import fit_report, qq_points
from msdhawkes.estimate import MleOptions, EmOptions, OPTIMIZERS, fit_mle, fit_em, select_model
from msdhawkes.experiments import (flatten_params, replicate_estimation, estimation_summary,
                                   replicate_order_selection, replicate_convergence_rate)
from msdhawkes.simulate import (SimulationOptions, simulate_replicates, simulate_msd, simulate_powerlaw,
                                simulate_state, single_exponential_params, multi_exponential_params, powerlaw_reference)
from msdhawkes.util import MsdHawkesError, EventCapExceededError, ValidationError, stream

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_INVALID = 4
EXIT_NUMERICAL = 5

EXIT_CODES = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_FAILURE}  unexpected failure
  {EXIT_USAGE}  usage error (unknown flag, bad value, bad config file)
  {EXIT_MISSING_FILE}  input file not found
  {EXIT_INVALID}  validation or data-format error
  {EXIT_NUMERICAL}  numerical failure (simulation exceeded the event cap)

errors are reported on stderr as one JSON line {{"error": ..., "message": ..., "exit_code": ...}}"""

CONFIG_SECTION = "msdhawkes"


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    """
    Resolved settings of an estimation subcommand.

    :ivar command: subcommand name
    :ivar inputs: input role to path
    :ivar shape: model dimensions
    :ivar covariates: covariate names of the model (empty for the standard Hawkes model)
    :ivar options: :class:`~msdhawkes.estimate.MleOptions` or :class:`~msdhawkes.estimate.EmOptions`
    :ivar seed: random seed
    :ivar report_format: ``csv`` or ``json``
    """
    command: str
    inputs: Tuple[Tuple[str, str], ...] = ()
    shape: Optional[ModelShape] = None
    covariates: Tuple[str, ...] = ()
    options: object = None
    seed: Optional[int] = None
    report_format: str = "csv"
    outputs: Tuple[Tuple[str, str], ...] = field(default=())

    def __post_init__(self):
        for role, path in self.inputs + self.outputs:
            if not path:
                raise ValidationError(f"empty path for {role} of {self.command}")
        if self.shape is not None and self.covariates and len(self.covariates) != self.shape.d_x:
            raise ValidationError(f"{len(self.covariates)} covariates {self.covariates} for d_x = {self.shape.d_x}")
        if self.report_format not in ("csv", "json"):
            raise ValidationError(f"report format must be csv or json, got {self.report_format!r}")


# ---------------------------------------------------------------------------------------------------------------
# argument parsing


def _positive_int(value):
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"{value} must be a positive integer")
    return number


def _positive_float(value):
    number = float(value)
    if not number > 0:
        raise argparse.ArgumentTypeError(f"{value} must be positive")
    return number


def _clock(value):
    return int(value) if value.isdigit() else value


def _jobs(value):
    if str(value).lower() in ("0", "all", "none"):
        return None
    return _positive_int(value)


def parse_range(value):
    """Integer range ``"1..5"``, list ``"1,2,3"`` or single value ``"3"``."""
    try:
        if ".." in value:
            low, high = (int(v) for v in value.split(".."))
            values = list(range(low, high + 1))
        else:
            values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid range {value!r}, expected e.g. 1..5 or 1,2,3")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"range {value!r} must contain positive integers")
    return values


def parse_covariate_set(value):
    """Comma-separated covariates; ``none`` or ``-`` for the standard Hawkes model."""
    if value.strip().lower() in ("none", "-", ""):
        return ()
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help=f"INI file whose [{CONFIG_SECTION}] and [<subcommand>] keys (long flag names) set "
                             f"defaults; explicit flags override them")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging and progress bars")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
    return common


def _add_data_arguments(parser, covariates=True):
    group = parser.add_argument_group("input data")
    group.add_argument("--events", metavar="PATH", help="canonical event file (time_s,type + horizon row)")
    group.add_argument("--state", metavar="PATH", help="canonical state file (tau_s,<covariates> + horizon row)")
    group.add_argument("--state-ms", metavar="PATH", help="covariate file timestamp_ms,x_1,...")
    group.add_argument("--lob", metavar="PATH",
                       help="order book event file timestamp_ms,event_type,bid_price,ask_price,bid_size,ask_size")
    group.add_argument("--window", nargs=2, type=_clock, metavar=("START", "END"),
                       help="session window of --lob data, e.g. 10:00 15:30")
    group.add_argument("--origin", type=_clock, default=0,
                       help="clock time of t = 0 for --lob/--state-ms without --window")
    group.add_argument("--T", "--horizon", dest="T", type=_positive_float,
                       help="horizon in seconds for --lob/--state-ms data without --window")
    group.add_argument("--tick-size", type=_positive_float, help="price tick of --lob data")
    group.add_argument("--s3-mode", choices=["prose", "literal"], default="prose", help="S3 covariate encoding")
    group.add_argument("--keep-ties", action="store_true",
                       help="keep --lob rows sharing a timestamp instead of keeping the last one")
    group.add_argument("--de", type=_positive_int, help="number of event types (default: largest type in data)")
    if covariates:
        group.add_argument("--covariates", type=parse_covariate_set, default=None,
                           help=f"comma-separated covariates ({', '.join(COVARIATES)} for --lob data, state "
                                f"column names or 1-based indices otherwise); 'none' for no state")


def _add_estimation_arguments(parser, em=False):
    group = parser.add_argument_group("estimation")
    group.add_argument("--seed", type=int, help="seed of the random starting points")
    group.add_argument("--mask", choices=["full", "no-cross"], default="full",
                       help="'no-cross' fixes all cross-excitation kernels to zero")
    if em:
        group.add_argument("--max-sweeps", type=_positive_int, default=EmOptions.max_sweeps)
        group.add_argument("--tol", type=_positive_float, default=EmOptions.tol_loglik,
                           help="log-likelihood change tolerance")
    else:
        group.add_argument("--starts", type=_positive_int, default=MleOptions.n_starts,
                           help="random starting points per coordinate")
        group.add_argument("--max-iterations", type=_positive_int, default=MleOptions.max_iterations)
        group.add_argument("--optimizer", choices=OPTIMIZERS, default=MleOptions.optimizer,
                           help="bound-constrained optimiser of the log-likelihood")


def build_parser():
    """The argument parser of all subcommands."""
    common = _common_parser()
    parser = _ArgumentParser(prog="msdhawkes", epilog=EXIT_CODES,
                             formatter_class=argparse.RawDescriptionHelpFormatter,
                             description="Simulate, estimate, diagnose and analyse state-dependent Hawkes processes.")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def add(name, handler, help):
        sub = subparsers.add_parser(name, parents=[common], help=help, description=help, epilog=EXIT_CODES,
                                    formatter_class=argparse.RawDescriptionHelpFormatter)
        sub.set_defaults(handler=handler)
        return sub

    sub = add("simulate", cmd_simulate, "simulate an event stream and its state process")
    sub.add_argument("--de", type=_positive_int, default=2, help="number of event types")
    sub.add_argument("--dn", type=_positive_int, default=1, help="exponential terms per kernel")
    sub.add_argument("--dx", type=int, default=2, help="number of state covariates")
    sub.add_argument("--T", "--horizon", dest="T", type=_positive_float, default=1000.0, help="horizon in seconds")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--kernel", choices=["exponential", "powerlaw"], default="exponential")
    sub.add_argument("--params", metavar="PATH",
                     help="parameters as JSON (fit output or parameter record); default: the reference set of "
                          "the shape (--de 2 --dx 2 with --dn 1 or 3), random parameters otherwise")
    sub.add_argument("--state", metavar="PATH", help="use this state file instead of a synthetic state")
    sub.add_argument("--state-rate", type=_positive_float, default=SimulationOptions.state_rate,
                     help="jump rate of the synthetic state")
    sub.add_argument("--max-events", type=_positive_int, default=SimulationOptions.max_events)
    sub.add_argument("--out-events", metavar="PATH", required=True)
    sub.add_argument("--out-state", metavar="PATH", required=True)
    sub.add_argument("--out-params", metavar="PATH", help="write the simulated parameters as JSON")

    for name, handler, em in [("fit", cmd_fit, False), ("fit-em", cmd_fit, True)]:
        sub = add(name, handler, "estimate by the EM algorithm" if em else "estimate by maximum likelihood")
        _add_data_arguments(sub)
        sub.add_argument("--dn", type=_positive_int, default=1, help="exponential terms per kernel")
        _add_estimation_arguments(sub, em=em)
        sub.add_argument("--jobs", type=_jobs, default=1 if em else None,
                         help="worker processes over starting points (0 or 'all': all cores)")
        sub.add_argument("--out", metavar="PATH", help="fit result JSON (default: stdout)")
        sub.add_argument("--params-csv", metavar="PATH", help="estimated parameters as parameter,value CSV")
        sub.set_defaults(method=FitMethod.EM if em else FitMethod.MLE)

    sub = add("select", cmd_select, "rank models by AIC over kernel orders and covariate sets")
    _add_data_arguments(sub, covariates=False)
    sub.add_argument("--dn", type=parse_range, default=[1], help="kernel orders, e.g. 1..5")
    sub.add_argument("--covariate-sets", type=parse_covariate_set, nargs="+", default=None,
                     help="covariate sets such as none I I,S2 (default: none and all available covariates)")
    sub.add_argument("--method", type=FitMethod, choices=list(FitMethod), default=FitMethod.MLE)
    _add_estimation_arguments(sub)
    sub.add_argument("--jobs", type=_jobs, default=None, help="worker processes over candidates")
    sub.add_argument("--format", choices=["csv", "json"], default="csv")
    sub.add_argument("--out", metavar="PATH", help="selection table (default: stdout)")

    sub = add("residuals", cmd_residuals, "residuals and Kolmogorov-Smirnov tests of a fitted model")
    _add_data_arguments(sub)
    sub.add_argument("--fit", metavar="PATH", required=True, help="fit result JSON")
    sub.add_argument("--level", type=float, default=0.05, help="significance level")
    sub.add_argument("--out", metavar="PATH", help="residual CSV (one column per type)")
    sub.add_argument("--qq", metavar="PATH", help="exponential QQ points CSV (columns type,theoretical,empirical)")
    sub.add_argument("--report", metavar="PATH", help="test report JSON (default: stdout)")

    sub = add("endogeneity", cmd_endogeneity, "spectral radius over imbalance and spread regimes")
    sub.add_argument("--fit", metavar="PATH", required=True, help="fit result JSON")
    sub.add_argument("--imbalance-grid", nargs=3, type=float, default=[-1.0, 1.0, 21],
                     metavar=("START", "STOP", "NUM"), help="evenly spaced imbalance values")
    sub.add_argument("--spread-values", type=lambda v: [float(s) for s in v.split(",")], default=[-1.0, 1.0],
                     help="comma-separated spread covariate values")
    sub.add_argument("--imbalance", default="I", help="imbalance covariate (name or 1-based index)")
    sub.add_argument("--spread", default=None,
                     help="spread covariate (name, 1-based index or 'none'; default: the first of S1, S2, S3)")
    sub.add_argument("--format", choices=["csv", "json"], default="csv")
    sub.add_argument("--out", metavar="PATH", help="radius grid (default: stdout)")

    sub = add("predict", cmd_predict, "out-of-sample next event type prediction")
    _add_data_arguments(sub)
    sub.add_argument("--fit", metavar="PATH", required=True, help="fit result JSON of the previous period")
    sub.add_argument("--imbalance", default=None,
                     help="imbalance covariate of the benchmark (default: I if present; 'none' to skip)")
    sub.add_argument("--format", choices=["csv", "json"], default="csv")
    sub.add_argument("--out", metavar="PATH", help="accuracy table (default: stdout)")
    sub.add_argument("--per-event", metavar="PATH", help="per-event predictions CSV")

    sub = add("replicate", cmd_replicate, "replicated simulation studies")
    sub.add_argument("--study", choices=["estimation", "order", "convergence"], required=True)
    sub.add_argument("--kernel", choices=["exponential", "powerlaw"], default="exponential",
                     help="generating kernels of the order study")
    sub.add_argument("--params", metavar="PATH",
                     help="true parameters as JSON (default: d_n = 1 reference set, d_n = 3 for the order study)")
    sub.add_argument("--T", "--horizon", dest="T", type=_positive_float, default=1000.0)
    sub.add_argument("--T-values", type=_positive_float, nargs="+",
                     help="horizons (order study: one run per horizon; convergence study default: T and 4T)")
    sub.add_argument("--replicates", type=_positive_int, default=30)
    sub.add_argument("--dn", type=parse_range, default=list(range(1, 6)), help="candidate orders of the order study")
    sub.add_argument("--method", type=FitMethod, choices=list(FitMethod), default=FitMethod.MLE)
    sub.add_argument("--starts", type=_positive_int, default=MleOptions.n_starts)
    sub.add_argument("--optimizer", choices=OPTIMIZERS, default=MleOptions.optimizer,
                     help="optimiser of MLE replicates")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--state-rate", type=_positive_float, default=SimulationOptions.state_rate)
    sub.add_argument("--max-events", type=_positive_int, default=SimulationOptions.max_events)
    sub.add_argument("--jobs", type=_jobs, default=None, help="worker processes over replicates")
    sub.add_argument("--out", metavar="PATH", help="per-replicate table (default: stdout)")
    sub.add_argument("--summary", metavar="PATH", help="summary table CSV")
    return parser, dict(subparsers.choices)


# ---------------------------------------------------------------------------------------------------------------
# configuration files


def _config_value(parser, action, key, raw):
    def convert(token):
        try:
            value = action.type(token) if action.type is not None else token
        except (ValueError, TypeError, argparse.ArgumentTypeError) as err:
            raise UsageError(f"config key {key!r}: invalid value {token!r} ({err})")
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {token!r} is not one of {list(action.choices)}")
        return value

    if action.nargs == 0:
        state = configparser.ConfigParser.BOOLEAN_STATES.get(raw.strip().lower())
        if state is None:
            raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
        return state
    if action.nargs in ("+", "*") or isinstance(action.nargs, int):
        return [convert(token) for token in raw.split()]
    return convert(raw.strip())


def apply_config(path, subparsers):
    """
    Turn the keys of an INI file into parser defaults. Keys of ``[msdhawkes]`` apply to every subcommand that
    has a flag of that name, keys of a ``[<subcommand>]`` section to that subcommand only.
    """
    config = configparser.ConfigParser()
    config.optionxform = str
    with open(path) as file:
        try:
            config.read_file(file)
        except configparser.Error as err:
            raise UsageError(f"cannot parse config file {path}: {err}")
    unknown = set(config.sections()) - set(subparsers) - {CONFIG_SECTION}
    if unknown:
        raise UsageError(f"config file {path} has unknown sections {sorted(unknown)}")
    shared = dict(config[CONFIG_SECTION]) if config.has_section(CONFIG_SECTION) else {}
    used = set()
    for name, sub in subparsers.items():
        actions = {action.dest: action for action in sub._actions if action.dest not in ("help", "config")}
        own = dict(config[name]) if config.has_section(name) else {}
        defaults = {}
        for key, raw in list(shared.items()) + list(own.items()):
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None:
                if key in own:
                    raise UsageError(f"config key {key!r} is not a flag of {name}")
                continue
            defaults[dest] = _config_value(sub, action, key, raw)
            # a required flag satisfied by the config file
            action.required = False
            used.add(key)
        sub.set_defaults(**defaults)
    unused = set(shared) - used
    if unused:
        raise UsageError(f"config keys {sorted(unused)} match no flag")


def parse_args(argv):
    parser, subparsers = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is not None:
        apply_config(known.config, subparsers)
    return parser.parse_args(argv)


def _configure_logging(args):
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    logging.captureWarnings(True)


# ---------------------------------------------------------------------------------------------------------------
# inputs and outputs


def _state_columns(state, covariates):
    columns = []
    for c in covariates:
        if c.isdigit():
            columns.append(int(c) - 1)
        else:
            columns.append(c)
    return state.select(columns)


def load_data(args, covariates=None):
    """
    Event stream and state trajectory from the input flags. ``--lob`` data are windowed, deduplicated (unless
    ``--keep-ties``) and turned into covariates; canonical files are read as they are.
    """
    if covariates is None:
        covariates = getattr(args, "covariates", None)
    if (args.lob is None) == (args.events is None):
        raise UsageError("pass exactly one of --events and --lob")
    if args.lob is not None:
        rows = load_events(args.lob, tick_size=args.tick_size, origin_ms=args.origin)
        if args.window is not None:
            rows, horizon = window_session(rows, *args.window)
        elif args.T is not None:
            horizon = args.T
            rows.attrs["horizon"] = horizon
        else:
            raise UsageError("--lob data need --window or --T")
        if not args.keep_ties:
            rows = dedup_same_timestamp(rows)
        covariates = tuple(covariates or ())
        if covariates:
            dist = spread_distribution(rows, horizon=horizon) if {"S1", "S3"} & set(covariates) else None
            state = build_covariates(rows, covariates, dist=dist, horizon=horizon, s3_mode=args.s3_mode)
        else:
            state = StateTrajectory.constant(0, horizon)
        return to_event_stream(rows, horizon, d_e=args.de), state
    events = read_event_stream(args.events, d_e=args.de)
    if args.state is not None:
        state = read_state(args.state)
    elif args.state_ms is not None:
        state = read_state_csv_ms(args.state_ms, events.horizon, origin_ms=args.origin)
    else:
        state = StateTrajectory.constant(0, events.horizon)
    if covariates is not None:
        state = _state_columns(state, covariates) if covariates else StateTrajectory.constant(0, events.horizon)
    return events, state


def _inputs(args):
    return tuple((name, getattr(args, name)) for name in ["events", "state", "state_ms", "lob", "fit"]
                 if getattr(args, name, None) is not None)


def _mask(args, d_e):
    return np.eye(d_e, dtype=bool) if args.mask == "no-cross" else None


def _estimation_options(args, d_e):
    if args.method == FitMethod.EM:
        return EmOptions(max_sweeps=getattr(args, "max_sweeps", EmOptions.max_sweeps),
                         tol_loglik=getattr(args, "tol", EmOptions.tol_loglik), seed=args.seed,
                         alpha_mask=_mask(args, d_e))
    return MleOptions(n_starts=args.starts, max_iterations=getattr(args, "max_iterations", MleOptions.max_iterations),
                      optimizer=args.optimizer, seed=args.seed, alpha_mask=_mask(args, d_e),
                      jobs=getattr(args, "jobs", 1))


def _write_json(payload, path):
    text = json.dumps(payload, indent=2)
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as file:
            file.write(text + "\n")


def _write_table(frame, path, report_format="csv", index=False):
    if report_format == "json":
        payload = json.loads(frame.to_json(orient="records"))
        _write_json(payload, path)
    else:
        frame.to_csv(sys.stdout if path is None or path == "-" else path, index=index)


def load_fit(path):
    """A fit result JSON written by ``fit``/``fit-em``."""
    with open(path) as file:
        try:
            payload = json.load(file)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path} is not valid JSON: {err}") from err
    return FitResult.from_dict(payload)


def load_params(path):
    """Parameters from a fit result JSON or a bare parameter record ``{nu, alpha, beta, theta}``."""
    with open(path) as file:
        try:
            payload = json.load(file)
        except json.JSONDecodeError as err:
            raise ValidationError(f"{path} is not valid JSON: {err}") from err
    if "params" in payload:
        payload = payload["params"]
    try:
        return HawkesParams.from_dict(payload)
    except KeyError as err:
        raise ValidationError(f"{path} misses the parameter {err}") from err


def _model_state(state, fit):
    if state.d_x == fit.shape.d_x:
        return state
    if fit.covariates is not None and state.names is not None:
        return state.select(fit.covariates)
    raise ValidationError(f"state has {state.d_x} covariates, the fitted model {fit.model_code} expects "
                          f"{fit.shape.d_x}")


def _reference_params(de, dn, dx, seed):
    if (de, dx) == (2, 2) and dn == 1:
        return single_exponential_params()
    if (de, dx) == (2, 2) and dn == 3:
        return multi_exponential_params()
    logger.info(f"no reference set for d_e = {de}, d_n = {dn}, d_x = {dx}: drawing random parameters")
    return HawkesParams.random(ModelShape(de, dn, dx), stream(seed), branching_ratio=0.5, beta_range=(0.5, 50.0),
                               theta_range=0.5)


# ---------------------------------------------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    options = SimulationOptions(max_events=args.max_events, state_rate=args.state_rate)
    if args.kernel == "powerlaw":
        kernels, nu, theta = powerlaw_reference()
        rng = stream(args.seed, 0)
        state = read_state(args.state) if args.state else simulate_state(options.state_rate, theta.shape[1],
                                                                         args.T, rng)
        events = simulate_powerlaw(kernels, nu, theta, state, args.T, rng, max_events=options.max_events)
        params = None
    else:
        params = load_params(args.params) if args.params else _reference_params(args.de, args.dn, args.dx, args.seed)
        if args.state:
            state = read_state(args.state)
            events = simulate_msd(params, state, args.T, stream(args.seed, 0), max_events=options.max_events)
        else:
            [(events, state)] = simulate_replicates(params, args.T, 1, seed=args.seed, options=options)
    write_event_stream(events, args.out_events)
    write_state(state, args.out_state)
    if args.out_params and params is not None:
        _write_json(params.to_dict(), args.out_params)
    logger.info(f"simulated {len(events)} events, counts per type {events.counts().tolist()}")


def cmd_fit(args):
    events, state = load_data(args)
    if len(events) == 0:
        raise ValidationError("the event stream is empty")
    shape = ModelShape(d_e=events.d_e, d_n=args.dn, d_x=state.d_x)
    config = RunConfig(command=args.command, inputs=_inputs(args), shape=shape, covariates=state.names or (),
                       options=_estimation_options(args, shape.d_e), seed=args.seed)
    if args.method == FitMethod.EM:
        fit = fit_em(events, state, config.shape, config.options)
    else:
        fit = fit_mle(events, state, config.shape, config.options)
    logger.info(f"{fit.model_code}: log-likelihood {fit.log_likelihood:.6f}, AIC {fit.aic:.6f}")
    _write_json(fit.to_dict(), args.out)
    if args.params_csv:
        values = flatten_params(fit.params)
        pd.DataFrame(dict(parameter=list(values), value=list(values.values()))).to_csv(args.params_csv, index=False)


def cmd_select(args):
    covariate_sets = args.covariate_sets
    built = None
    if args.lob is not None:
        # order book covariates are built for the union of all candidate sets
        wanted = covariate_sets if covariate_sets is not None else [COVARIATES]
        built = tuple(c for c in COVARIATES if any(c in s for s in wanted))
    events, state = load_data(args, covariates=built)
    if len(events) == 0:
        raise ValidationError("the event stream is empty")
    if covariate_sets is None:
        everything = tuple(state.names) if state.names else tuple(str(i + 1) for i in range(state.d_x))
        covariate_sets = [()] + ([everything] if everything else [])
    candidates = []
    for covariates in covariate_sets:
        columns = tuple(int(c) - 1 if c.isdigit() else c for c in covariates)
        candidates += [(d_n, columns) for d_n in args.dn]
    config = RunConfig(command=args.command, inputs=_inputs(args), options=_estimation_options(args, events.d_e),
                       seed=args.seed, report_format=args.format)
    options = config.options if args.method == FitMethod.EM else replace(config.options, jobs=1)
    table = select_model(events, state, candidates, options=options, method=args.method, jobs=args.jobs,
                         progress=args.verbose)
    _write_table(table.to_frame(), args.out, config.report_format)


def cmd_residuals(args):
    fit = load_fit(args.fit)
    events, state = load_data(args, covariates=args.covariates or fit.covariates)
    report = fit_report(fit, events, _model_state(state, fit), level=args.level)
    if args.out:
        report.residuals.to_frame().to_csv(args.out, index=False)
    if args.qq:
        frames = [qq_points(r).assign(type=e + 1) for e, r in enumerate(report.residuals.residuals)]
        pd.concat(frames, ignore_index=True)[["type", "theoretical", "empirical"]].to_csv(args.qq, index=False)
    _write_json(report.to_dict(), args.report)


def _covariate_position(value, names, d_x, flag):
    if value is None or str(value).lower() == "none":
        return None
    value = str(value)
    if value.isdigit():
        index = int(value) - 1
        if not 0 <= index < d_x:
            raise ValidationError(f"{flag} {value} out of range for d_x = {d_x}")
        return index
    if value not in names:
        raise ValidationError(f"{flag} {value!r} is not a covariate of the model {list(names)}")
    return names.index(value)


def cmd_endogeneity(args):
    fit = load_fit(args.fit)
    d_x = fit.shape.d_x
    if d_x == 0:
        raise ValidationError(f"{fit.model_code} has no state covariates")
    names = list(fit.covariates or [f"x_{i + 1}" for i in range(d_x)])
    imbalance_index = _covariate_position(args.imbalance, names, d_x, "--imbalance")
    if imbalance_index is None:
        raise ValidationError("--imbalance is required")
    if args.spread is None:
        spread = next((name for name in ("S1", "S2", "S3") if name in names), None)
    else:
        spread = args.spread
    spread_index = _covariate_position(spread, names, d_x, "--spread")
    start, stop, num = args.imbalance_grid
    if num < 1 or num != int(num):
        raise ValidationError(f"--imbalance-grid NUM = {num} must be a positive integer")
    grid = endogeneity_grid(fit.params, np.linspace(start, stop, int(num)), spread_values=args.spread_values,
                            imbalance_index=imbalance_index, spread_index=spread_index)
    logger.info(f"radius between {grid['radius'].min():.4f} and {grid['radius'].max():.4f}, "
                f"standard radius {grid['baseline'].iloc[0]:.4f}")
    _write_table(grid, args.out, args.format)


def cmd_predict(args):
    fit = load_fit(args.fit)
    events, state = load_data(args, covariates=args.covariates or fit.covariates)
    state = _model_state(state, fit)
    imbalance = args.imbalance
    if imbalance is None:
        imbalance = "I" if state.names is not None and "I" in state.names and fit.shape.d_e == 2 else None
    elif imbalance.lower() == "none":
        imbalance = None
    elif imbalance.isdigit():
        imbalance = int(imbalance) - 1
    outcome = predict_next_type(fit.params, events, state, imbalance=imbalance)
    _write_table(outcome.summary(), args.out, args.format)
    if args.per_event:
        outcome.to_frame().to_csv(args.per_event, index=False)


def cmd_replicate(args):
    simulation = SimulationOptions(max_events=args.max_events, state_rate=args.state_rate)
    if args.method == FitMethod.EM:
        options = EmOptions()
    else:
        options = MleOptions(n_starts=args.starts, optimizer=args.optimizer)
    kwargs = dict(n_replicates=args.replicates, seed=args.seed, method=args.method, options=options,
                  simulation=simulation, jobs=args.jobs, progress=args.verbose)
    if args.study == "order":
        if args.kernel == "powerlaw":
            source = dict(powerlaw=powerlaw_reference())
        else:
            source = dict(params=load_params(args.params) if args.params else multi_exponential_params())
        frames = [replicate_order_selection(horizon=h, d_n_values=args.dn, **source, **kwargs)
                  for h in (args.T_values or [args.T])]
        table = pd.concat(frames, ignore_index=True)
        summary = pd.crosstab(table["horizon"], table["selected"]).reset_index()
        summary.columns = [str(c) if c == "horizon" else f"selected_{int(c)}" for c in summary.columns]
    else:
        params = load_params(args.params) if args.params else single_exponential_params()
        if args.study == "estimation":
            table = replicate_estimation(params, args.T, **kwargs)
            summary = estimation_summary(table, params).reset_index()
        else:
            horizons = args.T_values or [args.T, 4 * args.T]
            table, summary = replicate_convergence_rate(params, horizons=horizons, **kwargs)
            summary = summary.reset_index()
    _write_table(table, args.out)
    if args.summary:
        summary.to_csv(args.summary, index=False)


# ---------------------------------------------------------------------------------------------------------------
# entry points


def exit_code(error):
    """Exit code of an exception (see ``msdhawkes --help``)."""
    if isinstance(error, UsageError):
        return EXIT_USAGE
    if isinstance(error, FileNotFoundError):
        return EXIT_MISSING_FILE
    if isinstance(error, EventCapExceededError):
        return EXIT_NUMERICAL
    if isinstance(error, (MsdHawkesError, ValueError)):
        return EXIT_INVALID
    return EXIT_FAILURE


def run(argv=None):
    """
    Run the command line ``argv`` (default: ``sys.argv[1:]``) and return the exit code.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        _configure_logging(args)
        args.handler(args)
        return EXIT_OK
    except SystemExit as exit_:
        # --help
        return exit_.code if isinstance(exit_.code, int) else EXIT_OK
    except Exception as error:
        code = exit_code(error)
        if code == EXIT_FAILURE:
            logger.exception("unexpected failure")
        message = str(error)
        if isinstance(error, FileNotFoundError) and error.filename is not None:
            message = f"no such file: {error.filename}"
        print(json.dumps(dict(error=type(error).__name__, message=message, exit_code=code)), file=sys.stderr)
        return code


def main(argv=None):
    sys.exit(run(argv))
