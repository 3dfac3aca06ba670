import sys
from concurrent.futures import ProcessPoolExecutor
from functools import wraps

import numpy as np
import torch
from tqdm import tqdm


# always use strict zip if available
_buildin_zip = zip
if sys.version_info >= (3, 10):
    @wraps(zip)
    def zip(*args, **kwargs):
        kwargs = dict(strict=True) | kwargs
        yield from _buildin_zip(*args, **kwargs)
else:
    @wraps(zip)
    def zip(*args, **kwargs):
        yield from _buildin_zip(*args, **kwargs)


# beyond this exponent exp(-x) is below the smallest subnormal double
EXP_UNDERFLOW = 745.0


class MsdHawkesError(ValueError):
    """Root of all errors raised by the package for invalid inputs or failed runs."""
    pass


class ValidationError(MsdHawkesError):
    """A domain object or option violates one of its invariants."""
    pass


class HorizonMismatchError(MsdHawkesError):
    """Event stream and state trajectory do not share the same horizon."""
    pass


class DuplicateTimestampError(MsdHawkesError):
    """An operation requiring strictly increasing event times received co-timed events."""
    pass


class EventCapExceededError(MsdHawkesError):
    """A simulation produced more events than the configured cap."""
    pass


class DataFormatError(MsdHawkesError):
    """
    A data file could not be parsed.

    :ivar line: 1-based line number of the offending row in the file (``None`` if not applicable)
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MsdHawkesWarning(UserWarning):
    """Base class for recoverable numerical conditions."""
    pass


class UnidentifiableCoordinateWarning(MsdHawkesWarning):
    pass


class ConvergenceWarning(MsdHawkesWarning):
    pass


class SpreadSupportWarning(MsdHawkesWarning):
    pass


class LowPowerWarning(MsdHawkesWarning):
    pass


class EmptyWindowWarning(MsdHawkesWarning):
    pass


class DroppedEventsWarning(MsdHawkesWarning):
    """Order book rows that cannot become events, such as rows at the window start."""
    pass


def decay(rate, dt):
    r"""
    Evaluate :math:`e^{-\beta \Delta t}` elementwise, returning exactly zero once :math:`\beta \Delta t` exceeds
    :data:`EXP_UNDERFLOW`.

    :param rate: decay rate(s) :math:`\beta`
    :param dt: non-negative lag(s) :math:`\Delta t`
    :return: array of decay factors (broadcast of the inputs)
    """
    x = np.multiply(rate, dt)
    with np.errstate(under="ignore"):
        return np.where(x > EXP_UNDERFLOW, 0.0, np.exp(-np.minimum(x, EXP_UNDERFLOW)))


def as_rng(seed):
    """
    Return a :class:`numpy.random.Generator` (PCG64) for ``seed``, which may be ``None``, an integer, a
    :class:`numpy.random.SeedSequence` or an existing generator (returned as is).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(seed)


def as_tensor(t, requires_grad=False):
    """
    Create a float64 tensor copy of ``t``. If ``t`` already is a tensor, clone and detach it, otherwise create a
    new tensor.

    :param t: array-like or tensor to copy
    :param requires_grad: whether the returned tensor should track gradients
    :return: detached float64 tensor
    """
    if torch.is_tensor(t):
        t = t.clone().detach().to(torch.float64)
    else:
        t = torch.tensor(np.asarray(t, dtype=float), dtype=torch.float64)
    return t.requires_grad_(requires_grad)


def stream(seed, *key):
    """
    Random generator for the sub-stream ``key`` of ``seed``, e.g. ``stream(seed, start, coordinate)``. The same
    ``(seed, key)`` always gives the same stream, independently of any other stream drawn before.

    :param seed: integer, ``None`` (fresh entropy) or :class:`numpy.random.SeedSequence`
    :param key: non-negative integers identifying the sub-stream
    """
    if isinstance(seed, np.random.SeedSequence):
        seq = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(key))
    else:
        seq = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return as_rng(seq)


def parallel_map(fn, tasks, jobs=1, progress=False, desc=None):
    """
    Apply ``fn`` to every task and return the results in task order. With ``jobs > 1`` the tasks run in a process
    pool (``fn`` and tasks must be picklable); ``jobs=None`` uses all available cores.

    :param progress: show a progress bar
    :param desc: label of the progress bar
    """
    tasks = list(tasks)
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tqdm(tasks, desc=desc, disable=not progress)]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(tqdm(executor.map(fn, tasks), total=len(tasks), desc=desc, disable=not progress))
