"""Flat handle-based in-process interface over the library.

Mirrors a C-style binding boundary: integer session handles, string
key/value configuration, flat row-major double arrays in, predictions out,
integer status codes (never exceptions), and a per-handle last-error
message. Handles are process-unique and never reused; operations on freed
handles fail cleanly with STATUS_BAD_HANDLE.

Distinct handles may be used from different threads; a single handle must
not be used concurrently.
"""

from __future__ import annotations

import threading

import numpy as np

from .config import RunConfig
from .dataio import Dataset
from .errors import CellSvmError, ConfigError
from .scenarios import evaluate, predict, scenario_from_config, train

STATUS_OK = 0
STATUS_BAD_ARGS = -1
STATUS_BAD_HANDLE = -2
STATUS_NOT_TRAINED = -3
STATUS_CONFIG_ERROR = -4
STATUS_RUNTIME_ERROR = -5

SCENARIOS = ("mc", "ls", "qt", "ex", "npl", "binary", "weighted")
_SCENARIO_MAP = {"mc": "mc", "ls": "ls", "qt": "quantile", "ex": "expectile",
                 "npl": "npl", "binary": "binary", "weighted": "weighted_binary"}

_lock = threading.Lock()
_next_id = 1
_sessions: dict = {}
_last_errors: dict = {}


class _Session:
    def __init__(self, data: Dataset):
        self.data = data
        self.config = RunConfig()
        self.model = None


def _fail(handle: int, status: int, message: str) -> int:
    _last_errors[handle] = message
    return status


def last_error(handle: int) -> str:
    """Message of the most recent failed call on this handle ('' if none)."""
    return _last_errors.get(handle, "")


def session_count() -> int:
    """Live (not yet freed) session count; leak diagnostic."""
    with _lock:
        return len(_sessions)


def session_create(features, labels, n: int, d: int) -> int:
    """Copy an n x d row-major feature array plus n labels into a new session.

    Returns a positive handle, or STATUS_BAD_ARGS on inconsistent sizes.
    """
    global _next_id
    try:
        X = np.ascontiguousarray(features, dtype=np.float64).reshape(-1)
        y = np.ascontiguousarray(labels, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError):
        return STATUS_BAD_ARGS
    if n < 1 or d < 1 or X.size != n * d or y.size != n:
        return STATUS_BAD_ARGS
    try:
        data = Dataset(X.reshape(n, d).copy(), y.copy())
    except CellSvmError:
        return STATUS_BAD_ARGS
    with _lock:
        handle = _next_id
        _next_id += 1
        _sessions[handle] = _Session(data)
    return handle


def session_configure(handle: int, key: str, value: str) -> int:
    with _lock:
        session = _sessions.get(handle)
    if session is None:
        return _fail(handle, STATUS_BAD_HANDLE, f"invalid or freed handle {handle}")
    try:
        session.config.set_key(str(key), str(value))
    except ConfigError as exc:
        return _fail(handle, STATUS_CONFIG_ERROR, str(exc))
    return STATUS_OK


def session_train(handle: int, scenario: str) -> int:
    with _lock:
        session = _sessions.get(handle)
    if session is None:
        return _fail(handle, STATUS_BAD_HANDLE, f"invalid or freed handle {handle}")
    if scenario not in _SCENARIO_MAP:
        return _fail(handle, STATUS_BAD_ARGS,
                     f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    try:
        session.config.validate()
        spec = scenario_from_config(_SCENARIO_MAP[scenario], session.config)
        session.model = train(spec, session.data, session.config)
    except CellSvmError as exc:
        return _fail(handle, STATUS_RUNTIME_ERROR, str(exc))
    except ValueError as exc:
        return _fail(handle, STATUS_BAD_ARGS, str(exc))
    return STATUS_OK


def session_result_size(handle: int, n_test: int):
    """Required length of the flat prediction buffer for n_test points,
    or a negative status code."""
    with _lock:
        session = _sessions.get(handle)
    if session is None:
        return _fail(handle, STATUS_BAD_HANDLE, f"invalid or freed handle {handle}")
    if session.model is None:
        return _fail(handle, STATUS_NOT_TRAINED, "session is not trained")
    spec = session.model.scenario
    width = {"quantile": len(spec.levels), "expectile": len(spec.levels),
             "weighted_binary": len(spec.weights)}.get(spec.kind, 1)
    return int(n_test) * width


def session_test(handle: int, features, n_test: int, labels=None, out=None):
    """Predict on a flat n_test x d feature array.

    Returns (status, predictions, metrics): predictions shaped
    (n_test, n_outputs) and metrics a dict when labels were given, else None.
    When `out` (a writable flat float64 buffer of session_result_size) is
    passed, predictions are also written into it row-major.
    """
    with _lock:
        session = _sessions.get(handle)
    if session is None:
        return _fail(handle, STATUS_BAD_HANDLE, f"invalid or freed handle {handle}"), None, None
    if session.model is None:
        return _fail(handle, STATUS_NOT_TRAINED, "session is not trained"), None, None
    d = session.data.dim
    try:
        X = np.ascontiguousarray(features, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError):
        return _fail(handle, STATUS_BAD_ARGS, "features not convertible to float64"), None, None
    if n_test < 1 or X.size != n_test * d:
        return _fail(handle, STATUS_BAD_ARGS,
                     f"feature buffer size {X.size} != n_test*d = {n_test * d}"), None, None
    y = None
    if labels is not None:
        y = np.ascontiguousarray(labels, dtype=np.float64).reshape(-1)
        if y.size != n_test:
            return _fail(handle, STATUS_BAD_ARGS, "labels length != n_test"), None, None
    try:
        data = Dataset(X.reshape(n_test, d).copy(),
                       y.copy() if y is not None else np.zeros(n_test))
        preds = predict(session.model, data, workers=session.config.workers)
    except CellSvmError as exc:
        return _fail(handle, STATUS_RUNTIME_ERROR, str(exc)), None, None
    metrics = None
    if y is not None:
        metrics = evaluate(preds, y, session.model.scenario)
    if out is not None:
        flat = np.asarray(out)
        if flat.size < preds.size:
            return _fail(handle, STATUS_BAD_ARGS,
                         f"output buffer too small: {flat.size} < {preds.size}"), None, None
        flat[:preds.size] = preds.reshape(-1)
    return STATUS_OK, preds, metrics


def session_free(handle: int) -> int:
    with _lock:
        session = _sessions.pop(handle, None)
    if session is None:
        return _fail(handle, STATUS_BAD_HANDLE, f"invalid or freed handle {handle}")
    return STATUS_OK
