"""Scenario-shortcut client over the cellsvm bridge.

Usage:

    from cellsvm_client import mcSVM
    model = mcSVM(features, labels, display=1, threads=2)
    predictions, err = model.test(features, labels)

Each constructor creates a session on the bridge, applies the keyword
configuration as string key/value pairs (the bridge validates them), trains,
and returns a trained model object. Bridge failures surface as ClientError
with the bridge's message. Models free their session when closed, used as a
context manager, or garbage collected.

The bridge module is resolved from the CELLSVM_BRIDGE environment variable
(default "cellsvm.bridge"), so alternative bridge builds can be swapped in
without code changes.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

__all__ = ["ClientError", "SvmModel", "mcSVM", "lsSVM", "qtSVM", "exSVM",
           "nplSVM", "binarySVM"]

_BRIDGE_ENV = "CELLSVM_BRIDGE"
_bridge_module = None


class ClientError(RuntimeError):
    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


def bridge():
    """The loaded bridge module (imported once, overridable via CELLSVM_BRIDGE)."""
    global _bridge_module
    if _bridge_module is None:
        name = os.environ.get(_BRIDGE_ENV, "cellsvm.bridge")
        _bridge_module = importlib.import_module(name)
    return _bridge_module


def _stringify(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _as_features(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ClientError(f"features must be 2-D, got shape {X.shape}")
    return np.ascontiguousarray(X)


class SvmModel:
    """One trained scenario over one bridge session."""

    def __init__(self, scenario: str, features, labels, **config):
        self._handle = None
        self._trained = False
        self.scenario = scenario
        X = _as_features(features)
        y = np.ascontiguousarray(labels, dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ClientError(f"labels length {y.shape[0]} != sample count {X.shape[0]}")
        self._dim = X.shape[1]
        br = bridge()
        handle = br.session_create(X.reshape(-1), y, X.shape[0], X.shape[1])
        if handle <= 0:
            raise ClientError("session_create failed (inconsistent array sizes)",
                              code=handle)
        self._handle = handle
        try:
            for key, value in config.items():
                status = br.session_configure(handle, key, _stringify(value))
                if status != 0:
                    raise ClientError(br.last_error(handle), code=status)
            status = br.session_train(handle, scenario)
            if status != 0:
                raise ClientError(br.last_error(handle), code=status)
        except Exception:
            self.free()
            raise
        self._trained = True

    @property
    def trained(self) -> bool:
        return self._trained

    def test(self, features, labels=None):
        """Predictions for the given features; (predictions, metrics) when
        labels are passed, (predictions, None) otherwise."""
        if self._handle is None:
            raise ClientError("model was freed")
        if not self._trained:
            raise ClientError("model is not trained")
        X = _as_features(features)
        if X.shape[1] != self._dim:
            raise ClientError(f"test dim {X.shape[1]} != training dim {self._dim}")
        y = None
        if labels is not None:
            y = np.ascontiguousarray(labels, dtype=np.float64).reshape(-1)
        br = bridge()
        status, preds, metrics = br.session_test(self._handle, X.reshape(-1),
                                                 X.shape[0], y)
        if status != 0:
            raise ClientError(br.last_error(self._handle), code=status)
        return preds, metrics

    def free(self):
        if self._handle is not None:
            bridge().session_free(self._handle)
            self._handle = None
            self._trained = False

    close = free

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.free()
        return False

    def __del__(self):
        try:
            self.free()
        except Exception:
            pass


def mcSVM(features, labels, **config) -> SvmModel:
    """Multi-class classification (all-vs-all by default; mc_type="ova" switches)."""
    return SvmModel("mc", features, labels, **config)


def lsSVM(features, labels, **config) -> SvmModel:
    """Least squares regression."""
    return SvmModel("ls", features, labels, **config)


def qtSVM(features, labels, **config) -> SvmModel:
    """Quantile regression (one output column per level)."""
    return SvmModel("qt", features, labels, **config)


def exSVM(features, labels, **config) -> SvmModel:
    """Expectile regression (one output column per level)."""
    return SvmModel("ex", features, labels, **config)


def nplSVM(features, labels, **config) -> SvmModel:
    """Neyman-Pearson classification (false-alarm-bounded detection)."""
    return SvmModel("npl", features, labels, **config)


def binarySVM(features, labels, **config) -> SvmModel:
    """Plain binary classification."""
    return SvmModel("binary", features, labels, **config)
