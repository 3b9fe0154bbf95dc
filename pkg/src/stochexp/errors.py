"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class StochExpError(Exception):
    """Base class for all package errors."""


class CallbackFailure(StochExpError):
    """A coefficient callback raised or produced a non-finite value.

    Parameters
    ----------
    message : str
        Human readable description.
    witness : dict, optional
        The sampled point ``(s, x, z)`` at which the failure occurred.
    """

    def __init__(self, message: str, witness: dict | None = None):
        self.witness = witness or {}
        if witness:
            message = f"{message} (witness: {_fmt(witness)})"
        super().__init__(message)

    def __reduce__(self):
        return (CallbackFailure, (self.args[0],))


class OutOfRange(StochExpError):
    """Requested time lies outside the simulated grid."""


class NonFiniteState(StochExpError):
    """The state overflowed before any stopping rule fired.

    Attributes
    ----------
    path_index : int
        Global index of the offending path within the ensemble.
    step : int
        Grid step at which the overflow was detected.
    """

    def __init__(self, path_index: int, step: int):
        self.path_index = int(path_index)
        self.step = int(step)
        super().__init__(
            f"state became non-finite on path {self.path_index} at step {self.step}; "
            "an explosive model needs a stopping rule"
        )

    def __reduce__(self):
        return (NonFiniteState, (self.path_index, self.step))


class JumpBelowFloor(StochExpError):
    """A jump of the exponent martingale satisfied ``1 + dM <= 0``."""


class TiltUnbounded(StochExpError):
    """The tilted jump intensity exceeded the thinning envelope."""


class UnknownModel(StochExpError, KeyError):
    """No catalog entry with the requested name."""

    def __str__(self) -> str:
        return Exception.__str__(self)


def _fmt(witness: dict) -> str:
    parts = []
    for key, val in witness.items():
        arr = np.asarray(val)
        if arr.size == 1:
            parts.append(f"{key}={float(arr.reshape(-1)[0]):.6g}")
        else:
            parts.append(f"{key}={np.array2string(arr, precision=4)}")
    return ", ".join(parts)
