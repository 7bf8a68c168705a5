"""Per-channel noise-to-signal-power ratio between feature maps.

Feature batches are ``(samples, channels, length)`` arrays.  For each
channel the squared error is summed over all samples and positions and
divided by the population variance of the target channel; the result is
averaged over channels.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateTargetError, ShapeError

VARIANCE_EPS = 1e-12


def _as_batch(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 1, -1)
    elif arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise ShapeError(f"expected a (samples, channels, length) batch, got shape {arr.shape}")
    return arr


def channel_variances(target) -> np.ndarray:
    y = _as_batch(target)
    return y.var(axis=(0, 2))


def check_variances(var: np.ndarray, eps: float = VARIANCE_EPS) -> None:
    bad = np.flatnonzero(~(var >= eps))
    if bad.size:
        c = int(bad[0])
        raise DegenerateTargetError(c, float(var[c]))


def channel_sq_errors(target, pred) -> np.ndarray:
    y, p = _as_batch(target), _as_batch(pred)
    if y.shape != p.shape:
        raise ShapeError(f"target shape {y.shape} != prediction shape {p.shape}")
    d = y - p
    return np.einsum("mcl,mcl->c", d, d)


def nsr_loss(target, pred, variances: np.ndarray | None = None) -> float:
    """NSR of ``pred`` against ``target``.

    ``variances`` may carry precomputed target channel variances (they are
    reused across every subnet evaluated against the same target).
    """
    err = channel_sq_errors(target, pred)
    var = channel_variances(target) if variances is None else variances
    check_variances(var)
    return float(np.mean(err / var))
