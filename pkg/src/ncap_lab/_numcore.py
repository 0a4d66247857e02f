"""Deterministic numeric primitives shared by every module.

Matrices are plain two-dimensional ``numpy`` arrays of ``float64``.
Random streams are explicit ``numpy.random.Generator`` values created by
:func:`make_rng`; nothing in the package touches global random state.
"""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np

from ._errors import DomainError, ShapeError

logger = logging.getLogger(__name__)

_UINT64_MASK = 0xFFFFFFFFFFFFFFFF


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Return ``data`` as a finite, two-dimensional float64 array."""
    array = np.asarray(data, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(
            f"{name} must be two-dimensional, got shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{name} contains non-finite entries")
    return array


def _check_tau(tau: float) -> float:
    if not np.isfinite(tau) or tau <= 0:
        raise DomainError(f"temperature must be positive, got {tau!r}")
    return float(tau)


def _check_logits(logits) -> np.ndarray:
    values = np.asarray(logits, dtype=np.float64)
    if values.ndim == 0 or values.shape[-1] < 1:
        raise ShapeError("logits must have at least one class")
    if np.isnan(values).any():
        raise DomainError("logits contain NaN")
    if not np.all(np.isfinite(values)):
        raise DomainError("logits contain infinite entries")
    return values


def softmax_temp(logits, tau: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax over the last axis.

    Computes ``softmax(logits / tau)`` after subtracting the row maximum,
    so every output is strictly positive for finite logits.

    Parameters
    ----------
    logits : array_like
        A vector of K class scores, or a matrix with one row per
        position.
    tau : float
        Positive temperature; larger values give smoother distributions.

    Returns
    -------
    numpy.ndarray
        Probabilities with the same shape as ``logits``.
    """
    tau = _check_tau(tau)
    scaled = _check_logits(logits) / tau
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax_temp(logits, tau: float = 1.0) -> np.ndarray:
    """Stable logarithm of :func:`softmax_temp`."""
    tau = _check_tau(tau)
    scaled = _check_logits(logits) / tau
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def prelu(x, slope: float) -> np.ndarray:
    """Parametric ReLU with one shared slope for negative inputs."""
    if not np.isfinite(slope):
        raise DomainError(f"PReLU slope must be finite, got {slope!r}")
    values = np.asarray(x, dtype=np.float64)
    if np.isnan(values).any():
        raise DomainError("PReLU input contains NaN")
    return np.where(values >= 0, values, slope * values)


def linear_forward(x, W, b=None) -> np.ndarray:
    """Affine map ``x @ W + b`` for an L x m input and m x n weights."""
    x = np.asarray(x, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if x.ndim != 2 or W.ndim != 2:
        raise ShapeError(
            f"linear_forward expects matrices, got {x.shape} and {W.shape}"
        )
    if x.shape[1] != W.shape[0]:
        raise ShapeError(
            f"inner dimensions disagree: {x.shape} @ {W.shape}"
        )
    out = x @ W
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (W.shape[1],):
            raise ShapeError(
                f"bias shape {b.shape} does not match output width "
                f"{W.shape[1]}"
            )
        out = out + b
    return out


def make_rng(*keys: int) -> np.random.Generator:
    """Create an owned random generator from a sequence of integer keys.

    The keys (config seed, replicate index, stream identifiers) are fed
    to ``numpy.random.SeedSequence``; identical keys give identical
    streams and distinct keys give independent ones. Negative seeds are
    taken modulo 2**64.
    """
    if not keys:
        raise DomainError("make_rng needs at least one key")
    return np.random.default_rng([int(k) & _UINT64_MASK for k in keys])


def uniform_init(
    rng: np.random.Generator, fan_in: int, fan_out: int
) -> np.ndarray:
    """Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in < 1 or fan_out < 1:
        raise DomainError(
            f"layer sizes must be positive, got {fan_in}x{fan_out}"
        )
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def central_difference(
    f: Callable[[np.ndarray], float], x, step: float = 1e-6
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    ``f`` is evaluated on perturbed copies of ``x``; ``x`` itself is
    never modified.
    """
    base = np.array(x, dtype=np.float64)
    grad = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        probe = base.copy()
        probe[index] = base[index] + step
        upper = f(probe)
        probe[index] = base[index] - step
        lower = f(probe)
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-2) -> float:
    """Largest entrywise relative gap between two gradient arrays.

    Each entry is compared as ``|a - n| / max(|a|, |n|, floor)``; the
    floor turns the comparison absolute for entries near zero.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ShapeError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))
