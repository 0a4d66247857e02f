"""Prior features handed from a recognizer to a reconstruction network.

Two routes turn the recognizer's penultimate representation ``h``
(L x embed) into an L x C prior feature:

* the non-categorical adapter, ``PReLU(PReLU(h @ W1) @ W2)``, which
  never normalizes over the alphabet, and
* the text-prior baseline, which maps ``h`` to class logits, converts
  them to probabilities and projects those with ``W_proj``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._errors import ConfigurationError, DomainError, ShapeError
from ._numcore import (
    as_matrix,
    linear_forward,
    prelu,
    softmax_temp,
    uniform_init,
)

logger = logging.getLogger(__name__)

# Initial PReLU slope.
DEFAULT_SLOPE = 0.25


@dataclass(frozen=True)
class AdapterParams:
    """Weights of the two adapter layers and their PReLU slopes."""

    W1: np.ndarray = field(repr=False)
    W2: np.ndarray = field(repr=False)
    slope1: float = DEFAULT_SLOPE
    slope2: float = DEFAULT_SLOPE
    b1: np.ndarray | None = field(default=None, repr=False)
    b2: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        embed, half = self.W1.shape
        if embed % 2:
            raise ConfigurationError(
                f"embed dimension must be even, got {embed}"
            )
        if half != embed // 2:
            raise ShapeError(
                f"W1 must be embed x embed/2, got {self.W1.shape}"
            )
        if self.W2.shape[0] != half or self.W2.shape[1] < 1:
            raise ShapeError(
                f"W2 must be {half} x C with C >= 1, got {self.W2.shape}"
            )
        if not (np.isfinite(self.slope1) and np.isfinite(self.slope2)):
            raise DomainError("adapter slopes must be finite")
        if (self.b1 is None) != (self.b2 is None):
            raise ConfigurationError("adapter biases are both set or unset")
        if self.b1 is not None and (
            self.b1.shape != (half,) or self.b2.shape != (self.prior_dim,)
        ):
            raise ShapeError("adapter bias shapes do not match the weights")

    @property
    def embed(self) -> int:
        return self.W1.shape[0]

    @property
    def prior_dim(self) -> int:
        return self.W2.shape[1]

    @property
    def use_bias(self) -> bool:
        return self.b1 is not None

    @property
    def trainable_count(self) -> int:
        return adapter_param_count(self.embed, self.prior_dim, self.use_bias)

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {
            "W1": self.W1,
            "W2": self.W2,
            "slope1": np.array([self.slope1]),
            "slope2": np.array([self.slope2]),
        }
        if self.use_bias:
            arrays["b1"] = self.b1
            arrays["b2"] = self.b2
        return arrays

    @classmethod
    def from_named_arrays(cls, arrays: dict[str, np.ndarray]):
        return cls(
            W1=arrays["W1"],
            W2=arrays["W2"],
            slope1=float(arrays["slope1"][0]),
            slope2=float(arrays["slope2"][0]),
            b1=arrays.get("b1"),
            b2=arrays.get("b2"),
        )


@dataclass(frozen=True)
class AdapterGrads:
    """Gradients of a scalar objective through the adapter."""

    W1: np.ndarray = field(repr=False)
    W2: np.ndarray = field(repr=False)
    slope1: float
    slope2: float
    h: np.ndarray = field(repr=False)
    b1: np.ndarray | None = field(default=None, repr=False)
    b2: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class TextPriorParams:
    """Prediction layer (embed x A) and projection layer (A x C)."""

    W_pred: np.ndarray = field(repr=False)
    W_proj: np.ndarray = field(repr=False)
    b_pred: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.W_pred.shape[1] != self.W_proj.shape[0]:
            raise ShapeError(
                f"prediction layer {self.W_pred.shape} and projection "
                f"{self.W_proj.shape} disagree on the alphabet size"
            )
        if self.b_pred is not None and self.b_pred.shape != (
            self.W_pred.shape[1],
        ):
            raise ShapeError("prediction bias does not match the alphabet")

    def named_arrays(self) -> dict[str, np.ndarray]:
        arrays = {"W_pred": self.W_pred, "W_proj": self.W_proj}
        if self.b_pred is not None:
            arrays["b_pred"] = self.b_pred
        return arrays

    @classmethod
    def from_named_arrays(cls, arrays: dict[str, np.ndarray]):
        return cls(
            W_pred=arrays["W_pred"],
            W_proj=arrays["W_proj"],
            b_pred=arrays.get("b_pred"),
        )


def adapter_param_count(embed: int, prior_dim: int, use_bias=False) -> int:
    """Trainable parameters of an adapter with the given dimensions."""
    half = embed // 2
    count = embed * half + half * prior_dim + 2
    if use_bias:
        count += half + prior_dim
    return count


def init_adapter(
    rng: np.random.Generator,
    embed: int,
    prior_dim: int,
    use_bias: bool = False,
) -> AdapterParams:
    """Seeded adapter with uniform fan-in weights and zero biases."""
    if embed < 2 or embed % 2:
        raise ConfigurationError(
            f"embed dimension must be even and positive, got {embed}"
        )
    if prior_dim < 1:
        raise ConfigurationError(f"prior dimension must be >= 1: {prior_dim}")
    half = embed // 2
    return AdapterParams(
        W1=uniform_init(rng, embed, half),
        W2=uniform_init(rng, half, prior_dim),
        b1=np.zeros(half) if use_bias else None,
        b2=np.zeros(prior_dim) if use_bias else None,
    )


def init_text_prior(
    rng: np.random.Generator, W_pred, b_pred, prior_dim: int
) -> TextPriorParams:
    """Text-prior baseline around a fixed prediction layer."""
    W_pred = as_matrix(W_pred, "W_pred")
    return TextPriorParams(
        W_pred=W_pred,
        W_proj=uniform_init(rng, W_pred.shape[1], prior_dim),
        b_pred=None if b_pred is None else np.asarray(b_pred, float),
    )


def _adapter_activations(h, params: AdapterParams):
    h = as_matrix(h, "h")
    if h.shape[1] != params.embed:
        raise ShapeError(
            f"h has width {h.shape[1]}, adapter expects {params.embed}"
        )
    a1 = linear_forward(h, params.W1, params.b1)
    u1 = prelu(a1, params.slope1)
    a2 = linear_forward(u1, params.W2, params.b2)
    return h, a1, u1, a2


def ncap_forward(h, params: AdapterParams) -> np.ndarray:
    """Non-categorical prior feature ``PReLU(PReLU(h W1) W2)``."""
    _, _, _, a2 = _adapter_activations(h, params)
    return prelu(a2, params.slope2)


def ncap_backward(h, params: AdapterParams, upstream_grad) -> AdapterGrads:
    """Backpropagate ``upstream_grad`` (dObjective/df) through the adapter."""
    h, a1, u1, a2 = _adapter_activations(h, params)
    g = as_matrix(upstream_grad, "upstream gradient")
    if g.shape != a2.shape:
        raise ShapeError(
            f"upstream gradient {g.shape} does not match output {a2.shape}"
        )
    neg2 = a2 < 0
    d_a2 = np.where(neg2, params.slope2 * g, g)
    d_slope2 = float(np.sum(g[neg2] * a2[neg2]))
    d_u1 = d_a2 @ params.W2.T
    neg1 = a1 < 0
    d_a1 = np.where(neg1, params.slope1 * d_u1, d_u1)
    d_slope1 = float(np.sum(d_u1[neg1] * a1[neg1]))
    return AdapterGrads(
        W1=h.T @ d_a1,
        W2=u1.T @ d_a2,
        slope1=d_slope1,
        slope2=d_slope2,
        h=d_a1 @ params.W1.T,
        b1=d_a1.sum(axis=0) if params.use_bias else None,
        b2=d_a2.sum(axis=0) if params.use_bias else None,
    )


def apply_adapter_step(
    params: AdapterParams, grads: AdapterGrads, learning_rate: float
) -> AdapterParams:
    """One plain SGD update of every trainable adapter parameter."""
    updated = replace(
        params,
        W1=params.W1 - learning_rate * grads.W1,
        W2=params.W2 - learning_rate * grads.W2,
        slope1=params.slope1 - learning_rate * grads.slope1,
        slope2=params.slope2 - learning_rate * grads.slope2,
    )
    if params.use_bias:
        updated = replace(
            updated,
            b1=params.b1 - learning_rate * grads.b1,
            b2=params.b2 - learning_rate * grads.b2,
        )
    return updated


def tp_forward(h, params: TextPriorParams, tau: float = 1.0):
    """Text-prior baseline: logits, then probabilities, then projection.

    Returns
    -------
    tuple of numpy.ndarray
        The L x A logits ``h @ W_pred (+ b_pred)`` and the L x C feature
        ``softmax(logits / tau) @ W_proj``.
    """
    h = as_matrix(h, "h")
    logits = linear_forward(h, params.W_pred, params.b_pred)
    feature = softmax_temp(logits, tau) @ params.W_proj
    return logits, feature


def tp_backward(h, params: TextPriorParams, tau: float, upstream_grad):
    """Gradient of the objective with respect to ``W_proj`` only."""
    logits, feature = tp_forward(h, params, tau)
    g = as_matrix(upstream_grad, "upstream gradient")
    if g.shape != feature.shape:
        raise ShapeError(
            f"upstream gradient {g.shape} does not match output "
            f"{feature.shape}"
        )
    return softmax_temp(logits, tau).T @ g


def param_overhead(adapter: AdapterParams, base_param_count: int) -> float:
    """Adapter trainable parameters relative to a base network."""
    if base_param_count <= 0:
        raise DomainError(
            f"base parameter count must be positive, got {base_param_count}"
        )
    return adapter.trainable_count / base_param_count
