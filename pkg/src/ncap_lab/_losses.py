"""Recognizer loss family with analytic gradients.

Every loss takes an L x A matrix of student logits, averages over the L
sequence positions and returns the value together with its gradient
with respect to the student logits. Teacher logits are constants and
never receive gradients.

KL terms use the teacher-to-student direction
``sum p_t(tau) * log(p_t(tau) / p_s(tau))``. Differentiating the
``beta * tau**2`` scaled divergence through ``z / tau`` leaves a net
factor of ``beta * tau`` on ``p_s(tau) - p_t(tau)``; at ``tau = beta = 1``
the gradient is exactly ``p_s - p_t``.

The MAE term compares raw logits (student ``z`` against teacher ``t``),
summed over classes and averaged over positions. Its subgradient at a
tie ``z == t`` is 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ._errors import ConfigurationError, DomainError, ShapeError
from ._numcore import as_matrix, log_softmax_temp, softmax_temp

logger = logging.getLogger(__name__)

LOSS_NAMES = (
    "none",
    "kl_mae",
    "ce",
    "ce_ls",
    "ce_kl",
    "ce_kl_mae",
    "ce_softened_kl",
)
_TEACHER_LOSSES = frozenset({"kl_mae", "ce_kl", "ce_kl_mae", "ce_softened_kl"})
_LABEL_LOSSES = frozenset(
    {"ce", "ce_ls", "ce_kl", "ce_kl_mae", "ce_softened_kl"}
)
_MAE_LOSSES = frozenset({"kl_mae", "ce_kl_mae"})


@dataclass(frozen=True)
class LossResult:
    """Loss value and its gradient with respect to the student logits."""

    value: float
    grad: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LossSpec:
    """A named member of the loss family and its hyperparameters.

    ``alpha`` balances hard and soft labels, ``beta`` and ``tau`` scale
    and soften the KL term of ``ce_softened_kl``, and ``epsilon_ls`` is
    the label-smoothing mass of ``ce_ls``. Parameters a variant does not
    use are carried but ignored.
    """

    name: str = "ce_softened_kl"
    alpha: float = 0.5
    beta: float = 0.7
    tau: float = 3.0
    epsilon_ls: float = 0.1

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise ConfigurationError(
                f"unknown loss {self.name!r}; expected one of {LOSS_NAMES}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(
                f"alpha must lie in [0, 1], got {self.alpha!r}"
            )
        if not self.beta > 0:
            raise ConfigurationError(
                f"beta must be positive, got {self.beta!r}"
            )
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau!r}")
        if not 0.0 <= self.epsilon_ls < 1.0:
            raise ConfigurationError(
                f"epsilon_ls must lie in [0, 1), got {self.epsilon_ls!r}"
            )

    @property
    def requires_teacher(self) -> bool:
        return self.name in _TEACHER_LOSSES

    @property
    def requires_labels(self) -> bool:
        return self.name in _LABEL_LOSSES

    @property
    def has_mae(self) -> bool:
        return self.name in _MAE_LOSSES

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | str) -> LossSpec:
        """Build a spec from a config entry (a mapping or a bare name)."""
        if isinstance(data, str):
            return cls(name=data)
        if not isinstance(data, dict) or "name" not in data:
            raise ConfigurationError(
                f"loss entries need a 'name' key, got {data!r}"
            )
        unknown = set(data) - {"name", "alpha", "beta", "tau", "epsilon_ls"}
        if unknown:
            raise ConfigurationError(
                f"unknown loss parameters {sorted(unknown)} for "
                f"{data['name']!r}"
            )
        values = {
            key: float(value) for key, value in data.items() if key != "name"
        }
        return cls(name=str(data["name"]), **values)

    def to_mapping(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "alpha": self.alpha,
            "beta": self.beta,
            "tau": self.tau,
            "epsilon_ls": self.epsilon_ls,
        }


def one_hot(labels, num_classes: int) -> np.ndarray:
    """Expand class indices into an L x A indicator matrix."""
    labels = check_labels(labels, num_classes)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def check_labels(labels, num_classes: int, length: int | None = None):
    """Validate a hard-label sequence and return it as an int array."""
    array = np.asarray(labels)
    if array.ndim != 1:
        raise ShapeError(f"labels must be one-dimensional, got {array.shape}")
    if array.size and not np.issubdtype(array.dtype, np.integer):
        raise DomainError("labels must be integer class indices")
    array = array.astype(np.int64)
    if length is not None and array.shape[0] != length:
        raise ShapeError(
            f"expected {length} labels, got {array.shape[0]}"
        )
    if array.size and (array.min() < 0 or array.max() >= num_classes):
        raise DomainError(
            f"label index out of range [0, {num_classes}): "
            f"{array.min()}..{array.max()}"
        )
    return array


def _check_pair(student_logits, teacher_logits):
    z = as_matrix(student_logits, "student logits")
    t = as_matrix(teacher_logits, "teacher logits")
    if z.shape != t.shape:
        raise ShapeError(
            f"student logits {z.shape} and teacher logits {t.shape} differ"
        )
    return z, t


def ce_loss(student_logits, labels) -> LossResult:
    """Cross-entropy against hard labels, averaged over positions."""
    z = as_matrix(student_logits, "student logits")
    y = check_labels(labels, z.shape[1], length=z.shape[0])
    positions = np.arange(z.shape[0])
    log_p = log_softmax_temp(z)
    value = -float(np.mean(log_p[positions, y])) + 0.0
    grad = softmax_temp(z)
    grad[positions, y] -= 1.0
    return LossResult(value, grad / z.shape[0])


def soft_ce_loss(student_logits, targets) -> LossResult:
    """Cross-entropy against full target distributions (one per row)."""
    z = as_matrix(student_logits, "student logits")
    q = as_matrix(targets, "targets")
    if q.shape != z.shape:
        raise ShapeError(f"targets {q.shape} do not match logits {z.shape}")
    value = -float(np.mean(np.sum(q * log_softmax_temp(z), axis=1))) + 0.0
    return LossResult(value, (softmax_temp(z) - q) / z.shape[0])


def kl_softened_loss(
    student_logits, teacher_logits, tau: float, beta: float
) -> LossResult:
    """Temperature-softened KL divergence from teacher to student.

    ``value = beta * tau**2 * mean_l KL(p_t(tau) || p_s(tau))`` and the
    gradient per position is ``beta * tau * (p_s(tau) - p_t(tau))``.
    """
    if not np.isfinite(beta) or beta <= 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    if not np.isfinite(tau) or tau <= 0:
        raise DomainError(f"tau must be positive, got {tau!r}")
    z, t = _check_pair(student_logits, teacher_logits)
    log_ps = log_softmax_temp(z, tau)
    log_pt = log_softmax_temp(t, tau)
    p_t = softmax_temp(t, tau)
    divergence = np.mean(np.sum(p_t * (log_pt - log_ps), axis=1))
    value = max(float(beta * tau * tau * divergence), 0.0)
    grad = beta * tau * (softmax_temp(z, tau) - p_t) / z.shape[0]
    return LossResult(value, grad)


def mae_logit_loss(student_logits, teacher_logits) -> LossResult:
    """Absolute logit difference, summed over classes, mean over positions."""
    z, t = _check_pair(student_logits, teacher_logits)
    diff = z - t
    value = float(np.sum(np.abs(diff)) / z.shape[0])
    return LossResult(value, np.sign(diff) / z.shape[0])


def label_smooth(labels, epsilon: float, num_classes: int) -> np.ndarray:
    """Rows ``(1 - eps) * onehot + eps / A`` for every label."""
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"epsilon must lie in [0, 1), got {epsilon!r}")
    if num_classes < 1:
        raise DomainError(f"alphabet size must be positive: {num_classes}")
    return (1.0 - epsilon) * one_hot(labels, num_classes) + (
        epsilon / num_classes
    )


def _weighted_sum(
    shape: tuple[int, ...], parts: list[tuple[float, LossResult]]
) -> LossResult:
    value = 0.0
    grad = np.zeros(shape)
    for weight, part in parts:
        value = value + weight * part.value
        grad = grad + weight * part.grad
    return LossResult(value, grad)


def combined_loss(
    spec: LossSpec, student_logits, teacher_logits=None, labels=None
) -> LossResult:
    """Evaluate the loss variant named by ``spec``.

    ``ce_softened_kl`` is ``(1 - alpha) * CE + alpha * KL(tau, beta)``;
    ``ce_kl`` mixes the same way with an unsoftened KL; ``kl_mae`` and
    ``ce_kl_mae`` are plain sums; ``none`` is identically zero.
    """
    z = as_matrix(student_logits, "student logits")
    if spec.requires_teacher and teacher_logits is None:
        raise ConfigurationError(f"loss {spec.name!r} needs teacher logits")
    if spec.requires_labels and labels is None:
        raise ConfigurationError(f"loss {spec.name!r} needs hard labels")

    if spec.name == "none":
        return LossResult(0.0, np.zeros_like(z))
    if spec.name == "ce":
        return ce_loss(z, labels)
    if spec.name == "ce_ls":
        targets = label_smooth(labels, spec.epsilon_ls, z.shape[1])
        return soft_ce_loss(z, targets)

    alpha = spec.alpha
    if spec.name == "ce_softened_kl":
        parts = [
            (1.0 - alpha, ce_loss(z, labels)),
            (alpha, kl_softened_loss(z, teacher_logits, spec.tau, spec.beta)),
        ]
    elif spec.name == "ce_kl":
        parts = [
            (1.0 - alpha, ce_loss(z, labels)),
            (alpha, kl_softened_loss(z, teacher_logits, 1.0, 1.0)),
        ]
    elif spec.name == "kl_mae":
        parts = [
            (1.0, kl_softened_loss(z, teacher_logits, 1.0, 1.0)),
            (1.0, mae_logit_loss(z, teacher_logits)),
        ]
    else:
        parts = [
            (1.0, ce_loss(z, labels)),
            (1.0, kl_softened_loss(z, teacher_logits, 1.0, 1.0)),
            (1.0, mae_logit_loss(z, teacher_logits)),
        ]
    return _weighted_sum(z.shape, parts)
