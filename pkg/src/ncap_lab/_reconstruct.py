"""Prior-guided reconstruction and the prior error-propagation analysis.

A linear fusion maps each noisy feature row concatenated with a prior
feature row back to a clean feature row; decoding picks the nearest
class prototype. The prior path (text prior or non-categorical adapter)
and the fusion are fitted with the intact teacher. At evaluation time
the teacher's classification layer is swapped for a corrupted one, so a
categorical prior carries the wrong classes into the reconstruction
while the penultimate representation stays untouched.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Any

import numpy as np

from ._errors import (
    ConfigurationError,
    ShapeError,
    TrainingDivergedError,
    UndefinedCorrelationError,
)
from ._metrics import pearson, sample_error_rates
from ._numcore import as_matrix, make_rng
from ._prior import (
    AdapterParams,
    TextPriorParams,
    apply_adapter_step,
    init_adapter,
    init_text_prior,
    ncap_backward,
    ncap_forward,
    tp_backward,
    tp_forward,
)
from ._report import PriorAnalysisReport, PriorAnalysisRow
from ._toytask import (
    RecognizerParams,
    TaskConfig,
    TaskData,
    derive_seed,
    prototypes,
    recognizer_forward,
    train_recognizer,
)

logger = logging.getLogger(__name__)

PRIOR_KINDS = ("none", "tp", "ncap")

_STREAM_CORRUPT = 11
_STREAM_PRIOR_INIT = 12
_KIND_IDS = {"none": 0, "tp": 1, "ncap": 2}


@dataclass(frozen=True)
class PriorConfig:
    """Settings of the prior analysis."""

    corruption: float = 0.3
    epochs: int = 30
    learning_rate: float = 0.05
    tau: float = 1.0
    use_bias: bool = False

    def __post_init__(self):
        if not 0.0 <= self.corruption <= 1.0:
            raise ConfigurationError(
                f"corruption must lie in [0, 1], got {self.corruption!r}"
            )
        if self.epochs < 0:
            raise ConfigurationError("prior epochs must be >= 0")
        if self.learning_rate <= 0 or self.tau <= 0:
            raise ConfigurationError(
                "prior learning_rate and tau must be positive"
            )

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> PriorConfig:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(
                f"unknown prior settings {sorted(unknown)}"
            )
        return cls(**data)

    def to_mapping(self) -> dict[str, Any]:
        return asdict(self)


def corrupt_teacher(
    params: RecognizerParams, fraction: float, rng: np.random.Generator
) -> RecognizerParams:
    """Cyclically permute the output columns of a fraction of classes.

    At least two classes are permuted whenever ``fraction > 0``, so
    every selected class is predicted as a different one.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigurationError(
            f"corruption fraction must lie in [0, 1], got {fraction!r}"
        )
    n_classes = params.alphabet_size
    k = int(round(fraction * n_classes))
    if fraction > 0:
        k = max(k, 2)
    if k == 0:
        return params
    chosen = rng.choice(n_classes, size=k, replace=False)
    source = np.roll(chosen, 1)
    W_out = params.W_out.copy()
    b_out = params.b_out.copy()
    W_out[:, chosen] = params.W_out[:, source]
    b_out[chosen] = params.b_out[source]
    logger.debug("Corrupted classes %s", sorted(chosen.tolist()))
    return replace(params, W_out=W_out, b_out=b_out)


def _design(features, priors):
    features = as_matrix(features, "features")
    priors = as_matrix(priors, "priors")
    if priors.shape[0] != features.shape[0]:
        raise ShapeError(
            f"{features.shape[0]} feature rows but {priors.shape[0]} "
            "prior rows"
        )
    return np.hstack([features, priors])


def fit_fusion(features, priors, clean) -> np.ndarray:
    """Least-squares fusion ``D x (D + C)`` from ``[features | priors]``."""
    X = _design(features, priors)
    clean = as_matrix(clean, "clean")
    if clean.shape[0] != X.shape[0]:
        raise ShapeError("clean rows do not match feature rows")
    solution, *_ = np.linalg.lstsq(X, clean, rcond=None)
    return solution.T


def nearest_prototype(rows, protos) -> np.ndarray:
    rows = as_matrix(rows, "rows")
    dist = ((rows[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    return dist.argmin(axis=1)


def guided_reconstruct(features, prior, fusion, protos):
    """Fuse features with a prior and decode to class labels.

    Parameters
    ----------
    features : array_like
        L x D noisy observations of one sample (``Sample.features``).
    prior : array_like
        L x C prior feature.
    fusion : array_like
        D x (D + C) fusion matrix.
    protos : array_like
        A x D class prototypes used for decoding.

    Returns
    -------
    tuple of numpy.ndarray
        The L x D reconstruction and the decoded labels.
    """
    X = _design(features, prior)
    fusion = as_matrix(fusion, "fusion")
    if fusion.shape[1] != X.shape[1]:
        raise ShapeError(
            f"fusion {fusion.shape} does not accept rows of width "
            f"{X.shape[1]}"
        )
    protos = as_matrix(protos, "prototypes")
    if protos.shape[1] != fusion.shape[0]:
        raise ShapeError("prototypes do not match the fusion output width")
    reconstructed = X @ fusion.T
    return reconstructed, nearest_prototype(reconstructed, protos)


def prior_features(kind: str, params, h, tau: float = 1.0) -> np.ndarray:
    """The prior fed to the fusion; ``none`` gives a matrix with no columns."""
    if kind == "none":
        return np.zeros((as_matrix(h, "h").shape[0], 0))
    if kind == "tp":
        return tp_forward(h, params, tau)[1]
    if kind == "ncap":
        return ncap_forward(h, params)
    raise ConfigurationError(f"prior kind must be one of {PRIOR_KINDS}")


def train_prior_adapter(
    kind: str,
    h,
    features,
    clean,
    teacher: RecognizerParams,
    config: TaskConfig,
    prior_config: PriorConfig,
    rng: np.random.Generator,
) -> AdapterParams | TextPriorParams | None:
    """Fit the prior path on reconstruction error.

    Each epoch refits a provisional fusion by least squares, then takes
    one full-batch gradient step on the prior parameters against the
    mean squared reconstruction error.

    Returns
    -------
    AdapterParams, TextPriorParams or None
        ``None`` for the ``none`` kind, which has nothing to train.
    """
    if kind == "none":
        return None
    if kind == "tp":
        params = init_text_prior(
            rng, teacher.W_out, teacher.b_out, config.prior_dim
        )
    elif kind == "ncap":
        params = init_adapter(
            rng, config.embed_dim, config.prior_dim, prior_config.use_bias
        )
    else:
        raise ConfigurationError(f"prior kind must be one of {PRIOR_KINDS}")

    features = as_matrix(features, "features")
    clean = as_matrix(clean, "clean")
    n_rows, dim = features.shape
    for epoch in range(prior_config.epochs):
        f = prior_features(kind, params, h, prior_config.tau)
        fusion = fit_fusion(features, f, clean)
        residual = _design(features, f) @ fusion.T - clean
        mse = float(np.mean(np.sum(residual**2, axis=1)))
        if not np.isfinite(mse):
            raise TrainingDivergedError(
                f"{kind} prior diverged in epoch {epoch}"
            )
        upstream = (2.0 / n_rows) * residual @ fusion[:, dim:]
        if kind == "tp":
            grad = tp_backward(h, params, prior_config.tau, upstream)
            step = prior_config.learning_rate * grad
            params = replace(params, W_proj=params.W_proj - step)
        else:
            grads = ncap_backward(h, params, upstream)
            params = apply_adapter_step(
                params, grads, prior_config.learning_rate
            )
        logger.debug("%s prior epoch %d mse=%.6f", kind, epoch, mse)
    return params


def _correlation(prior_errors, output_errors, label: str):
    try:
        return pearson(prior_errors, output_errors), ""
    except UndefinedCorrelationError as e:
        logger.warning("Pearson on %s is undefined: %s", label, e)
        return None, str(e)


def run_prior_analysis(
    config: TaskConfig, prior_config: PriorConfig, seed: int
) -> list[PriorAnalysisRow]:
    """Measure how recognition errors of the prior reach the output.

    One row per prior kind. ``prior_*`` are the error rates of the
    corrupted teacher's own predictions on the lr test split (the same
    for every kind); ``output_*`` are the error rates after
    reconstruction; ``pearson_*`` correlate the two per test sample.
    """
    run_config = replace(config, seed=derive_seed(config.seed, seed))
    data = TaskData(run_config)
    logger.info("Seed %d: training prior generator on hr", seed)
    teacher, _ = train_recognizer(
        run_config, "hr", run_config.teacher_loss, data=data
    )
    wrong = corrupt_teacher(
        teacher,
        prior_config.corruption,
        make_rng(run_config.seed, _STREAM_CORRUPT),
    )
    protos = prototypes(run_config)

    train_x, train_clean, _ = data.arrays("train", "lr")
    test_x, _, test_labels = data.arrays("test", "lr")
    n_test, length = test_labels.shape
    dim = run_config.feature_dim
    train_x = train_x.reshape(-1, dim)
    train_clean = train_clean.reshape(-1, dim)
    test_flat = test_x.reshape(-1, dim)

    h_train, _ = recognizer_forward(train_x, teacher)
    h_test, wrong_logits = recognizer_forward(test_flat, wrong)
    recognized = wrong_logits.argmax(axis=1).reshape(n_test, length)
    prior_wer, prior_cer = sample_error_rates(
        list(test_labels), list(recognized)
    )

    rows = []
    for kind in PRIOR_KINDS:
        params = train_prior_adapter(
            kind,
            h_train,
            train_x,
            train_clean,
            teacher,
            run_config,
            prior_config,
            make_rng(run_config.seed, _STREAM_PRIOR_INIT, _KIND_IDS[kind]),
        )
        fusion = fit_fusion(
            train_x,
            prior_features(kind, params, h_train, prior_config.tau),
            train_clean,
        )
        if kind == "tp":
            # The prior generator now classifies with the corrupted layer.
            params = replace(params, W_pred=wrong.W_out, b_pred=wrong.b_out)
        test_prior = prior_features(kind, params, h_test, prior_config.tau)
        _, decoded = guided_reconstruct(test_flat, test_prior, fusion, protos)
        out_wer, out_cer = sample_error_rates(
            list(test_labels), list(decoded.reshape(n_test, length))
        )
        r_wer, why_wer = _correlation(prior_wer, out_wer, f"{kind} WER")
        r_cer, why_cer = _correlation(prior_cer, out_cer, f"{kind} CER")
        rows.append(
            PriorAnalysisRow(
                seed=seed,
                prior=kind,
                corruption=prior_config.corruption,
                prior_wer=float(prior_wer.mean()),
                prior_cer=float(prior_cer.mean()),
                output_wer=float(out_wer.mean()),
                output_cer=float(out_cer.mean()),
                pearson_wer=r_wer,
                pearson_cer=r_cer,
                pearson_wer_reason=why_wer,
                pearson_cer_reason=why_cer,
            )
        )
        logger.info(
            "Seed %d prior=%s output_cer=%.4f pearson_cer=%s",
            seed,
            kind,
            rows[-1].output_cer,
            r_cer,
        )
    return rows


def run_prior_analyses(
    config: TaskConfig,
    prior_config: PriorConfig,
    seeds,
    metadata: dict[str, Any] | None = None,
) -> PriorAnalysisReport:
    """Prior analysis over every seed; rows ordered by seed, then kind."""
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    rows = [
        row
        for seed in seeds
        for row in run_prior_analysis(config, prior_config, seed)
    ]
    return PriorAnalysisReport(rows=tuple(rows), metadata=dict(metadata or {}))
