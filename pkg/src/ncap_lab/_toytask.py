"""Synthetic teacher/student sequence recognition.

Every position of a sequence is an independent noisy observation of a
class prototype. A teacher recognizer is trained on the high-resolution
(``hr``, low noise) view; students are trained on the paired
low-resolution (``lr``, high noise) view with any member of the loss
family, so the gap between the two views plays the part of the LR/HR
domain gap.

Random streams are derived from the config seed with
:func:`ncap_lab._numcore.make_rng` and fixed stream identifiers, so the
same config always produces the same data, initialization and batch
order. hr and lr views of a split share their label sequences.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np

from ._errors import ConfigurationError, ShapeError, TrainingDivergedError
from ._losses import LOSS_NAMES, LossSpec, check_labels, combined_loss
from ._metrics import (
    ConfidenceHistogram,
    ReliabilityReport,
    confidence_histogram,
    error_rates,
    merge_histograms,
    merge_reliability,
    reliability,
    word_confidence,
)
from ._numcore import (
    as_matrix,
    central_difference,
    linear_forward,
    make_rng,
    max_relative_error,
    prelu,
    softmax_temp,
    uniform_init,
)
from ._prior import DEFAULT_SLOPE
from ._report import ComparisonReport, ComparisonRow

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
DOMAINS = ("hr", "lr")
TEACHER_INPUTS = ("hr", "student")

# Stream identifiers fed to make_rng after the seed.
_STREAM_PROTOTYPES = 1
_STREAM_LABELS = 2
_STREAM_NOISE = 3
_STREAM_INIT = 4
_STREAM_SHUFFLE = 5
_STREAM_REPLICATE = 6
_SPLIT_IDS = {"train": 0, "test": 1}
_DOMAIN_IDS = {"hr": 0, "lr": 1}

HISTOGRAM_BINS = 20
GRADCHECK_STEP_RANGE = (1e-8, 1e-4)


@dataclass(frozen=True)
class TaskConfig:
    """Size, noise and optimizer settings of the synthetic task."""

    alphabet_size: int = 10
    sequence_length: int = 4
    feature_dim: int = 16
    hidden_dim: int = 64
    embed_dim: int = 16
    prior_dim: int = 8
    noise_sigma_hr: float = 0.1
    noise_sigma_lr: float = 0.8
    prototype_scale: float = 0.65
    train_size: int = 64
    test_size: int = 500
    epochs: int = 200
    learning_rate: float = 0.1
    batch_size: int = 16
    seed: int = 0
    teacher_input: str = "hr"
    teacher_smoothing: float = 0.3
    n_bins: int = 15

    def __post_init__(self):
        counts = (
            "sequence_length",
            "feature_dim",
            "hidden_dim",
            "embed_dim",
            "prior_dim",
            "train_size",
            "test_size",
            "epochs",
            "batch_size",
            "n_bins",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.alphabet_size < 2:
            raise ConfigurationError("alphabet_size must be >= 2")
        if not self.noise_sigma_lr >= self.noise_sigma_hr >= 0:
            raise ConfigurationError(
                "noise levels must satisfy noise_sigma_lr >= "
                f"noise_sigma_hr >= 0, got {self.noise_sigma_lr} and "
                f"{self.noise_sigma_hr}"
            )
        if self.prototype_scale <= 0 or self.learning_rate <= 0:
            raise ConfigurationError(
                "prototype_scale and learning_rate must be positive"
            )
        if self.teacher_input not in TEACHER_INPUTS:
            raise ConfigurationError(
                f"teacher_input must be one of {TEACHER_INPUTS}"
            )
        if not 0.0 <= self.teacher_smoothing < 1.0:
            raise ConfigurationError(
                "teacher_smoothing must lie in [0, 1), got "
                f"{self.teacher_smoothing!r}"
            )

    @property
    def teacher_loss(self) -> LossSpec:
        """Label-smoothed CE for the hr teacher, plain CE at zero."""
        if self.teacher_smoothing == 0:
            return LossSpec("ce")
        return LossSpec("ce_ls", epsilon_ls=self.teacher_smoothing)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> TaskConfig:
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(
                f"unknown task settings {sorted(unknown)}"
            )
        return cls(**data)

    def to_mapping(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Sample:
    """One sequence: noisy features, clean prototypes and labels."""

    features: np.ndarray = field(repr=False)
    clean: np.ndarray = field(repr=False)
    labels: np.ndarray


@dataclass(frozen=True)
class RecognizerParams:
    """Per-position network D -> hidden -> embed -> A with PReLU layers.

    The same container carries gradients, with each field holding the
    derivative of the objective with respect to that parameter.
    """

    W_in: np.ndarray = field(repr=False)
    b_in: np.ndarray = field(repr=False)
    W_mid: np.ndarray = field(repr=False)
    b_mid: np.ndarray = field(repr=False)
    W_out: np.ndarray = field(repr=False)
    b_out: np.ndarray = field(repr=False)
    slope_in: float = DEFAULT_SLOPE
    slope_mid: float = DEFAULT_SLOPE

    def __post_init__(self):
        shapes = (
            (self.W_in, self.b_in, "in"),
            (self.W_mid, self.b_mid, "mid"),
            (self.W_out, self.b_out, "out"),
        )
        for W, b, name in shapes:
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(
                    f"layer {name}: weights {W.shape} and bias {b.shape} "
                    "do not chain"
                )
        if (
            self.W_in.shape[1] != self.W_mid.shape[0]
            or self.W_mid.shape[1] != self.W_out.shape[0]
        ):
            raise ShapeError("recognizer layer widths do not chain")

    @property
    def feature_dim(self) -> int:
        return self.W_in.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.W_out.shape[1]

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {
            "W_in": self.W_in,
            "b_in": self.b_in,
            "W_mid": self.W_mid,
            "b_mid": self.b_mid,
            "W_out": self.W_out,
            "b_out": self.b_out,
            "slope_in": np.array([self.slope_in]),
            "slope_mid": np.array([self.slope_mid]),
        }

    @classmethod
    def from_named_arrays(cls, arrays: dict[str, np.ndarray]):
        return cls(
            **{
                k: v
                for k, v in arrays.items()
                if k not in ("slope_in", "slope_mid")
            },
            slope_in=float(arrays["slope_in"][0]),
            slope_mid=float(arrays["slope_mid"][0]),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [a.ravel() for a in self.named_arrays().values()]
        )

    def from_vector(self, vector: np.ndarray) -> RecognizerParams:
        """Parameters shaped like ``self`` filled from a flat vector."""
        arrays = {}
        offset = 0
        for name, template in self.named_arrays().items():
            size = template.size
            arrays[name] = np.array(
                vector[offset : offset + size], dtype=np.float64
            ).reshape(template.shape)
            offset += size
        if offset != len(vector):
            raise ShapeError(
                f"vector of length {len(vector)} does not match "
                f"{offset} parameters"
            )
        return type(self).from_named_arrays(arrays)

    def step(self, grads: RecognizerParams, rate: float) -> RecognizerParams:
        """Plain SGD update ``self - rate * grads``."""
        return self.from_vector(self.to_vector() - rate * grads.to_vector())


@dataclass(frozen=True)
class TrainLog:
    """Per-epoch training loss and test-set statistics."""

    loss: tuple[float, ...]
    test_accuracy: tuple[float, ...]
    mean_confidence: tuple[float, ...]
    ece: tuple[float, ...]


@dataclass(frozen=True)
class Evaluation:
    """Recognition and calibration statistics on one dataset."""

    accuracy: float
    char_accuracy: float
    wer: float
    cer: float
    mean_confidence: float
    confidence_std: float
    word_reliability: ReliabilityReport = field(repr=False)
    char_reliability: ReliabilityReport = field(repr=False)
    histogram: ConfidenceHistogram = field(repr=False)


def prototypes(config: TaskConfig) -> np.ndarray:
    """The A x D class prototype matrix drawn once from the config seed."""
    rng = make_rng(config.seed, _STREAM_PROTOTYPES)
    return rng.normal(
        0.0,
        config.prototype_scale,
        size=(config.alphabet_size, config.feature_dim),
    )


def _check_split_domain(split: str, domain: str):
    if split not in SPLITS:
        raise ConfigurationError(f"split must be one of {SPLITS}: {split!r}")
    if domain not in DOMAINS:
        raise ConfigurationError(
            f"domain must be one of {DOMAINS}: {domain!r}"
        )


def _split_arrays(config: TaskConfig, split: str, domain: str):
    _check_split_domain(split, domain)
    n = config.train_size if split == "train" else config.test_size
    shape = (n, config.sequence_length)
    labels = make_rng(
        config.seed, _STREAM_LABELS, _SPLIT_IDS[split]
    ).integers(0, config.alphabet_size, size=shape)
    clean = prototypes(config)[labels]
    sigma = config.noise_sigma_hr if domain == "hr" else config.noise_sigma_lr
    if sigma == 0:
        features = clean.copy()
    else:
        noise = make_rng(
            config.seed,
            _STREAM_NOISE,
            _SPLIT_IDS[split],
            _DOMAIN_IDS[domain],
        ).standard_normal(clean.shape)
        features = clean + sigma * noise
    return features, clean, labels


def gen_dataset(config: TaskConfig, split: str, domain: str) -> list[Sample]:
    """Generate one split of the task in one domain."""
    return TaskData(config).samples(split, domain)


class TaskData:
    """Lazily generated, cached splits of one task config.

    Arrays are kept stacked as ``(N, L, D)`` features and ``(N, L)``
    labels, which is what training and evaluation consume.
    """

    def __init__(self, config: TaskConfig):
        self.config = config
        self._cache: dict[tuple[str, str], tuple[np.ndarray, ...]] = {}

    def arrays(self, split: str, domain: str):
        key = (split, domain)
        if key not in self._cache:
            self._cache[key] = _split_arrays(self.config, split, domain)
        return self._cache[key]

    def samples(self, split: str, domain: str) -> list[Sample]:
        features, clean, labels = self.arrays(split, domain)
        return [
            Sample(features=features[i], clean=clean[i], labels=labels[i])
            for i in range(labels.shape[0])
        ]


def init_recognizer(
    config: TaskConfig, rng: np.random.Generator
) -> RecognizerParams:
    """Uniform fan-in weights, zero biases, PReLU slopes of 0.25."""
    return RecognizerParams(
        W_in=uniform_init(rng, config.feature_dim, config.hidden_dim),
        b_in=np.zeros(config.hidden_dim),
        W_mid=uniform_init(rng, config.hidden_dim, config.embed_dim),
        b_mid=np.zeros(config.embed_dim),
        W_out=uniform_init(rng, config.embed_dim, config.alphabet_size),
        b_out=np.zeros(config.alphabet_size),
    )


def _forward(x, params: RecognizerParams):
    x = as_matrix(x, "features")
    if x.shape[1] != params.feature_dim:
        raise ShapeError(
            f"features have width {x.shape[1]}, recognizer expects "
            f"{params.feature_dim}"
        )
    a1 = linear_forward(x, params.W_in, params.b_in)
    u1 = prelu(a1, params.slope_in)
    a2 = linear_forward(u1, params.W_mid, params.b_mid)
    h = prelu(a2, params.slope_mid)
    logits = linear_forward(h, params.W_out, params.b_out)
    return x, a1, u1, a2, h, logits


def recognizer_forward(x, params: RecognizerParams):
    """Penultimate representation ``h`` and class logits per position."""
    _, _, _, _, h, logits = _forward(x, params)
    return h, logits


def _backward(params: RecognizerParams, cache, d_logits) -> RecognizerParams:
    x, a1, u1, a2, h, _ = cache
    d_h = d_logits @ params.W_out.T
    neg2 = a2 < 0
    d_a2 = np.where(neg2, params.slope_mid * d_h, d_h)
    d_u1 = d_a2 @ params.W_mid.T
    neg1 = a1 < 0
    d_a1 = np.where(neg1, params.slope_in * d_u1, d_u1)
    return RecognizerParams(
        W_in=x.T @ d_a1,
        b_in=d_a1.sum(axis=0),
        W_mid=u1.T @ d_a2,
        b_mid=d_a2.sum(axis=0),
        W_out=h.T @ d_logits,
        b_out=d_logits.sum(axis=0),
        slope_in=float(np.sum(d_u1[neg1] * a1[neg1])),
        slope_mid=float(np.sum(d_h[neg2] * a2[neg2])),
    )


def loss_and_grads(
    params: RecognizerParams,
    x,
    labels,
    loss: LossSpec,
    teacher_logits=None,
):
    """Loss value and its gradient with respect to every parameter."""
    cache = _forward(x, params)
    result = combined_loss(loss, cache[-1], teacher_logits, labels)
    return result.value, _backward(params, cache, result.grad)


def _flatten(features: np.ndarray, labels: np.ndarray):
    n, length, dim = features.shape
    return features.reshape(n * length, dim), labels.reshape(n * length)


def _teacher_logits(
    config: TaskConfig,
    data: TaskData,
    split: str,
    domain: str,
    teacher: RecognizerParams,
):
    source = "hr" if config.teacher_input == "hr" else domain
    features, _, _ = data.arrays(split, source)
    x = features.reshape(-1, features.shape[-1])
    return recognizer_forward(x, teacher)[1]


def _epoch_stats(params, x, y, n_bins):
    probs = softmax_temp(recognizer_forward(x, params)[1])
    conf = probs.max(axis=1)
    hits = probs.argmax(axis=1) == y
    ece = reliability(conf, hits, n_bins).ece
    return float(hits.mean()), float(conf.mean()), ece


def train_recognizer(
    config: TaskConfig,
    domain: str,
    loss: LossSpec,
    teacher: RecognizerParams | None = None,
    init: RecognizerParams | None = None,
    data: TaskData | None = None,
):
    """Train a recognizer on the train split of ``domain``.

    Minibatch SGD with a constant learning rate over ``config.epochs``
    passes. Batches are drawn in a seeded order; the loss averages over
    every position in the batch.

    Parameters
    ----------
    config : TaskConfig
        Task, optimizer and seed settings.
    domain : str
        ``"hr"`` or ``"lr"``; the view the recognizer is trained on.
    loss : LossSpec
        Member of the loss family to minimize.
    teacher : RecognizerParams, optional
        Required when ``loss`` uses teacher logits. Its logits are
        computed on the paired hr features, or on the student's own
        input when ``config.teacher_input == "student"``.
    init : RecognizerParams, optional
        Starting parameters; a seeded initialization otherwise.
    data : TaskData, optional
        Cached splits of ``config``, shared between runs.

    Returns
    -------
    tuple
        ``(params, TrainLog)``.
    """
    _check_split_domain("train", domain)
    if loss.requires_teacher and teacher is None:
        raise ConfigurationError(f"loss {loss.name!r} needs a teacher")
    if teacher is not None and not loss.requires_teacher:
        logger.debug("Loss %s ignores the teacher", loss.name)
        teacher = None
    data = data or TaskData(config)
    features, _, labels = data.arrays("train", domain)
    x_train, y_train = _flatten(features, labels)
    test_features, _, test_labels = data.arrays("test", domain)
    x_test, y_test = _flatten(test_features, test_labels)
    t_train = (
        _teacher_logits(config, data, "train", domain, teacher)
        if teacher is not None
        else None
    )

    params = init or init_recognizer(
        config, make_rng(config.seed, _STREAM_INIT, _DOMAIN_IDS[domain])
    )
    shuffle = make_rng(config.seed, _STREAM_SHUFFLE, _DOMAIN_IDS[domain])
    length = config.sequence_length
    n_samples = labels.shape[0]
    log = {"loss": [], "acc": [], "conf": [], "ece": []}

    for epoch in range(config.epochs):
        order = shuffle.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, config.batch_size):
            batch = order[start : start + config.batch_size]
            positions = (batch[:, None] * length + np.arange(length)).ravel()
            if loss.name == "none":
                continue
            value, grads = loss_and_grads(
                params,
                x_train[positions],
                y_train[positions],
                loss,
                None if t_train is None else t_train[positions],
            )
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"loss {loss.name} became non-finite in epoch {epoch}"
                )
            params = params.step(grads, config.learning_rate)
            total += value * len(batch)
        acc, conf, ece = _epoch_stats(params, x_test, y_test, config.n_bins)
        log["loss"].append(total / n_samples)
        log["acc"].append(acc)
        log["conf"].append(conf)
        log["ece"].append(ece)
        logger.debug(
            "epoch %d loss=%.5f test_acc=%.4f conf=%.4f ece=%.4f",
            epoch,
            log["loss"][-1],
            acc,
            conf,
            ece,
        )
    return params, TrainLog(
        loss=tuple(log["loss"]),
        test_accuracy=tuple(log["acc"]),
        mean_confidence=tuple(log["conf"]),
        ece=tuple(log["ece"]),
    )


def evaluate_recognizer(
    params: RecognizerParams,
    features: np.ndarray,
    labels: np.ndarray,
    n_bins: int = 15,
    word_rule: str = "product",
    histogram_bins: int = HISTOGRAM_BINS,
) -> Evaluation:
    """Accuracy, error rates and calibration on stacked N x L data."""
    n, length = labels.shape
    x, y = _flatten(features, labels)
    probs = softmax_temp(recognizer_forward(x, params)[1])
    predictions = probs.argmax(axis=1)
    char_conf = probs.max(axis=1)
    char_hits = predictions == y
    word_hits = char_hits.reshape(n, length).all(axis=1)
    word_conf = word_confidence(probs.reshape(n, length, -1), word_rule)
    rates = error_rates(list(labels), list(predictions.reshape(n, length)))
    return Evaluation(
        accuracy=float(word_hits.mean()),
        char_accuracy=float(char_hits.mean()),
        wer=rates.wer,
        cer=rates.cer,
        mean_confidence=float(char_conf.mean()),
        confidence_std=float(char_conf.std()),
        word_reliability=reliability(word_conf, word_hits, n_bins, "word"),
        char_reliability=reliability(
            char_conf, char_hits, n_bins, "character"
        ),
        histogram=confidence_histogram(probs, histogram_bins),
    )


def gradcheck_recognizer(
    params: RecognizerParams,
    sample: Sample,
    loss: LossSpec,
    teacher_logits=None,
    step: float = 1e-6,
) -> float:
    """Compare analytic backprop with central finite differences.

    Returns the largest relative error over every recognizer parameter,
    as measured by :func:`ncap_lab._numcore.max_relative_error`.
    """
    low, high = GRADCHECK_STEP_RANGE
    if not low <= step <= high:
        logger.warning(
            "Finite-difference step %g is outside the recommended range "
            "[%g, %g]",
            step,
            low,
            high,
        )
    labels = check_labels(
        sample.labels, params.alphabet_size, len(sample.labels)
    )
    _, grads = loss_and_grads(
        params, sample.features, labels, loss, teacher_logits
    )

    def objective(vector):
        logits = recognizer_forward(
            sample.features, params.from_vector(vector)
        )[1]
        return combined_loss(loss, logits, teacher_logits, labels).value

    numeric = central_difference(objective, params.to_vector(), step)
    return max_relative_error(grads.to_vector(), numeric)


def derive_seed(base_seed: int, replicate: int) -> int:
    """Per-run seed mixing the config seed and a replicate seed."""
    rng = make_rng(base_seed, _STREAM_REPLICATE, replicate)
    return int(rng.integers(0, 2**63 - 1))


@dataclass(frozen=True)
class SeedRun:
    """Rows and evaluations of every loss for one replicate seed."""

    seed: int
    rows: tuple[ComparisonRow, ...]
    evaluations: dict[str, Evaluation] = field(repr=False)
    teacher: RecognizerParams | None = field(default=None, repr=False)
    students: dict[str, RecognizerParams] = field(
        default_factory=dict, repr=False
    )


def _row_from_evaluation(loss: str, seed: int, ev: Evaluation):
    return ComparisonRow(
        loss=loss,
        seed=seed,
        accuracy=ev.accuracy,
        char_accuracy=ev.char_accuracy,
        wer=ev.wer,
        cer=ev.cer,
        ece_word=ev.word_reliability.ece,
        ece_char=ev.char_reliability.ece,
        mce_char=ev.char_reliability.mce,
        mean_confidence=ev.mean_confidence,
        confidence_std=ev.confidence_std,
    )


def run_seed(
    config: TaskConfig,
    losses: Sequence[LossSpec],
    seed: int,
    word_rule: str = "product",
    histogram_bins: int = HISTOGRAM_BINS,
) -> SeedRun:
    """Train the teacher once, then one student per loss, for one seed."""
    run_config = replace(config, seed=derive_seed(config.seed, seed))
    data = TaskData(run_config)
    logger.info("Seed %d: training teacher on hr", seed)
    teacher, _ = train_recognizer(
        run_config, "hr", run_config.teacher_loss, data=data
    )
    test_features, _, test_labels = data.arrays("test", "lr")
    rows = []
    evaluations = {}
    students = {}
    for loss in losses:
        logger.info("Seed %d: training student with %s", seed, loss.name)
        try:
            student, _ = train_recognizer(
                run_config,
                "lr",
                loss,
                teacher=teacher if loss.requires_teacher else None,
                data=data,
            )
        except TrainingDivergedError as e:
            logger.warning("Seed %d, loss %s failed: %s", seed, loss.name, e)
            rows.append(
                ComparisonRow(
                    loss=loss.name, seed=seed, status="failed", message=str(e)
                )
            )
            continue
        ev = evaluate_recognizer(
            student,
            test_features,
            test_labels,
            run_config.n_bins,
            word_rule,
            histogram_bins,
        )
        evaluations[loss.name] = ev
        students[loss.name] = student
        rows.append(_row_from_evaluation(loss.name, seed, ev))
    return SeedRun(
        seed=seed,
        rows=tuple(rows),
        evaluations=evaluations,
        teacher=teacher,
        students=students,
    )


def _run_seed_args(args):
    return run_seed(*args)


def run_seeds(
    config: TaskConfig,
    losses: Sequence[LossSpec],
    seeds: Sequence[int],
    jobs: int = 1,
    word_rule: str = "product",
    histogram_bins: int = HISTOGRAM_BINS,
) -> list[SeedRun]:
    """Run every seed, in parallel when ``jobs > 1``, in seed order."""
    tasks = [
        (config, tuple(losses), seed, word_rule, histogram_bins)
        for seed in seeds
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_seed_args, tasks))
    return [_run_seed_args(task) for task in tasks]


def build_comparison(
    runs: Sequence[SeedRun],
    losses: Sequence[LossSpec],
    metadata: dict[str, Any] | None = None,
) -> ComparisonReport:
    """Merge seed runs into a report ordered by loss, then seed."""
    rows = []
    reliability_data = {}
    histograms = {}
    for loss in losses:
        rows.extend(
            row for run in runs for row in run.rows if row.loss == loss.name
        )
        evaluations = [
            run.evaluations[loss.name]
            for run in runs
            if loss.name in run.evaluations
        ]
        if evaluations:
            reliability_data[loss.name] = (
                merge_reliability([e.word_reliability for e in evaluations]),
                merge_reliability([e.char_reliability for e in evaluations]),
            )
            histograms[loss.name] = merge_histograms(
                [e.histogram for e in evaluations]
            )
    return ComparisonReport(
        rows=tuple(rows),
        reliability=reliability_data,
        histograms=histograms,
        metadata=dict(metadata or {}),
    )


def run_comparison(
    config: TaskConfig,
    losses: Sequence[LossSpec] | None = None,
    seeds: Sequence[int] | None = None,
    jobs: int = 1,
    metadata: dict[str, Any] | None = None,
    word_rule: str = "product",
    histogram_bins: int = HISTOGRAM_BINS,
) -> ComparisonReport:
    """Train a teacher and one student per loss variant for every seed.

    ``losses`` defaults to the whole family with default hyperparameters
    and ``seeds`` to the single replicate ``0``.
    """
    losses = (
        tuple(LossSpec(name) for name in LOSS_NAMES)
        if losses is None
        else tuple(losses)
    )
    if not losses:
        raise ConfigurationError("at least one loss is required")
    seeds = (0,) if seeds is None else tuple(seeds)
    if not seeds:
        raise ConfigurationError("at least one seed is required")
    runs = run_seeds(config, losses, seeds, jobs, word_rule, histogram_bins)
    return build_comparison(runs, losses, metadata)


@dataclass(frozen=True)
class SweepPoint:
    """Test accuracy of a student at one lr noise level, over seeds."""

    sigma: float
    accuracy: float
    accuracy_std: float
    char_accuracy: float
    n: int


def noise_sweep(
    config: TaskConfig,
    sigmas: Sequence[float],
    seeds: Sequence[int],
    loss: LossSpec | None = None,
) -> list[SweepPoint]:
    """Test accuracy of a teacher-free student across lr noise levels."""
    loss = loss or LossSpec("ce")
    if loss.requires_teacher:
        raise ConfigurationError("noise_sweep supports teacher-free losses")
    points = []
    for sigma in sigmas:
        accuracies = []
        char_accuracies = []
        for seed in seeds:
            run_config = replace(
                config,
                seed=derive_seed(config.seed, seed),
                noise_sigma_lr=sigma,
                noise_sigma_hr=min(config.noise_sigma_hr, sigma),
            )
            data = TaskData(run_config)
            student, _ = train_recognizer(run_config, "lr", loss, data=data)
            features, _, labels = data.arrays("test", "lr")
            ev = evaluate_recognizer(
                student, features, labels, run_config.n_bins
            )
            accuracies.append(ev.accuracy)
            char_accuracies.append(ev.char_accuracy)
        points.append(
            SweepPoint(
                sigma=float(sigma),
                accuracy=float(np.mean(accuracies)),
                accuracy_std=float(np.std(accuracies)),
                char_accuracy=float(np.mean(char_accuracies)),
                n=len(accuracies),
            )
        )
        logger.info(
            "sigma=%g accuracy=%.4f char_accuracy=%.4f",
            sigma,
            points[-1].accuracy,
            points[-1].char_accuracy,
        )
    return points
