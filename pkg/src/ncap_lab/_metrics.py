"""Evaluation statistics for recognizers and restored images.

Covers sequence error rates (WER as whole-sequence mismatch, CER as
corpus-level edit distance over total reference length), Pearson
correlation, reliability binning with ECE/MCE, confidence-distribution
statistics, and PSNR/SSIM.

Word-level confidence is the product of the per-position maximum
probabilities by default; ``rule="min"`` takes the least confident
position instead.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import Levenshtein
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._errors import (
    ConfigurationError,
    DomainError,
    ShapeError,
    UndefinedCorrelationError,
)

logger = logging.getLogger(__name__)

RELIABILITY_LEVELS = ("word", "character")
WORD_CONFIDENCE_RULES = ("product", "min")
PSNR_INFINITY = math.inf

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 8


@dataclass(frozen=True)
class ErrorRates:
    """Whole-sequence error rate and character error rate."""

    wer: float
    cer: float


@dataclass(frozen=True)
class ReliabilityBin:
    low: float
    high: float
    mean_conf: float
    accuracy: float
    count: int


@dataclass(frozen=True)
class ReliabilityReport:
    """Equal-width confidence bins with expected/maximum calibration error."""

    level: str
    n_bins: int
    bins: tuple[ReliabilityBin, ...] = field(repr=False)
    ece: float
    mce: float

    @property
    def sample_count(self) -> int:
        return sum(b.count for b in self.bins)


@dataclass(frozen=True)
class ConfidenceHistogram:
    """Counts of per-position maximum probabilities in equal-width bins."""

    edges: tuple[float, ...]
    counts: tuple[int, ...]


def _symbols(sequence):
    if isinstance(sequence, str):
        return sequence
    return tuple(np.asarray(sequence).tolist())


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance between two symbol sequences."""
    return int(Levenshtein.distance(_symbols(a), _symbols(b)))


def _check_pairs(refs, hyps):
    if len(refs) != len(hyps):
        raise DomainError(
            f"got {len(refs)} references but {len(hyps)} hypotheses"
        )
    if not refs:
        raise DomainError("error rates need at least one pair")


def error_rates(refs: Sequence, hyps: Sequence) -> ErrorRates:
    """Corpus WER (sequence mismatch fraction) and CER."""
    _check_pairs(refs, hyps)
    mismatches = 0
    edits = 0
    total = 0
    for ref, hyp in zip(refs, hyps, strict=True):
        ref, hyp = _symbols(ref), _symbols(hyp)
        mismatches += ref != hyp
        edits += edit_distance(ref, hyp)
        total += len(ref)
    if total == 0:
        if edits:
            raise DomainError("CER is undefined for empty references")
        cer = 0.0
    else:
        cer = edits / total
    return ErrorRates(wer=mismatches / len(refs), cer=cer)


def sample_error_rates(refs: Sequence, hyps: Sequence):
    """Per-sample mismatch indicators and character error rates.

    Returns
    -------
    tuple of numpy.ndarray
        ``(wer, cer)`` with one entry per pair.
    """
    _check_pairs(refs, hyps)
    wer = np.empty(len(refs))
    cer = np.empty(len(refs))
    for i, (ref, hyp) in enumerate(zip(refs, hyps, strict=True)):
        ref, hyp = _symbols(ref), _symbols(hyp)
        if not len(ref):
            raise DomainError(f"reference {i} is empty")
        wer[i] = float(ref != hyp)
        cer[i] = edit_distance(ref, hyp) / len(ref)
    return wer, cer


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation, computed in two passes."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError(
            f"pearson needs two equal-length vectors, got {x.shape} "
            f"and {y.shape}"
        )
    if x.size < 2:
        raise DomainError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError(
            "correlation is undefined for a constant input"
        )
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def _bin_index(values: np.ndarray, n_bins: int) -> np.ndarray:
    # Right-closed bins on (0, 1]; an exact 0 falls into the first bin.
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    index = np.digitize(values, edges, right=True) - 1
    return np.clip(index, 0, n_bins - 1)


def _reliability_from_sums(level, n_bins, counts, conf_sums, hit_sums):
    total = int(counts.sum())
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    bins = []
    ece = 0.0
    mce = 0.0
    for i in range(n_bins):
        count = int(counts[i])
        if count:
            mean_conf = float(conf_sums[i] / count)
            accuracy = float(hit_sums[i] / count)
            gap = abs(accuracy - mean_conf)
            ece += count / total * gap
            mce = max(mce, gap)
        else:
            mean_conf = accuracy = 0.0
        bins.append(
            ReliabilityBin(
                low=float(edges[i]),
                high=float(edges[i + 1]),
                mean_conf=mean_conf,
                accuracy=accuracy,
                count=count,
            )
        )
    return ReliabilityReport(
        level=level, n_bins=n_bins, bins=tuple(bins), ece=ece, mce=mce
    )


def reliability(
    confidences: Sequence[float],
    correct: Sequence[bool],
    n_bins: int = 15,
    level: str = "character",
) -> ReliabilityReport:
    """Bin predictions by confidence and compare against accuracy.

    Parameters
    ----------
    confidences : sequence of float
        Confidence per prediction, in [0, 1].
    correct : sequence of bool
        Whether each prediction was right.
    n_bins : int
        Number of equal-width bins on (0, 1].
    level : str
        ``"word"`` or ``"character"``; recorded on the report.
    """
    if level not in RELIABILITY_LEVELS:
        raise ConfigurationError(
            f"level must be one of {RELIABILITY_LEVELS}, got {level!r}"
        )
    if n_bins < 1:
        raise DomainError(f"n_bins must be >= 1, got {n_bins}")
    conf = np.asarray(confidences, dtype=np.float64)
    hits = np.asarray(correct, dtype=bool)
    if conf.shape != hits.shape or conf.ndim != 1:
        raise ShapeError(
            f"confidences {conf.shape} and correctness {hits.shape} differ"
        )
    if conf.size == 0:
        raise DomainError("reliability needs at least one prediction")
    if np.isnan(conf).any() or conf.min() < 0.0 or conf.max() > 1.0:
        raise DomainError("confidences must lie in [0, 1]")
    index = _bin_index(conf, n_bins)
    counts = np.bincount(index, minlength=n_bins)
    conf_sums = np.bincount(index, weights=conf, minlength=n_bins)
    hit_sums = np.bincount(index, weights=hits, minlength=n_bins)
    return _reliability_from_sums(level, n_bins, counts, conf_sums, hit_sums)


def merge_reliability(
    reports: Sequence[ReliabilityReport],
) -> ReliabilityReport:
    """Pool reports with identical binning into one report."""
    if not reports:
        raise DomainError("nothing to merge")
    level, n_bins = reports[0].level, reports[0].n_bins
    if any(r.level != level or r.n_bins != n_bins for r in reports):
        raise ConfigurationError("reports use different levels or bins")
    counts = np.zeros(n_bins)
    conf_sums = np.zeros(n_bins)
    hit_sums = np.zeros(n_bins)
    for report in reports:
        for i, b in enumerate(report.bins):
            counts[i] += b.count
            conf_sums[i] += b.mean_conf * b.count
            hit_sums[i] += b.accuracy * b.count
    return _reliability_from_sums(level, n_bins, counts, conf_sums, hit_sums)


def _row_maxima(prob_rows) -> np.ndarray:
    rows = np.asarray(prob_rows, dtype=np.float64)
    if rows.size == 0:
        raise DomainError("no probability rows given")
    if rows.ndim != 2:
        raise ShapeError(f"expected a matrix of rows, got {rows.shape}")
    if (
        not np.all(np.isfinite(rows))
        or rows.min() < 0.0
        or np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-6)
    ):
        raise DomainError("every row must be a probability vector")
    return rows.max(axis=1)


def confidence_std(prob_rows) -> float:
    """Population standard deviation of the per-row maximum probability."""
    return float(np.std(_row_maxima(prob_rows)))


def confidence_histogram(prob_rows, n_bins: int = 20) -> ConfidenceHistogram:
    """Histogram of per-row maximum probabilities on (0, 1]."""
    if n_bins < 1:
        raise DomainError(f"n_bins must be >= 1, got {n_bins}")
    counts = np.bincount(
        _bin_index(_row_maxima(prob_rows), n_bins), minlength=n_bins
    )
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return ConfidenceHistogram(
        edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
    )


def merge_histograms(
    histograms: Sequence[ConfidenceHistogram],
) -> ConfidenceHistogram:
    if not histograms:
        raise DomainError("nothing to merge")
    edges = histograms[0].edges
    if any(h.edges != edges for h in histograms):
        raise ConfigurationError("histograms use different bins")
    counts = np.sum([h.counts for h in histograms], axis=0)
    return ConfidenceHistogram(
        edges=edges, counts=tuple(int(c) for c in counts)
    )


def word_confidence(
    prob_rows_per_sample, rule: str = "product", lengths=None
) -> np.ndarray:
    """Sequence-level confidence from per-position probabilities.

    Parameters
    ----------
    prob_rows_per_sample : array_like
        N x L x A probabilities.
    rule : str
        ``"product"`` multiplies the per-position maxima, ``"min"`` takes
        the smallest one.
    lengths : sequence of int, optional
        Number of non-pad positions per sample; positions past the
        length are ignored.
    """
    if rule not in WORD_CONFIDENCE_RULES:
        raise ConfigurationError(
            f"rule must be one of {WORD_CONFIDENCE_RULES}, got {rule!r}"
        )
    probs = np.asarray(prob_rows_per_sample, dtype=np.float64)
    if probs.ndim != 3:
        raise ShapeError(f"expected N x L x A probabilities, {probs.shape}")
    maxima = probs.max(axis=2)
    if lengths is not None:
        lengths = np.asarray(lengths)
        if lengths.shape != (maxima.shape[0],):
            raise ShapeError("one length per sample is required")
        pad = np.arange(maxima.shape[1])[None, :] >= lengths[:, None]
        maxima = np.where(pad, 1.0, maxima)
    if rule == "product":
        return np.prod(maxima, axis=1)
    return maxima.min(axis=1)


@dataclass(frozen=True)
class ImagePair:
    """Reference and restored images of equal shape with values in [0, 1]."""

    reference: np.ndarray = field(repr=False)
    restored: np.ndarray = field(repr=False)

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=np.float64)
        out = np.asarray(self.restored, dtype=np.float64)
        if ref.shape != out.shape:
            raise ShapeError(
                f"image shapes differ: {ref.shape} vs {out.shape}"
            )
        if ref.ndim not in (2, 3) or (ref.ndim == 3 and ref.shape[2] != 3):
            raise ShapeError(f"expected H x W or H x W x 3, got {ref.shape}")
        for image in (ref, out):
            if not np.all(np.isfinite(image)):
                raise DomainError("images must be finite")
            if image.min() < 0.0 or image.max() > 1.0:
                raise DomainError("image values must lie in [0, 1]")
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "restored", out)


def psnr(pair: ImagePair) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images.

    Identical images give :data:`PSNR_INFINITY`.
    """
    mse = float(np.mean((pair.reference - pair.restored) ** 2))
    if mse == 0.0:
        return PSNR_INFINITY
    return 10.0 * math.log10(1.0 / mse)


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: int) -> float:
    if a.shape[0] < window or a.shape[1] < window:
        raise ShapeError(
            f"images of shape {a.shape} are smaller than the "
            f"{window}x{window} window"
        )
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


def ssim(pair: ImagePair, window: int = SSIM_WINDOW) -> float:
    """Mean structural similarity over all stride-1 square windows.

    Window statistics use uniform weights and population variances with
    ``k1 = 0.01``, ``k2 = 0.03`` and a unit dynamic range. Colour images
    average the per-channel values.
    """
    if pair.reference.ndim == 2:
        return _ssim_channel(pair.reference, pair.restored, window)
    return float(
        np.mean(
            [
                _ssim_channel(
                    pair.reference[..., c], pair.restored[..., c], window
                )
                for c in range(pair.reference.shape[2])
            ]
        )
    )
