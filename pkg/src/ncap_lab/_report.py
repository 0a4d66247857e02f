"""Report types and their JSON/CSV serialization.

CSV schemas
-----------
``comparison.csv``
    loss, seed, status, accuracy, char_accuracy, wer, cer, ece_word,
    ece_char, mce_char, mean_confidence, confidence_std, message
``reliability_<loss>.csv``
    level, bin_low, bin_high, mean_conf, accuracy, count
``confidence_hist_<loss>.csv``
    bin_low, bin_high, count
``prior_analysis.csv``
    seed, prior, corruption, prior_wer, prior_cer, output_wer,
    output_cer, pearson_wer, pearson_cer, pearson_wer_reason,
    pearson_cer_reason

Floats are written at full ``repr`` precision so files parse back
without loss; a missing value is an empty cell (``null`` in JSON).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ._errors import ConfigurationError
from ._metrics import ConfidenceHistogram, ReliabilityReport

logger = logging.getLogger(__name__)

ROW_METRICS = (
    "accuracy",
    "char_accuracy",
    "wer",
    "cer",
    "ece_word",
    "ece_char",
    "mce_char",
    "mean_confidence",
    "confidence_std",
)
PRIOR_METRICS = (
    "prior_wer",
    "prior_cer",
    "output_wer",
    "output_cer",
    "pearson_wer",
    "pearson_cer",
)
RELIABILITY_COLUMNS = (
    "level",
    "bin_low",
    "bin_high",
    "mean_conf",
    "accuracy",
    "count",
)


@dataclass(frozen=True)
class ComparisonRow:
    """Test-set metrics of one student for one (loss, seed) replicate."""

    loss: str
    seed: int
    status: str = "ok"
    accuracy: float | None = None
    char_accuracy: float | None = None
    wer: float | None = None
    cer: float | None = None
    ece_word: float | None = None
    ece_char: float | None = None
    mce_char: float | None = None
    mean_confidence: float | None = None
    confidence_std: float | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class ComparisonReport:
    """Rows per (loss, seed) plus pooled reliability and histogram data."""

    rows: tuple[ComparisonRow, ...]
    reliability: dict[str, tuple[ReliabilityReport, ReliabilityReport]] = (
        field(default_factory=dict, repr=False)
    )
    histograms: dict[str, ConfidenceHistogram] = field(
        default_factory=dict, repr=False
    )
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def losses(self) -> list[str]:
        return list(dict.fromkeys(row.loss for row in self.rows))

    @property
    def failed_rows(self) -> list[ComparisonRow]:
        return [row for row in self.rows if not row.ok]

    @property
    def aggregates(self) -> dict[str, dict[str, dict[str, float | None]]]:
        return aggregate_rows(self.rows, ROW_METRICS, key="loss")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "metadata": self.metadata,
            "aggregates": self.aggregates,
            "rows": [asdict(row) for row in self.rows],
            "reliability": {
                loss: [_reliability_dict(r) for r in reports]
                for loss, reports in self.reliability.items()
            },
            "confidence_histograms": {
                loss: {"edges": list(h.edges), "counts": list(h.counts)}
                for loss, h in self.histograms.items()
            },
        }


@dataclass(frozen=True)
class PriorAnalysisRow:
    """Error propagation from one prior type for one seed."""

    seed: int
    prior: str
    corruption: float
    prior_wer: float
    prior_cer: float
    output_wer: float
    output_cer: float
    pearson_wer: float | None = None
    pearson_cer: float | None = None
    pearson_wer_reason: str = ""
    pearson_cer_reason: str = ""


@dataclass(frozen=True)
class PriorAnalysisReport:
    rows: tuple[PriorAnalysisRow, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def aggregates(self) -> dict[str, dict[str, dict[str, float | None]]]:
        return aggregate_rows(self.rows, PRIOR_METRICS, key="prior")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "metadata": self.metadata,
            "aggregates": self.aggregates,
            "rows": [asdict(row) for row in self.rows],
        }


def aggregate_rows(
    rows: Iterable, metrics: Sequence[str], key: str
) -> dict[str, dict[str, dict[str, float | None]]]:
    """Mean and population standard deviation of each metric per group.

    Missing values (failed rows, undefined correlations) are skipped; a
    metric with no values at all aggregates to ``None``.
    """
    grouped: dict[str, list] = {}
    for row in rows:
        grouped.setdefault(getattr(row, key), []).append(row)
    out = {}
    for name, members in grouped.items():
        stats = {}
        for metric in metrics:
            values = [
                getattr(r, metric)
                for r in members
                if getattr(r, metric) is not None
            ]
            if values:
                stats[metric] = {
                    "mean": float(np.mean(values)),
                    "std": float(np.std(values)),
                    "n": len(values),
                }
            else:
                stats[metric] = {"mean": None, "std": None, "n": 0}
        out[name] = stats
    return out


def _reliability_dict(report: ReliabilityReport) -> dict[str, Any]:
    return {
        "level": report.level,
        "n_bins": report.n_bins,
        "ece": report.ece,
        "mce": report.mce,
        "bins": [asdict(b) for b in report.bins],
    }


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _optional_float(text: str) -> float | None:
    return None if text == "" else float(text)


def atomic_write_text(path: Path, text: str) -> Path:
    """Write ``text`` to a sibling temp file, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)
    return path


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def _json_text(data: dict[str, Any]) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def _row_values(row) -> list:
    return [getattr(row, f.name) for f in fields(row)]


def comparison_csv_text(rows: Sequence[ComparisonRow]) -> str:
    header = [f.name for f in fields(ComparisonRow)]
    return _csv_text(header, (_row_values(r) for r in rows))


def reliability_csv_text(reports: Sequence[ReliabilityReport]) -> str:
    return _csv_text(
        RELIABILITY_COLUMNS,
        (
            [r.level, b.low, b.high, b.mean_conf, b.accuracy, b.count]
            for r in reports
            for b in r.bins
        ),
    )


def histogram_csv_text(histogram: ConfidenceHistogram) -> str:
    edges = histogram.edges
    return _csv_text(
        ("bin_low", "bin_high", "count"),
        (
            [edges[i], edges[i + 1], count]
            for i, count in enumerate(histogram.counts)
        ),
    )


def _read_csv(path: Path, expected_header: Sequence[str]) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != list(expected_header):
                raise ConfigurationError(
                    f"{path} has columns {reader.fieldnames}, expected "
                    f"{list(expected_header)}"
                )
            return list(reader)
    except FileNotFoundError as e:
        raise ConfigurationError(f"report file not found: {path}") from e


def read_comparison_csv(path: Path | str) -> list[ComparisonRow]:
    """Parse ``comparison.csv`` back into rows."""
    header = [f.name for f in fields(ComparisonRow)]
    rows = []
    for record in _read_csv(Path(path), header):
        try:
            rows.append(
                ComparisonRow(
                    loss=record["loss"],
                    seed=int(record["seed"]),
                    status=record["status"],
                    message=record["message"],
                    **{
                        m: _optional_float(record[m]) for m in ROW_METRICS
                    },
                )
            )
        except ValueError as e:
            raise ConfigurationError(f"malformed row in {path}: {e}") from e
    return rows


def prior_csv_text(rows: Sequence[PriorAnalysisRow]) -> str:
    header = [f.name for f in fields(PriorAnalysisRow)]
    return _csv_text(header, (_row_values(r) for r in rows))


def read_prior_csv(path: Path | str) -> list[PriorAnalysisRow]:
    header = [f.name for f in fields(PriorAnalysisRow)]
    rows = []
    for record in _read_csv(Path(path), header):
        try:
            rows.append(
                PriorAnalysisRow(
                    seed=int(record["seed"]),
                    prior=record["prior"],
                    corruption=float(record["corruption"]),
                    pearson_wer_reason=record["pearson_wer_reason"],
                    pearson_cer_reason=record["pearson_cer_reason"],
                    **{
                        m: (
                            _optional_float(record[m])
                            if m.startswith("pearson")
                            else float(record[m])
                        )
                        for m in PRIOR_METRICS
                    },
                )
            )
        except ValueError as e:
            raise ConfigurationError(f"malformed row in {path}: {e}") from e
    return rows


def write_comparison(
    report: ComparisonReport, out_dir: Path, formats: Sequence[str]
) -> list[Path]:
    """Write the comparison tables and per-loss plot data."""
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(
            atomic_write_text(
                out_dir / "comparison.json", _json_text(report.to_json_dict())
            )
        )
    if "csv" in formats:
        written.append(
            atomic_write_text(
                out_dir / "comparison.csv", comparison_csv_text(report.rows)
            )
        )
    for loss, reports in report.reliability.items():
        written.append(
            atomic_write_text(
                out_dir / f"reliability_{loss}.csv",
                reliability_csv_text(reports),
            )
        )
    for loss, histogram in report.histograms.items():
        written.append(
            atomic_write_text(
                out_dir / f"confidence_hist_{loss}.csv",
                histogram_csv_text(histogram),
            )
        )
    logger.info("Wrote %d report files to %s", len(written), out_dir)
    return written


def write_prior_analysis(
    report: PriorAnalysisReport, out_dir: Path, formats: Sequence[str]
) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(
            atomic_write_text(
                out_dir / "prior_analysis.json",
                _json_text(report.to_json_dict()),
            )
        )
    if "csv" in formats:
        written.append(
            atomic_write_text(
                out_dir / "prior_analysis.csv", prior_csv_text(report.rows)
            )
        )
    logger.info("Wrote %d report files to %s", len(written), out_dir)
    return written


def write_rows(
    name: str,
    rows: Sequence,
    out_dir: Path,
    formats: Sequence[str],
    metadata: dict[str, Any],
) -> list[Path]:
    """Write flat dataclass rows as ``<name>.json`` and/or ``<name>.csv``."""
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        written.append(
            atomic_write_text(
                out_dir / f"{name}.json",
                _json_text(
                    {"metadata": metadata, "rows": [asdict(r) for r in rows]}
                ),
            )
        )
    if "csv" in formats and rows:
        header = [f.name for f in fields(rows[0])]
        written.append(
            atomic_write_text(
                out_dir / f"{name}.csv",
                _csv_text(header, (_row_values(r) for r in rows)),
            )
        )
    return written


def write_aggregates(
    aggregates: dict[str, Any], path: Path, metadata: dict[str, Any]
) -> Path:
    return atomic_write_text(
        path, _json_text({"metadata": metadata, "aggregates": aggregates})
    )
