"""Command-line interface for ncap-lab experiments.

Exit status: 0 on success, 1 when part of an experiment failed (a
diverged run, a gradient check above threshold), 2 for usage or
configuration errors, including an output directory that cannot be
created.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._checkpoint import save_checkpoint
from ._errors import ConfigurationError, NcapError, TrainingDivergedError
from ._losses import LOSS_NAMES, LossSpec
from ._numcore import central_difference, make_rng, max_relative_error
from ._prior import init_adapter, ncap_backward, ncap_forward
from ._reconstruct import run_prior_analysis
from ._report import (
    ROW_METRICS,
    ComparisonReport,
    PriorAnalysisReport,
    aggregate_rows,
    read_comparison_csv,
    write_aggregates,
    write_comparison,
    write_prior_analysis,
    write_rows,
)
from ._settings import (
    ExperimentConfig,
    Settings,
    experiment_config,
    parse_formats,
    parse_seeds,
    prepare_output_dir,
)
from ._toytask import (
    Sample,
    build_comparison,
    gradcheck_recognizer,
    init_recognizer,
    noise_sweep,
    recognizer_forward,
    run_seeds,
)
from ._version import version

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

_STREAM_GRADCHECK = 21


def _metadata(cfg: ExperimentConfig, command: str) -> dict:
    return {
        "command": command,
        "config_hash": cfg.config_hash,
        "tool_version": version,
        "seeds": list(cfg.seeds),
        "losses": [loss.to_mapping() for loss in cfg.losses],
    }


def _load(args, writes: bool = True) -> tuple[Settings, ExperimentConfig]:
    """Resolve settings, applying command-line overrides before hashing.

    Commands that write reports get their output directory created here,
    before any training starts.
    """
    settings = Settings(config_file=args.config)
    if getattr(args, "seeds", None) is not None:
        settings.experiment.seeds = list(parse_seeds(args.seeds))
    if getattr(args, "format", None) is not None:
        settings.report.formats = list(parse_formats(args.format))
    if getattr(args, "jobs", None) is not None:
        settings.experiment.jobs = args.jobs
    if getattr(args, "out", None) is not None:
        settings.experiment.output_dir = str(args.out)
    cfg = experiment_config(settings)
    if writes:
        prepare_output_dir(cfg.output_dir)
    return settings, cfg


def _format_value(value) -> str:
    return "-" if value is None else f"{value:.4f}"


def _print_aggregates(aggregates: dict, metrics) -> None:
    print("group".ljust(16) + "".join(m.rjust(17) for m in metrics))
    for group, stats in aggregates.items():
        cells = [
            f"{_format_value(stats[m]['mean'])}±"
            f"{_format_value(stats[m]['std'])}"
            for m in metrics
        ]
        print(group.ljust(16) + "".join(c.rjust(17) for c in cells))


def _gradcheck_instance(cfg: ExperimentConfig, loss: LossSpec, index: int):
    task = cfg.task
    rng = make_rng(
        task.seed, _STREAM_GRADCHECK, LOSS_NAMES.index(loss.name), index
    )
    params = init_recognizer(task, rng)
    shape = (task.sequence_length, task.feature_dim)
    features = rng.normal(0.0, 1.0, size=shape)
    sample = Sample(
        features=features,
        clean=features,
        labels=rng.integers(0, task.alphabet_size, task.sequence_length),
    )
    _, logits = recognizer_forward(features, params)
    if loss.has_mae:
        margin = cfg.gradcheck.mae_margin
        offset = rng.uniform(margin, 2 * margin, size=logits.shape)
        signs = rng.choice([-1.0, 1.0], size=logits.shape)
        teacher = logits + signs * offset
    else:
        teacher = rng.normal(0.0, 1.0, size=logits.shape)
    return params, sample, teacher


def _adapter_gradcheck(cfg: ExperimentConfig, index: int) -> float:
    task = cfg.task
    rng = make_rng(task.seed, _STREAM_GRADCHECK, len(LOSS_NAMES), index)
    params = init_adapter(
        rng, task.embed_dim, task.prior_dim, cfg.prior.use_bias
    )
    h = rng.normal(0.0, 1.0, size=(task.sequence_length, task.embed_dim))
    upstream = rng.normal(
        0.0, 1.0, size=(task.sequence_length, task.prior_dim)
    )
    grads = ncap_backward(h, params, upstream)
    step = cfg.gradcheck.step
    errors = [
        max_relative_error(
            grads.h,
            central_difference(
                lambda x: float(np.sum(ncap_forward(x, params) * upstream)),
                h,
                step,
            ),
        )
    ]
    for name in ("W1", "W2"):

        def objective(value, name=name):
            probe = replace(params, **{name: value})
            return float(np.sum(ncap_forward(h, probe) * upstream))

        errors.append(
            max_relative_error(
                getattr(grads, name),
                central_difference(objective, getattr(params, name), step),
            )
        )
    for name in ("slope1", "slope2"):

        def objective(value, name=name):
            probe = replace(params, **{name: float(value[0])})
            return float(np.sum(ncap_forward(h, probe) * upstream))

        errors.append(
            max_relative_error(
                [getattr(grads, name)],
                central_difference(
                    objective, [getattr(params, name)], step
                ),
            )
        )
    return max(errors)


def cmd_gradcheck(args) -> int:
    """Check every loss variant and the adapter against finite differences."""
    _, cfg = _load(args, writes=False)
    gc = cfg.gradcheck
    failed = False
    print(f"{'target':<16}{'max_rel_error':>16}{'threshold':>12}  status")
    for name in LOSS_NAMES:
        loss = next(
            (spec for spec in cfg.losses if spec.name == name),
            LossSpec(name),
        )
        worst = 0.0
        for index in range(gc.instances):
            params, sample, teacher = _gradcheck_instance(cfg, loss, index)
            worst = max(
                worst,
                gradcheck_recognizer(params, sample, loss, teacher, gc.step),
            )
        threshold = gc.mae_threshold if loss.has_mae else gc.threshold
        ok = worst < threshold
        failed |= not ok
        print(
            f"{name:<16}{worst:>16.3e}{threshold:>12.0e}  "
            f"{'ok' if ok else 'FAIL'}"
        )
    worst = max(_adapter_gradcheck(cfg, i) for i in range(gc.instances))
    ok = worst < gc.threshold
    failed |= not ok
    print(
        f"{'ncap_adapter':<16}{worst:>16.3e}{gc.threshold:>12.0e}  "
        f"{'ok' if ok else 'FAIL'}"
    )
    return EXIT_PARTIAL if failed else EXIT_OK


def _save_run_checkpoints(runs, out_dir: Path) -> None:
    for run in runs:
        seed_dir = out_dir / "checkpoints" / f"seed{run.seed}"
        if run.teacher is not None:
            save_checkpoint(run.teacher, seed_dir / "teacher.ckpt")
        for loss, params in run.students.items():
            save_checkpoint(params, seed_dir / f"{loss}.ckpt")


def cmd_compare(args) -> int:
    """Train the teacher and one student per loss for every seed."""
    settings, cfg = _load(args)
    runs = run_seeds(
        cfg.task,
        cfg.losses,
        cfg.seeds,
        cfg.jobs,
        cfg.word_confidence_rule,
        cfg.histogram_bins,
    )
    report: ComparisonReport = build_comparison(
        runs, cfg.losses, _metadata(cfg, "compare")
    )
    write_comparison(report, cfg.output_dir, cfg.report_formats)
    settings.save(cfg.output_dir / "config.yaml")
    if cfg.save_checkpoints:
        _save_run_checkpoints(runs, cfg.output_dir)
    _print_aggregates(
        report.aggregates, ("accuracy", "ece_word", "confidence_std")
    )
    for row in report.failed_rows:
        print(f"FAILED loss={row.loss} seed={row.seed}: {row.message}")
    print(f"Reports written to {cfg.output_dir}")
    return EXIT_PARTIAL if report.failed_rows else EXIT_OK


def cmd_prior_analysis(args) -> int:
    """Compare error propagation from the text prior and the adapter."""
    settings, cfg = _load(args)
    rows = []
    failed = []
    for seed in cfg.seeds:
        try:
            rows.extend(run_prior_analysis(cfg.task, cfg.prior, seed))
        except TrainingDivergedError as e:
            logger.warning("Prior analysis for seed %d failed: %s", seed, e)
            failed.append(seed)
    metadata = _metadata(cfg, "prior-analysis")
    metadata["failed_seeds"] = failed
    report = PriorAnalysisReport(rows=tuple(rows), metadata=metadata)
    write_prior_analysis(report, cfg.output_dir, cfg.report_formats)
    settings.save(cfg.output_dir / "config.yaml")
    _print_aggregates(
        report.aggregates, ("prior_cer", "output_cer", "pearson_cer")
    )
    for seed in failed:
        print(f"FAILED seed={seed}")
    print(f"Reports written to {cfg.output_dir}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_sweep(args) -> int:
    """Accuracy of a teacher-free student across lr noise levels."""
    settings, cfg = _load(args)
    points = noise_sweep(cfg.task, cfg.sweep_sigmas, cfg.seeds, cfg.sweep_loss)
    metadata = _metadata(cfg, "sweep")
    metadata["loss"] = cfg.sweep_loss.to_mapping()
    write_rows("sweep", points, cfg.output_dir, cfg.report_formats, metadata)
    settings.save(cfg.output_dir / "config.yaml")
    print(f"{'sigma_lr':>10}{'accuracy':>12}{'std':>10}{'char_acc':>12}")
    for p in points:
        print(
            f"{p.sigma:>10.3f}{p.accuracy:>12.4f}{p.accuracy_std:>10.4f}"
            f"{p.char_accuracy:>12.4f}"
        )
    return EXIT_OK


def cmd_report(args) -> int:
    """Re-aggregate rows of one or more comparison.csv files."""
    rows = []
    sources = []
    for directory in args.inputs:
        path = Path(directory) / "comparison.csv"
        rows.extend(read_comparison_csv(path))
        sources.append(str(path))
    aggregates = aggregate_rows(rows, ROW_METRICS, key="loss")
    out_dir = prepare_output_dir(args.out or args.inputs[0])
    path = write_aggregates(
        aggregates, out_dir / "aggregates.json", {"sources": sources}
    )
    _print_aggregates(aggregates, ("accuracy", "ece_word", "confidence_std"))
    print(f"Aggregates written to {path}")
    return EXIT_OK


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config", type=Path, help="YAML or JSON experiment file"
    )
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument(
        "--seeds", help="replicate count n, or a comma-separated seed list"
    )
    parser.add_argument(
        "--format", help="comma-separated report formats (json,csv)"
    )
    parser.add_argument("--jobs", type=int, help="parallel seed workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncap-lab",
        description=(
            "Loss-family, calibration and prior experiments on a "
            "synthetic sequence recognition task."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {version}"
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for per-epoch detail",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    commands = {
        "gradcheck": (cmd_gradcheck, "check analytic gradients"),
        "compare": (cmd_compare, "compare the loss family"),
        "prior-analysis": (
            cmd_prior_analysis,
            "error propagation of text prior vs adapter",
        ),
        "sweep": (cmd_sweep, "accuracy across lr noise levels"),
    }
    for name, (func, help_text) in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        _add_run_options(cmd)
        cmd.set_defaults(func=func)

    report = sub.add_parser("report", help="re-aggregate comparison rows")
    report.add_argument(
        "--in",
        dest="inputs",
        nargs="+",
        required=True,
        help="directories holding comparison.csv",
    )
    report.add_argument("--out", type=Path, help="output directory")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point for the ncap-lab command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[
        min(args.verbose, 2)
    ]
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NcapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARTIAL
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
