from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import appdirs
import yaml

from ._errors import ConfigurationError
from ._losses import LossSpec
from ._reconstruct import PriorConfig
from ._toytask import TaskConfig

logger = logging.getLogger(__name__)

_DEFAULTS_FILE = Path(__file__).parent / "ncap_lab.yaml"

# Reports land in the platform data directory unless a path is given
_DATA_DIR = Path(appdirs.user_data_dir("ncap-lab", appauthor=False))
_RUNS_DIR = _DATA_DIR / "runs"

REPORT_FORMATS = ("json", "csv")

# Settings that never change results stay out of the config hash
_HASH_EXCLUDED = {("experiment", "output_dir"), ("experiment", "jobs")}


def _load_yaml(path: Path) -> dict:
    """Load a YAML file, returning empty dict if missing or invalid."""
    try:
        with open(path) as f:
            return yaml.safe_load(f) or {}
    except (FileNotFoundError, yaml.YAMLError, OSError):
        return {}


def _read_user_file(path: Path) -> dict:
    """Load an experiment file, raising on anything but a mapping."""
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except FileNotFoundError as e:
        raise ConfigurationError(f"config file not found: {path}") from e
    except (yaml.YAMLError, OSError) as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping of groups")
    return data


def default_output_dir() -> Path:
    return _RUNS_DIR


def prepare_output_dir(path: str | Path) -> Path:
    """Create ``path`` with its parents, or raise ``ConfigurationError``."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise ConfigurationError(f"output path {path} is not a directory")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(
            f"cannot create output directory {path}: {e}"
        ) from e
    return path


class SettingsGroup:
    """Simple container for settings in a group."""


class Settings:
    """Experiment settings: packaged defaults overlaid with a user file.

    Every group of the defaults file becomes an attribute holding a
    ``SettingsGroup`` (``settings.task.alphabet_size``). A user file may
    give plain values (``task: {epochs: 5}``) or the full
    ``value``/``default`` form; only values are taken from it.
    """

    def __init__(
        self,
        defaults_file: str | Path | None = None,
        config_file: str | Path | None = None,
    ):
        """Initialize settings.

        Parameters
        ----------
        defaults_file : str or Path, optional
            YAML file with ``value``/``default``/``tooltip`` entries.
            The packaged ``ncap_lab.yaml`` when omitted.
        config_file : str or Path, optional
            User experiment file overlaid on the defaults.
        """
        self._defaults_path = (
            Path(defaults_file) if defaults_file else _DEFAULTS_FILE
        )
        self._config_path = Path(config_file) if config_file else None
        self._grouped_settings: dict = {}
        self._load()

    @property
    def config_path(self) -> Path | None:
        return self._config_path

    def _load(self):
        all_settings = _load_yaml(self._defaults_path)
        if not all_settings:
            logger.warning(
                "No default settings found at %s", self._defaults_path
            )
        if self._config_path is not None:
            user = _read_user_file(self._config_path)
            all_settings = self._merge_with_user(all_settings, user)
        self._build_groups(all_settings)
        self._grouped_settings = all_settings

    def _merge_with_user(self, defaults: dict, user: dict) -> dict:
        """Overlay user values onto a copy of the defaults."""
        merged = copy.deepcopy(defaults)
        for group_name, group_settings in user.items():
            if group_name not in merged:
                raise ConfigurationError(
                    f"unknown settings group {group_name!r} in "
                    f"{self._config_path}"
                )
            if not isinstance(group_settings, dict):
                raise ConfigurationError(
                    f"group {group_name!r} must be a mapping"
                )
            for name, data in group_settings.items():
                if name not in merged[group_name]:
                    raise ConfigurationError(
                        f"unknown setting {group_name}.{name} in "
                        f"{self._config_path}"
                    )
                if isinstance(data, dict) and "value" in data:
                    data = data["value"]
                choices = merged[group_name][name].get("choices")
                if choices and data not in choices:
                    raise ConfigurationError(
                        f"{group_name}.{name} must be one of {choices}, "
                        f"got {data!r}"
                    )
                merged[group_name][name]["value"] = data
        return merged

    def _build_groups(self, settings: dict):
        """Create SettingsGroup objects from settings dict."""
        for group_name, group_settings in settings.items():
            if not isinstance(group_settings, dict):
                continue
            group_obj = SettingsGroup()
            for name, setting_data in group_settings.items():
                if isinstance(setting_data, dict) and "value" in setting_data:
                    setattr(group_obj, name, setting_data["value"])
            setattr(self, group_name, group_obj)

    def _sync_groups_to_dict(self):
        """Sync current group object values back to _grouped_settings dict."""
        for group_name, group_settings in self._grouped_settings.items():
            group_obj = getattr(self, group_name, None)
            if isinstance(group_obj, SettingsGroup):
                for setting_name in group_settings:
                    if hasattr(group_obj, setting_name):
                        value = getattr(group_obj, setting_name)
                        self._grouped_settings[group_name][setting_name][
                            "value"
                        ] = value

    def values(self) -> dict[str, dict[str, Any]]:
        """Resolved ``{group: {name: value}}`` mapping."""
        self._sync_groups_to_dict()
        return {
            group_name: {
                name: data["value"] for name, data in group_settings.items()
            }
            for group_name, group_settings in self._grouped_settings.items()
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the resolved values.

        The output directory and worker count are left out.
        """
        values = {
            group: {
                name: value
                for name, value in settings.items()
                if (group, name) not in _HASH_EXCLUDED
            }
            for group, settings in self.values().items()
        }
        canonical = json.dumps(values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def save(self, path: str | Path) -> Path:
        """Write the resolved settings, in the defaults-file format."""
        self._sync_groups_to_dict()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(
                self._grouped_settings,
                f,
                default_flow_style=False,
                sort_keys=False,
            )
        return path

    def reset_to_default(
        self, setting_name: str | None = None, group: str | None = None
    ):
        """Reset a setting (or all settings) to their default values."""
        for group_name, group_settings in self._grouped_settings.items():
            if group and group_name != group:
                continue
            for name, setting_data in group_settings.items():
                if setting_name and name != setting_name:
                    continue
                if "default" in setting_data:
                    default = copy.deepcopy(setting_data["default"])
                    setattr(getattr(self, group_name), name, default)
                    setting_data["value"] = default


@dataclass(frozen=True)
class GradcheckConfig:
    step: float = 1e-6
    threshold: float = 1e-5
    mae_threshold: float = 1e-4
    mae_margin: float = 0.2
    instances: int = 3

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigurationError(f"step must be positive: {self.step}")
        if self.instances < 1:
            raise ConfigurationError("gradcheck instances must be >= 1")
        if self.mae_margin <= 0:
            raise ConfigurationError("mae_margin must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of resolved settings, as consumed by the commands."""

    task: TaskConfig
    losses: tuple[LossSpec, ...]
    seeds: tuple[int, ...]
    output_dir: Path
    report_formats: tuple[str, ...]
    jobs: int = 1
    save_checkpoints: bool = False
    sweep_sigmas: tuple[float, ...] = (0.0, 0.2, 0.4, 0.8)
    sweep_loss: LossSpec = LossSpec("ce")
    word_confidence_rule: str = "product"
    histogram_bins: int = 20
    gradcheck: GradcheckConfig = GradcheckConfig()
    prior: PriorConfig = PriorConfig()
    config_hash: str = ""


def parse_seeds(value) -> tuple[int, ...]:
    """A replicate count ``n`` (seeds ``0..n-1``) or an explicit list.

    Strings such as ``"10"`` or ``"0,3,7"`` from the command line are
    accepted too.
    """
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        try:
            numbers = [int(p) for p in parts]
        except ValueError as e:
            raise ConfigurationError(f"invalid seeds {value!r}") from e
        value = numbers if "," in value else (numbers or [0])[0]
    if isinstance(value, bool):
        raise ConfigurationError(f"invalid seeds {value!r}")
    if isinstance(value, int):
        if value < 1:
            raise ConfigurationError("seed count must be >= 1")
        return tuple(range(value))
    if isinstance(value, list | tuple):
        if not value or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in value
        ):
            raise ConfigurationError(
                f"seeds must be a non-empty list of integers, got {value!r}"
            )
        return tuple(value)
    raise ConfigurationError(f"invalid seeds {value!r}")


def parse_formats(value) -> tuple[str, ...]:
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    formats = tuple(value or ())
    unknown = set(formats) - set(REPORT_FORMATS)
    if not formats or unknown:
        raise ConfigurationError(
            f"report formats must be a non-empty subset of {REPORT_FORMATS}"
        )
    return formats


def experiment_config(settings: Settings) -> ExperimentConfig:
    """Validate resolved settings into an ``ExperimentConfig``."""
    values = settings.values()
    experiment = values.get("experiment", {})
    report = values.get("report", {})
    try:
        losses = tuple(
            LossSpec.from_mapping(entry)
            for entry in experiment.get("losses", ())
        )
        if not losses:
            raise ConfigurationError("at least one loss is required")
        output_dir = experiment.get("output_dir")
        return ExperimentConfig(
            task=TaskConfig.from_mapping(values.get("task", {})),
            losses=losses,
            seeds=parse_seeds(experiment.get("seeds", 1)),
            output_dir=Path(output_dir) if output_dir else _RUNS_DIR,
            report_formats=parse_formats(
                report.get("formats", REPORT_FORMATS)
            ),
            jobs=int(experiment.get("jobs", 1)),
            save_checkpoints=bool(experiment.get("save_checkpoints", False)),
            sweep_sigmas=tuple(
                float(s) for s in experiment.get("sweep_sigmas", ())
            ),
            sweep_loss=LossSpec.from_mapping(
                experiment.get("sweep_loss", "ce")
            ),
            word_confidence_rule=report.get("word_confidence_rule", "product"),
            histogram_bins=int(report.get("histogram_bins", 20)),
            gradcheck=GradcheckConfig(**values.get("gradcheck", {})),
            prior=PriorConfig.from_mapping(values.get("prior", {})),
            config_hash=settings.config_hash(),
        )
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid settings: {e}") from e


def load_experiment_config(
    path: str | Path | None = None,
) -> tuple[Settings, ExperimentConfig]:
    """Resolve the defaults plus an optional experiment file."""
    settings = Settings(config_file=path)
    return settings, experiment_config(settings)
