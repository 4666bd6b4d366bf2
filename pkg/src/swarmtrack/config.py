"""Run configuration: one INI section per subsystem, strict key checking.

Unknown sections or keys are hard errors so a typo cannot silently fall back
to a default. The resolved bundle hashes to a stable content id used to pair
checkpoints with the configuration they were trained under.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .crlb import RadarFactors
from .errors import ConfigInvalid
from .mappo import TrainConfig
from .repair import SaConfig
from .scenario import ScenarioConfig
from .tracking import TrackerConfig


@dataclass
class ExperimentConfig:
    smooth_window: int = 50
    eval_episodes: int = 10

    def __post_init__(self):
        if self.smooth_window < 1:
            raise ConfigInvalid("smooth_window must be >= 1")


@dataclass
class RunBundle:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    factors: RadarFactors = field(default_factory=RadarFactors)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    sa: SaConfig = field(default_factory=SaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)


_SECTIONS = {
    "scenario": ScenarioConfig,
    "factors": RadarFactors,
    "tracker": TrackerConfig,
    "sa": SaConfig,
    "train": TrainConfig,
    "experiment": ExperimentConfig,
}


def _convert(raw: str, default):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def default_bundle() -> RunBundle:
    return RunBundle()


def load_config(path) -> RunBundle:
    """Parse an INI file into a RunBundle; absent keys keep their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc

    kwargs_by_section: dict = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigInvalid(
                f"unknown section [{section}]; expected one of {sorted(_SECTIONS)}"
            )
        cls = _SECTIONS[section]
        defaults = {f.name: f.default for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigInvalid(f"unknown key '{key}' in section [{section}]")
            try:
                kwargs[key] = _convert(raw, defaults[key])
            except ValueError as exc:
                raise ConfigInvalid(f"bad value for [{section}] {key}: {exc}") from exc
        kwargs_by_section[section] = kwargs

    scenario_kwargs = kwargs_by_section.get("scenario", {})
    try:
        scenario = ScenarioConfig(**scenario_kwargs)
        sa_kwargs = kwargs_by_section.get("sa", {})
        # annealing proposal std tracks the mobility limit unless pinned
        sa_kwargs.setdefault("neighbor_move_std", scenario.d0 / 2.0)
        tracker_kwargs = kwargs_by_section.get("tracker", {})
        # tracker process noise follows the target drive noise unless pinned
        tracker_kwargs.setdefault("process_noise_std", scenario.drive_noise_std)
        bundle = RunBundle(
            scenario=scenario,
            factors=RadarFactors(**kwargs_by_section.get("factors", {})),
            tracker=TrackerConfig(**tracker_kwargs),
            sa=SaConfig(**sa_kwargs),
            train=TrainConfig(**kwargs_by_section.get("train", {})),
            experiment=ExperimentConfig(**kwargs_by_section.get("experiment", {})),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    return bundle


def bundle_to_dict(bundle: RunBundle) -> dict:
    return {name: dataclasses.asdict(getattr(bundle, name)) for name in _SECTIONS}


def config_hash(bundle: RunBundle) -> str:
    """Content hash of the resolved configuration (hex sha256)."""
    canon = json.dumps(bundle_to_dict(bundle), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def dump_config(bundle: RunBundle) -> str:
    """Render the resolved bundle back to INI text (every key explicit)."""
    parser = configparser.ConfigParser()
    for name in _SECTIONS:
        parser[name] = {
            k: str(v).lower() if isinstance(v, bool) else repr(v)
            for k, v in dataclasses.asdict(getattr(bundle, name)).items()
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
