"""
Run configuration.

A run is described by one YAML document; environment variables prefixed
``NRCC_`` override it and command-line flags override both. Relative paths
are resolved against the directory of the YAML document.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from adoption.bass import DEFAULT_HORIZON
from adoption.ensemble import DEFAULT_ENSEMBLE_SIZE
from grid.errors import ConfigError
from nrcc.sweep import DEFAULT_BUDGET_COUNT, DEFAULT_BUDGET_MULTIPLE
from planning.backends import BACKENDS, DEFAULT_MIP_GAP, SolverSettings
from planning.models import DEFAULT_WEIGHT_W, MODES

logger = logging.getLogger(__name__)

ENV_PREFIX = "NRCC_"
DEFAULT_OUT = "results"
DEFAULT_DAYS = 365

# environment variable -> (section, field, type)
ENV_OVERRIDES = {
    "SEED": (None, "seed", int),
    "OUT": (None, "out", str),
    "JOBS": (None, "jobs", int),
    "FEEDER": (None, "feeder", str),
    "MIP_GAP": ("solver", "mip_gap", float),
    "TIME_LIMIT": ("solver", "time_limit", float),
    "BACKEND": ("solver", "backend", str),
    "ENSEMBLE_SIZE": ("scenarios", "ensemble_size", int),
    "BUDGET": ("plan", "budget", float),
    "WEIGHT_W": ("nrcc", "weight_w", float),
}
# excluded from the config hash
UNHASHED = {"out", "jobs", "verbose", "source"}


@dataclass(frozen=True)
class SolverConfig:
    backend: str = "highs"
    mip_gap: float = DEFAULT_MIP_GAP
    time_limit: float | None = None
    threads: int | None = None
    verbose: bool = False

    def settings(self):
        return SolverSettings(mip_gap=self.mip_gap, time_limit=self.time_limit,
                              verbose=self.verbose, threads=self.threads)


@dataclass(frozen=True)
class ScenarioConfig:
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    p_innov: float = 0.01
    q_imit: float = 0.4
    dt: float = 1.0 / 12.0
    horizon: float = DEFAULT_HORIZON
    load_growth_rates: tuple = (0.02, 0.03, 0.04)
    mms_probability: float = 1.0
    economics: dict = field(default_factory=dict)
    base_days: int = DEFAULT_DAYS
    scenario_file: str | None = None
    heldout_file: str | None = None


@dataclass(frozen=True)
class PlanConfig:
    mode: str = "scenario"
    budget: float | None = None
    weight_w: float = DEFAULT_WEIGHT_W
    expected_peaks: tuple | None = None


@dataclass(frozen=True)
class NrccConfig:
    budgets: tuple = ()
    budget_count: int = DEFAULT_BUDGET_COUNT
    budget_multiple: float = DEFAULT_BUDGET_MULTIPLE
    weight_w: float = DEFAULT_WEIGHT_W
    expected_peaks: tuple | None = None  # (direct, reverse) MW; derived when unset
    heldout: int = 0  # held-out scenarios per budget point, 0 skips the dispersion


@dataclass(frozen=True)
class ValidateConfig:
    plan_file: str | None = None
    loading_threshold: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    feeder: str | None = None
    base_timeseries: str | None = None
    pv_profile: str | None = None
    seed: int = 0
    out: str = DEFAULT_OUT
    jobs: int | None = None
    verbose: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    nrcc: NrccConfig = field(default_factory=NrccConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    source: str | None = None

    def __post_init__(self):
        if self.solver.backend not in BACKENDS:
            raise ConfigError(f"unknown solver backend {self.solver.backend!r} (choose from {sorted(BACKENDS)})")
        if not 0 <= self.solver.mip_gap < 1:
            raise ConfigError(f"mip_gap must lie in [0, 1), got {self.solver.mip_gap}")
        if self.solver.time_limit is not None and self.solver.time_limit <= 0:
            raise ConfigError("time_limit must be positive")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.plan.mode not in MODES:
            raise ConfigError(f"unknown planning mode {self.plan.mode!r} (choose from {', '.join(MODES)})")
        for section in (self.plan, self.nrcc):
            if not 0.0 <= section.weight_w <= 1.0:
                raise ConfigError(f"weight_w must lie in [0, 1], got {section.weight_w}")
        if not 0.0 <= self.scenarios.mms_probability <= 1.0:
            raise ConfigError("mms_probability must lie in [0, 1]")

    def path(self, value):
        """Resolve a configured path against the config document's directory."""
        if value is None:
            return None
        path = Path(value).expanduser()
        if not path.is_absolute() and self.source:
            path = Path(self.source).parent / path
        return path

    @property
    def out_dir(self):
        return Path(self.out)


SECTIONS = {
    "solver": SolverConfig,
    "scenarios": ScenarioConfig,
    "plan": PlanConfig,
    "nrcc": NrccConfig,
    "validate": ValidateConfig,
}
TUPLE_FIELDS = {"load_growth_rates", "budgets", "expected_peaks"}


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(sorted(unknown))}")
    values = {k: tuple(v) if k in TUPLE_FIELDS and v is not None else v for k, v in data.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from exc


def from_dict(data, source=None):
    data = dict(data or {})
    sections = {name: _section(cls, data.pop(name, None), name) for name, cls in SECTIONS.items()}
    known = {f.name for f in fields(RunConfig)} - set(SECTIONS) - {"source"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return RunConfig(**data, **sections, source=source)


def _apply(config, section, name, value):
    if section is None:
        return replace(config, **{name: value})
    return replace(config, **{section: replace(getattr(config, section), **{name: value})})


def apply_env(config, env=None):
    env = os.environ if env is None else env
    for key, (section, name, kind) in ENV_OVERRIDES.items():
        raw = env.get(ENV_PREFIX + key)
        if raw is None or raw == "":
            continue
        try:
            value = kind(raw)
        except ValueError as exc:
            raise ConfigError(f"{ENV_PREFIX}{key}={raw!r} is not a valid {kind.__name__}") from exc
        logger.debug("Override from environment: %s%s=%s", ENV_PREFIX, key, raw)
        config = _apply(config, section, name, value)
    return config


def apply_overrides(config, overrides):
    """``overrides`` maps "section.field" or "field" to a value; None values are skipped."""
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        config = _apply(config, section or None, name, value)
    return config


def load_config(path=None, env=None, overrides=None):
    """
    Build a RunConfig from a YAML document, the environment and flag overrides.

    Raises:
        ConfigError: unreadable document, unknown keys or invalid values
    """
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must hold a mapping at the top level")
    config = from_dict(data, source=str(path) if path is not None else None)
    config = apply_env(config, env)
    return apply_overrides(config, overrides or {})


def required_paths(config, command):
    paths = {"feeder": config.feeder}
    if config.base_timeseries is not None or config.pv_profile is not None:
        paths["base_timeseries"] = config.base_timeseries
        paths["pv_profile"] = config.pv_profile
    if command in ("plan", "nrcc", "validate") and config.scenarios.scenario_file is not None:
        paths["scenarios.scenario_file"] = config.scenarios.scenario_file
    if command == "nrcc" and config.nrcc.heldout and config.scenarios.heldout_file is not None:
        paths["scenarios.heldout_file"] = config.scenarios.heldout_file
    if command == "validate":
        paths["validate.plan_file"] = config.validate.plan_file
    return paths


def check_paths(config, command):
    """
    Raises:
        ConfigError: a path the command reads is unset or does not exist
    """
    missing = []
    for name, value in required_paths(config, command).items():
        if value is None:
            missing.append(f"{name} is not set")
        elif not config.path(value).exists():
            missing.append(f"{name}: {config.path(value)} does not exist")
    if missing:
        raise ConfigError(f"cannot run {command!r}: " + "; ".join(missing))


def _file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical(config, command=None):
    """Semantically relevant config as a plain dict, file paths replaced by content hashes."""
    data = {k: v for k, v in asdict(config).items() if k not in UNHASHED}
    data["solver"] = {k: v for k, v in data["solver"].items() if k not in UNHASHED}
    for key in ("feeder", "base_timeseries", "pv_profile"):
        data[key] = _path_token(config, data[key])
    for key in ("scenario_file", "heldout_file"):
        data["scenarios"][key] = _path_token(config, data["scenarios"][key])
    data["validate"]["plan_file"] = _path_token(config, data["validate"]["plan_file"])
    if command is not None:
        data["command"] = command
    return data


def _path_token(config, value):
    if value is None:
        return None
    path = config.path(value)
    return f"sha256:{_file_digest(path)}" if path.is_file() else f"missing:{Path(value).name}"


def config_hash(config, command=None):
    text = json.dumps(canonical(config, command), sort_keys=True, default=list)
    return hashlib.sha256(text.encode()).hexdigest()
