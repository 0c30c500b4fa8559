"""Run configuration for flowcov.

Precedence (first wins):
  1. Flags given on the command line.
  2. `key = value` entries of the config file: --config PATH, else
     $FLOWCOV_CONFIG, else the first flowcov.cfg or .flowcov.cfg in the
     working directory or a parent, not looking past the repository root
     (the directory holding .git, file or dir).
  3. Built-in flag defaults.

Keys are long flag names; dashes and underscores are interchangeable.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
from collections.abc import Iterator
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from flowcov.core.artifacts import read_params
from flowcov.core.errors import ConfigError, ValidationError
from flowcov.core.types import KernelSpec

logger = logging.getLogger(__name__)

CONFIG_NAMES = ('flowcov.cfg', '.flowcov.cfg')
CONFIG_ENV = 'FLOWCOV_CONFIG'
SEED_LIMIT = 2**64
STOCHASTIC_COMMANDS = ('simulate', 'bench')


def _search_dirs(start: Path) -> Iterator[Path]:
    """start, then its parents up to the repository root or the filesystem root."""
    current = start.resolve()
    while True:
        yield current
        if (current / '.git').exists() or current.parent == current:
            return
        current = current.parent


def _find_config(start: Path) -> Path | None:
    for directory in _search_dirs(start):
        for name in CONFIG_NAMES:
            candidate = directory / name
            if candidate.is_file():
                return candidate
    return None


def _parse_config(path: Path) -> dict[str, str]:
    """Parse `key = value` lines; keys normalised to underscores."""
    result: dict[str, str] = {}
    for number, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f'{path}:{number}: expected key = value, got {line!r}')
        key, _, raw_value = line.partition('=')
        key = key.strip().lstrip('-').replace('-', '_')
        value = raw_value.strip().strip('"').strip("'")
        if not key:
            raise ConfigError(f'{path}:{number}: empty key')
        result[key] = value
    return result


def load_config(config_file: str | None = None) -> tuple[Path | None, dict[str, str]]:
    """Locate and parse the config file. Returns (path, values); (None, {}) when there is none."""
    explicit = config_file or os.environ.get(CONFIG_ENV)
    if explicit:
        path = Path(explicit)
        if not path.is_file():
            origin = '' if config_file else f' (from ${CONFIG_ENV})'
            raise ConfigError(f'config file not found: {explicit}{origin}')
    else:
        found = _find_config(Path.cwd())
        if found is None:
            return None, {}
        path = found
    values = _parse_config(path)
    logger.debug('config %s: %d key(s)', path, len(values))
    return path, values


def apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> list[str]:
    """Install config values as parser defaults, converted with each flag's type.

    Returns the keys that matched no flag of this parser.
    """
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    defaults: dict[str, Any] = {}
    unknown = []
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            unknown.append(key)
            continue
        defaults[key] = _convert(action, key, raw)
    parser.set_defaults(**defaults)
    return unknown


def _convert(action: argparse.Action, key: str, raw: str) -> Any:
    if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
        lowered = raw.lower()
        if lowered in ('1', 'true', 'yes', 'on'):
            return True
        if lowered in ('0', 'false', 'no', 'off'):
            return False
        raise ConfigError(f'config key {key!r}: expected a boolean, got {raw!r}')
    if action.choices is not None and raw not in action.choices:
        raise ConfigError(f'config key {key!r}: {raw!r} is not one of {", ".join(map(str, action.choices))}')
    if action.type is None:
        return raw
    converter: Any = action.type
    try:
        return converter(raw)
    except (argparse.ArgumentTypeError, TypeError, ValueError) as exc:
        raise ConfigError(f'config key {key!r}: {exc}') from exc


def parse_seed(raw: str) -> int:
    """argparse type for --seed: an unsigned 64-bit integer."""
    try:
        seed = int(raw, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'seed must be an integer, got {raw!r}') from exc
    if not 0 <= seed < SEED_LIMIT:
        raise argparse.ArgumentTypeError(f'seed must lie in [0, 2**64), got {seed}')
    return seed


def parse_floats(raw: str) -> list[float]:
    """argparse type for comma-separated lists such as --radii 0,10,15."""
    try:
        return [float(part) for part in raw.split(',') if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated numbers, got {raw!r}') from exc


def parse_point(raw: str) -> tuple[float, float]:
    values = parse_floats(raw)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f'expected x,y, got {raw!r}')
    return values[0], values[1]


@dataclass
class RunConfig:
    """Merged flags and config values for one command run."""

    command: str
    config_path: str | None = None
    threads: int = 1
    verbose: bool = False
    text: bool = False
    # inputs and outputs
    grid: str | None = None
    net: str | None = None
    params: str | None = None
    values: str | None = None
    projection: str | None = None
    obs: str | None = None
    mean: str | None = None
    ensemble: str | None = None
    out: str | None = None
    values_out: str | None = None
    mean_out: str | None = None
    joint_out: str | None = None
    summary_out: str | None = None
    # model
    kernel: str | None = None
    sill: float | None = None
    range: float | None = None
    method: str = 'closed-form'
    edge_metric: str = 'euclidean'
    max_hops: int | None = None
    weight_floor: float = 1e-12
    # estimation
    bins: int = 15
    max_lag: float | None = None
    bias_mode: str = 'global'
    euclidean: bool = False
    # simulation, kriging and extremes
    m: int = 500
    seed: int | None = None
    mode: str = 'simple'
    alpha: float = 0.05
    threshold: float | None = None
    radii: list[float] = field(default_factory=list)
    center: tuple[float, float] | None = None
    # study
    ranges: list[float] = field(default_factory=list)
    replicates: int = 50
    test_fraction: float = 0.2
    fixed_sill: float | None = None

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> RunConfig:
        names = {f.name for f in fields(cls)}
        given = {k: v for k, v in vars(ns).items() if k in names and v is not None}
        return cls(**given)

    def validate(self) -> RunConfig:
        _positive('threads', self.threads)
        _positive('bins', self.bins)
        _positive('m', self.m)
        _positive('replicates', self.replicates)
        _positive('weight_floor', self.weight_floor)
        for name in ('sill', 'range', 'fixed_sill', 'max_lag'):
            value = getattr(self, name)
            if value is not None:
                _positive(name, value)
        if self.max_hops is not None:
            _positive('max_hops', self.max_hops)
        if not 0 < self.alpha < 1:
            raise ValidationError(f'alpha must lie in (0, 1), got {self.alpha}')
        if not 0 < self.test_fraction < 1:
            raise ValidationError(f'test-fraction must lie in (0, 1), got {self.test_fraction}')
        if any(r < 0 for r in self.radii):
            raise ValidationError('radii must be >= 0')
        if any(r <= 0 for r in self.ranges):
            raise ValidationError('ranges must be > 0')
        if self.command in STOCHASTIC_COMMANDS and self.seed is None:
            raise ValidationError(f'{self.command} needs --seed')
        if self.seed is not None and not 0 <= self.seed < SEED_LIMIT:
            raise ValidationError(f'seed must lie in [0, 2**64), got {self.seed}')
        return self

    def require(self, *names: str) -> None:
        """Fail with a flag-style message for every missing input."""
        missing = [n for n in names if getattr(self, n) in (None, [])]
        if missing:
            flags = ', '.join('--' + n.replace('_', '-') for n in missing)
            raise ValidationError(f'{self.command} needs {flags}')

    def path(self, name: str) -> str:
        """The value of a required path option."""
        value = getattr(self, name)
        if not value:
            raise ValidationError(f'{self.command} needs --{name.replace("_", "-")}')
        return str(value)


def _positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ValidationError(f'{name.replace("_", "-")} must be positive, got {value}')


def resolve_kernel(config: RunConfig) -> KernelSpec:
    """Kernel from --params, with --kernel/--sill/--range overriding; without --params sill and range are required."""
    base = read_params(config.params) if config.params else None
    kind = config.kernel or (base.kind if base else 'exponential')
    sill = config.sill if config.sill is not None else (base.sill if base else None)
    range_ = config.range if config.range is not None else (base.range if base else None)
    if sill is None or range_ is None:
        raise ValidationError(f'{config.command} needs --params or both --sill and --range')
    try:
        return KernelSpec(kind, sill, range_)  # type: ignore[arg-type]
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
