"""Run configuration files.

A run is described by a YAML file with the sections data, split, model, training and output
and a top-level seed. Relative paths are taken relative to the file's directory.
"""

import dataclasses
import hashlib
import json
import logging
import os
import types
import typing
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

import yaml

from intentspace import __version__
from intentspace.errors import ConfigError, PathError
from intentspace.model import INIT_SCALE, ONE_HOT_GAP, BasisForm, ScorerKind, SpaceMode
from intentspace.training import TrainingConfig

ARCHITECTURES = ('intent-space', 'baseline')

TOY_CONFIG = os.path.join(os.path.dirname(__file__), 'toydata', 'toy.yaml')


@dataclass
class DataConfig:
    """Where sentences and word vectors come from."""

    corpus: str = ''
    embeddings: str = ''
    embedding_dim: int = 300
    restrict_vocabulary: bool = True


@dataclass
class SplitConfig:
    """Seen/unseen partition of the corpus intents."""

    unseen: list[str] = field(default_factory=list)
    seen: list[str] = field(default_factory=list)
    validation_per_intent: int = 0
    unseen_sentences: Optional[int] = None

    def __post_init__(self):
        if self.validation_per_intent < 0:
            raise ConfigError('split.validation_per_intent must be non-negative')
        if self.unseen_sentences is not None and self.unseen_sentences < 0:
            raise ConfigError('split.unseen_sentences must be non-negative')


@dataclass
class ModelConfig:
    """Architecture and initialisation."""

    architecture: str = 'intent-space'
    hidden_size: int = 300
    form: str = BasisForm.FULL_MATRIX.value
    rank: Optional[int] = None
    mode: str = SpaceMode.SIMPLEX.value
    scorer: str = ScorerKind.SHARED.value
    init_scale: float = INIT_SCALE
    one_hot_gap: float = ONE_HOT_GAP
    omega: bool = True

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f'model.architecture: unknown value {self.architecture}')
        for key, enum_type in (('form', BasisForm), ('mode', SpaceMode),
                               ('scorer', ScorerKind)):
            try:
                enum_type(getattr(self, key))
            except ValueError:
                raise ConfigError(f'model.{key}: unknown value {getattr(self, key)}') from None
        if self.hidden_size < 1:
            raise ConfigError('model.hidden_size must be positive')
        if self.basis_form == BasisForm.REDUCED_RANK and (not self.rank or self.rank < 1):
            raise ConfigError('model.rank must be positive for reduced-rank bases')

    @property
    def basis_form(self) -> BasisForm:
        return BasisForm(self.form)

    @property
    def space_mode(self) -> SpaceMode:
        return SpaceMode(self.mode)

    @property
    def scorer_kind(self) -> ScorerKind:
        return ScorerKind(self.scorer)


@dataclass
class OutputConfig:
    directory: str = 'runs'


@dataclass
class RunConfig:
    """A complete, reproducible experiment definition."""

    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


SECTIONS = {
    'data': DataConfig,
    'split': SplitConfig,
    'model': ModelConfig,
    'training': TrainingConfig,
    'output': OutputConfig,
}


def _check_type(where: str, value: Any, expected: Any) -> Any:
    """Validate a YAML value against a dataclass field type."""
    origin = typing.get_origin(expected)
    if origin in (Union, getattr(types, 'UnionType', Union)):
        if value is None and type(None) in typing.get_args(expected):
            return None
        inner = [t for t in typing.get_args(expected) if t is not type(None)]
        return _check_type(where, value, inner[0])
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f'{where}: expected a list')
        (item,) = typing.get_args(expected)
        return [_check_type(where, v, item) for v in value]
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool):
        raise ConfigError(f'{where}: expected int, got {value!r}')
    if not isinstance(value, expected):
        raise ConfigError(f'{where}: expected {expected.__name__}, got {value!r}')
    return value


def _build_section(name: str, raw: Any):
    cls = SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f'{name}: expected a mapping')
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, value in raw.items():
        if key not in hints:
            raise ConfigError(f'{name}.{key}: unknown key')
        kwargs[key] = _check_type(f'{name}.{key}', value, hints[key])
    return cls(**kwargs)


def apply_overrides(raw: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply section.key=value settings; values are parsed as YAML scalars."""
    for item in overrides:
        key, sep, text = item.partition('=')
        if not sep:
            raise ConfigError(f'override {item!r} is not of the form section.key=value')
        value = yaml.load(text, Loader=yaml.SafeLoader)
        if key == 'seed':
            raw['seed'] = value
            continue
        section, dot, name = key.partition('.')
        if not dot or section not in SECTIONS:
            raise ConfigError(f'override {item!r}: unknown section')
        sect = raw.setdefault(section, {})
        if not isinstance(sect, dict):
            raise ConfigError(f'{section}: expected a mapping')
        sect[name] = value
    return raw


def _resolve(base: str, path: str) -> str:
    if not path:
        return path
    path = os.path.expanduser(path)
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def from_dict(raw: dict[str, Any], base_dir: str = '.') -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError('configuration must be a mapping')
    unknown = set(raw) - set(SECTIONS) - {'seed'}
    if unknown:
        raise ConfigError(f'{sorted(unknown)[0]}: unknown section')
    seed = raw.get('seed', 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f'seed: expected int, got {seed!r}')
    sections = {name: _build_section(name, raw.get(name)) for name in SECTIONS}
    cfg = RunConfig(seed=seed, **sections)
    # The top-level seed drives every random choice of the run
    cfg.training.seed = seed
    cfg.data.corpus = _resolve(base_dir, cfg.data.corpus)
    cfg.data.embeddings = _resolve(base_dir, cfg.data.embeddings)
    cfg.output.directory = _resolve(base_dir, cfg.output.directory)
    return cfg


def load_config(path: str, overrides: Optional[list[str]] = None) -> RunConfig:
    """Load a YAML run configuration, applying command-line overrides."""
    path = os.path.expanduser(path)
    try:
        with open(path, encoding='utf-8') as f:
            raw = yaml.load(f, Loader=yaml.SafeLoader)
    except OSError as e:
        raise PathError(f'cannot read config: {e}') from e
    except yaml.YAMLError as e:
        raise ConfigError(f'{path}: {e}') from e
    raw = apply_overrides(raw or {}, overrides or [])
    logging.debug('Loaded config %s', path)
    return from_dict(raw, os.path.dirname(os.path.abspath(path)))


def check_paths(cfg: RunConfig):
    """Make sure the input files exist before any work starts."""
    for key in ('corpus', 'embeddings'):
        path = getattr(cfg.data, key)
        if not path:
            raise ConfigError(f'data.{key} is not set')
        if not os.path.exists(path):
            raise PathError(f'data.{key}: {path} does not exist')


def config_hash(cfg: RunConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()[:12]


def run_directory(cfg: RunConfig) -> str:
    return os.path.join(cfg.output.directory, f'{config_hash(cfg)}-s{cfg.seed}')


def write_manifest(run_dir: str, cfg: RunConfig, command: str,
                   extra: Optional[dict[str, Any]] = None) -> str:
    """Write manifest.json echoing everything needed to repeat the run."""
    manifest = {
        'command': command,
        'config': cfg.to_dict(),
        'config_hash': config_hash(cfg),
        'seed': cfg.seed,
        'versions': {'intentspace': __version__, 'numpy': np.__version__},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(run_dir, 'manifest.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write('\n')
    return path
