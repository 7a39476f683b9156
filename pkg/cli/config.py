"""
Run configuration: one JSON document with a `version` and one section per
subsystem. Unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, asdict
from typing import Dict, List, Optional

from local_net.training import TrainConfig
from q_learning.agent import QLearnConfig
from search_mdp.constraints import ConstraintConfig
from storage import utils as storage
from utils import constant
from utils.errors import ConfigError


@dataclass
class DataConfig:
    train_path: str = ''
    test_path: str = ''


@dataclass
class StructureConfig:
    # None takes the library recorded with the training data
    library: Optional[List[str]] = None
    # None means MULT_NEURONS_PER_OUTPUT per output
    mult_neurons: Optional[int] = None
    searched_stages: List[int] = field(default_factory=lambda: [1, 2])
    # stage -> indicator for stages that are not searched
    fixed_indicators: Dict[str, list] = field(default_factory=dict)


@dataclass
class ConstraintSettings:
    max_factors_per_neuron: int = constant.MAX_FACTORS_PER_NEURON
    corr_keep_threshold: float = constant.CORR_KEEP_THRESHOLD
    max_terms_per_output: Optional[int] = None

    def build(self):
        return ConstraintConfig(self.max_factors_per_neuron, self.corr_keep_threshold, frozenset(),
                                self.max_terms_per_output)


@dataclass
class SeedConfig:
    data: int = 0
    search: int = 0
    probe: int = 0


@dataclass
class RunConfig:
    version: int = constant.CONFIG_VERSION
    data: DataConfig = field(default_factory=DataConfig)
    structure: StructureConfig = field(default_factory=StructureConfig)
    qlearn: QLearnConfig = field(default_factory=QLearnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    constraints: ConstraintSettings = field(default_factory=ConstraintSettings)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    output_dir: str = ''

    def to_dict(self):
        return {
            'version': self.version,
            'data': asdict(self.data),
            'structure': asdict(self.structure),
            'qlearn': asdict(self.qlearn),
            'train': asdict(self.train),
            'constraints': asdict(self.constraints),
            'seeds': asdict(self.seeds),
            'output_dir': self.output_dir,
        }

    @staticmethod
    def from_dict(d):
        if not isinstance(d, dict):
            raise ConfigError('config must be a JSON object')
        _check_keys(d, [f.name for f in fields(RunConfig)], 'config')
        version = d.get('version', constant.CONFIG_VERSION)
        if version != constant.CONFIG_VERSION:
            raise ConfigError(f'unsupported config version {version}, expected {constant.CONFIG_VERSION}')
        return RunConfig(
            version=version,
            data=_section(DataConfig, d.get('data', {}), 'data'),
            structure=_section(StructureConfig, d.get('structure', {}), 'structure'),
            qlearn=_section(QLearnConfig, d.get('qlearn', {}), 'qlearn'),
            train=_section(TrainConfig, d.get('train', {}), 'train'),
            constraints=_section(ConstraintSettings, d.get('constraints', {}), 'constraints'),
            seeds=_section(SeedConfig, d.get('seeds', {}), 'seeds'),
            output_dir=d.get('output_dir', ''),
        )


def _check_keys(d, allowed, section):
    unknown = sorted(set(d) - set(allowed))
    if len(unknown) > 0:
        raise ConfigError(f'unknown keys in {section}: {unknown}')


def _section(cls, d, name):
    if not isinstance(d, dict):
        raise ConfigError(f'{name} must be a JSON object')
    _check_keys(d, [f.name for f in fields(cls)], name)
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(f'bad {name} section: {e}')


def load_config(path):
    try:
        d = storage.read_json(path)
    except FileNotFoundError:
        raise ConfigError(f'config file not found: {path}')
    except ValueError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}')
    return RunConfig.from_dict(d)


def save_config(config, path):
    return storage.write_json_atomic(config.to_dict(), path)
