"""
Run configuration.

A run is described by a scenario, a preset (`paper` or `desk`, see
`presets.yml`), a seed and four sections of hyperparameters:
`env`, `agent`, `replay` and `training`. User YAML files use the same
layout and override preset values key by key:

```yaml
scenario: simple_adversary
preset: desk
seed: 3
agent:
  num_experts: 2
training:
  total_training_episodes: 100
```

Unknown sections and keys are errors.
"""
import dataclasses
import logging
import os
from dataclasses import dataclass, field

import yaml

from . import opener
from .envs import Physics, ScenarioKind

logger = logging.getLogger(__name__)

PRESETS_PATH = os.path.join(os.path.dirname(__file__), 'presets.yml')
PRESETS = ('paper', 'desk')
SECTIONS = ('env', 'agent', 'replay', 'training')


class ConfigError(ValueError):
    """Raised for unknown, missing or invalid configuration keys"""
    pass


# ----------------------------------------------------------------------
#   value checks
# ----------------------------------------------------------------------


def _integer(low=None):
    def check(value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError('expected an integer')
        if low is not None and value < low:
            raise ValueError(f'must be >= {low}')
        return value
    return check


def _real(low=None, high=None, strict_low=False, strict_high=False):
    def check(value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError('expected a number')
        value = float(value)
        if low is not None and (value < low or (strict_low and value == low)):
            raise ValueError(f'must be {">" if strict_low else ">="} {low}')
        if high is not None and (
                value > high or (strict_high and value == high)):
            raise ValueError(
                f'must be {"<" if strict_high else "<="} {high}')
        return value
    return check


def _flag(value):
    if not isinstance(value, bool):
        raise ValueError('expected true or false')
    return value


def _choice(*choices):
    def check(value):
        if value not in choices:
            raise ValueError(f'expected one of {", ".join(choices)}')
        return value
    return check


def _sizes(value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError('expected a nonempty list of layer widths')
    return tuple(_integer(1)(v) for v in value)


def _key(check, help=''):
    return field(metadata={'check': check, 'help': help})


# ----------------------------------------------------------------------
#   sections
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class EnvConfig:
    dt: float = _key(_real(0, strict_low=True), 'integration time step')
    damping: float = _key(_real(0, 1, strict_high=True), 'velocity damping')
    accel: float = _key(_real(0, strict_low=True), 'action force')
    max_speed: float = _key(_real(0, strict_low=True), 'speed clamp')
    episode_length: int = _key(_integer(1), 'steps per episode')

    def physics(self):
        return Physics(self.dt, self.damping, self.accel, self.max_speed,
                       self.episode_length)


@dataclass(frozen=True)
class AgentConfig:
    hidden_sizes: tuple = _key(_sizes, 'plain Q-network hidden widths')
    num_experts: int = _key(_integer(1), 'number of expert heads')
    state_embedding_size: int = _key(_integer(1))
    opponent_embedding_size: int = _key(_integer(1))
    expert_hidden_size: int = _key(_integer(1))
    gate_hidden_size: int = _key(_integer(1))
    use_moe: bool = _key(_flag, 'mixture-of-experts primary agent')
    double_q: bool = _key(_flag, 'double-Q targets (else DQN targets)')
    learning_rate: float = _key(_real(0, strict_low=True))
    discount_factor: float = _key(_real(0, 1))
    initial_epsilon: float = _key(_real(0, 1))
    final_epsilon: float = _key(_real(0, 1))
    epsilon_decay_fraction: float = _key(
        _real(0, 1), 'fraction of training episodes spent decaying epsilon')
    loss_function: str = _key(_choice('mse'))
    optimizer: str = _key(_choice('adam'))


@dataclass(frozen=True)
class ReplayConfig:
    replay_memory_size: int = _key(_integer(1))
    replay_start_size: int = _key(_integer(0))
    minibatch_size: int = _key(_integer(1))
    alpha: float = _key(_real(0), 'prioritization exponent')
    beta: float = _key(_real(0, 1), 'initial importance-sampling exponent')
    epsilon_per: float = _key(_real(0, strict_low=True), 'priority floor')
    annealing_steps: int = _key(_integer(1), 'steps for beta to reach 1')


@dataclass(frozen=True)
class TrainingConfig:
    total_training_episodes: int = _key(_integer(1))
    total_testing_episodes: int = _key(_integer(1))
    target_network_update_frequency: int = _key(_integer(1), 'in episodes')
    train_frequency: int = _key(_integer(1), 'env steps per gradient step')
    opponent_epsilon: float = _key(
        _real(0, 1), 'exploration of a frozen opponent')
    rolling_window: int = _key(_integer(1))
    checkpoint_interval: int = _key(_integer(0), 'in episodes, 0 = never')
    log_interval: int = _key(_integer(0), 'in episodes, 0 = never')


_SECTION_TYPES = dict(
    env=EnvConfig,
    agent=AgentConfig,
    replay=ReplayConfig,
    training=TrainingConfig,
)


def _build_section(name, values):
    cls = _SECTION_TYPES[name]
    if not isinstance(values, dict):
        raise ConfigError(f'Section "{name}" must be a mapping')
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f'Unknown key "{name}.{key}"')
    kwargs = {}
    for key, f in known.items():
        if key not in values:
            raise ConfigError(f'Missing key "{name}.{key}"')
        try:
            kwargs[key] = f.metadata['check'](values[key])
        except ValueError as e:
            raise ConfigError(f'Invalid value for "{name}.{key}": {e} '
                              f'(got {values[key]!r})') from None
    return cls(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    """Complete, validated description of a run"""

    scenario: ScenarioKind
    preset: str
    seed: int
    env: EnvConfig
    agent: AgentConfig
    replay: ReplayConfig
    training: TrainingConfig

    @classmethod
    def from_dict(cls, values):
        """Build from a fully populated sectioned mapping"""
        values = dict(values)
        for key in values:
            if key not in ('scenario', 'preset', 'seed') + SECTIONS:
                raise ConfigError(f'Unknown section "{key}"')
        try:
            scenario = ScenarioKind.parse(values.get('scenario'))
        except ValueError as e:
            raise ConfigError(f'Invalid value for "scenario": {e}') from None
        preset = values.get('preset', 'desk')
        if preset not in PRESETS:
            raise ConfigError(f'Invalid value for "preset": expected one of '
                              f'{", ".join(PRESETS)} (got {preset!r})')
        seed = values.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f'Invalid value for "seed": expected a '
                              f'nonnegative integer (got {seed!r})')
        sections = {name: _build_section(name, values.get(name, {}))
                    for name in SECTIONS}
        agent = sections['agent']
        if agent.final_epsilon > agent.initial_epsilon:
            raise ConfigError('Invalid value for "agent.final_epsilon": '
                              'must be <= agent.initial_epsilon')
        return cls(scenario=scenario, preset=preset, seed=seed, **sections)

    def to_dict(self):
        values = dict(scenario=self.scenario.value, preset=self.preset,
                      seed=self.seed)
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            values[name] = {k: list(v) if isinstance(v, tuple) else v
                            for k, v in section.items()}
        return values

    def replace(self, **changes):
        """
        Validated copy with some values changed.

        Top-level values (`seed`, `scenario`, `preset`) are given as is;
        section values as a mapping of overrides, e.g.
        `config.replace(seed=1, training={'log_interval': 0})`.
        """
        return RunConfig.from_dict(_merge(self.to_dict(), changes))

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False,
                              default_flow_style=None)


def _merge(base, overrides):
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# ----------------------------------------------------------------------
#   loading
# ----------------------------------------------------------------------


def load_presets(path=PRESETS_PATH):
    with opener.open(path, 'r') as f:
        return yaml.safe_load(f)


def preset_config(scenario, preset='desk', seed=None, presets=None):
    """
    Configuration of a preset.

    Parameters
    ----------
    scenario : ScenarioKind or str
    preset : {'paper', 'desk'}
    seed : int, optional
        Overrides the preset seed.

    Returns
    -------
    config : RunConfig
    """
    try:
        scenario = ScenarioKind.parse(scenario)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if preset not in PRESETS:
        raise ConfigError(f'Unknown preset "{preset}" '
                          f'(expected one of: {", ".join(PRESETS)})')
    presets = presets or load_presets()
    values = _merge(presets['defaults'],
                    presets.get(scenario.value, {}).get(preset) or {})
    values.update(scenario=scenario.value, preset=preset)
    if seed is not None:
        values['seed'] = seed
    return RunConfig.from_dict(values)


def load_config(path, seed=None):
    """
    Read a YAML run configuration on top of its preset.

    Parameters
    ----------
    path : str or PathLike
        Local path or fsspec url.
    seed : int, optional
        Overrides the seed of the file.

    Returns
    -------
    config : RunConfig
    """
    with opener.open(path, 'r') as f:
        try:
            values = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f'Cannot parse {opener.stringify_path(path)}: '
                              f'{e}') from None
    if not isinstance(values, dict):
        raise ConfigError('A configuration file must hold a mapping')
    if 'scenario' not in values:
        raise ConfigError('Missing key "scenario"')
    for key in values:
        if key not in ('scenario', 'preset', 'seed') + SECTIONS:
            raise ConfigError(f'Unknown section "{key}"')
    base = preset_config(values['scenario'], values.get('preset', 'desk'))
    overrides = {k: v for k, v in values.items() if k != 'scenario'}
    if seed is not None:
        overrides['seed'] = seed
    config = base.replace(**overrides)
    logger.debug(f'Loaded {config.scenario.value}/{config.preset} '
                 f'configuration from {opener.stringify_path(path)}')
    return config
