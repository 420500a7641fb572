import pytest
import yaml

from marltools.config import (
    ConfigError, RunConfig, load_config, load_presets, preset_config)
from marltools.envs import ScenarioKind


def test_paper_presets():
    push = preset_config('simple_push', 'paper')
    assert push.scenario is ScenarioKind.SIMPLE_PUSH
    assert push.agent.learning_rate == 1e-4
    assert push.replay.replay_memory_size == 1_000_000
    adversary = preset_config('simple_adversary', 'paper')
    assert adversary.agent.learning_rate == 1e-3
    assert adversary.replay.replay_memory_size == 100_000
    for config in (push, adversary):
        assert config.agent.hidden_sizes == (64, 128)
        assert config.agent.discount_factor == 0.999
        assert config.agent.num_experts == 4
        assert config.replay.minibatch_size == 64
        assert config.replay.replay_start_size == 50_000
        assert (config.replay.alpha, config.replay.beta) == (0.6, 0.4)
        assert config.training.total_training_episodes == 3000
        assert config.training.total_testing_episodes == 1000
        assert config.training.target_network_update_frequency == 5
        assert config.env.episode_length == 25


def test_desk_preset():
    config = preset_config('simple_push', seed=7)
    assert config.preset == 'desk'
    assert config.seed == 7
    assert config.training.total_training_episodes == 300
    assert config.replay.replay_start_size == 1000
    assert config.replay.replay_memory_size == 50_000


def test_every_preset_is_valid():
    presets = load_presets()
    for scenario in ('simple_push', 'simple_adversary'):
        assert set(presets[scenario]) == {'paper', 'desk'}
        for preset in ('paper', 'desk'):
            preset_config(scenario, preset)


def test_unknown_preset_and_scenario():
    with pytest.raises(ConfigError, match='laptop'):
        preset_config('simple_push', 'laptop')
    with pytest.raises(ConfigError, match='simple_tag'):
        preset_config('simple_tag')


def test_unknown_key_is_named():
    config = preset_config('simple_push')
    with pytest.raises(ConfigError, match=r'"agent\.learning_rat"'):
        config.replace(agent={'learning_rat': 0.1})
    with pytest.raises(ConfigError, match='Unknown section "agents"'):
        config.replace(agents={'learning_rate': 0.1})


def test_invalid_values():
    config = preset_config('simple_push')
    with pytest.raises(ConfigError, match=r'"agent\.learning_rate"'):
        config.replace(agent={'learning_rate': 0})
    with pytest.raises(ConfigError, match=r'"agent\.discount_factor"'):
        config.replace(agent={'discount_factor': 1.5})
    with pytest.raises(ConfigError, match=r'"replay\.minibatch_size"'):
        config.replace(replay={'minibatch_size': 2.5})
    with pytest.raises(ConfigError, match=r'"agent\.use_moe"'):
        config.replace(agent={'use_moe': 'yes'})
    with pytest.raises(ConfigError, match=r'"agent\.hidden_sizes"'):
        config.replace(agent={'hidden_sizes': []})
    with pytest.raises(ConfigError, match='final_epsilon'):
        config.replace(agent={'initial_epsilon': 0.1, 'final_epsilon': 0.5})
    with pytest.raises(ConfigError, match='seed'):
        config.replace(seed=-1)
    assert issubclass(ConfigError, ValueError)


def test_missing_key():
    values = preset_config('simple_push').to_dict()
    del values['training']['rolling_window']
    with pytest.raises(ConfigError, match=r'"training\.rolling_window"'):
        RunConfig.from_dict(values)


def test_replace_keeps_other_values():
    config = preset_config('simple_adversary')
    changed = config.replace(seed=3, agent={'num_experts': 2})
    assert changed.seed == 3
    assert changed.agent.num_experts == 2
    assert changed.agent.learning_rate == config.agent.learning_rate
    assert config.agent.num_experts == 4


def test_dict_and_yaml_round_trip():
    config = preset_config('simple_push', 'paper', seed=11)
    assert RunConfig.from_dict(config.to_dict()) == config
    assert RunConfig.from_dict(yaml.safe_load(config.to_yaml())) == config


def test_load_config(tmp_path):
    path = tmp_path / 'run.yml'
    path.write_text(
        'scenario: simple_adversary\n'
        'preset: paper\n'
        'seed: 5\n'
        'agent:\n'
        '  num_experts: 2\n'
        'training:\n'
        '  total_training_episodes: 10\n')
    config = load_config(path)
    assert config.scenario is ScenarioKind.SIMPLE_ADVERSARY
    assert config.seed == 5
    assert config.agent.num_experts == 2
    assert config.agent.learning_rate == 1e-3
    assert config.training.total_training_episodes == 10
    assert load_config(str(path), seed=8).seed == 8


def test_load_config_errors(tmp_path):
    path = tmp_path / 'run.yml'
    path.write_text('preset: desk\n')
    with pytest.raises(ConfigError, match='scenario'):
        load_config(path)
    path.write_text('scenario: simple_push\nreplay:\n  alpah: 0.5\n')
    with pytest.raises(ConfigError, match=r'"replay\.alpah"'):
        load_config(path)
    path.write_text('scenario: [simple_push\n')
    with pytest.raises(ConfigError, match='Cannot parse'):
        load_config(path)
