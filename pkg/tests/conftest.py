import logging

import numpy as np
import pytest

from marltools.config import preset_config


def pytest_addoption(parser):
    parser.addoption(
        '--runslow', action='store_true', default=False,
        help='run the desk-scale training experiments')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _restore_package_logger():
    """Undo `setup_logging` calls made by in-process CLI runs"""
    logger = logging.getLogger('marltools')
    state = list(logger.handlers), logger.level, logger.propagate
    yield
    logger.handlers[:], logger.level, logger.propagate = state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny(scenario='simple_push', seed=0, **sections):
    """A configuration small enough to train in a fraction of a second"""
    overrides = dict(
        agent=dict(hidden_sizes=[8, 8], num_experts=2,
                   state_embedding_size=8, opponent_embedding_size=4,
                   expert_hidden_size=8, gate_hidden_size=4,
                   learning_rate=0.001),
        replay=dict(replay_memory_size=200, replay_start_size=16,
                    minibatch_size=8, annealing_steps=500),
        training=dict(total_training_episodes=4, total_testing_episodes=3,
                      target_network_update_frequency=2, rolling_window=2,
                      log_interval=0),
    )
    for name, values in sections.items():
        overrides.setdefault(name, {}).update(values)
    return preset_config(scenario, 'desk', seed=seed).replace(**overrides)


@pytest.fixture
def tiny_config():
    return tiny
