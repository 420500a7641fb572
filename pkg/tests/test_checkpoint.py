import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from marltools.agents import DdqnAgent, MlpQNetwork, MoeQNetwork
from marltools.checkpoint import MAGIC, Checkpoint, CheckpointError


@pytest.fixture
def moe_checkpoint(rng, tiny_config):
    config = tiny_config()
    net = MoeQNetwork.initialize(8, rng, num_experts=3,
                                 state_embedding_size=8,
                                 opponent_embedding_size=4,
                                 expert_hidden_size=8, gate_hidden_size=4)
    return Checkpoint.from_agent(DdqnAgent(net), 'adversary', config)


def test_header(moe_checkpoint):
    header = moe_checkpoint.header()
    assert header['agent_kind'] == 'ddqn-moe'
    assert header['num_experts'] == 3
    assert header['scenario'] == 'simple_push'
    assert header['role'] == 'adversary'
    assert header['shapes'][0] == ['state_encoder.W1', [8, 8]]
    assert header['config']['agent']['num_experts'] == 2


def test_byte_layout(moe_checkpoint):
    data = moe_checkpoint.to_bytes()
    assert data.startswith(MAGIC + b' 1\n')
    _, header, payload = data.split(b'\n', 2)
    assert json.loads(header)['seed'] == 0
    count = sum(a.size for a in moe_checkpoint.arrays)
    assert len(payload) == 8 * count
    first = moe_checkpoint.arrays[0].ravel()[0]
    assert np.frombuffer(payload[:8], '<f8')[0] == first


def test_bytes_round_trip(moe_checkpoint):
    data = moe_checkpoint.to_bytes()
    loaded = Checkpoint.from_bytes(data)
    assert loaded.to_bytes() == data
    assert loaded.names == moe_checkpoint.names
    for a, b in zip(loaded.arrays, moe_checkpoint.arrays):
        assert_array_equal(a, b)


def test_save_and_load(moe_checkpoint, tmp_path, rng):
    path = str(tmp_path / 'adversary.ckpt')
    moe_checkpoint.save(path)
    agent = Checkpoint.load(path).to_agent()
    original = moe_checkpoint.to_network()
    assert isinstance(agent.online, MoeQNetwork)
    obs, opp = rng.normal(size=(4, 8)), rng.uniform(size=(4, 6))
    assert_array_equal(agent.q_values(obs, opp), original.q_values(obs, opp))
    assert_array_equal(agent.target.q_values(obs, opp),
                       original.q_values(obs, opp))


def test_plain_network(rng, tiny_config):
    config = tiny_config(agent=dict(double_q=False))
    net = MlpQNetwork.initialize(19, rng, hidden_sizes=(4, 4))
    ckpt = Checkpoint.from_agent(DdqnAgent(net), 'good', config)
    assert ckpt.num_experts is None
    loaded = Checkpoint.from_bytes(ckpt.to_bytes())
    assert loaded.agent_kind == 'ddqn'
    assert not loaded.to_agent().double_q


def test_corrupted_files(moe_checkpoint):
    data = moe_checkpoint.to_bytes()
    with pytest.raises(CheckpointError, match='Not a checkpoint'):
        Checkpoint.from_bytes(b'PK' + data)
    with pytest.raises(CheckpointError, match='version'):
        Checkpoint.from_bytes(data.replace(b' 1\n', b' 9\n', 1))
    with pytest.raises(CheckpointError, match='bytes'):
        Checkpoint.from_bytes(data[:-8])
    with pytest.raises(CheckpointError, match='bytes'):
        Checkpoint.from_bytes(data + b'\0')
    magic, header, payload = data.split(b'\n', 2)
    with pytest.raises(CheckpointError, match='header'):
        Checkpoint.from_bytes(magic + b'\n{"shapes": 3\n' + payload)


def test_check_compatible(moe_checkpoint):
    moe_checkpoint.check_compatible('simple_push', 'adversary')
    with pytest.raises(CheckpointError,
                       match='trained on simple_push, but the run is '
                             'configured for simple_adversary'):
        moe_checkpoint.check_compatible('simple_adversary')
    with pytest.raises(CheckpointError, match='good agent is required'):
        moe_checkpoint.check_compatible('simple_push', 'good')


def test_json_export(moe_checkpoint, tmp_path):
    path = str(tmp_path / 'adversary.json')
    moe_checkpoint.save_json(path)
    with open(path) as f:
        obj = json.load(f)
    assert obj['agent_kind'] == 'ddqn-moe'
    assert set(obj['parameters']) == set(moe_checkpoint.names)
    assert_array_equal(obj['parameters']['gate.b2'],
                       moe_checkpoint.arrays[moe_checkpoint.names.index(
                           'gate.b2')])


def test_invalid_metadata():
    with pytest.raises(CheckpointError):
        Checkpoint('simple_push', 'dueling', 'good', [], [])
    with pytest.raises(CheckpointError):
        Checkpoint('simple_push', 'ddqn', 'referee', [], [])
