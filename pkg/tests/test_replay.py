import numpy as np
import pytest
from numpy.testing import assert_allclose

from marltools.replay import (
    Batch, PerBuffer, StaleIndexError, SumTree, Transition)


def transition(i, obs_size=3):
    return Transition(
        state=np.full(obs_size, float(i)), action=i % 5, reward=float(i),
        next_state=np.full(obs_size, i + 1.0), done=i % 7 == 0,
        opponent_action=(i + 1) % 5, opponent_features=np.full(6, 0.1),
        next_opponent_features=np.full(6, 0.2))


def filled(n, capacity=None, **kwargs):
    buffer = PerBuffer(capacity or n, **kwargs)
    for i in range(n):
        buffer.push(transition(i))
    return buffer


def test_tree_capacity_is_power_of_two():
    assert SumTree(1).capacity == 1
    assert SumTree(5).capacity == 8
    assert SumTree(8).capacity == 8
    with pytest.raises(ValueError):
        SumTree(0)


def test_tree_consistency_after_random_updates(rng):
    tree = SumTree(100)
    for _ in range(10_000):
        data_index = rng.integers(100)
        tree.update(tree.leaf_index(data_index), rng.uniform(0, 10))
    assert tree.is_consistent()
    assert tree.total == pytest.approx(tree.leaves().sum())


def test_tree_rejects_negative_priority():
    tree = SumTree(4)
    with pytest.raises(ValueError):
        tree.update(tree.leaf_index(0), -1.0)


def test_tree_retrieve_by_prefix_sums():
    tree = SumTree(4)
    for i, p in enumerate([1.0, 2.0, 0.0, 3.0]):
        tree.update(tree.leaf_index(i), p)
    slots = tree.data_index(tree.retrieve([0.0, 0.99, 1.0, 2.99, 3.0, 5.99]))
    assert slots.tolist() == [0, 0, 1, 1, 3, 3]


def test_batch_stacks_fields():
    batch = Batch([transition(1), transition(2)])
    assert len(batch) == 2
    assert batch.states.shape == (2, 3)
    assert batch.opponent_features.shape == (2, 6)
    assert batch.actions.tolist() == [1, 2]


def test_transition_checks_shapes():
    with pytest.raises(ValueError):
        Transition(np.zeros(3), 0, 0.0, np.zeros(4), False, 0,
                   np.zeros(6), np.zeros(6))
    with pytest.raises(ValueError):
        Transition(np.zeros(3), 0, 0.0, np.zeros(3), False, 0,
                   np.zeros(5), np.zeros(6))


def test_push_overwrites_oldest():
    buffer = filled(10, capacity=4)
    assert len(buffer) == 4
    assert [t.reward for t in buffer.transitions()] == [6, 7, 8, 9]


def test_new_transitions_get_max_priority(rng):
    buffer = filled(8, alpha=1.0)
    _, indices, _ = buffer.sample(4, rng)
    buffer.update_priorities(indices, [3.0, 0.5, 0.1, 0.0])
    buffer.push(transition(99))
    slot = (buffer.cursor - 1) % buffer.capacity
    leaf = buffer.tree.leaves()[slot]
    assert leaf == pytest.approx(buffer.max_priority)
    assert buffer.max_priority == pytest.approx(3.0 + 1e-5)


@pytest.mark.parametrize('alpha', [1.0, 0.6])
def test_sample_matches_priorities(alpha):
    buffer = filled(4, alpha=alpha)
    rng = np.random.default_rng(0)
    _, indices, _ = buffer.sample(4, rng)
    order = np.argsort(buffer.tree.data_index(indices))
    buffer.update_priorities(indices[order], [1.0, 2.0, 3.0, 4.0])
    raw = (np.array([1.0, 2.0, 3.0, 4.0]) + 1e-5) ** alpha
    expected = raw / raw.sum()
    assert_allclose(buffer.probabilities(), expected, rtol=1e-12)
    if alpha == 1.0:
        assert_allclose(expected, [0.1, 0.2, 0.3, 0.4], atol=1e-5)

    counts = np.zeros(4)
    for _ in range(25_000):
        batch, _, _ = buffer.sample(4, rng)
        for action in batch.actions:
            counts[action] += 1
    assert counts.sum() == 100_000
    assert_allclose(counts / counts.sum(), expected, atol=0.01)


def test_uniform_when_alpha_is_zero(rng):
    buffer = filled(5, alpha=0.0)
    _, indices, _ = buffer.sample(5, rng)
    buffer.update_priorities(indices, [10.0, 0.0, 1.0, 2.0, 0.5])
    assert_allclose(buffer.probabilities(), 0.2)
    _, _, weights = buffer.sample(5, rng)
    assert_allclose(weights, 1.0)


def test_is_weights_are_normalized(rng):
    buffer = filled(16, alpha=1.0)
    _, indices, _ = buffer.sample(16, rng)
    buffer.update_priorities(indices, rng.uniform(0, 5, 16))
    _, indices, weights = buffer.sample(8, rng)
    assert weights.max() == pytest.approx(1.0)
    assert np.all((weights > 0) & (weights <= 1))
    probs = buffer.tree.tree[indices] / buffer.tree.total
    raw = (len(buffer) * probs) ** -buffer.beta
    assert_allclose(weights, raw / raw.max())


def test_sample_size_limits(rng):
    buffer = filled(3)
    with pytest.raises(ValueError):
        buffer.sample(4, rng)
    with pytest.raises(ValueError):
        buffer.sample(0, rng)
    with pytest.raises(ValueError):
        PerBuffer(4).sample(1, rng)


def test_update_with_stale_index(rng):
    buffer = filled(4, capacity=4)
    _, indices, _ = buffer.sample(2, rng)
    for i in range(4):
        buffer.push(transition(10 + i))
    with pytest.raises(StaleIndexError):
        buffer.update_priorities(indices, [0.1, 0.2])


def test_update_with_unsampled_index(rng):
    buffer = filled(8, capacity=8)
    _, indices, _ = buffer.sample(1, rng)
    other = buffer.tree.leaf_index(
        (int(buffer.tree.data_index(indices[0])) + 1) % 8)
    with pytest.raises(StaleIndexError):
        buffer.update_priorities([other], [0.1])


def test_update_outside_stored_range():
    buffer = filled(2, capacity=8)
    with pytest.raises(StaleIndexError):
        buffer.update_priorities([buffer.tree.leaf_index(5)], [0.1])


def test_priorities_stay_consistent(rng):
    buffer = PerBuffer(50)
    for i in range(200):
        buffer.push(transition(i))
        if len(buffer) >= 8:
            _, indices, _ = buffer.sample(8, rng)
            buffer.update_priorities(indices, rng.normal(size=8))
    assert buffer.tree.is_consistent()
    assert buffer.probabilities().sum() == pytest.approx(1.0)


def test_beta_annealing():
    buffer = PerBuffer(4, beta=0.4, annealing_steps=100)
    assert buffer.anneal_beta(0) == pytest.approx(0.4)
    assert buffer.anneal_beta(50) == pytest.approx(0.7)
    assert buffer.anneal_beta(100) == pytest.approx(1.0)
    assert buffer.anneal_beta(1000) == 1.0
    with pytest.raises(ValueError):
        buffer.anneal_beta(-1)


def test_consistency_after_many_priority_updates(rng):
    buffer = filled(64, capacity=64)
    for _ in range(10_000):
        _, indices, _ = buffer.sample(4, rng)
        buffer.update_priorities(indices, rng.exponential(2.0, size=4))
    assert buffer.tree.is_consistent()
    assert buffer.tree.total == pytest.approx(buffer.tree.leaves().sum())
    assert buffer.probabilities().sum() == pytest.approx(1.0)
