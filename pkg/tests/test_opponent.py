import pytest
from numpy.testing import assert_allclose

from marltools.envs import Action
from marltools.opponent import FEATURE_SIZE, OpponentTracker


def test_cold_start():
    features = OpponentTracker().features()
    assert features.shape == (FEATURE_SIZE,)
    assert_allclose(features, [0.2, 0.2, 0.2, 0.2, 0.2, 0.5])


def test_frequencies_and_last_action():
    tracker = OpponentTracker()
    for action in (Action.UP, Action.UP, Action.LEFT, Action.NOOP):
        tracker.update(action)
    assert tracker.total == 4
    assert_allclose(tracker.features(), [0.25, 0.25, 0, 0, 0.5, 0])


def test_last_action_scaling():
    tracker = OpponentTracker()
    for action, expected in zip(range(5), (0, 0.25, 0.5, 0.75, 1)):
        assert tracker.update(action).features()[-1] == expected


def test_frequencies_sum_to_one(rng):
    tracker = OpponentTracker()
    for action in rng.integers(5, size=37):
        tracker.update(action)
        features = tracker.features()
        assert features[:5].sum() == pytest.approx(1.0)
        assert ((features >= 0) & (features <= 1)).all()


def test_reset():
    tracker = OpponentTracker().update(3).update(2)
    tracker.reset()
    assert tracker.total == 0
    assert tracker.last_action is None
    assert_allclose(tracker.features(), [0.2] * 5 + [0.5])


def test_rejects_unknown_action():
    with pytest.raises(ValueError):
        OpponentTracker().update(5)
