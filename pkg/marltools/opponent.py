import numpy as np
from .envs import NUM_ACTIONS, Action


FEATURE_SIZE = NUM_ACTIONS + 1

# neutral values before any opponent action was observed
COLD_FREQUENCY = 1 / NUM_ACTIONS
COLD_LAST_ACTION = 0.5


class OpponentTracker:
    """
    Counts the actions an opponent took during the current episode.

    Its `features` are the normalized action frequencies followed by the
    last action, scaled to `[0, 1]` as `index / 4`.
    """

    def __init__(self):
        self.counts = np.zeros(NUM_ACTIONS, dtype=np.int64)
        self.last_action = None

    @property
    def total(self):
        return int(self.counts.sum())

    def update(self, action):
        action = Action(int(action))
        self.counts[action] += 1
        self.last_action = action
        return self

    def reset(self):
        self.counts[:] = 0
        self.last_action = None
        return self

    def features(self):
        """
        Returns
        -------
        features : (6,) np.ndarray
        """
        features = np.empty(FEATURE_SIZE)
        total = self.total
        if total == 0:
            features[:NUM_ACTIONS] = COLD_FREQUENCY
            features[-1] = COLD_LAST_ACTION
        else:
            features[:NUM_ACTIONS] = self.counts / total
            features[-1] = int(self.last_action) / (NUM_ACTIONS - 1)
        return features

    def __repr__(self):
        last = None if self.last_action is None else int(self.last_action)
        return f'OpponentTracker(counts={self.counts.tolist()}, last={last})'
