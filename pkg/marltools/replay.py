"""
Prioritized experience replay.

Transitions are stored in a ring buffer; their priorities live in the
leaves of a sum tree so that sampling proportionally to priority and
updating a priority both cost O(log n).

Priorities follow the proportional scheme `p = (|delta| + eps) ** alpha`.
New transitions get the largest priority seen so far, so that each is
replayed at least once with high probability. Importance-sampling
weights `(N * P) ** -beta` are normalized by their batch maximum, with
`beta` annealed linearly to 1.
"""
import numpy as np
from .numerics import check_shape


class StaleIndexError(IndexError):
    """Raised when updating priorities of entries not (or no longer)
    matching the last sample"""
    pass


class Transition:
    """
    One experience tuple.

    Attributes
    ----------
    state, next_state : (d,) np.ndarray
    action : int
    reward : float
    done : bool
    opponent_action : int
    opponent_features, next_opponent_features : (6,) np.ndarray
    """

    __slots__ = ('state', 'action', 'reward', 'next_state', 'done',
                 'opponent_action', 'opponent_features',
                 'next_opponent_features')

    def __init__(self, state, action, reward, next_state, done,
                 opponent_action, opponent_features, next_opponent_features):
        self.state = np.asarray(state, dtype=np.float64)
        self.next_state = check_shape(np.asarray(
            next_state, dtype=np.float64), self.state.shape, 'next_state')
        self.action = int(action)
        self.reward = float(reward)
        self.done = bool(done)
        self.opponent_action = int(opponent_action)
        self.opponent_features = check_shape(np.asarray(
            opponent_features, dtype=np.float64), (6,), 'opponent_features')
        self.next_opponent_features = check_shape(np.asarray(
            next_opponent_features, dtype=np.float64), (6,),
            'next_opponent_features')

    def __repr__(self):
        return (f'Transition(action={self.action}, reward={self.reward}, '
                f'done={self.done}, opponent_action={self.opponent_action})')


class Batch:
    """Transitions stacked along the first axis"""

    def __init__(self, transitions):
        transitions = list(transitions)
        self.states = np.stack([t.state for t in transitions])
        self.actions = np.array([t.action for t in transitions])
        self.rewards = np.array([t.reward for t in transitions])
        self.next_states = np.stack([t.next_state for t in transitions])
        self.dones = np.array([t.done for t in transitions])
        self.opponent_actions = np.array(
            [t.opponent_action for t in transitions])
        self.opponent_features = np.stack(
            [t.opponent_features for t in transitions])
        self.next_opponent_features = np.stack(
            [t.next_opponent_features for t in transitions])

    def __len__(self):
        return len(self.actions)


class SumTree:
    """
    Complete binary tree whose internal nodes hold the sum of their
    children. Stored as a flat array: node `i` has children `2i+1` and
    `2i+2`; leaves occupy the last `capacity` slots.

    Parameters
    ----------
    size : int
        Number of leaves needed. The tree capacity is the next power of
        two; extra leaves keep a zero priority.
    """

    def __init__(self, size):
        if size < 1:
            raise ValueError(f'Sum tree size must be positive, got {size}')
        self.capacity = 1 << (int(size) - 1).bit_length()
        self.tree = np.zeros(2 * self.capacity - 1)

    @property
    def total(self):
        return float(self.tree[0])

    def leaf_index(self, data_index):
        return int(data_index) + self.capacity - 1

    def data_index(self, tree_index):
        return np.asarray(tree_index) - (self.capacity - 1)

    def leaves(self):
        return self.tree[self.capacity - 1:]

    def update(self, tree_index, priority):
        """Set one leaf and propagate the change to the root"""
        if priority < 0 or not np.isfinite(priority):
            raise ValueError(f'Invalid priority {priority}')
        tree_index = int(tree_index)
        self.tree[tree_index] = priority
        while tree_index != 0:
            tree_index = (tree_index - 1) // 2
            left = 2 * tree_index + 1
            self.tree[tree_index] = self.tree[left] + self.tree[left + 1]

    def retrieve(self, values):
        """
        Descend from the root by prefix sums.

        Parameters
        ----------
        values : (n,) array_like
            Points in `[0, total)`.

        Returns
        -------
        tree_indices : (n,) np.ndarray[int]
        """
        values = np.array(values, dtype=np.float64, ndmin=1)
        index = np.zeros(len(values), dtype=np.int64)
        while True:
            left = 2 * index + 1
            if left[0] >= len(self.tree):
                return index
            left_value = self.tree[left]
            right_value = self.tree[left + 1]
            # never step into an empty subtree because of rounding
            go_left = ((values < left_value) | (right_value <= 0)) & (
                left_value > 0)
            values = np.where(go_left, values, values - left_value)
            index = np.where(go_left, left, left + 1)

    def is_consistent(self, tol=1e-9):
        """Check that every internal node equals the sum of its children"""
        internal = np.arange(self.capacity - 1)
        children = self.tree[2 * internal + 1] + self.tree[2 * internal + 2]
        return bool(np.all(np.abs(self.tree[internal] - children) <= tol))


class PerBuffer:
    """
    Prioritized replay buffer.

    Parameters
    ----------
    capacity : int
        Replay memory size. The oldest transitions are overwritten first.
    alpha : float
        Prioritization exponent.
    beta : float
        Initial importance-sampling exponent.
    epsilon : float
        Priority floor added to `|delta|`.
    annealing_steps : int
        Number of environment steps over which `beta` reaches 1.
    """

    def __init__(self, capacity, alpha=0.6, beta=0.4, epsilon=1e-5,
                 annealing_steps=1_000_000):
        self.capacity = int(capacity)
        self.tree = SumTree(self.capacity)
        self.alpha = float(alpha)
        self.beta0 = float(beta)
        self.beta = float(beta)
        self.epsilon = float(epsilon)
        self.annealing_steps = int(annealing_steps)
        self.max_priority = 1.0
        self.data = [None] * self.capacity
        self.generation = np.zeros(self.capacity, dtype=np.int64)
        self.cursor = 0
        self.size = 0
        self._sampled = {}

    def __len__(self):
        return self.size

    def push(self, transition):
        """Store a transition with the current max priority"""
        slot = self.cursor
        self.data[slot] = transition
        self.generation[slot] += 1
        self.tree.update(self.tree.leaf_index(slot),
                         self.max_priority ** self.alpha)
        self.cursor = (self.cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def transitions(self):
        """Stored transitions, oldest first"""
        start = self.cursor if self.size == self.capacity else 0
        return [self.data[(start + k) % self.capacity]
                for k in range(self.size)]

    def probabilities(self):
        """Exact sampling probability of every stored slot"""
        leaves = self.tree.leaves()[:self.size]
        return leaves / self.tree.total

    def sample(self, batch_size, rng):
        """
        Stratified proportional sampling.

        `[0, total]` is split in `batch_size` equal segments and one point
        is drawn uniformly in each.

        Returns
        -------
        batch : Batch
        tree_indices : (batch_size,) np.ndarray[int]
        is_weights : (batch_size,) np.ndarray
        """
        batch_size = int(batch_size)
        if batch_size < 1 or batch_size > self.size:
            raise ValueError(f'Cannot sample {batch_size} transitions from '
                             f'a buffer holding {self.size}')
        total = self.tree.total
        segment = total / batch_size
        lower = segment * np.arange(batch_size)
        points = rng.uniform(lower, lower + segment)
        points = np.minimum(points, np.nextafter(total, 0))
        tree_indices = self.tree.retrieve(points)
        slots = self.tree.data_index(tree_indices)

        probs = self.tree.tree[tree_indices] / total
        weights = (self.size * probs) ** (-self.beta)
        weights = weights / weights.max()

        self._sampled = {int(i): int(self.generation[s])
                         for i, s in zip(tree_indices, slots)}
        batch = Batch(self.data[s] for s in slots)
        return batch, tree_indices, weights

    def update_priorities(self, tree_indices, td_errors):
        """Set the priorities of sampled transitions from their TD errors"""
        tree_indices = np.asarray(tree_indices, dtype=np.int64)
        td_errors = check_shape(np.asarray(td_errors, dtype=np.float64),
                                tree_indices.shape, 'td_errors')
        for index in tree_indices:
            slot = int(self.tree.data_index(index))
            if not 0 <= slot < self.size:
                raise StaleIndexError(f'Tree index {index} does not hold '
                                      f'a stored transition')
            if self._sampled.get(int(index)) != self.generation[slot]:
                raise StaleIndexError(f'Tree index {index} was not part of '
                                      f'the last sample or was overwritten')
        raw = np.abs(td_errors) + self.epsilon
        for index, priority in zip(tree_indices, raw):
            self.tree.update(index, priority ** self.alpha)
        self.max_priority = max(self.max_priority, float(raw.max()))

    def anneal_beta(self, global_step):
        """Linear schedule from the initial beta to 1"""
        if global_step < 0:
            raise ValueError(f'Negative step {global_step}')
        fraction = global_step / max(1, self.annealing_steps)
        self.beta = min(1.0, self.beta0 + (1.0 - self.beta0) * fraction)
        return self.beta
