"""
Two-agent particle worlds: Simple Push and Simple Adversary.

A world holds one good agent, one adversary and fixed landmarks on a
plane. Agents pick one of five discrete actions, which apply a unit
force scaled by `accel`; velocities are damped and clamped, positions
are integrated with a fixed time step. There are no contact forces and
positions are not clipped.

Observation contracts
---------------------
simple_push
    good agent (19): own velocity (2), goal relative position (2),
    goal color (3), relative positions of both landmarks (4), colors of
    both landmarks (6), adversary relative position (2).
    adversary (8): own velocity (2), relative positions of both
    landmarks (4), good agent relative position (2).
simple_adversary
    good agent (6): own absolute position (2), goal relative position
    (2), adversary relative position (2).
    adversary (4): landmark relative position (2), good agent relative
    position (2).

Relative positions are `entity - observer`.
"""
import enum
import numpy as np
from .utils import make_rng


class Action(enum.IntEnum):
    NOOP = 0
    LEFT = 1
    RIGHT = 2
    DOWN = 3
    UP = 4


NUM_ACTIONS = len(Action)

ACTION_FORCES = np.array([
    [0., 0.],
    [-1., 0.],
    [1., 0.],
    [0., -1.],
    [0., 1.],
])

GOAL_COLOR = (0.25, 0.75, 0.25)
OTHER_COLOR = (0.75, 0.25, 0.25)


class ScenarioKind(str, enum.Enum):
    SIMPLE_PUSH = 'simple_push'
    SIMPLE_ADVERSARY = 'simple_adversary'

    @property
    def num_landmarks(self):
        return 2 if self is ScenarioKind.SIMPLE_PUSH else 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace('-', '_'))
        except ValueError:
            choices = ', '.join(k.value for k in cls)
            raise ValueError(f'Unknown scenario "{value}" '
                             f'(expected one of: {choices})') from None


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an episode that already reached its length"""
    pass


class Physics:
    """
    Integration constants.

    Parameters
    ----------
    dt : float
        Time step.
    damping : float
        Fraction of velocity lost at every step.
    accel : float
        Magnitude of the force produced by a move action.
    max_speed : float
        Velocity norm clamp.
    episode_length : int
        Number of steps in an episode.
    """

    def __init__(self, dt=0.1, damping=0.25, accel=5.0, max_speed=1.0,
                 episode_length=25):
        self.dt = float(dt)
        self.damping = float(damping)
        self.accel = float(accel)
        self.max_speed = float(max_speed)
        self.episode_length = int(episode_length)

    def __repr__(self):
        return (f'Physics(dt={self.dt}, damping={self.damping}, '
                f'accel={self.accel}, max_speed={self.max_speed}, '
                f'episode_length={self.episode_length})')


DEFAULT_PHYSICS = Physics()


class WorldState:
    """
    Snapshot of a world. Instances are never mutated by `step`.

    Attributes
    ----------
    kind : ScenarioKind
    agent_pos, agent_vel, adversary_pos, adversary_vel : (2,) np.ndarray
    landmarks : (L, 2) np.ndarray
    landmark_colors : (L, 3) np.ndarray
    goal_index : int
    step_count : int
    """

    def __init__(self, kind, agent_pos, agent_vel, adversary_pos,
                 adversary_vel, landmarks, landmark_colors, goal_index=0,
                 step_count=0):
        self.kind = ScenarioKind.parse(kind)
        self.agent_pos = np.array(agent_pos, dtype=np.float64)
        self.agent_vel = np.array(agent_vel, dtype=np.float64)
        self.adversary_pos = np.array(adversary_pos, dtype=np.float64)
        self.adversary_vel = np.array(adversary_vel, dtype=np.float64)
        self.landmarks = np.array(landmarks, dtype=np.float64).reshape(-1, 2)
        self.landmark_colors = np.array(
            landmark_colors, dtype=np.float64).reshape(-1, 3)
        self.goal_index = int(goal_index)
        self.step_count = int(step_count)
        if len(self.landmarks) != self.kind.num_landmarks:
            raise ValueError(
                f'{self.kind.value} has {self.kind.num_landmarks} '
                f'landmark(s), got {len(self.landmarks)}')
        if len(self.landmark_colors) != len(self.landmarks):
            raise ValueError('One color per landmark is required')
        if not 0 <= self.goal_index < len(self.landmarks):
            raise ValueError(f'Invalid goal index {self.goal_index}')

    @property
    def goal(self):
        return self.landmarks[self.goal_index]

    def replace(self, **changes):
        fields = dict(
            kind=self.kind,
            agent_pos=self.agent_pos,
            agent_vel=self.agent_vel,
            adversary_pos=self.adversary_pos,
            adversary_vel=self.adversary_vel,
            landmarks=self.landmarks,
            landmark_colors=self.landmark_colors,
            goal_index=self.goal_index,
            step_count=self.step_count,
        )
        fields.update(changes)
        return WorldState(**fields)

    def __eq__(self, other):
        if not isinstance(other, WorldState):
            return NotImplemented
        return (self.kind is other.kind
                and self.goal_index == other.goal_index
                and self.step_count == other.step_count
                and all(np.array_equal(getattr(self, name),
                                       getattr(other, name))
                        for name in ('agent_pos', 'agent_vel',
                                     'adversary_pos', 'adversary_vel',
                                     'landmarks', 'landmark_colors')))

    def __repr__(self):
        return (f'WorldState({self.kind.value}, step={self.step_count}, '
                f'agent={self.agent_pos.tolist()}, '
                f'adversary={self.adversary_pos.tolist()}, '
                f'goal={self.goal.tolist()})')


class StepOutcome:
    """Result of one `step`"""

    def __init__(self, state, good_obs, adversary_obs, good_reward,
                 adversary_reward, done):
        self.state = state
        self.good_obs = good_obs
        self.adversary_obs = adversary_obs
        self.good_reward = float(good_reward)
        self.adversary_reward = float(adversary_reward)
        self.done = bool(done)

    def __iter__(self):
        return iter((self.state, self.good_obs, self.adversary_obs,
                     self.good_reward, self.adversary_reward, self.done))


def observation_sizes(kind):
    """Observation lengths `(good, adversary)` of a scenario"""
    kind = ScenarioKind.parse(kind)
    if kind is ScenarioKind.SIMPLE_PUSH:
        return 19, 8
    return 6, 4


def reset(kind, rng_seed):
    """
    Start a new episode.

    Positions (agent, adversary, then landmarks) are drawn uniformly in
    `[-1, 1]^2`. In Simple Push the goal landmark is drawn uniformly.

    Parameters
    ----------
    kind : ScenarioKind or str
    rng_seed : int or np.random.SeedSequence or np.random.Generator
        Required. There is no entropy-seeded default.

    Returns
    -------
    state : WorldState
    """
    kind = ScenarioKind.parse(kind)
    rng = make_rng(rng_seed)
    agent_pos = rng.uniform(-1, 1, 2)
    adversary_pos = rng.uniform(-1, 1, 2)
    landmarks = rng.uniform(-1, 1, (kind.num_landmarks, 2))
    if kind is ScenarioKind.SIMPLE_PUSH:
        goal_index = int(rng.integers(kind.num_landmarks))
    else:
        goal_index = 0
    colors = np.array([GOAL_COLOR if i == goal_index else OTHER_COLOR
                       for i in range(kind.num_landmarks)])
    return WorldState(
        kind=kind,
        agent_pos=agent_pos,
        agent_vel=np.zeros(2),
        adversary_pos=adversary_pos,
        adversary_vel=np.zeros(2),
        landmarks=landmarks,
        landmark_colors=colors,
        goal_index=goal_index,
        step_count=0,
    )


def _integrate(pos, vel, action, physics):
    action = Action(int(action))
    force = ACTION_FORCES[action] * physics.accel
    vel = vel * (1 - physics.damping) + force * physics.dt
    speed = np.sqrt(np.sum(np.square(vel)))
    if speed > physics.max_speed:
        vel = vel / speed * physics.max_speed
    pos = pos + vel * physics.dt
    return pos, vel


def step(state, a_good, a_adv, kind=None, physics=DEFAULT_PHYSICS):
    """
    Advance the world by one step.

    Parameters
    ----------
    state : WorldState
    a_good, a_adv : Action or int
    kind : ScenarioKind, optional
        Must match `state.kind` if given.
    physics : Physics

    Returns
    -------
    outcome : StepOutcome
        Observations and rewards are computed on the post-move state.
    """
    if kind is not None and ScenarioKind.parse(kind) is not state.kind:
        raise ValueError(f'State is {state.kind.value}, '
                         f'not {ScenarioKind.parse(kind).value}')
    if state.step_count >= physics.episode_length:
        raise EpisodeFinishedError(
            f'Episode already finished after {state.step_count} steps')
    agent_pos, agent_vel = _integrate(
        state.agent_pos, state.agent_vel, a_good, physics)
    adversary_pos, adversary_vel = _integrate(
        state.adversary_pos, state.adversary_vel, a_adv, physics)
    new_state = state.replace(
        agent_pos=agent_pos,
        agent_vel=agent_vel,
        adversary_pos=adversary_pos,
        adversary_vel=adversary_vel,
        step_count=state.step_count + 1,
    )
    good_obs, adversary_obs = observe(new_state)
    good_reward, adversary_reward = reward(new_state)
    done = new_state.step_count == physics.episode_length
    return StepOutcome(new_state, good_obs, adversary_obs,
                       good_reward, adversary_reward, done)


def _require(state, kind):
    if state.kind is not kind:
        raise ValueError(f'Expected a {kind.value} world, '
                         f'got {state.kind.value}')


def observe_push_good(state):
    _require(state, ScenarioKind.SIMPLE_PUSH)
    own = state.agent_pos
    return np.concatenate([
        state.agent_vel,
        state.goal - own,
        state.landmark_colors[state.goal_index],
        (state.landmarks - own).ravel(),
        state.landmark_colors.ravel(),
        state.adversary_pos - own,
    ])


def observe_push_adversary(state):
    _require(state, ScenarioKind.SIMPLE_PUSH)
    own = state.adversary_pos
    return np.concatenate([
        state.adversary_vel,
        (state.landmarks - own).ravel(),
        state.agent_pos - own,
    ])


def observe_adv_good(state):
    _require(state, ScenarioKind.SIMPLE_ADVERSARY)
    own = state.agent_pos
    return np.concatenate([
        own,
        state.goal - own,
        state.adversary_pos - own,
    ])


def observe_adv_adversary(state):
    _require(state, ScenarioKind.SIMPLE_ADVERSARY)
    own = state.adversary_pos
    return np.concatenate([
        state.landmarks[0] - own,
        state.agent_pos - own,
    ])


def _distance(a, b):
    return float(np.sqrt(np.sum(np.square(np.asarray(a) - np.asarray(b)))))


def reward_push(state):
    """Simple Push rewards `(r_good, r_adv)`"""
    _require(state, ScenarioKind.SIMPLE_PUSH)
    agent_dist = _distance(state.agent_pos, state.goal)
    adversary_dist = _distance(state.adversary_pos, state.goal)
    return -agent_dist, agent_dist - adversary_dist


def reward_adversary_scenario(state):
    """Simple Adversary rewards `(r_good, r_adv)`"""
    _require(state, ScenarioKind.SIMPLE_ADVERSARY)
    agent_dist = _distance(state.agent_pos, state.goal)
    adversary_dist = _distance(state.adversary_pos, state.goal)
    return adversary_dist - agent_dist, -adversary_dist


def observe(state):
    """Observations `(good, adversary)` for the state's scenario"""
    if state.kind is ScenarioKind.SIMPLE_PUSH:
        return observe_push_good(state), observe_push_adversary(state)
    return observe_adv_good(state), observe_adv_adversary(state)


def reward(state):
    """Rewards `(good, adversary)` for the state's scenario"""
    if state.kind is ScenarioKind.SIMPLE_PUSH:
        return reward_push(state)
    return reward_adversary_scenario(state)
