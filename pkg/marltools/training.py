"""
Experimental protocol.

1. `run_ali` trains a good agent and an adversary against each other
   (adversarial learning initialization).
2. `train_vs_fixed` freezes one of them and trains a fresh primary agent
   (plain or mixture-of-experts) against it.
3. `evaluate` plays greedy test episodes and reports the mean and max
   episode reward of each side.

The primary agent is the adversary in Simple Push and the good agent in
Simple Adversary (see `primary_role`).

Every source of randomness is a named generator derived from the run
seed, so a `(config, seed)` pair fixes every trajectory.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from .agents import (
    DdqnAgent, EpsilonSchedule, MoeQNetwork, ddqn_train_step, make_network,
    moe_forward, select_action, sync_target)
from .envs import NUM_ACTIONS, Action, ScenarioKind, observation_sizes, \
    observe, reset, step
from .numerics import NonFiniteError
from .opponent import OpponentTracker
from .replay import PerBuffer, Transition
from .utils import spawn_rngs

logger = logging.getLogger(__name__)

ROLES = ('good', 'adversary')

ALI_STREAM = 1
MAIN_STREAM = 2
EVAL_STREAM = 3

_RNG_NAMES = ('env', 'good', 'adversary', 'good_replay', 'adversary_replay',
              'good_init', 'adversary_init')


class TrainingError(RuntimeError):
    """Raised when training diverges"""
    pass


def primary_role(kind):
    """Role of the learning agent in the second training phase"""
    if ScenarioKind.parse(kind) is ScenarioKind.SIMPLE_PUSH:
        return 'adversary'
    return 'good'


def other_role(role):
    return 'adversary' if role == 'good' else 'good'


def _observation_size(kind, role):
    good, adversary = observation_sizes(kind)
    return good if role == 'good' else adversary


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    reward_good: float
    reward_adv: float
    steps: int
    epsilon: float


@dataclass(frozen=True)
class EvalStats:
    mean: float
    max: float
    count: int

    @classmethod
    def from_rewards(cls, rewards):
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.size == 0:
            raise ValueError('No episode rewards to summarize')
        return cls(float(np.mean(rewards)), float(np.max(rewards)),
                   int(rewards.size))


@dataclass
class EvalResult:
    """
    Attributes
    ----------
    good, adversary : EvalStats
    rewards : (episodes, 2) np.ndarray
        Per-episode cumulative rewards `(good, adversary)`.
    gate_usage : dict[str, np.ndarray]
        Mean mixture weights of every mixture-of-experts player.
    trajectory : list[tuple]
        Per-step rows, filled only when requested.
    """
    good: EvalStats
    adversary: EvalStats
    rewards: np.ndarray
    gate_usage: dict
    trajectory: list

    def stats(self, role):
        return self.good if role == 'good' else self.adversary


class RandomPolicy:
    """Uniformly random actions, whatever the observation"""

    kind = 'random'
    uses_opponent_features = False

    def act(self, obs, opp, epsilon, rng):
        return Action(int(rng.integers(NUM_ACTIONS)))

    def __repr__(self):
        return 'RandomPolicy()'


def rolling_score(episode_rewards, window):
    """
    Rolling mean of episode rewards.

    Element `i` is the mean of `rewards[max(0, i - window + 1):i + 1]`, so
    the window expands until `window` episodes are available.
    """
    if window < 1:
        raise ValueError(f'Window must be >= 1, got {window}')
    rewards = np.asarray(episode_rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise ValueError('Rolling score of an empty reward sequence')
    return np.array([np.mean(rewards[max(0, i - window + 1):i + 1])
                     for i in range(len(rewards))])


# ----------------------------------------------------------------------
#   episode driver
# ----------------------------------------------------------------------


class _Learner:
    """Replay buffer and update cadence of one learning agent"""

    def __init__(self, role, agent, config, replay_rng):
        self.role = role
        self.agent = agent
        replay = config.replay
        self.buffer = PerBuffer(replay.replay_memory_size, replay.alpha,
                                replay.beta, replay.epsilon_per,
                                replay.annealing_steps)
        self.replay_rng = replay_rng
        self.warmup = max(replay.replay_start_size, replay.minibatch_size)
        self.batch_size = replay.minibatch_size
        self.gamma = config.agent.discount_factor
        self.lr = config.agent.learning_rate
        self.train_frequency = config.training.train_frequency
        self.env_steps = 0

    def record(self, transition):
        self.buffer.push(transition)
        self.env_steps += 1
        self.buffer.anneal_beta(self.env_steps)
        if (len(self.buffer) >= self.warmup
                and self.env_steps % self.train_frequency == 0):
            batch, indices, weights = self.buffer.sample(
                self.batch_size, self.replay_rng)
            td_errors = ddqn_train_step(self.agent, batch, weights,
                                        self.gamma, self.lr)
            self.buffer.update_priorities(indices, td_errors)


class _Side:
    """A player: its policy, its action stream and what it knows of the
    other player's actions"""

    def __init__(self, role, policy, rng, learner=None, gate_log=None):
        self.role = role
        self.policy = policy
        self.rng = rng
        self.learner = learner
        self.tracker = OpponentTracker()
        self.gate_log = gate_log

    def act(self, obs, features, epsilon):
        if self.gate_log is not None:
            q, omega, _ = moe_forward(self.policy.online, obs, features)
            self.gate_log.append(omega)
            return select_action(q, epsilon, self.rng)
        return self.policy.act(obs, features, epsilon, self.rng)


def _play_episode(kind, physics, env_rng, sides, epsilons, episode=0,
                  trajectory=None):
    state = reset(kind, env_rng)
    obs = dict(zip(ROLES, observe(state)))
    totals = dict.fromkeys(ROLES, 0.0)
    for side in sides.values():
        side.tracker.reset()
    done = False
    while not done:
        features = {role: sides[role].tracker.features() for role in ROLES}
        actions = {role: sides[role].act(obs[role], features[role],
                                         epsilons[role])
                   for role in ROLES}
        outcome = step(state, actions['good'], actions['adversary'],
                       physics=physics)
        done = outcome.done
        next_obs = dict(good=outcome.good_obs,
                        adversary=outcome.adversary_obs)
        rewards = dict(good=outcome.good_reward,
                       adversary=outcome.adversary_reward)
        for role in ROLES:
            sides[role].tracker.update(actions[other_role(role)])
        for role, side in sides.items():
            if side.learner is None:
                continue
            transition = Transition(
                obs[role], actions[role], rewards[role], next_obs[role],
                done, actions[other_role(role)], features[role],
                side.tracker.features())
            try:
                side.learner.record(transition)
            except NonFiniteError as e:
                raise TrainingError(
                    f'{role} agent diverged at episode {episode}, step '
                    f'{outcome.state.step_count} (global step '
                    f'{side.learner.env_steps}): {e}') from e
        if trajectory is not None:
            new = outcome.state
            trajectory.append((
                episode, new.step_count,
                float(new.agent_pos[0]), float(new.agent_pos[1]),
                float(new.adversary_pos[0]), float(new.adversary_pos[1]),
                int(actions['good']), int(actions['adversary']),
                rewards['good'], rewards['adversary'],
            ))
        for role in ROLES:
            totals[role] += rewards[role]
        state, obs = outcome.state, next_obs
    return totals, state.step_count


def _epsilon_schedule(config):
    agent = config.agent
    horizon = round(agent.epsilon_decay_fraction
                    * config.training.total_training_episodes)
    return EpsilonSchedule(agent.initial_epsilon, agent.final_epsilon,
                           horizon)


def _new_learner(config, role, rngs, use_moe):
    kind = config.scenario
    network = make_network(config.agent, _observation_size(kind, role),
                           rngs[f'{role}_init'], use_moe=use_moe)
    agent = DdqnAgent(network, _epsilon_schedule(config),
                      double_q=config.agent.double_q)
    return _Learner(role, agent, config, rngs[f'{role}_replay'])


def _train(config, sides, env_rng, label, progress=False,
           on_checkpoint=None):
    training = config.training
    physics = config.env.physics()
    learners = [s.learner for s in sides.values() if s.learner is not None]
    schedule = learners[0].agent.epsilon
    fixed_epsilon = training.opponent_epsilon

    records = []
    rewards = {role: [] for role in ROLES}
    episodes = range(training.total_training_episodes)
    for episode in tqdm(episodes, desc=label, unit='episode',
                        disable=not progress, leave=False):
        epsilon = schedule(episode)
        epsilons = {role: epsilon if sides[role].learner is not None
                    else fixed_epsilon for role in ROLES}
        totals, steps = _play_episode(config.scenario, physics, env_rng,
                                      sides, epsilons, episode)
        records.append(EpisodeRecord(episode, totals['good'],
                                     totals['adversary'], steps, epsilon))
        for role in ROLES:
            rewards[role].append(totals[role])

        if (episode + 1) % training.target_network_update_frequency == 0:
            for learner in learners:
                sync_target(learner.agent)
            logger.debug(f'[{label}] target networks synced after episode '
                         f'{episode + 1}')
        if training.log_interval and (
                (episode + 1) % training.log_interval == 0):
            window = training.rolling_window
            scores = {role: np.mean(rewards[role][-window:])
                      for role in ROLES}
            logger.info(
                f'[{label}] episode {episode + 1}/{len(episodes)} | '
                f'good {totals["good"]:.3f} (score {scores["good"]:.3f}) | '
                f'adversary {totals["adversary"]:.3f} '
                f'(score {scores["adversary"]:.3f}) | '
                f'epsilon {epsilon:.3f} | '
                f'buffer {len(learners[0].buffer)}')
        if on_checkpoint is not None and training.checkpoint_interval and (
                (episode + 1) % training.checkpoint_interval == 0):
            on_checkpoint(episode + 1, {learner.role: learner.agent
                                        for learner in learners})
    return records


def run_ali(config, progress=False, on_checkpoint=None):
    """
    Adversarial learning initialization: two fresh plain DDQN agents
    learn against each other.

    Parameters
    ----------
    config : RunConfig
        `agent.use_moe` is ignored, both sides use plain networks.
    progress : bool
        Show a progress bar.
    on_checkpoint : callable(episode, dict[str, DdqnAgent]), optional
        Called every `training.checkpoint_interval` episodes.

    Returns
    -------
    good_agent, adversary_agent : DdqnAgent
    records : list[EpisodeRecord]
    """
    if config.agent.use_moe:
        logger.debug('Adversarial initialization uses plain DDQN agents')
    rngs = spawn_rngs(config.seed, _RNG_NAMES, stream=ALI_STREAM)
    sides = {}
    for role in ROLES:
        learner = _new_learner(config, role, rngs, use_moe=False)
        sides[role] = _Side(role, learner.agent, rngs[role], learner)
    records = _train(config, sides, rngs['env'], 'ali', progress,
                     on_checkpoint)
    return sides['good'].learner.agent, sides['adversary'].learner.agent, \
        records


def train_vs_fixed(config, opponent, progress=False, on_checkpoint=None,
                   use_moe=None):
    """
    Train a fresh primary agent against a frozen opponent.

    Parameters
    ----------
    config : RunConfig
    opponent : DdqnAgent or RandomPolicy
        Plays the other role with exploration `training.opponent_epsilon`.
        Its parameters are never modified.
    progress : bool
    on_checkpoint : callable(episode, dict[str, DdqnAgent]), optional
    use_moe : bool, optional
        Overrides `agent.use_moe`.

    Returns
    -------
    agent : DdqnAgent
    records : list[EpisodeRecord]
    """
    role = primary_role(config.scenario)
    _check_policy(config, other_role(role), opponent)
    if use_moe is None:
        use_moe = config.agent.use_moe
    rngs = spawn_rngs(config.seed, _RNG_NAMES, stream=MAIN_STREAM)
    learner = _new_learner(config, role, rngs, use_moe=use_moe)
    sides = {
        role: _Side(role, learner.agent, rngs[role], learner),
        other_role(role): _Side(other_role(role), opponent,
                                rngs[other_role(role)]),
    }
    label = 'ddqn-moe' if use_moe else 'ddqn'
    records = _train(config, sides, rngs['env'], label, progress,
                     on_checkpoint)
    return learner.agent, records


def _check_policy(config, role, policy):
    online = getattr(policy, 'online', None)
    if online is None:
        return
    expected = _observation_size(config.scenario, role)
    if online.obs_size != expected:
        raise ValueError(
            f'The {role} of {config.scenario.value} observes {expected} '
            f'values, but its network expects {online.obs_size}')


def evaluate(good, adversary, config, workers=1, trajectory=False,
             progress=False):
    """
    Greedy test play between two frozen policies.

    Episode `i` draws its randomness from `(seed, i)` only, so the result
    does not depend on `workers`.

    Parameters
    ----------
    good, adversary : DdqnAgent or RandomPolicy
    config : RunConfig
        `training.total_testing_episodes` episodes are played.
    workers : int
        Number of threads.
    trajectory : bool
        Record per-step positions, actions and rewards.
    progress : bool

    Returns
    -------
    result : EvalResult
    """
    policies = dict(good=good, adversary=adversary)
    for role, policy in policies.items():
        _check_policy(config, role, policy)
    physics = config.env.physics()
    count = config.training.total_testing_episodes
    epsilons = dict.fromkeys(ROLES, 0.0)

    def play(episode):
        seq = np.random.SeedSequence([config.seed, EVAL_STREAM, episode])
        env_seq, good_seq, adversary_seq = seq.spawn(3)
        rngs = dict(good=np.random.default_rng(good_seq),
                    adversary=np.random.default_rng(adversary_seq))
        gates = {}
        sides = {}
        for role, policy in policies.items():
            online = getattr(policy, 'online', None)
            gate_log = None
            if isinstance(online, MoeQNetwork):
                gate_log = gates[role] = []
            sides[role] = _Side(role, policy, rngs[role], gate_log=gate_log)
        rows = [] if trajectory else None
        totals, _ = _play_episode(config.scenario, physics,
                                  np.random.default_rng(env_seq), sides,
                                  epsilons, episode, rows)
        return totals, gates, rows

    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as executor:
        outcomes = list(tqdm(executor.map(play, range(count)), total=count,
                             desc='eval', unit='episode',
                             disable=not progress, leave=False))

    rewards = np.array([[totals['good'], totals['adversary']]
                        for totals, _, _ in outcomes])
    gate_usage = {}
    for role in ROLES:
        weights = [w for _, gates, _ in outcomes for w in gates.get(role, [])]
        if weights:
            gate_usage[role] = np.mean(weights, axis=0)
    rows = [row for _, _, episode_rows in outcomes
            for row in (episode_rows or [])]
    result = EvalResult(
        good=EvalStats.from_rewards(rewards[:, 0]),
        adversary=EvalStats.from_rewards(rewards[:, 1]),
        rewards=rewards,
        gate_usage=gate_usage,
        trajectory=rows,
    )
    logger.info(f'[eval] {count} episodes | good mean {result.good.mean:.4f}'
                f' max {result.good.max:.4f} | adversary mean '
                f'{result.adversary.mean:.4f} max {result.adversary.max:.4f}')
    for role, weights in gate_usage.items():
        usage = ', '.join(f'{w:.3f}' for w in weights)
        logger.info(f'[eval] {role} gate usage: [{usage}]')
    return result


@dataclass
class Comparison:
    """One primary agent of a comparison run"""
    algorithm: str
    agent: DdqnAgent
    records: list
    result: EvalResult


def compare_against(config, opponent, workers=1, progress=False):
    """
    Train a mixture-of-experts and a plain DDQN primary agent against the
    same frozen opponent, on the same environment streams, and evaluate
    both.

    Returns
    -------
    comparisons : list[Comparison]
        `DDQN-MOE` first, then `DDQN`.
    """
    role = primary_role(config.scenario)
    comparisons = []
    for algorithm, use_moe in (('DDQN-MOE', True), ('DDQN', False)):
        agent, records = train_vs_fixed(config, opponent, progress,
                                        use_moe=use_moe)
        players = {role: agent, other_role(role): opponent}
        result = evaluate(players['good'], players['adversary'], config,
                          workers=workers, progress=progress)
        comparisons.append(Comparison(algorithm, agent, records, result))
    return comparisons
