"""
Q-learning agents.

Classes
-------
QTable
    Dense state-action table for small finite problems.
EpsilonSchedule
    Linear exploration schedule.
MlpQNetwork
    Plain Q-network `obs -> 64 -> 128 -> 5`.
MoeQNetwork
    Mixture-of-experts Q-network. A state encoder feeds K expert heads;
    an opponent encoder feeds a softmax gate that weighs the experts.
DdqnAgent
    Online network, periodically synced target network, exploration.

Functions
---------
tabular_q_update
    One Q-learning update of a `QTable`.
select_action
    Epsilon-greedy action selection (lowest index wins ties).
ddqn_target
    Double-Q (or plain DQN) bootstrap target.
ddqn_train_step
    One importance-weighted TD update of the online network.
sync_target
    Copy the online network into the target network.
moe_forward, moe_backward
    Mixture-of-experts forward pass and gradients.
gradient_check, td_loss_gradient_check
    Finite-difference oracles for the networks and the TD loss.
"""
import numpy as np
from .envs import NUM_ACTIONS, Action
from .numerics import (
    HIDDEN_SIZES, MlpParams, ShapeError, NonFiniteError,
    check_shape, mlp_forward, mlp_backward, adam_step, softmax, mse,
    numeric_gradient, relative_error, _forward)
from .opponent import FEATURE_SIZE


# ======================================================================
#
#                           TABULAR Q-LEARNING
#
# ======================================================================


class QTable:
    """Q-values of a finite MDP, `values[state, action]`"""

    def __init__(self, num_states, num_actions, values=None):
        if values is None:
            values = np.zeros((num_states, num_actions))
        self.values = check_shape(np.array(values, dtype=np.float64),
                                  (num_states, num_actions), 'Q-table')

    @property
    def num_states(self):
        return self.values.shape[0]

    @property
    def num_actions(self):
        return self.values.shape[1]

    def greedy_policy(self):
        return np.argmax(self.values, axis=1)


def tabular_q_update(table, s, a, r, s_next, alpha, gamma, terminal=False):
    """
    `Q(s, a) <- (1 - alpha) Q(s, a) + alpha (r + gamma max_a' Q(s', a'))`

    Parameters
    ----------
    table : QTable
    s, a, s_next : int
    r : float
    alpha : float in (0, 1]
    gamma : float in [0, 1]
    terminal : bool
        Do not bootstrap from `s_next`.

    Returns
    -------
    table : QTable
        Updated in place.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f'Step size must be in (0, 1], got {alpha}')
    if not 0 <= gamma <= 1:
        raise ValueError(f'Discount must be in [0, 1], got {gamma}')
    for name, index, size in (('state', s, table.num_states),
                              ('action', a, table.num_actions),
                              ('next state', s_next, table.num_states)):
        if not 0 <= int(index) < size:
            raise IndexError(f'Invalid {name} {index}')
    target = r
    if not terminal:
        target = r + gamma * np.max(table.values[s_next])
    table.values[s, a] = (1 - alpha) * table.values[s, a] + alpha * target
    return table


# ======================================================================
#
#                               EXPLORATION
#
# ======================================================================


def select_action(q_values, epsilon, rng):
    """
    Epsilon-greedy action.

    With probability `epsilon` a uniform random action, otherwise the
    argmax of `q_values` (lowest index wins ties).
    """
    if not 0 <= epsilon <= 1:
        raise ValueError(f'Epsilon must be in [0, 1], got {epsilon}')
    q_values = check_shape(q_values, (NUM_ACTIONS,), 'q_values')
    if rng.random() < epsilon:
        return Action(int(rng.integers(NUM_ACTIONS)))
    return Action(int(np.argmax(q_values)))


class EpsilonSchedule:
    """
    Linear decay from `initial` to `final` over `horizon` steps, constant
    afterwards. The unit of `horizon` is up to the caller (episodes in
    the training loop).
    """

    def __init__(self, initial=1.0, final=0.1, horizon=1):
        if not 0 <= final <= initial <= 1:
            raise ValueError(f'Invalid epsilon range {initial} -> {final}')
        self.initial = float(initial)
        self.final = float(final)
        self.horizon = max(0, int(horizon))

    def __call__(self, t):
        if t >= self.horizon:
            return self.final
        return self.initial + (self.final - self.initial) * t / self.horizon

    def __repr__(self):
        return (f'EpsilonSchedule({self.initial} -> {self.final} '
                f'over {self.horizon})')


# ======================================================================
#
#                              Q-NETWORKS
#
# ======================================================================


def _extended(params):
    return ([w.astype(np.longdouble) for w in params.weights],
            [b.astype(np.longdouble) for b in params.biases])


class MlpQNetwork:
    """
    Plain Q-network. Opponent features, when given, are ignored.
    """

    kind = 'ddqn'
    uses_opponent_features = False

    def __init__(self, params):
        self.params = params

    @classmethod
    def initialize(cls, obs_size, rng, hidden_sizes=HIDDEN_SIZES,
                   num_actions=NUM_ACTIONS):
        sizes = [obs_size, *hidden_sizes, num_actions]
        return cls(MlpParams.initialize(sizes, rng))

    @property
    def obs_size(self):
        return self.params.input_size

    def subnetworks(self):
        return [('mlp', self.params)]

    def parameters(self):
        return self.params.parameters()

    def named_parameters(self):
        return self.params.named_parameters('mlp.')

    def forward(self, obs, opp=None):
        return mlp_forward(self.params, obs)

    def q_values(self, obs, opp=None):
        return self.forward(obs, opp)[0]

    def backward(self, cache, q_gradient):
        return mlp_backward(self.params, cache, q_gradient)

    def adam_step(self, grads, lr):
        adam_step(self.params, grads, lr)
        return self

    def copy(self):
        return MlpQNetwork(self.params.copy())

    def extended(self):
        return [_extended(self.params)]

    def evaluate_extended(self, ext, obs, opp=None):
        (weights, biases), = ext
        out, cache = _forward(weights, biases, obs, False)
        return out, cache.pattern

    def __repr__(self):
        return f'MlpQNetwork({self.params!r})'


class MoeCache:
    """Intermediate values saved by `moe_forward`"""

    def __init__(self, state, opponent, experts, gate, omega, expert_q,
                 squeeze):
        self.state = state
        self.opponent = opponent
        self.experts = experts
        self.gate = gate
        self.omega = omega
        self.expert_q = expert_q
        self.squeeze = squeeze


class MoeGradientSet:
    """Gradients of every sub-network of a `MoeQNetwork`"""

    def __init__(self, state_encoder, opponent_encoder, experts, gate):
        self.state_encoder = state_encoder
        self.opponent_encoder = opponent_encoder
        self.experts = list(experts)
        self.gate = gate

    def subnetworks(self):
        return ([self.state_encoder, self.opponent_encoder]
                + self.experts + [self.gate])

    def parameters(self):
        return [g for sub in self.subnetworks() for g in sub.parameters()]


class MoeQNetwork:
    """
    Mixture-of-experts Q-network.

    ```
    h_s   = ReLU(W_s phi_s + b_s)                    state encoder
    h_o   = ReLU(W_o phi_o + b_o)                    opponent encoder
    Q_i   = expert_i(h_s)                            i = 1..K
    omega = softmax(gate(h_o))
    Q     = sum_i omega_i Q_i
    ```

    The gate only sees the opponent features, and the experts only see
    the state.
    """

    kind = 'ddqn-moe'
    uses_opponent_features = True

    def __init__(self, state_encoder, opponent_encoder, experts, gate):
        experts = list(experts)
        if not experts:
            raise ValueError('A mixture needs at least one expert')
        if not (state_encoder.output_relu and opponent_encoder.output_relu):
            raise ValueError('Encoders must end with a ReLU')
        for k, expert in enumerate(experts):
            if expert.input_size != state_encoder.output_size:
                raise ShapeError(f'Expert {k} expects {expert.input_size} '
                                 f'inputs, state embedding has '
                                 f'{state_encoder.output_size}')
            if expert.output_size != experts[0].output_size:
                raise ShapeError('All experts must have the same outputs')
        if gate.input_size != opponent_encoder.output_size:
            raise ShapeError('Gate input does not match opponent embedding')
        if gate.output_size != len(experts):
            raise ShapeError(f'Gate has {gate.output_size} outputs for '
                             f'{len(experts)} experts')
        self.state_encoder = state_encoder
        self.opponent_encoder = opponent_encoder
        self.experts = experts
        self.gate = gate

    @classmethod
    def initialize(cls, obs_size, rng, num_experts=4,
                   state_embedding_size=64, opponent_embedding_size=16,
                   expert_hidden_size=64, gate_hidden_size=16,
                   num_actions=NUM_ACTIONS):
        state_encoder = MlpParams.initialize(
            [obs_size, state_embedding_size], rng, output_relu=True)
        opponent_encoder = MlpParams.initialize(
            [FEATURE_SIZE, opponent_embedding_size], rng, output_relu=True)
        experts = [
            MlpParams.initialize(
                [state_embedding_size, expert_hidden_size, num_actions], rng)
            for _ in range(num_experts)
        ]
        gate = MlpParams.initialize(
            [opponent_embedding_size, gate_hidden_size, num_experts], rng)
        return cls(state_encoder, opponent_encoder, experts, gate)

    @property
    def num_experts(self):
        return len(self.experts)

    @property
    def obs_size(self):
        return self.state_encoder.input_size

    def subnetworks(self):
        return ([('state_encoder', self.state_encoder),
                 ('opponent_encoder', self.opponent_encoder)]
                + [(f'experts.{k}', e) for k, e in enumerate(self.experts)]
                + [('gate', self.gate)])

    def parameters(self):
        return [p for _, sub in self.subnetworks() for p in sub.parameters()]

    def named_parameters(self):
        return [item for name, sub in self.subnetworks()
                for item in sub.named_parameters(name + '.')]

    def forward(self, obs, opp):
        q, _, cache = moe_forward(self, obs, opp)
        return q, cache

    def q_values(self, obs, opp):
        return moe_forward(self, obs, opp)[0]

    def gate_weights(self, opp):
        """Mixture weights for a (batch of) opponent feature vector(s)"""
        h, _ = mlp_forward(self.opponent_encoder, opp)
        logits, _ = mlp_forward(self.gate, h)
        return softmax(logits)

    def backward(self, cache, q_gradient):
        return _moe_backward(self, cache, q_gradient)

    def adam_step(self, grads, lr):
        for (_, sub), sub_grads in zip(self.subnetworks(),
                                       grads.subnetworks()):
            adam_step(sub, sub_grads, lr)
        return self

    def copy(self):
        return MoeQNetwork(self.state_encoder.copy(),
                           self.opponent_encoder.copy(),
                           [e.copy() for e in self.experts],
                           self.gate.copy())

    def extended(self):
        return [_extended(sub) for _, sub in self.subnetworks()]

    def evaluate_extended(self, ext, obs, opp):
        state, opponent, *experts, gate = ext
        hs, cs = _forward(*state, np.atleast_2d(obs), True)
        ho, co = _forward(*opponent, np.atleast_2d(opp), True)
        pattern = cs.pattern + co.pattern
        expert_q = []
        for weights, biases in experts:
            out, ce = _forward(weights, biases, hs, False)
            expert_q.append(out)
            pattern += ce.pattern
        logits, cg = _forward(*gate, ho, False)
        pattern += cg.pattern
        omega = softmax(logits)
        q = np.einsum('nk,nka->na', omega, np.stack(expert_q, axis=1))
        return (q[0] if np.ndim(obs) == 1 else q), pattern

    def __repr__(self):
        return (f'MoeQNetwork(obs={self.obs_size}, '
                f'experts={self.num_experts})')


def moe_forward(net, obs, opp):
    """
    Mixture-of-experts forward pass.

    Parameters
    ----------
    net : MoeQNetwork
    obs : (d,) or (batch, d) array_like
        Scenario observation `phi_s`.
    opp : (6,) or (batch, 6) array_like
        Opponent features `phi_o`.

    Returns
    -------
    q : (5,) or (batch, 5) np.ndarray
    omega : (K,) or (batch, K) np.ndarray
    cache : MoeCache
    """
    obs = np.asarray(obs, dtype=np.float64)
    opp = np.asarray(opp, dtype=np.float64)
    if obs.ndim != opp.ndim or obs.ndim not in (1, 2) or (
            obs.ndim == 2 and len(obs) != len(opp)):
        raise ShapeError(f'Observation {obs.shape} and opponent features '
                         f'{opp.shape} must be matching vectors or batches')
    squeeze = obs.ndim == 1
    obs, opp = np.atleast_2d(obs), np.atleast_2d(opp)
    hs, state_cache = mlp_forward(net.state_encoder, obs)
    ho, opponent_cache = mlp_forward(net.opponent_encoder, opp)
    expert_q, expert_caches = [], []
    for expert in net.experts:
        out, cache = mlp_forward(expert, hs)
        expert_q.append(out)
        expert_caches.append(cache)
    expert_q = np.stack(expert_q, axis=1)
    logits, gate_cache = mlp_forward(net.gate, ho)
    omega = softmax(logits)
    q = np.einsum('nk,nka->na', omega, expert_q)
    cache = MoeCache(state_cache, opponent_cache, expert_caches, gate_cache,
                     omega, expert_q, squeeze)
    if squeeze:
        return q[0], omega[0], cache
    return q, omega, cache


def _moe_backward(net, cache, q_gradient):
    dq = np.atleast_2d(np.asarray(q_gradient, dtype=np.float64))
    if dq.shape != cache.expert_q[:, 0].shape:
        raise ShapeError(f'Q gradient has shape {np.shape(q_gradient)}, '
                         f'expected {cache.expert_q[:, 0].shape}')
    omega = cache.omega

    # experts: dQ_i = omega_i * dq
    expert_grads = []
    d_state = 0
    for k, (expert, expert_cache) in enumerate(zip(net.experts,
                                                   cache.experts)):
        grads = mlp_backward(expert, expert_cache, omega[:, k:k+1] * dq)
        expert_grads.append(grads)
        d_state = d_state + grads.inputs

    # gate: softmax Jacobian times <dq, Q_i>
    d_omega = np.einsum('na,nka->nk', dq, cache.expert_q)
    d_logits = omega * (d_omega - np.sum(omega * d_omega, axis=1,
                                         keepdims=True))
    gate_grads = mlp_backward(net.gate, cache.gate, d_logits)
    opponent_grads = mlp_backward(net.opponent_encoder, cache.opponent,
                                  gate_grads.inputs)
    state_grads = mlp_backward(net.state_encoder, cache.state, d_state)
    return MoeGradientSet(state_grads, opponent_grads, expert_grads,
                          gate_grads)


def _one_hot_gradient(action, loss_gradient, batch_shape):
    action = np.asarray(action, dtype=np.int64)
    loss_gradient = np.asarray(loss_gradient, dtype=np.float64)
    q_gradient = np.zeros(batch_shape + (NUM_ACTIONS,))
    if q_gradient.ndim == 1:
        q_gradient[int(action)] = loss_gradient
    else:
        q_gradient[np.arange(len(q_gradient)), action] = loss_gradient
    return q_gradient


def moe_backward(net, cache, action, loss_gradient):
    """
    Gradients of a loss that depends on `q[action]` only.

    Parameters
    ----------
    net : MoeQNetwork
    cache : MoeCache
        From `moe_forward`.
    action : int or (batch,) array_like[int]
    loss_gradient : float or (batch,) array_like
        Derivative of the loss with respect to `q[action]`.

    Returns
    -------
    grads : MoeGradientSet
    """
    batch_shape = () if cache.squeeze else (len(cache.omega),)
    q_gradient = _one_hot_gradient(action, loss_gradient, batch_shape)
    return _moe_backward(net, cache, q_gradient)


def make_network(config, obs_size, rng, use_moe=None):
    """
    Freshly initialized Q-network.

    Parameters
    ----------
    config : AgentConfig
        Layer sizes and the `use_moe` flag.
    obs_size : int
    rng : np.random.Generator
    use_moe : bool, optional
        Overrides `config.use_moe`.
    """
    if use_moe is None:
        use_moe = config.use_moe
    if use_moe:
        return MoeQNetwork.initialize(
            obs_size, rng,
            num_experts=config.num_experts,
            state_embedding_size=config.state_embedding_size,
            opponent_embedding_size=config.opponent_embedding_size,
            expert_hidden_size=config.expert_hidden_size,
            gate_hidden_size=config.gate_hidden_size,
        )
    return MlpQNetwork.initialize(obs_size, rng,
                                  hidden_sizes=config.hidden_sizes)


def network_from_arrays(kind, named_arrays):
    """
    Rebuild a network from `(name, array)` pairs as produced by
    `named_parameters()`.
    """
    groups = {}
    for name, array in named_arrays:
        prefix, _, leaf = name.rpartition('.')
        groups.setdefault(prefix, {})[leaf] = np.asarray(array)

    def params(prefix, output_relu=False):
        if prefix not in groups:
            raise ValueError(f'Missing parameters for "{prefix}"')
        leaves = groups[prefix]
        depth = len(leaves) // 2
        try:
            weights = [leaves[f'W{k+1}'] for k in range(depth)]
            biases = [leaves[f'b{k+1}'] for k in range(depth)]
        except KeyError as e:
            raise ValueError(f'Missing parameter {prefix}.{e.args[0]}')
        return MlpParams(weights, biases, output_relu)

    if kind == MlpQNetwork.kind:
        return MlpQNetwork(params('mlp'))
    if kind == MoeQNetwork.kind:
        num_experts = sum(1 for p in groups if p.startswith('experts.'))
        return MoeQNetwork(
            params('state_encoder', output_relu=True),
            params('opponent_encoder', output_relu=True),
            [params(f'experts.{k}') for k in range(num_experts)],
            params('gate'),
        )
    raise ValueError(f'Unknown network kind "{kind}"')


# ======================================================================
#
#                             DOUBLE DQN
#
# ======================================================================


class DdqnAgent:
    """
    A Q-learning agent with an online network (trained at every update)
    and a target network (synced every few episodes).

    Parameters
    ----------
    online : MlpQNetwork or MoeQNetwork
    epsilon : EpsilonSchedule
    double_q : bool
        Select the bootstrap action with the online network and evaluate
        it with the target network. If False, use the DQN target
        `max_a Q_target(s', a)`.
    """

    def __init__(self, online, epsilon=None, double_q=True):
        self.online = online
        self.target = online.copy()
        self.epsilon = epsilon or EpsilonSchedule()
        self.double_q = bool(double_q)
        self.updates = 0

    @property
    def uses_opponent_features(self):
        return self.online.uses_opponent_features

    def q_values(self, obs, opp=None):
        return self.online.q_values(obs, opp)

    def act(self, obs, opp, epsilon, rng):
        return select_action(self.q_values(obs, opp), epsilon, rng)

    def __repr__(self):
        return (f'DdqnAgent({self.online!r}, double_q={self.double_q}, '
                f'updates={self.updates})')


def sync_target(agent):
    """Make the target network an exact copy of the online network"""
    agent.target = agent.online.copy()
    return agent


def _split_inputs(inputs):
    if isinstance(inputs, tuple):
        return inputs
    return inputs, None


def ddqn_target(reward, next_inputs, done, online_net, target_net, gamma,
                double_q=True):
    """
    Bootstrap target.

    `r` if `done`, else `r + gamma * Q_target(s', argmax_a Q_online(s', a))`
    (or `r + gamma * max_a Q_target(s', a)` if not `double_q`).

    Parameters
    ----------
    reward : float or (batch,) array_like
    next_inputs : array_like or tuple(array_like, array_like)
        Next observation(s), or `(next_obs, next_opponent_features)`.
    done : bool or (batch,) array_like
    online_net, target_net : MlpQNetwork or MoeQNetwork
    gamma : float in [0, 1]
    double_q : bool

    Returns
    -------
    target : float or (batch,) np.ndarray
    """
    if not 0 <= gamma <= 1:
        raise ValueError(f'Discount must be in [0, 1], got {gamma}')
    obs, opp = _split_inputs(next_inputs)
    reward = np.asarray(reward, dtype=np.float64)
    done = np.asarray(done, dtype=bool)
    q_target = target_net.q_values(obs, opp)
    if double_q:
        best = np.argmax(online_net.q_values(obs, opp), axis=-1)
        bootstrap = np.take_along_axis(
            np.atleast_2d(q_target), np.atleast_1d(best)[:, None], axis=-1
        )[:, 0]
    else:
        bootstrap = np.atleast_2d(q_target).max(axis=-1)
    if reward.ndim == 0:
        bootstrap = bootstrap[0]
    target = reward + gamma * np.where(done, 0.0, bootstrap)
    return float(target) if target.ndim == 0 else target


def td_loss(agent, batch, is_weights, gamma):
    """
    Importance-weighted squared TD error of the online network.

    Returns
    -------
    loss : float
    grads : GradientSet or MoeGradientSet
    td_errors : (batch,) np.ndarray
        `Q_online(s, a) - target`
    """
    if len(batch) == 0:
        raise ValueError('Empty batch')
    targets = ddqn_target(
        batch.rewards, (batch.next_states, batch.next_opponent_features),
        batch.dones, agent.online, agent.target, gamma, agent.double_q)
    q, cache = agent.online.forward(batch.states, batch.opponent_features)
    rows = np.arange(len(batch))
    q_taken = q[rows, batch.actions]
    loss, d_taken = mse(q_taken, targets, is_weights)
    q_gradient = np.zeros_like(q)
    q_gradient[rows, batch.actions] = d_taken
    grads = agent.online.backward(cache, q_gradient)
    return loss, grads, q_taken - targets


def ddqn_train_step(agent, batch, is_weights, gamma, lr):
    """
    One Adam step on the importance-weighted TD loss. Only the Q-value of
    the taken action receives gradient.

    If every importance weight is zero the Adam step is skipped, moments
    included, so the parameters stay put even on a warm optimizer.

    Returns
    -------
    td_errors : (batch,) np.ndarray
    """
    loss, grads, td_errors = td_loss(agent, batch, is_weights, gamma)
    if not np.isfinite(loss):
        raise NonFiniteError(f'Non-finite TD loss ({loss})')
    if not np.any(is_weights):
        return td_errors
    agent.online.adam_step(grads, lr)
    agent.updates += 1
    return td_errors


# ======================================================================
#
#                        FINITE-DIFFERENCE ORACLES
#
# ======================================================================


def gradient_check(network, obs, opp, q_gradient, step=1e-5):
    """
    Max relative error between `network.backward` and central finite
    differences of `sum(q * q_gradient)`, over every parameter not
    sitting on a ReLU kink.
    """
    q, cache = network.forward(obs, opp)
    analytic = network.backward(cache, q_gradient).parameters()
    ext = network.extended()
    obs_e = np.asarray(obs, dtype=np.longdouble)
    opp_e = None if opp is None else np.asarray(opp, dtype=np.longdouble)
    grad_e = np.asarray(q_gradient, dtype=np.longdouble)

    def objective():
        q, pattern = network.evaluate_extended(ext, obs_e, opp_e)
        return np.sum(q * grad_e), pattern

    arrays = [p for weights, biases in ext
              for pair in zip(weights, biases) for p in pair]
    numeric = numeric_gradient(objective, arrays, step)
    return relative_error(analytic, numeric)


def td_loss_gradient_check(agent, batch, is_weights, gamma, step=1e-5):
    """
    Max relative error between the gradient used by `ddqn_train_step`
    and central finite differences of the TD loss (targets held fixed).
    """
    _, grads, td_errors = td_loss(agent, batch, is_weights, gamma)
    q, _ = agent.online.forward(batch.states, batch.opponent_features)
    rows = np.arange(len(batch))
    targets = q[rows, batch.actions] - td_errors
    ext = agent.online.extended()
    obs_e = np.asarray(batch.states, dtype=np.longdouble)
    opp_e = np.asarray(batch.opponent_features, dtype=np.longdouble)
    weights = np.asarray(is_weights, dtype=np.longdouble)
    targets = targets.astype(np.longdouble)

    def objective():
        q, pattern = agent.online.evaluate_extended(ext, obs_e, opp_e)
        diff = q[rows, batch.actions] - targets
        return np.mean(weights * diff * diff), pattern

    arrays = [p for w, b in ext for pair in zip(w, b) for p in pair]
    numeric = numeric_gradient(objective, arrays, step)
    return relative_error(grads.parameters(), numeric)


__all__ = [
    'QTable', 'tabular_q_update', 'select_action', 'EpsilonSchedule',
    'MlpQNetwork', 'MoeQNetwork', 'MoeCache', 'MoeGradientSet',
    'moe_forward', 'moe_backward', 'make_network', 'network_from_arrays',
    'DdqnAgent', 'sync_target', 'ddqn_target', 'td_loss',
    'ddqn_train_step', 'gradient_check', 'td_loss_gradient_check',
]
