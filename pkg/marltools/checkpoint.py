"""
Checkpoint files.

```
MARLCKPT 1\\n
{"agent_kind":"ddqn-moe","config":{...},...}\\n
<little-endian float64 payload>
```

The first line identifies the format and its version. The second line
is a compact JSON header (keys sorted) holding the scenario, the agent
kind, the number of experts, the role, the seed, a snapshot of the run
configuration and the shape table `[[name, [dims...]], ...]`. The
payload concatenates the parameters of the online network in the order
of the shape table. Only the online network is stored; a loaded agent
starts with a synced target network.

Loading then saving a checkpoint reproduces the same bytes.
"""
import json
import logging

import numpy as np

from . import opener
from .agents import DdqnAgent, MoeQNetwork, network_from_arrays
from .envs import ScenarioKind

logger = logging.getLogger(__name__)

MAGIC = b'MARLCKPT'
FORMAT_VERSION = 1
AGENT_KINDS = ('ddqn', 'ddqn-moe')
PAYLOAD_DTYPE = np.dtype('<f8')


class CheckpointError(ValueError):
    """Raised for malformed or incompatible checkpoints"""
    pass


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


class Checkpoint:
    """
    Frozen parameters of one agent, with enough metadata to rebuild it.

    Attributes
    ----------
    scenario : ScenarioKind
    agent_kind : {'ddqn', 'ddqn-moe'}
    role : {'good', 'adversary'}
    names : list[str]
    arrays : list[np.ndarray]
    config : dict
        Sectioned run configuration (`RunConfig.to_dict()`).
    seed : int
    """

    def __init__(self, scenario, agent_kind, role, names, arrays,
                 config=None, seed=0):
        self.scenario = ScenarioKind.parse(scenario)
        if agent_kind not in AGENT_KINDS:
            raise CheckpointError(f'Unknown agent kind "{agent_kind}"')
        if role not in ('good', 'adversary'):
            raise CheckpointError(f'Unknown role "{role}"')
        self.agent_kind = agent_kind
        self.role = role
        self.names = list(names)
        self.arrays = [np.array(a, dtype=np.float64) for a in arrays]
        if len(self.names) != len(self.arrays):
            raise CheckpointError('One name per parameter array is required')
        self.config = dict(config or {})
        self.seed = int(seed)

    @property
    def num_experts(self):
        if self.agent_kind != MoeQNetwork.kind:
            return None
        return sum(1 for n in self.names
                   if n.startswith('experts.') and n.endswith('.W1'))

    @property
    def shapes(self):
        return [[name, list(a.shape)] for name, a in zip(self.names,
                                                         self.arrays)]

    @classmethod
    def from_agent(cls, agent, role, config):
        """
        Parameters
        ----------
        agent : DdqnAgent
        role : {'good', 'adversary'}
        config : RunConfig
        """
        named = agent.online.named_parameters()
        return cls(config.scenario, agent.online.kind, role,
                   [name for name, _ in named], [a for _, a in named],
                   config.to_dict(), config.seed)

    def to_network(self):
        return network_from_arrays(self.agent_kind,
                                   zip(self.names, self.arrays))

    def to_agent(self):
        """Frozen agent; its target network equals its online network"""
        double_q = self.config.get('agent', {}).get('double_q', True)
        return DdqnAgent(self.to_network(), double_q=double_q)

    def header(self):
        return dict(
            format_version=FORMAT_VERSION,
            scenario=self.scenario.value,
            agent_kind=self.agent_kind,
            num_experts=self.num_experts,
            role=self.role,
            shapes=self.shapes,
            config=self.config,
            seed=self.seed,
        )

    def to_bytes(self):
        head = MAGIC + b' ' + str(FORMAT_VERSION).encode() + b'\n'
        head += _dumps(self.header()).encode('utf-8') + b'\n'
        payload = b''.join(np.ascontiguousarray(a, dtype=PAYLOAD_DTYPE)
                           .tobytes() for a in self.arrays)
        return head + payload

    @classmethod
    def from_bytes(cls, data):
        magic_line, sep, rest = data.partition(b'\n')
        parts = magic_line.split(b' ')
        if not sep or len(parts) != 2 or parts[0] != MAGIC:
            raise CheckpointError('Not a checkpoint file')
        if parts[1] != str(FORMAT_VERSION).encode():
            raise CheckpointError(
                f'Unsupported checkpoint version {parts[1].decode()!r} '
                f'(expected {FORMAT_VERSION})')
        header_line, sep, payload = rest.partition(b'\n')
        try:
            header = json.loads(header_line.decode('utf-8'))
            shapes = [(str(name), tuple(int(d) for d in dims))
                      for name, dims in header['shapes']]
        except (ValueError, KeyError, TypeError) as e:
            raise CheckpointError(f'Corrupted checkpoint header: {e}')
        if not sep:
            raise CheckpointError('Corrupted checkpoint header')
        sizes = [int(np.prod(dims)) for _, dims in shapes]
        expected = sum(sizes) * PAYLOAD_DTYPE.itemsize
        if len(payload) != expected:
            raise CheckpointError(f'Checkpoint payload has {len(payload)} '
                                  f'bytes, expected {expected}')
        flat = np.frombuffer(payload, dtype=PAYLOAD_DTYPE)
        arrays, offset = [], 0
        for (_, dims), size in zip(shapes, sizes):
            arrays.append(flat[offset:offset + size].reshape(dims)
                          .astype(np.float64))
            offset += size
        try:
            return cls(header['scenario'], header['agent_kind'],
                       header['role'], [name for name, _ in shapes], arrays,
                       header.get('config'), header.get('seed', 0))
        except KeyError as e:
            raise CheckpointError(f'Checkpoint header lacks {e}') from None
        except ValueError as e:
            raise CheckpointError(str(e)) from None

    def save(self, path):
        with opener.open(path, 'wb') as f:
            f.write(self.to_bytes())
        logger.debug(f'Saved {self.agent_kind} {self.role} checkpoint to '
                     f'{opener.stringify_path(path)}')
        return path

    @classmethod
    def load(cls, path):
        with opener.open(path, 'rb') as f:
            return cls.from_bytes(f.read())

    def to_json(self):
        """Fully textual equivalent of the checkpoint"""
        obj = self.header()
        obj['parameters'] = {name: a.tolist()
                             for name, a in zip(self.names, self.arrays)}
        return obj

    def save_json(self, path):
        with opener.open(path, 'w') as f:
            f.write(json.dumps(self.to_json(), sort_keys=True, indent=1))
        return path

    def check_compatible(self, scenario, role=None):
        """Raise if the checkpoint cannot play `role` in `scenario`"""
        scenario = ScenarioKind.parse(scenario)
        if self.scenario is not scenario:
            raise CheckpointError(
                f'Checkpoint was trained on {self.scenario.value}, but the '
                f'run is configured for {scenario.value}')
        if role is not None and self.role != role:
            raise CheckpointError(
                f'Checkpoint holds a {self.role} agent, but a {role} agent '
                f'is required')
        return self

    def __repr__(self):
        return (f'Checkpoint({self.scenario.value}, {self.agent_kind}, '
                f'role={self.role}, seed={self.seed})')
