"""
Command-line interface.

```
marltools train-ali    --scenario simple_push --out runs/ali
marltools train-main   --scenario simple_push --opponent runs/ali/good.ckpt --out runs/main
marltools eval         runs/ali/good.ckpt runs/main/adversary.ckpt --out runs/eval
marltools compare      --scenario simple_adversary --opponent runs/ali/adversary.ckpt --out runs/cmp
marltools show-config  simple_push paper
```
"""
import argparse
import functools
import logging
import sys
import traceback

from . import __version__, opener
from .checkpoint import Checkpoint
from .config import ConfigError, RunConfig, load_config, preset_config
from .exports import (
    TrajectoryWriter, plot_records, plot_scores, write_episode_csv,
    write_eval_csv, write_gate_csv, write_metrics_csv)
from .training import (
    RandomPolicy, compare_against, evaluate, other_role, primary_role,
    rolling_score, run_ali, train_vs_fixed)
from .utils import bcolors, setup_logging

logger = logging.getLogger(__name__)

ALGORITHM_LABELS = {'ddqn': 'DDQN', 'ddqn-moe': 'DDQN-MOE',
                    'random': 'random'}


def command(func):
    """
    Decorator for commands that can be triggered by argparse.

    A command called with an `argparse.Namespace` receives its entries
    as keyword arguments.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        if args and isinstance(args[0], argparse.Namespace):
            if len(args) > 1:
                raise ValueError(
                    'Only one positional argument accepted when a '
                    'command is applied to an argparse object')
            parsed = vars(args[0])
            parsed.update(kwargs)
            for key in ('func', 'command', 'debug'):
                parsed.pop(key, None)
            args, kwargs = (), parsed
        return func(*args, **kwargs)
    return wrapper


# ----------------------------------------------------------------------
#   helpers
# ----------------------------------------------------------------------


def _progress(quiet):
    return not quiet and sys.stderr.isatty()


def _resolve_config(config=None, scenario=None, preset=None, seed=None):
    if config:
        return load_config(config, seed=seed)
    if scenario:
        return preset_config(scenario, preset or 'desk', seed=seed)
    raise ConfigError('Either --config or --scenario is required')


def _save_agent(agent, role, config, path, as_json=False):
    ckpt = Checkpoint.from_agent(agent, role, config)
    ckpt.save(path)
    if as_json:
        stem = path[:-len('.ckpt')] if path.endswith('.ckpt') else path
        ckpt.save_json(stem + '.json')
    return ckpt


def _periodic_saver(out, config, as_json):
    def save(episode, agents):
        for role, agent in agents.items():
            _save_agent(agent, role, config,
                        opener.join(out, f'{role}_ep{episode}.ckpt'),
                        as_json)
        logger.info(f'Saved checkpoints after episode {episode}')
    return save


def _load_policy(source, scenario=None, role=None):
    """Checkpoint path, or the literal `random`"""
    if source == 'random':
        return RandomPolicy(), 'random', None
    ckpt = Checkpoint.load(source)
    if scenario is not None:
        ckpt.check_compatible(scenario, role)
    return ckpt.to_agent(), ALGORITHM_LABELS[ckpt.agent_kind], ckpt


def _write_config(out, config):
    with opener.open(opener.join(out, 'config.yml'), 'w') as f:
        f.write(config.to_yaml())


# ----------------------------------------------------------------------
#   commands
# ----------------------------------------------------------------------


@command
def cmd_train_ali(config=None, scenario=None, preset=None, seed=None,
                  out='.', json=False, quiet=False):
    """Adversarial learning initialization of both agents"""
    config = _resolve_config(config, scenario, preset, seed)
    opener.makedirs(out)
    logger.info(f'Adversarial initialization on {config.scenario.value} '
                f'({config.preset} preset, seed {config.seed})')
    good, adversary, records = run_ali(
        config, progress=_progress(quiet),
        on_checkpoint=_periodic_saver(out, config, json))
    window = config.training.rolling_window
    _save_agent(good, 'good', config, opener.join(out, 'good.ckpt'), json)
    _save_agent(adversary, 'adversary', config,
                opener.join(out, 'adversary.ckpt'), json)
    write_metrics_csv(opener.join(out, 'metrics.csv'), records, window)
    plot_records(opener.join(out, 'scores.svg'), records, window,
                 title=f'{config.scenario.value}: adversarial initialization')
    _write_config(out, config)
    logger.info(f'Results written to {out}')
    return 0


@command
def cmd_train_main(opponent, config=None, scenario=None, preset=None,
                   seed=None, out='.', json=False, quiet=False):
    """Train a fresh primary agent against a frozen opponent"""
    config = _resolve_config(config, scenario, preset, seed)
    role = primary_role(config.scenario)
    policy, label, _ = _load_policy(opponent, config.scenario,
                                    other_role(role))
    opener.makedirs(out)
    algorithm = 'DDQN-MOE' if config.agent.use_moe else 'DDQN'
    logger.info(f'Training a {algorithm} {role} on {config.scenario.value} '
                f'against a frozen {label} {other_role(role)}')
    agent, records = train_vs_fixed(
        config, policy, progress=_progress(quiet),
        on_checkpoint=_periodic_saver(out, config, json))
    window = config.training.rolling_window
    _save_agent(agent, role, config, opener.join(out, f'{role}.ckpt'), json)
    write_metrics_csv(opener.join(out, 'metrics.csv'), records, window)
    plot_records(opener.join(out, 'scores.svg'), records, window,
                 title=f'{config.scenario.value}: {algorithm} {role}')
    _write_config(out, config)
    logger.info(f'Results written to {out}')
    return 0


@command
def cmd_eval(good, adversary, config=None, scenario=None, preset=None,
             seed=None, out='.', workers=1, trajectory=False, quiet=False):
    """Greedy test play between two frozen agents"""
    if config or scenario:
        config = _resolve_config(config, scenario, preset, seed)
    else:
        stored = [Checkpoint.load(src).config for src in (good, adversary)
                  if src != 'random']
        if not stored or not stored[0]:
            raise ConfigError('Either --config or --scenario is required '
                              'when no checkpoint holds a configuration')
        config = RunConfig.from_dict(stored[0])
        if seed is not None:
            config = config.replace(seed=seed)
    policies, labels = {}, {}
    for role, source in (('good', good), ('adversary', adversary)):
        policies[role], labels[role], _ = _load_policy(
            source, config.scenario, role)
    opener.makedirs(out)

    result = evaluate(policies['good'], policies['adversary'], config,
                      workers=workers, trajectory=trajectory,
                      progress=_progress(quiet))
    role = primary_role(config.scenario)
    window = config.training.rolling_window
    write_eval_csv(opener.join(out, 'eval.csv'), [(labels[role], result)])
    write_episode_csv(opener.join(out, 'eval_episodes.csv'), result.rewards,
                      window)
    plot_scores(opener.join(out, 'eval_scores.svg'), {
        'good': rolling_score(result.rewards[:, 0], window),
        'adversary': rolling_score(result.rewards[:, 1], window),
    }, title=f'{config.scenario.value}: test episodes')
    usage = result.gate_usage.get(role)
    if usage is None and result.gate_usage:
        usage = next(iter(result.gate_usage.values()))
    if usage is not None:
        write_gate_csv(opener.join(out, 'gate_usage.csv'), usage)
    if trajectory:
        with TrajectoryWriter(opener.join(out, 'trajectory.csv')) as writer:
            writer.write(result.trajectory)
    logger.info(f'Results written to {out}')
    return 0


@command
def cmd_compare(opponent, config=None, scenario=None, preset=None,
                seed=None, out='.', workers=1, json=False, quiet=False):
    """Train and test DDQN-MOE and DDQN primary agents against one opponent"""
    config = _resolve_config(config, scenario, preset, seed)
    role = primary_role(config.scenario)
    policy, _, _ = _load_policy(opponent, config.scenario, other_role(role))
    opener.makedirs(out)
    comparisons = compare_against(config, policy, workers=workers,
                                  progress=_progress(quiet))
    window = config.training.rolling_window
    series = {}
    for comparison in comparisons:
        name = comparison.algorithm.lower()
        _save_agent(comparison.agent, role, config,
                    opener.join(out, f'{role}_{name}.ckpt'), json)
        write_metrics_csv(opener.join(out, f'metrics_{name}.csv'),
                          comparison.records, window)
        rewards = [r.reward_good if role == 'good' else r.reward_adv
                   for r in comparison.records]
        series[comparison.algorithm] = rolling_score(rewards, window)
    write_eval_csv(opener.join(out, 'compare.csv'),
                   [(c.algorithm, c.result) for c in comparisons])
    plot_scores(opener.join(out, 'compare_scores.svg'), series,
                title=f'{config.scenario.value}: {role} training')
    _write_config(out, config)
    logger.info(f'Results written to {out}')
    return 0


@command
def cmd_show_config(scenario=None, preset=None, config=None, seed=None,
                    quiet=False):
    """Print the effective configuration"""
    config = _resolve_config(config, scenario, preset, seed)
    print(config.to_yaml(), end='')
    return 0


# ----------------------------------------------------------------------
#   parser
# ----------------------------------------------------------------------


def _make_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--debug', action='store_true', default=False,
        help='Verbose logging, print tracebacks on error')
    common.add_argument(
        '--quiet', action='store_true', default=False,
        help='Only log warnings and errors, no progress bars')

    mainparser = argparse.ArgumentParser(
        'marltools', description=_clihelp.main,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    mainparser.add_argument('--version', action='version',
                            version=f'%(prog)s {__version__}')
    parsers = mainparser.add_subparsers(dest='command', metavar='command')
    parsers.required = True

    def add_parser(cmd, *args, **kwargs):
        # long descriptions live in the _clihelp class at the end of
        # this file
        kwargs.setdefault('description',
                          getattr(_clihelp, cmd.replace('-', '_'), None))
        return parsers.add_parser(
            cmd, *args, parents=[common],
            formatter_class=argparse.RawDescriptionHelpFormatter, **kwargs)

    def add_config_arguments(parser, scenario_positional=False):
        if scenario_positional:
            parser.add_argument(
                'scenario', nargs='?', help='simple_push or simple_adversary')
            parser.add_argument(
                'preset', nargs='?', choices=('paper', 'desk'),
                help='Preset (default: desk)')
        else:
            parser.add_argument(
                '--scenario', help='simple_push or simple_adversary')
            parser.add_argument(
                '--preset', choices=('paper', 'desk'),
                help='Preset used with --scenario (default: desk)')
        parser.add_argument(
            '--config', help='YAML configuration file')
        parser.add_argument(
            '--seed', type=int, help='Override the configuration seed')

    def add_output_arguments(parser, json=True):
        parser.add_argument(
            '--out', default='.', help='Output directory')
        if json:
            parser.add_argument(
                '--json', action='store_true', default=False,
                help='Also write a JSON copy of every checkpoint')

    # ------------------------------------------------------------------
    #   TRAIN-ALI
    # ------------------------------------------------------------------
    train_ali = add_parser('train-ali', help='Adversarial initialization')
    train_ali.set_defaults(func=cmd_train_ali)
    add_config_arguments(train_ali)
    add_output_arguments(train_ali)

    # ------------------------------------------------------------------
    #   TRAIN-MAIN
    # ------------------------------------------------------------------
    train_main = add_parser(
        'train-main', help='Train against a frozen opponent')
    train_main.set_defaults(func=cmd_train_main)
    train_main.add_argument(
        '--opponent', required=True,
        help='Opponent checkpoint, or "random"')
    add_config_arguments(train_main)
    add_output_arguments(train_main)

    # ------------------------------------------------------------------
    #   EVAL
    # ------------------------------------------------------------------
    eval_ = add_parser('eval', help='Test two frozen agents')
    eval_.set_defaults(func=cmd_eval)
    eval_.add_argument(
        'good', help='Good agent checkpoint, or "random"')
    eval_.add_argument(
        'adversary', help='Adversary checkpoint, or "random"')
    add_config_arguments(eval_)
    add_output_arguments(eval_, json=False)
    eval_.add_argument(
        '--workers', type=int, default=1,
        help='Number of evaluation threads')
    eval_.add_argument(
        '--trajectory', action='store_true', default=False,
        help='Write per-step positions, actions and rewards')

    # ------------------------------------------------------------------
    #   COMPARE
    # ------------------------------------------------------------------
    compare = add_parser(
        'compare', help='DDQN-MOE vs DDQN against one opponent')
    compare.set_defaults(func=cmd_compare)
    compare.add_argument(
        '--opponent', required=True,
        help='Opponent checkpoint, or "random"')
    add_config_arguments(compare)
    add_output_arguments(compare)
    compare.add_argument(
        '--workers', type=int, default=1,
        help='Number of evaluation threads')

    # ------------------------------------------------------------------
    #   SHOW-CONFIG
    # ------------------------------------------------------------------
    show_config = add_parser(
        'show-config', help='Print the effective configuration')
    show_config.set_defaults(func=cmd_show_config)
    add_config_arguments(show_config, scenario_positional=True)

    return mainparser


def _error(message):
    fail, endc = ('', '')
    if sys.stderr.isatty():
        fail, endc = bcolors.fail, bcolors.endc
    print(f'{fail}(ERROR) {message}{endc}', file=sys.stderr)


def main(argv=None):
    """
    Run a command.

    Returns
    -------
    code : int
        0 on success, 1 on error, 2 on usage error.
    """
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    level = logging.INFO
    if args.debug:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    setup_logging(level, debug=args.debug)

    debug = args.debug
    try:
        return args.func(args)
    except Exception as e:
        if debug:
            traceback.print_exc(file=sys.stderr)
        _error(e)
        return 1


def cli(args=None):
    """Console script entry point"""
    sys.exit(main(sys.argv[1:] if args is None else args))


class _clihelp:
    # Long descriptions of the commands

    main = """
Multi-agent Q-learning on two-agent particle worlds.

A typical run first forges an opponent with `train-ali`, then trains a
fresh primary agent against it with `train-main` (or `compare`), and
finally tests frozen agents with `eval`.
"""

    train_ali = """
Adversarial learning initialization.

A good agent and an adversary, both plain DDQN learners, are trained
against each other. Writes:
    good.ckpt, adversary.ckpt   final agents
    metrics.csv                 per-episode rewards and rolling scores
    scores.svg                  rolling scores of both agents
    config.yml                  effective configuration

With `training.checkpoint_interval > 0`, intermediate checkpoints are
saved as <role>_ep<N>.ckpt.
"""

    train_main = """
Train a fresh primary agent against a frozen opponent.

The primary agent is the adversary in simple_push and the good agent in
simple_adversary; the opponent checkpoint must hold the other role.
The agent is a mixture-of-experts DDQN if `agent.use_moe` is set, a
plain DDQN otherwise. Writes <role>.ckpt, metrics.csv, scores.svg and
config.yml.
"""

    eval = """
Greedy test play between two frozen agents.

Either agent may be "random". Without --config or --scenario, the
configuration stored in the first checkpoint is used. Writes:
    eval.csv            algorithm, mean_agent, max_agent,
                        mean_adversary, max_adversary
    eval_episodes.csv   per-episode rewards and rolling scores
    eval_scores.svg     rolling scores over test episodes
    gate_usage.csv      mean mixture weight per expert (if any)
    trajectory.csv      per-step states (with --trajectory)
"""

    compare = """
Train a DDQN-MOE and a plain DDQN primary agent against the same frozen
opponent, on the same environment streams, and test both. Writes
compare.csv (one row per algorithm), metrics_<algorithm>.csv,
<role>_<algorithm>.ckpt, compare_scores.svg and config.yml.
"""

    show_config = """
Print the effective configuration of a preset or of a configuration
file, as YAML.
"""
