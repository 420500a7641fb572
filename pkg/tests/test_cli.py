import csv

import yaml

from marltools import __version__
from marltools.checkpoint import Checkpoint
from marltools.cli import main


def tiny_yaml(tmp_path, scenario='simple_push', **extra):
    values = dict(
        scenario=scenario,
        preset='desk',
        seed=1,
        agent=dict(hidden_sizes=[8], num_experts=2, state_embedding_size=8,
                   opponent_embedding_size=4, expert_hidden_size=8,
                   gate_hidden_size=4),
        replay=dict(replay_memory_size=100, replay_start_size=16,
                    minibatch_size=8),
        training=dict(total_training_episodes=2, total_testing_episodes=3,
                      rolling_window=2, log_interval=1),
    )
    for section, overrides in extra.items():
        values[section].update(overrides)
    path = tmp_path / f'{scenario}.yml'
    path.write_text(yaml.safe_dump(values))
    return str(path)


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


def test_show_config(capsys):
    assert main(['show-config', 'simple_push', 'paper']) == 0
    values = yaml.safe_load(capsys.readouterr().out)
    assert values['agent']['learning_rate'] == 0.0001
    assert main(['show-config', 'simple_adversary', 'paper']) == 0
    values = yaml.safe_load(capsys.readouterr().out)
    assert values['agent']['learning_rate'] == 0.001
    assert values['replay']['replay_memory_size'] == 100000


def test_show_config_from_file(tmp_path, capsys):
    assert main(['show-config', '--config', tiny_yaml(tmp_path),
                 '--seed', '9']) == 0
    values = yaml.safe_load(capsys.readouterr().out)
    assert values['seed'] == 9
    assert values['training']['total_training_episodes'] == 2


def test_version(capsys):
    assert main(['--version']) == 0
    assert __version__ in capsys.readouterr().out


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(['train-ali', '--preset', 'huge']) == 2
    assert main(['dance']) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    config = tmp_path / 'bad.yml'
    config.write_text('scenario: simple_push\nagent:\n  learning_rat: 1\n')
    assert main(['train-ali', '--config', str(config), '--quiet',
                 '--out', str(tmp_path / 'out')]) == 1
    err = capsys.readouterr().err
    assert '(ERROR)' in err and 'agent.learning_rat' in err
    assert main(['train-ali', '--quiet']) == 1


def test_train_eval_pipeline(tmp_path, capsys):
    config = tiny_yaml(tmp_path)
    ali = str(tmp_path / 'ali')
    assert main(['train-ali', '--config', config, '--out', ali,
                 '--quiet', '--json']) == 0
    for name in ('good.ckpt', 'adversary.ckpt', 'good.json', 'metrics.csv',
                 'scores.svg', 'config.yml'):
        assert (tmp_path / 'ali' / name).exists()
    metrics = read_csv(tmp_path / 'ali' / 'metrics.csv')
    assert [row['episode'] for row in metrics] == ['0', '1']

    main_out = str(tmp_path / 'main')
    assert main(['train-main', '--config', config, '--quiet',
                 '--opponent', f'{ali}/good.ckpt', '--out', main_out]) == 0
    ckpt = Checkpoint.load(f'{main_out}/adversary.ckpt')
    assert ckpt.agent_kind == 'ddqn-moe' and ckpt.role == 'adversary'

    runs = []
    for k in range(2):
        out = tmp_path / f'eval{k}'
        assert main(['eval', f'{ali}/good.ckpt', f'{main_out}/adversary.ckpt',
                     '--out', str(out), '--quiet', '--trajectory',
                     '--workers', str(k + 1)]) == 0
        runs.append({name: (out / name).read_bytes() for name in (
            'eval.csv', 'eval_episodes.csv', 'gate_usage.csv',
            'trajectory.csv', 'eval_scores.svg')})
    assert runs[0] == runs[1]
    row, = read_csv(tmp_path / 'eval0' / 'eval.csv')
    assert row['algorithm'] == 'DDQN-MOE'
    assert float(row['max_agent']) >= float(row['mean_agent'])
    assert len(read_csv(tmp_path / 'eval0' / 'trajectory.csv')) == 3 * 25


def test_train_main_rejects_wrong_scenario(tmp_path, capsys):
    ali = str(tmp_path / 'ali')
    assert main(['train-ali', '--config', tiny_yaml(tmp_path), '--quiet',
                 '--out', ali]) == 0
    config = tiny_yaml(tmp_path, 'simple_adversary')
    assert main(['train-main', '--config', config, '--quiet',
                 '--opponent', f'{ali}/adversary.ckpt',
                 '--out', str(tmp_path / 'main')]) == 1
    assert ('trained on simple_push, but the run is configured for '
            'simple_adversary') in capsys.readouterr().err


def test_compare_and_random_eval(tmp_path):
    config = tiny_yaml(tmp_path, 'simple_adversary')
    out = tmp_path / 'cmp'
    assert main(['compare', '--config', config, '--opponent', 'random',
                 '--out', str(out), '--quiet', '--workers', '2']) == 0
    rows = read_csv(out / 'compare.csv')
    assert [row['algorithm'] for row in rows] == ['DDQN-MOE', 'DDQN']
    for name in ('good_ddqn-moe.ckpt', 'good_ddqn.ckpt',
                 'metrics_ddqn-moe.csv', 'metrics_ddqn.csv',
                 'compare_scores.svg', 'config.yml'):
        assert (out / name).exists()

    eval_out = tmp_path / 'eval'
    assert main(['eval', str(out / 'good_ddqn.ckpt'), 'random',
                 '--out', str(eval_out), '--quiet']) == 0
    row, = read_csv(eval_out / 'eval.csv')
    assert row['algorithm'] == 'DDQN'
    assert not (eval_out / 'gate_usage.csv').exists()


def test_eval_needs_a_configuration(tmp_path, capsys):
    assert main(['eval', 'random', 'random', '--quiet',
                 '--out', str(tmp_path)]) == 1
    assert '--scenario' in capsys.readouterr().err
    assert main(['eval', 'random', 'random', '--quiet', '--scenario',
                 'simple_adversary', '--out', str(tmp_path)]) == 0


def test_periodic_checkpoints(tmp_path):
    config = tiny_yaml(tmp_path, training=dict(checkpoint_interval=1))
    out = tmp_path / 'ali'
    assert main(['train-ali', '--config', config, '--out', str(out),
                 '--quiet']) == 0
    for episode in (1, 2):
        for role in ('good', 'adversary'):
            assert (out / f'{role}_ep{episode}.ckpt').exists()


def _read_outputs(directory):
    return {path.name: path.read_bytes()
            for path in sorted(directory.iterdir()) if path.is_file()}


def test_training_commands_are_byte_reproducible(tmp_path):
    config = tiny_yaml(tmp_path, training=dict(checkpoint_interval=1))
    runs = []
    for k in range(2):
        root = tmp_path / f'run{k}'
        ali, main_out, cmp_out = root / 'ali', root / 'main', root / 'cmp'
        assert main(['train-ali', '--config', config, '--out', str(ali),
                     '--quiet', '--json']) == 0
        assert main(['train-main', '--config', config, '--quiet',
                     '--opponent', str(ali / 'good.ckpt'),
                     '--out', str(main_out)]) == 0
        assert main(['compare', '--config', config, '--quiet',
                     '--opponent', str(ali / 'good.ckpt'),
                     '--out', str(cmp_out), '--workers', '2']) == 0
        runs.append({name: _read_outputs(root / name)
                     for name in ('ali', 'main', 'cmp')})

    first, second = runs
    assert {'good.ckpt', 'adversary.ckpt', 'good.json', 'metrics.csv',
            'scores.svg', 'good_ep1.ckpt'} <= set(first['ali'])
    assert {'adversary.ckpt', 'metrics.csv', 'scores.svg'} <= \
        set(first['main'])
    assert {'compare.csv', 'compare_scores.svg', 'adversary_ddqn.ckpt',
            'adversary_ddqn-moe.ckpt'} <= set(first['cmp'])
    for name in ('ali', 'main', 'cmp'):
        assert first[name].keys() == second[name].keys()
        for filename, content in first[name].items():
            assert content == second[name][filename], f'{name}/{filename}'
