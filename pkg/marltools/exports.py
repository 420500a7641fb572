"""
Result files: CSV tables and SVG score curves.

All writers go through `opener.open`. Floats are written with `repr`
and SVGs are rendered with a fixed hash salt and no date, so identical
results always produce identical bytes.
"""
import csv
import logging

import matplotlib
from matplotlib.figure import Figure

from . import opener
from .training import rolling_score

logger = logging.getLogger(__name__)

METRICS_HEADER = ('episode', 'reward_good', 'reward_adv',
                  'rolling_score_good', 'rolling_score_adv', 'epsilon')
EVAL_HEADER = ('algorithm', 'mean_agent', 'max_agent',
               'mean_adversary', 'max_adversary')
EPISODE_HEADER = ('episode', 'reward_good', 'reward_adv',
                  'rolling_score_good', 'rolling_score_adv')
GATE_HEADER = ('expert', 'mean_weight')
TRAJECTORY_HEADER = ('episode', 'step', 'agent_x', 'agent_y',
                     'adversary_x', 'adversary_y', 'action_good',
                     'action_adv', 'reward_good', 'reward_adv')

SCORE_COLORS = dict(good='tab:blue', adversary='tab:orange')


def _write_rows(path, header, rows):
    with opener.open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    logger.debug(f'Wrote {opener.stringify_path(path)}')
    return path


def write_metrics_csv(path, records, window):
    """Per-episode training metrics, with rolling scores"""
    records = list(records)
    good = rolling_score([r.reward_good for r in records], window)
    adversary = rolling_score([r.reward_adv for r in records], window)
    rows = [(r.episode, r.reward_good, r.reward_adv, float(g), float(a),
             r.epsilon)
            for r, g, a in zip(records, good, adversary)]
    return _write_rows(path, METRICS_HEADER, rows)


def eval_row(algorithm, result):
    """Row of the evaluation table. `agent` is the good agent."""
    return (algorithm, result.good.mean, result.good.max,
            result.adversary.mean, result.adversary.max)


def write_eval_csv(path, rows):
    """
    Parameters
    ----------
    rows : iterable of (algorithm, EvalResult)
    """
    return _write_rows(path, EVAL_HEADER,
                       [eval_row(name, result) for name, result in rows])


def write_episode_csv(path, rewards, window):
    """Per-episode test rewards `(episodes, 2)`"""
    good = rolling_score(rewards[:, 0], window)
    adversary = rolling_score(rewards[:, 1], window)
    rows = [(i, float(r[0]), float(r[1]), float(g), float(a))
            for i, (r, g, a) in enumerate(zip(rewards, good, adversary))]
    return _write_rows(path, EPISODE_HEADER, rows)


def write_gate_csv(path, weights):
    rows = [(k, float(w)) for k, w in enumerate(weights)]
    return _write_rows(path, GATE_HEADER, rows)


class TrajectoryWriter:
    """
    Streams per-step rows of test episodes to a CSV file.

    ```python
    with TrajectoryWriter(path) as writer:
        writer.write(result.trajectory)
    ```
    """

    def __init__(self, path):
        self.path = path
        self._file = opener.open(path, 'w', newline='')
        self._writer = None

    def __enter__(self):
        self._writer = csv.writer(self._file.open(), lineterminator='\n')
        self._writer.writerow(TRAJECTORY_HEADER)
        return self

    def __exit__(self, *exc):
        self._file.close()

    def write(self, rows):
        for row in rows:
            if len(row) != len(TRAJECTORY_HEADER):
                raise ValueError(f'Trajectory rows have '
                                 f'{len(TRAJECTORY_HEADER)} fields, '
                                 f'got {len(row)}')
            self._writer.writerow(row)


def plot_scores(path, series, title='', xlabel='episode',
                ylabel='score'):
    """
    Line chart of rolling scores, saved as SVG.

    Parameters
    ----------
    path : str
    series : dict[str, array_like]
        One curve per label.
    """
    with matplotlib.rc_context({'svg.hashsalt': 'marltools'}):
        fig = Figure(figsize=(6, 4))
        ax = fig.add_subplot(1, 1, 1)
        for label, values in series.items():
            ax.plot(range(len(values)), values, label=label, linewidth=1.2,
                    color=SCORE_COLORS.get(label))
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(alpha=0.3)
        ax.legend()
        with opener.open(path, 'wb') as f:
            fig.savefig(f, format='svg', metadata={'Date': None})
    logger.debug(f'Wrote {opener.stringify_path(path)}')
    return path


def plot_records(path, records, window, title=''):
    """Rolling scores of both agents over training episodes"""
    records = list(records)
    return plot_scores(path, {
        'good': rolling_score([r.reward_good for r in records], window),
        'adversary': rolling_score([r.reward_adv for r in records], window),
    }, title=title)
