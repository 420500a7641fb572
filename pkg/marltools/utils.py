import logging
import sys
import numpy as np


class bcolors:
    """ANSI escape codes used to color log records and CLI errors"""

    endc = '\033[0m'
    bold = '\033[1m'
    faint = '\033[2m'

    class fg:
        class bright:
            red = '\033[91m'
            yellow = '\033[93m'

    warning = fg.bright.yellow
    fail = fg.bright.red


class ColorFormatter(logging.Formatter):
    """
    A log formatter that colors records by level.

    Colors are only emitted when the target stream is a terminal, so that
    redirected logs stay plain text.
    """

    LEVEL_COLORS = {
        logging.DEBUG: bcolors.faint,
        logging.INFO: '',
        logging.WARNING: bcolors.warning,
        logging.ERROR: bcolors.fail,
        logging.CRITICAL: bcolors.bold + bcolors.fail,
    }

    def __init__(self, fmt=None, use_color=True):
        super().__init__(fmt or '%(levelname)s %(name)s: %(message)s')
        self.use_color = use_color

    def format(self, record):
        message = super().format(record)
        color = self.LEVEL_COLORS.get(record.levelno, '')
        if self.use_color and color:
            message = color + message + bcolors.endc
        return message


def setup_logging(level=logging.INFO, debug=False, stream=None):
    """
    Attach a single colored stream handler to the package logger.

    Parameters
    ----------
    level : int
        Logging level of the `marltools` logger.
    debug : bool
        Force the DEBUG level.
    stream : file-like, default=sys.stderr

    Returns
    -------
    logger : logging.Logger
    """
    stream = stream or sys.stderr
    logger = logging.getLogger('marltools')
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(stream)
    use_color = hasattr(stream, 'isatty') and stream.isatty()
    handler.setFormatter(ColorFormatter(use_color=use_color))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if debug else level)
    logger.propagate = False
    return logger


def make_rng(seed):
    """Return a `np.random.Generator` from a seed, a SeedSequence or a
    generator (returned as is). `None` is rejected: nothing is seeded
    from OS entropy."""
    if seed is None:
        raise ValueError('A seed or a generator is required')
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed, names, *, stream=0):
    """
    Derive independent named generators from a single seed.

    The same `(seed, stream)` always yields the same generators, in the
    order of `names`, regardless of how many are drawn from afterwards.

    Parameters
    ----------
    seed : int
    names : sequence of str
    stream : int
        Distinguishes unrelated uses of the same seed
        (training, evaluation, ...).

    Returns
    -------
    rngs : dict[str, np.random.Generator]
    """
    children = np.random.SeedSequence([int(seed), int(stream)]).spawn(
        len(names))
    return {name: np.random.default_rng(child)
            for name, child in zip(names, children)}
