"""
Target curves: canonical shapes, and IIC curves taken from real music.
"""
import enum
import logging
from collections import namedtuple

import numpy as np

from iic import DomainError
from iic.critic import token_ic
from iic.critic import corpus_ic
from iic.tokenizer import tokenize
from iic.surprisal import Curve
from iic.surprisal import iic_curve
from iic.surprisal import grid_points
from iic.surprisal import DEFAULT_DELTA_T


g_logger = logging.getLogger("iic.curves")

DEFAULT_STEP_FRACTION = 0.5
DEFAULT_SNIPPET_LENGTH = 10.0
MIN_LEVEL_SAMPLES = 100


class Shape(enum.Enum):
    CONSTANT = "constant"
    RAMP_UP = "ramp_up"
    RAMP_DOWN = "ramp_down"
    STEP_UP = "step_up"
    STEP_DOWN = "step_down"


def shape_from_name(name):
    """
    Parse a shape name such as "ramp-up", "RAMP_UP" or "rampup".
    """
    key = name.strip().lower().replace("-", "_")
    for shape in Shape:
        if key in (shape.value, shape.value.replace("_", "")):
            return shape
    raise DomainError("unknown target shape %r" % name)


class ShapeSpec(object):
    def __init__(self, kind, low, high, duration, step_fraction=DEFAULT_STEP_FRACTION):
        super(ShapeSpec, self).__init__()
        if not isinstance(kind, Shape):
            kind = shape_from_name(kind)
        if low > high:
            raise DomainError("low level %r above high level %r" % (low, high))
        if not duration > 0:
            raise DomainError("duration must be positive: %r" % duration)
        if not 0 < step_fraction < 1:
            raise DomainError("step fraction must lie in (0, 1): %r" % step_fraction)
        self.kind = kind
        self.low = float(low)
        self.high = float(high)
        self.duration = float(duration)
        self.step_fraction = float(step_fraction)

    def __repr__(self):
        return "ShapeSpec(%s, low=%r, high=%r, duration=%r)" % (
            self.kind.name, self.low, self.high, self.duration)


def make_shape(spec, delta_t=DEFAULT_DELTA_T):
    """
    Sample a canonical shape on 0, dt, ..., duration.

    Steps are right-continuous: the value at the step time is already
      the new level.

    @rtype: Curve
    """
    t = np.arange(grid_points(spec.duration, delta_t)) * delta_t
    low, high, T = spec.low, spec.high, spec.duration
    # step membership tolerates the float drift of the grid
    after_step = t >= spec.step_fraction * T - delta_t * 1e-6

    if spec.kind == Shape.CONSTANT:
        values = np.full(len(t), 0.5 * (low + high))
    elif spec.kind == Shape.RAMP_UP:
        values = low + (high - low) * t / T
    elif spec.kind == Shape.RAMP_DOWN:
        values = high - (high - low) * t / T
    elif spec.kind == Shape.STEP_UP:
        values = np.where(after_step, high, low)
    elif spec.kind == Shape.STEP_DOWN:
        values = np.where(after_step, low, high)
    else:
        raise DomainError("unhandled shape %r" % spec.kind)
    return Curve(0.0, delta_t, np.clip(values, low, high))


def piece_curve(notes, model, cfg, ics=None):
    """
    IIC of a whole piece on the piece's own clock, from 0 to its last onset.

    @return: (Curve, TokenSeq, IC vector)
    """
    seq = tokenize(notes)
    if ics is None:
        ics = token_ic(model, seq)
    first = notes[0].onset
    end = max(notes[-1].onset, cfg.delta_t)
    return iic_curve(seq, ics, cfg, end, origin=-first), seq, ics


def extract_curve(notes, model, cfg, t_start, t_end, ics=None):
    """
    IIC of a window of a piece, computed with the full piece as context
      and shifted so that `t_start` becomes 0.

    @type notes: NoteList
    @raise DomainError: on an empty window or one outside the piece.
    """
    if not t_end > t_start:
        raise DomainError("empty window [%r, %r]" % (t_start, t_end))
    if len(notes) == 0:
        raise DomainError("cannot extract a curve from an empty piece")
    if t_start < 0 or t_end > notes.end_time() + cfg.delta_t * 1e-6:
        raise DomainError("window [%r, %r] outside the piece [0, %r]" % (
            t_start, t_end, notes.end_time()))
    seq = tokenize(notes)
    if ics is None:
        ics = token_ic(model, seq)
    return iic_curve(seq, ics, cfg, t_end - t_start, origin=t_start - notes[0].onset)


Levels = namedtuple("Levels", ["low", "high", "small_sample"])


def levels_from_values(values):
    """
    25th and 75th percentile of pooled IIC values.
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        raise DomainError("no IIC values to take levels from")
    small = len(values) < MIN_LEVEL_SAMPLES
    if small:
        g_logger.warning("only %d IIC grid points for level percentiles", len(values))
    low, high = np.percentile(values, [25, 75])
    return Levels(float(low), float(high), small)


def default_levels(pieces, model, cfg, ics=None):
    """
    Canonical low and high levels from a corpus.

    @type pieces: sequence of NoteList
    @rtype: Levels
    """
    pieces = [p for p in pieces if len(p)]
    if not pieces:
        raise DomainError("cannot take levels from an empty corpus")
    if ics is None:
        ics = corpus_ic(model, [tokenize(p) for p in pieces])
    values = [piece_curve(p, model, cfg, ics=ic)[0].values for p, ic in zip(pieces, ics)]
    return levels_from_values(np.concatenate(values))


def sample_snippets(pieces, count, length=DEFAULT_SNIPPET_LENGTH, rng=None):
    """
    Pick `count` random windows of `length` seconds from pieces long
      enough to hold one.

    @return: list of (piece index, t_start, t_end)
    """
    if rng is None:
        rng = np.random.default_rng()
    candidates = [i for i, p in enumerate(pieces) if len(p) and p.end_time() >= length]
    if not candidates:
        raise DomainError("no piece is at least %r seconds long" % length)
    snippets = []
    for _ in range(count):
        i = candidates[int(rng.integers(len(candidates)))]
        latest = pieces[i].end_time() - length
        t_start = float(rng.uniform(0.0, latest)) if latest > 0 else 0.0
        snippets.append((i, t_start, t_start + length))
    return snippets


def plot_curves(curves, path, labels=None):
    """
    SVG line plot of one or more curves against time.
    """
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    labels = labels or [None] * len(curves)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for curve, label in zip(curves, labels):
        ax.plot(curve.times(), curve.values, label=label)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("IIC (nats/s)")
    if any(labels):
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
