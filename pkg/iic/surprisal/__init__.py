"""
Instantaneous information content: token IC spread forward in time by a
  half Hann kernel, sampled on a uniform grid in nats per second.

Tokens contribute at the time returned by `iic.tokenizer.localize_all`.
  A token at time s adds weight c_type / L * cos^2(pi (t - s) / L) to
  every grid point t with 0 < t - s < L / 2. Only Pitch and Timeshift
  tokens carry weight.
"""
import logging

import numpy as np

from iic import IICError
from iic import DomainError
from iic.critic import corpus_ic
from iic.tokenizer import ID_TYPES
from iic.tokenizer import TokenType
from iic.tokenizer import localize_all


g_logger = logging.getLogger("iic.surprisal")

DEFAULT_WINDOW_L = 4.0
DEFAULT_DELTA_T = 0.1

TOKEN_MASKS = ("pitch", "timeshift", "both")

# grid points times weighted tokens evaluated per chunk
_CHUNK_CELLS = 1 << 21


class GridMismatchError(IICError):
    pass


class KernelConfig(object):
    def __init__(self, window_l=DEFAULT_WINDOW_L, c_pitch=1.0, c_timeshift=1.0,
                 delta_t=DEFAULT_DELTA_T):
        super(KernelConfig, self).__init__()
        if not window_l > 0:
            raise DomainError("window length must be positive: %r" % window_l)
        if not delta_t > 0:
            raise DomainError("grid step must be positive: %r" % delta_t)
        if c_pitch < 0 or c_timeshift < 0:
            raise DomainError("type weights must be non-negative: %r, %r" % (c_pitch, c_timeshift))
        self.window_l = float(window_l)
        self.c_pitch = float(c_pitch)
        self.c_timeshift = float(c_timeshift)
        self.delta_t = float(delta_t)

    def weight(self, ttype):
        if ttype == TokenType.PITCH:
            return self.c_pitch
        if ttype == TokenType.TIMESHIFT:
            return self.c_timeshift
        return 0.0

    def type_weights(self):
        """
        Weight of every token type, indexed by TokenType.
        """
        return np.array([self.weight(t) for t in TokenType])

    def replace(self, **kwargs):
        fields = {
            "window_l": self.window_l,
            "c_pitch": self.c_pitch,
            "c_timeshift": self.c_timeshift,
            "delta_t": self.delta_t,
        }
        fields.update(kwargs)
        return KernelConfig(**fields)

    def __eq__(self, other):
        if not isinstance(other, KernelConfig):
            return NotImplemented
        return vars(self) == vars(other)

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __repr__(self):
        return "KernelConfig(window_l=%r, c_pitch=%r, c_timeshift=%r, delta_t=%r)" % (
            self.window_l, self.c_pitch, self.c_timeshift, self.delta_t)


def masked_config(cfg, mask):
    """
    Keep only the token types named by `mask`: one of pitch, timeshift, both.
    """
    mask = mask.lower()
    if mask not in TOKEN_MASKS:
        raise DomainError("unknown token mask %r" % mask)
    if mask == "pitch":
        return cfg.replace(c_timeshift=0.0)
    if mask == "timeshift":
        return cfg.replace(c_pitch=0.0)
    return cfg.replace()


class Curve(object):
    """
    A real function of time sampled at t0, t0 + dt, ..., t0 + (n - 1) dt.
    """
    def __init__(self, t0, delta_t, values):
        super(Curve, self).__init__()
        if not delta_t > 0:
            raise DomainError("grid step must be positive: %r" % delta_t)
        values = np.array(values, dtype=np.float64)
        if values.ndim != 1 or len(values) == 0:
            raise DomainError("a curve needs a non-empty vector of values")
        if not np.all(np.isfinite(values)):
            raise DomainError("curve values must be finite")
        values.flags.writeable = False
        self._t0 = float(t0)
        self._delta_t = float(delta_t)
        self._values = values

    @property
    def t0(self):
        return self._t0

    @property
    def delta_t(self):
        return self._delta_t

    @property
    def values(self):
        return self._values

    def times(self):
        return self._t0 + np.arange(len(self._values)) * self._delta_t

    def duration(self):
        return (len(self._values) - 1) * self._delta_t

    def end(self):
        return self._t0 + self.duration()

    def same_grid(self, other):
        return (len(self) == len(other) and
                np.isclose(self._t0, other.t0) and
                np.isclose(self._delta_t, other.delta_t))

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        if not isinstance(other, Curve):
            return NotImplemented
        return (self._t0 == other.t0 and self._delta_t == other.delta_t and
                np.array_equal(self._values, other.values))

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __repr__(self):
        return "Curve(t0=%r, delta_t=%r, points=%d)" % (self._t0, self._delta_t, len(self))


def grid_points(duration, delta_t):
    """
    Number of grid points covering [0, duration], both ends included.
    """
    return int(round(duration / delta_t)) + 1


def kernel_weight(t, ttype, cfg):
    """
    Weight in 1/seconds of a token of `ttype` at `t` seconds after it.
    Accepts scalars or arrays for `t`.
    """
    t = np.asarray(t, dtype=np.float64)
    half = cfg.window_l / 2.0
    w = np.where((t > 0) & (t < half),
                 cfg.weight(ttype) / cfg.window_l * np.cos(np.pi * t / cfg.window_l) ** 2,
                 0.0)
    return float(w) if w.ndim == 0 else w


def iic_curve(seq, ics, cfg, t_end, origin=0.0):
    """
    IIC of a token sequence on the grid 0, dt, ..., t_end.

    @param ics: IC of every token of `seq`
    @param origin: time, on the sequence clock where the first note sits
      at 0, that becomes 0 on the curve. Tokens before it still
      contribute through the kernel tail.
    @rtype: Curve
    """
    ics = np.asarray(ics, dtype=np.float64)
    if len(ics) != len(seq):
        raise DomainError("%d IC values for %d tokens" % (len(ics), len(seq)))
    if not t_end > 0:
        raise DomainError("curve end must be positive: %r" % t_end)

    grid = np.arange(grid_points(t_end, cfg.delta_t)) * cfg.delta_t
    values = np.zeros(len(grid))
    if len(seq) == 0:
        return Curve(0.0, cfg.delta_t, values)

    times = localize_all(seq) - origin
    weighted = cfg.type_weights()[ID_TYPES[list(seq.ids)]] * ics
    keep = (weighted != 0) & (times > -cfg.window_l / 2.0) & (times < grid[-1])
    times = times[keep]
    weighted = weighted[keep]
    if len(times) == 0:
        return Curve(0.0, cfg.delta_t, values)

    half = cfg.window_l / 2.0
    step = max(1, _CHUNK_CELLS // len(times))
    for start in range(0, len(grid), step):
        t = grid[start:start + step]
        elapsed = t[None, :] - times[:, None]
        k = np.where((elapsed > 0) & (elapsed < half),
                     np.cos(np.pi * elapsed / cfg.window_l) ** 2, 0.0)
        values[start:start + step] = (weighted[:, None] * k).sum(axis=0) / cfg.window_l
    return Curve(0.0, cfg.delta_t, values)


def _window_mask(curve, t1, t2):
    """
    Grid points with t1 < t <= t2, tolerant of float drift in the grid.
    """
    eps = curve.delta_t * 1e-6
    times = curve.times()
    return (times > t1 + eps) & (times <= t2 + eps)


def segment_surprisal(curve, t1, t2):
    """
    L1 norm of the curve over [t1, t2] as a right Riemann sum on its grid.

    @raise DomainError: on a reversed interval or one outside the curve.
    """
    eps = curve.delta_t * 1e-6
    if not t1 < t2:
        raise DomainError("reversed interval [%r, %r]" % (t1, t2))
    if t1 < curve.t0 - eps or t2 > curve.end() + eps:
        raise DomainError("interval [%r, %r] outside curve [%r, %r]" % (
            t1, t2, curve.t0, curve.end()))
    return float(np.sum(np.abs(curve.values[_window_mask(curve, t1, t2)])) * curve.delta_t)


def curve_at(curve, t):
    """
    Linearly interpolated value at `t`, held constant past either end.
    """
    return float(np.interp(t, curve.times(), curve.values))


def resample(curve, delta_t, t0=None, duration=None):
    """
    Linear interpolation of `curve` onto another uniform grid.
    """
    t0 = curve.t0 if t0 is None else t0
    duration = curve.end() - t0 if duration is None else duration
    times = t0 + np.arange(grid_points(duration, delta_t)) * delta_t
    return Curve(t0, delta_t, np.interp(times, curve.times(), curve.values))


def ic_deviation(target, iic, t_end):
    """
    L1 distance between two curves over (t0, t_end], as a Riemann sum on
      the grid of `iic`. The target is resampled onto that grid first.

    @raise DomainError: if `t_end` lies past the end of either curve.
    @raise GridMismatchError: if the grids still disagree after resampling.
    """
    eps = iic.delta_t * 1e-6
    if t_end > iic.end() + eps or t_end > target.end() + eps:
        raise DomainError("deviation horizon %r past curve end (%r, %r)" % (
            t_end, target.end(), iic.end()))
    if not target.same_grid(iic):
        target = resample(target, iic.delta_t, t0=iic.t0, duration=iic.duration())
    if not target.same_grid(iic):
        raise GridMismatchError("target and IIC grids differ: %r vs %r" % (target, iic))
    mask = _window_mask(iic, iic.t0, t_end)
    return float(np.sum(np.abs(target.values[mask] - iic.values[mask])) * iic.delta_t)


def type_weights_from_means(mean_pitch_ic, mean_timeshift_ic):
    """
    Weights that give both token types the same mean weighted IC of 1.
    """
    if not mean_pitch_ic > 0 or not mean_timeshift_ic > 0:
        raise DomainError("degenerate mean IC: %r, %r" % (mean_pitch_ic, mean_timeshift_ic))
    return 1.0 / mean_pitch_ic, 1.0 / mean_timeshift_ic


def type_mean_ic(corpus, ics):
    """
    Mean IC of the Pitch and of the Timeshift tokens over a corpus.
    """
    pitch, timeshift = [], []
    for seq, ic in zip(corpus, ics):
        types = ID_TYPES[list(seq.ids)]
        pitch.append(ic[types == TokenType.PITCH])
        timeshift.append(ic[types == TokenType.TIMESHIFT])
    pitch = np.concatenate(pitch) if pitch else np.zeros(0)
    timeshift = np.concatenate(timeshift) if timeshift else np.zeros(0)
    if len(pitch) == 0 or len(timeshift) == 0:
        raise DomainError("corpus has no Pitch or Timeshift tokens")
    return float(pitch.mean()), float(timeshift.mean())


def calibrate_type_weights(corpus, model, ics=None):
    """
    @return: (c_pitch, c_timeshift)
    """
    corpus = list(corpus)
    if not corpus:
        raise DomainError("cannot calibrate on an empty corpus")
    if ics is None:
        ics = corpus_ic(model, corpus)
    mean_pitch, mean_timeshift = type_mean_ic(corpus, ics)
    g_logger.info("mean IC: pitch %.4f, timeshift %.4f", mean_pitch, mean_timeshift)
    return type_weights_from_means(mean_pitch, mean_timeshift)


CSV_HEADER = "time_seconds,value_nats_per_second"


def write_curve_csv(curve, path):
    rows = np.column_stack([curve.times(), curve.values])
    np.savetxt(path, rows, fmt="%.9g", delimiter=",", header=CSV_HEADER, comments="")


def read_curve_csv(path, delta_t=DEFAULT_DELTA_T):
    """
    Read a curve. Non-uniform time columns are resampled onto a `delta_t` grid.

    @raise DomainError: on a file without rows or with decreasing times.
    """
    with open(path, "r") as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise DomainError("%s: expected header %r, found %r" % (path, CSV_HEADER, header))
        rows = np.loadtxt(f, delimiter=",", ndmin=2)
    if rows.shape[0] == 0:
        raise DomainError("%s: no curve rows" % path)
    times, values = rows[:, 0], rows[:, 1]
    if len(times) == 1:
        return Curve(times[0], delta_t, values)

    steps = np.diff(times)
    if np.any(steps <= 0):
        raise DomainError("%s: times must be strictly increasing" % path)
    step = float("%.9g" % ((times[-1] - times[0]) / (len(times) - 1)))
    if np.allclose(steps, step, rtol=1e-6, atol=1e-9):
        return Curve(times[0], step, values)

    g_logger.warning("%s: non-uniform time column, resampling to %g s", path, delta_t)
    grid = times[0] + np.arange(grid_points(times[-1] - times[0], delta_t)) * delta_t
    return Curve(times[0], delta_t, np.interp(grid, times, values))
