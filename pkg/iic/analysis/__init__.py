"""
Complexity metrics of performed music and their correlation with
  segment surprisal.

Metrics:
  - tt: tonal tension, the cloud diameter of a segment's pitch classes
    on the circle-of-fifths helix
  - d: note density, onsets per segment
  - he: normalized entropy of a measure's IOI histogram

tt and d use one-second segments centered on every distinct onset; he
  uses annotated measures.
"""
import csv
import logging
from collections import OrderedDict
from collections import namedtuple

import numpy as np
import scipy.stats
from scipy.spatial.distance import pdist

from iic import DomainError
from iic.critic import token_ic
from iic.tokenizer import TIMESHIFT_GRID
from iic.tokenizer import tokenize
from iic.tokenizer import quantize
from iic.surprisal import TOKEN_MASKS
from iic.surprisal import iic_curve
from iic.surprisal import masked_config
from iic.surprisal import segment_surprisal


g_logger = logging.getLogger("iic.analysis")

SEGMENT_WIDTH = 1.0
SIGNIFICANCE_LEVEL = 0.05
METRICS = ("tt", "d", "he")
REPORT_HEADER = ("n", "metric", "token_mask", "pearson_r", "p_value")
ANNOTATION_HEADER = ("piece_id", "measure_index", "first_note_index", "last_note_index")


class SpiralConfig(object):
    def __init__(self, radius=1.0, height=np.sqrt(2.0 / 15.0)):
        super(SpiralConfig, self).__init__()
        if not radius > 0 or not height > 0:
            raise DomainError("spiral radius and height must be positive")
        self.radius = float(radius)
        self.height = float(height)


DEFAULT_SPIRAL = SpiralConfig()


def spiral_point(k, cfg=DEFAULT_SPIRAL):
    """
    Position of fifths index `k` on the helix, a quarter turn per fifth.
    """
    return np.array([cfg.radius * np.sin(k * np.pi / 2),
                     cfg.radius * np.cos(k * np.pi / 2),
                     k * cfg.height])


def fifths_indices(pitch_classes):
    """
    Line-of-fifths indices for a set of pitch classes, C at 0.

    MIDI carries no spelling, so each class takes index 7 pc mod 12 and
      the set is then wrapped onto the most compact run of 12
      consecutive indices (ties to the lowest start).
    """
    ks = sorted(set((7 * (int(pc) % 12)) % 12 for pc in pitch_classes))
    if len(ks) <= 1:
        return ks
    best = None
    for start in ks:
        run = sorted(k if k >= start else k + 12 for k in ks)
        span = run[-1] - run[0]
        if best is None or span < best[0]:
            best = (span, run)
    return best[1]


def cloud_diameter(pitch_classes, cfg=DEFAULT_SPIRAL):
    """
    Largest distance between any two of the pitch classes on the helix.
    """
    ks = fifths_indices(pitch_classes)
    if len(ks) <= 1:
        return 0.0
    points = np.array([spiral_point(k, cfg) for k in ks])
    return float(pdist(points).max())


def segment_pitch_classes(notes, t1, t2):
    return set(n.pitch % 12 for n in notes if t1 <= n.onset < t2)


def note_density(notes, center, width=SEGMENT_WIDTH):
    """
    Notes with onset in [center - width / 2, center + width / 2).
    """
    if not width > 0:
        raise DomainError("segment width must be positive: %r" % width)
    onsets = np.sort(np.asarray([n.onset for n in notes]))
    lo = np.searchsorted(onsets, center - width / 2.0, side="left")
    hi = np.searchsorted(onsets, center + width / 2.0, side="left")
    return int(hi - lo)


def ioi_entropy(iois):
    """
    Entropy of the histogram over distinct IOI values divided by the log
      of their number; 0 when all IOIs are equal.
    """
    iois = np.asarray(iois, dtype=np.float64)
    if len(iois) == 0:
        raise DomainError("IOI entropy needs at least one IOI")
    _, counts = np.unique(iois, return_counts=True)
    if len(counts) == 1:
        return 0.0
    return float(scipy.stats.entropy(counts) / np.log(len(counts)))


def quantized_iois(onsets):
    """
    Nonzero IOIs between consecutive distinct onsets, on the Timeshift grid.
    """
    onsets = np.unique(np.asarray(onsets, dtype=np.float64))
    iois = [TIMESHIFT_GRID[quantize(d, TIMESHIFT_GRID)] for d in np.diff(onsets)]
    return np.array([i for i in iois if i > 0])


SegmentRecord = namedtuple("SegmentRecord",
                           ["t1", "t2", "tension", "density", "entropy", "surprisal"])


def analysis_curve(notes, ics, cfg, width=SEGMENT_WIDTH):
    """
    IIC of a whole piece on the piece's clock, long enough to hold a
      segment centered on its last onset.
    """
    seq = tokenize(notes)
    end = notes[-1].onset + width / 2.0
    return iic_curve(seq, ics, cfg, end, origin=-notes[0].onset)


def onset_segments(notes, curve, width=SEGMENT_WIDTH, spiral=DEFAULT_SPIRAL):
    """
    One record per distinct onset, for the segment of `width` seconds
      centered on it and clipped to the curve.

    @type curve: Curve on the piece's clock
    """
    records = []
    for c in np.unique([n.onset for n in notes]):
        t1 = max(c - width / 2.0, curve.t0)
        t2 = min(c + width / 2.0, curve.end())
        if not t2 > t1:
            continue
        records.append(SegmentRecord(
            float(t1), float(t2),
            cloud_diameter(segment_pitch_classes(notes, t1, t2), spiral),
            note_density(notes, c, width),
            None,
            segment_surprisal(curve, t1, t2)))
    return records


def measure_bounds(notes, measures):
    """
    Start and end time of each annotated measure. Interior boundaries lie
      midway between the last onset of one measure and the first onset of
      the next.

    @type measures: list of (first note index, last note index), in order
    @raise DomainError: on indices that are out of range or not increasing.
    """
    if not measures:
        raise DomainError("no measures annotated")
    prev_last = -1
    for first, last in measures:
        if not prev_last < first <= last < len(notes):
            raise DomainError("measure notes [%r, %r] are not increasing within %d notes" % (
                first, last, len(notes)))
        prev_last = last

    bounds = []
    for m, (first, last) in enumerate(measures):
        if m == 0:
            t1 = notes[first].onset
        else:
            t1 = 0.5 * (notes[measures[m - 1][1]].onset + notes[first].onset)
        if m + 1 < len(measures):
            t2 = 0.5 * (notes[last].onset + notes[measures[m + 1][0]].onset)
        else:
            t2 = max(n.onset + n.duration for n in notes[first:last + 1])
        bounds.append((t1, t2))
    return bounds


def measure_segments(notes, measures, curve, spiral=DEFAULT_SPIRAL):
    """
    One record per measure, with segment surprisal divided by the
      measure's length.
    """
    records = []
    for (first, last), (t1, t2) in zip(measures, measure_bounds(notes, measures)):
        t2 = min(t2, curve.end())
        if not t2 > t1:
            g_logger.warning("skipping empty measure at %.3f s", t1)
            continue
        members = notes[first:last + 1]
        iois = quantized_iois([n.onset for n in members])
        records.append(SegmentRecord(
            t1, t2,
            cloud_diameter(set(n.pitch % 12 for n in members), spiral),
            len(members),
            ioi_entropy(iois) if len(iois) else 0.0,
            segment_surprisal(curve, t1, t2) / (t2 - t1)))
    return records


CorrelationPoint = namedtuple("CorrelationPoint", ["n", "r", "p_value", "undefined"])


def _pearson(xs, ys):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 3 or np.ptp(xs) == 0 or np.ptp(ys) == 0:
        return None
    r, p = scipy.stats.pearsonr(xs, ys)
    return float(r), float(p)


def correlation_series(pieces, n_max, mode="pooled"):
    """
    Pearson r between metric and surprisal over the first n segments of
      every piece, for n = 1 .. n_max.

    @param pieces: per piece, a sequence of (metric, surprisal) pairs
    @param mode: "pooled" correlates all pooled pairs; "per-piece"
      averages the r of each piece and reports no p-value.
    @rtype: list of CorrelationPoint
    """
    if mode not in ("pooled", "per-piece"):
        raise DomainError("unknown correlation mode %r" % mode)
    if n_max < 1:
        raise DomainError("n_max must be positive: %r" % n_max)
    pieces = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in pieces]

    series = []
    for n in range(1, n_max + 1):
        if mode == "pooled":
            pooled = np.concatenate([p[:n] for p in pieces]) if pieces else np.zeros((0, 2))
            result = _pearson(pooled[:, 0], pooled[:, 1])
            if result is None:
                series.append(CorrelationPoint(n, None, None, True))
            else:
                series.append(CorrelationPoint(n, result[0], result[1], False))
        else:
            rs = [res[0] for res in (_pearson(p[:n, 0], p[:n, 1]) for p in pieces)
                  if res is not None]
            if rs:
                series.append(CorrelationPoint(n, float(np.mean(rs)), None, False))
            else:
                series.append(CorrelationPoint(n, None, None, True))
    return series


ReportRow = namedtuple("ReportRow", REPORT_HEADER)


def analyze(pieces, model, cfg, annotations=None, n_max=None, masks=TOKEN_MASKS,
            mode="pooled", width=SEGMENT_WIDTH):
    """
    Correlation report rows for tt and d, and for he when measure
      annotations are given, under every token mask.

    @param pieces: list of (piece id, NoteList)
    @param annotations: dict of piece id to list of (first, last) note
      indices, as returned by `read_annotations`
    @rtype: list of ReportRow
    """
    pieces = [(pid, notes) for pid, notes in pieces if len(notes)]
    if not pieces:
        raise DomainError("no non-empty pieces to analyze")
    if annotations is None:
        g_logger.warning("no measure annotations: omitting IOI histogram entropy")

    ics = OrderedDict((pid, token_ic(model, tokenize(notes))) for pid, notes in pieces)

    rows = []
    for mask in masks:
        mcfg = masked_config(cfg, mask)
        pairs = {"tt": [], "d": [], "he": []}
        for pid, notes in pieces:
            curve = analysis_curve(notes, ics[pid], mcfg, width)
            segments = onset_segments(notes, curve, width)
            pairs["tt"].append([(s.tension, s.surprisal) for s in segments])
            pairs["d"].append([(s.density, s.surprisal) for s in segments])
            if annotations is not None:
                if pid not in annotations:
                    g_logger.warning("%s: no measure annotations", pid)
                    continue
                measures = measure_segments(notes, annotations[pid], curve)
                pairs["he"].append([(s.entropy, s.surprisal) for s in measures])

        for metric in METRICS:
            if not pairs[metric]:
                continue
            longest = max(len(p) for p in pairs[metric])
            limit = longest if n_max is None else min(n_max, longest)
            if limit < 1:
                continue
            for point in correlation_series(pairs[metric], limit, mode):
                rows.append(ReportRow(point.n, metric, mask, point.r, point.p_value))
    return rows


def read_annotations(path):
    """
    Read a measure-annotation CSV.

    @return: dict of piece id to [(first note index, last note index)]
      ordered by measure index
    """
    measures = OrderedDict()
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != ANNOTATION_HEADER:
            raise DomainError("%s: expected columns %s" % (path, ",".join(ANNOTATION_HEADER)))
        for row in reader:
            try:
                entry = (int(row["measure_index"]),
                         int(row["first_note_index"]),
                         int(row["last_note_index"]))
            except ValueError:
                raise DomainError("%s line %d: non-integer index" % (path, reader.line_num))
            measures.setdefault(row["piece_id"], []).append(entry)

    annotations = OrderedDict()
    for pid, entries in measures.items():
        entries.sort()
        annotations[pid] = [(first, last) for _, first, last in entries]
    return annotations


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def write_report(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def plot_correlations(rows, path):
    """
    SVG line plot of r against n, one line per metric and token mask.
      Points with p below the significance level are marked.
    """
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4.5))
    lines = OrderedDict()
    for row in rows:
        lines.setdefault((row.metric, row.token_mask), []).append(row)
    for (metric, mask), series in lines.items():
        defined = [r for r in series if r.pearson_r is not None]
        if not defined:
            continue
        line, = ax.plot([r.n for r in defined], [r.pearson_r for r in defined],
                        label="%s (%s)" % (metric, mask))
        significant = [r for r in defined
                       if r.p_value is not None and r.p_value < SIGNIFICANCE_LEVEL]
        ax.plot([r.n for r in significant], [r.pearson_r for r in significant],
                linestyle="none", marker=".", color=line.get_color())
    ax.set_xscale("log")
    ax.set_xlabel("segments per piece (n)")
    ax.set_ylabel("Pearson r")
    ax.axhline(0.0, color="grey", linewidth=0.5)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
