"""
Command line interface: `iic train|curve|generate|analyze|sweep`.

Exit status is 0 on success, 2 for bad usage or input, 3 when a search
  aborts.
"""
import os
import csv
import logging
import argparse

import numpy as np

import iic
from iic import IICError
from iic import DomainError
from iic import Progress
from iic.BinaryParser import BinaryParserException
from iic.midi import NoteList
from iic.midi import DEFAULT_TEMPO
from iic.midi import slice_notes
from iic.midi import load_midi_file
from iic.midi import save_midi_file
from iic.tokenizer import tokenize
from iic.critic import CorpusError
from iic.critic import DEFAULT_MAX_ORDER
from iic.critic import train
from iic.critic import corpus_ic
from iic.critic import save_model
from iic.critic import load_model
from iic.surprisal import TOKEN_MASKS
from iic.surprisal import DEFAULT_DELTA_T
from iic.surprisal import DEFAULT_WINDOW_L
from iic.surprisal import KernelConfig
from iic.surprisal import type_mean_ic
from iic.surprisal import type_weights_from_means
from iic.surprisal import read_curve_csv
from iic.surprisal import write_curve_csv
from iic.curves import ShapeSpec
from iic.curves import make_shape
from iic.curves import plot_curves
from iic.curves import extract_curve
from iic.curves import default_levels
from iic.curves import sample_snippets
from iic.search import DEFAULT_CH
from iic.search import DEFAULT_STEP_SIZE
from iic.search import DEFAULT_K
from iic.search import DESK_K
from iic.search import SWEEP_AXES
from iic.search import SearchParams
from iic.search import SearchAbortedError
from iic.search import calibrate_entropy_scales
from iic.search import generate
from iic.search import generate_many
from iic.search import sweep
from iic.analysis import analyze
from iic.analysis import write_report
from iic.analysis import read_annotations
from iic.analysis import plot_correlations


g_logger = logging.getLogger("iic.cli")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORTED = 3

DEFAULT_DURATION = 10.0
MIDI_EXTENSIONS = (".mid", ".midi")
SWEEP_HEADER = ("axis", "value", "seed", "deviation")


def _progress_class(args):
    if args.progress:
        return Progress.ProgressBarProgress
    return Progress.NullProgress


def corpus_files(path):
    if not os.path.isdir(path):
        raise DomainError("corpus %s is not a directory" % path)
    return sorted(os.path.join(path, name) for name in os.listdir(path)
                  if os.path.splitext(name)[1].lower() in MIDI_EXTENSIONS)


def load_corpus(path):
    """
    Every readable, non-empty MIDI file of a directory, in name order.

    @return: list of (piece id, NoteList), the piece id being the file
      name without extension
    @raise CorpusError: if no file is usable.
    """
    pieces = []
    for filename in corpus_files(path):
        try:
            notes = load_midi_file(filename)
        except (BinaryParserException, IICError, IOError) as e:
            g_logger.warning("skipping %s: %s", filename, e)
            continue
        if len(notes) == 0:
            g_logger.warning("skipping %s: no notes", filename)
            continue
        pieces.append((os.path.splitext(os.path.basename(filename))[0], notes))
    if not pieces:
        raise CorpusError("no usable MIDI files in %s" % path)
    g_logger.info("loaded %d pieces from %s", len(pieces), path)
    return pieces


def _kernel_config(args, model=None):
    c_pitch, c_timeshift = model.type_weights if model is not None else (1.0, 1.0)
    return KernelConfig(window_l=args.window_l, c_pitch=c_pitch, c_timeshift=c_timeshift,
                        delta_t=args.delta_t)


def _search_params(args):
    k = args.k
    if k is None:
        k = DESK_K if args.desk else DEFAULT_K
    return SearchParams(args.duration or DEFAULT_DURATION,
                        step_size=args.step_size,
                        k=k,
                        c_h=None if args.no_ch else args.ch,
                        seed=args.seed,
                        h_max_mode="type" if args.h_max_type else "vocab")


def _levels(args, model):
    low, high = args.low, args.high
    if model is not None and model.levels[0] < model.levels[1]:
        low = model.levels[0] if low is None else low
        high = model.levels[1] if high is None else high
    if low is None or high is None:
        raise DomainError("--low and --high are required without a calibrated --model")
    return low, high


def _shape_target(args, model):
    low, high = _levels(args, model)
    spec = ShapeSpec(args.target_shape, low, high, args.duration or DEFAULT_DURATION)
    return make_shape(spec, args.delta_t)


def _target(args, model):
    if args.target_csv:
        return read_curve_csv(args.target_csv, args.delta_t)
    if args.target_shape:
        return _shape_target(args, model)
    raise DomainError("one of --target-shape or --target-csv is required")


def _prompt(args):
    if args.prompt:
        return load_midi_file(args.prompt)
    return NoteList()


def cmd_train(args):
    pieces = load_corpus(args.corpus)
    corpus = [tokenize(notes) for _, notes in pieces]
    model = train(corpus, args.max_order, progress_class=_progress_class(args))

    ics = corpus_ic(model, corpus)
    mean_pitch, mean_timeshift = type_mean_ic(corpus, ics)
    c_pitch, c_timeshift = type_weights_from_means(mean_pitch, mean_timeshift)
    cfg = KernelConfig(args.window_l, c_pitch, c_timeshift, args.delta_t)
    levels = default_levels([notes for _, notes in pieces], model, cfg, ics=ics)
    scales = calibrate_entropy_scales([notes for _, notes in pieces], model, cfg, ics=ics)
    model = model.with_calibration((c_pitch, c_timeshift), (levels.low, levels.high), scales)
    save_model(model, args.out)

    print("pieces: %d" % len(pieces))
    print("tokens: %d" % model.token_count)
    print("contexts: %d" % model.context_count)
    print("mean IC: pitch %.6f, timeshift %.6f" % (mean_pitch, mean_timeshift))
    print("c_pitch: %.6f" % c_pitch)
    print("c_timeshift: %.6f" % c_timeshift)
    print("levels: low %.6f, high %.6f" % (levels.low, levels.high))
    print("entropy scales: %s" % " ".join("%.6f" % s for s in scales))
    return EXIT_OK


def cmd_curve(args):
    if args.midi:
        if not args.model:
            raise DomainError("--model is required to extract a curve")
        model = load_model(args.model)
        cfg = _kernel_config(args, model)
        notes = load_midi_file(args.midi)
        duration = args.duration or notes.end_time() - args.t_start
        curve = extract_curve(notes, model, cfg, args.t_start, args.t_start + duration)
    else:
        model = load_model(args.model) if args.model else None
        if not args.target_shape:
            raise DomainError("one of --target-shape or --midi is required")
        curve = _shape_target(args, model)

    write_curve_csv(curve, args.out)
    if args.plot:
        plot_curves([curve], args.plot)
    g_logger.info("wrote %d curve points to %s", len(curve), args.out)
    return EXIT_OK


def _output_paths(out, index):
    stem, ext = os.path.splitext(out)
    if index:
        stem = "%s.%d" % (stem, index)
    return stem + (ext or ".mid"), stem + ".csv", stem + ".manifest.txt", stem + ".svg"


def cmd_generate(args):
    params = _search_params(args)
    if args.samples < 1:
        raise DomainError("--samples must be positive: %r" % args.samples)
    if args.keep is not None and not 1 <= args.keep <= args.samples:
        raise DomainError("cannot keep %d of %d samples" % (args.keep, args.samples))
    model = load_model(args.model)
    cfg = _kernel_config(args, model)
    target = _target(args, model)
    prompt = _prompt(args)

    if args.samples > 1:
        results = generate_many(prompt, target, model, model, cfg, params, args.samples,
                                keep=args.keep, progress_class=_progress_class(args))
    else:
        results = [generate(prompt, target, model, model, cfg, params,
                            progress_class=_progress_class(args))]

    for i, result in enumerate(results):
        midi_path, csv_path, manifest_path, svg_path = _output_paths(args.out, i)
        result.manifest["target"] = args.target_csv or args.target_shape
        if args.target_shape:
            result.manifest["low"], result.manifest["high"] = _levels(args, model)
        result.manifest["prompt"] = args.prompt
        save_midi_file(result.notes, midi_path, tempo=args.tempo)
        write_curve_csv(result.curve, csv_path)
        result.manifest.write(manifest_path)
        if args.plot:
            plot_curves([target, result.curve], svg_path if i else args.plot,
                        labels=["target", "generated"])
        print("%s: deviation %r" % (midi_path, float(result.deviation)))
    return EXIT_OK


def cmd_analyze(args):
    model = load_model(args.model)
    cfg = _kernel_config(args, model)
    pieces = load_corpus(args.corpus)
    annotations = read_annotations(args.annotations) if args.annotations else None
    masks = (args.mask,) if args.mask else TOKEN_MASKS

    rows = analyze(pieces, model, cfg, annotations=annotations, n_max=args.n_max,
                   masks=masks, mode="per-piece" if args.per_piece else "pooled")
    write_report(rows, args.out)
    if args.plot:
        plot_correlations(rows, args.plot)
    print("%d report rows written to %s" % (len(rows), args.out))
    return EXIT_OK


def parse_sweep_values(axis, text):
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if axis == "ch" and item.lower() == "none":
            values.append(None)
        elif axis == "k":
            values.append(int(item))
        else:
            values.append(float(item))
    if not values:
        raise DomainError("no sweep values given")
    return values


def _sweep_targets(args, model, cfg, count):
    if not args.corpus:
        return [(_prompt(args), _target(args, model))]

    pieces = [notes for _, notes in load_corpus(args.corpus)]
    duration = args.duration or DEFAULT_DURATION
    rng = np.random.default_rng(args.seed)
    targets = []
    for i, t_start, t_end in sample_snippets(pieces, count, duration, rng):
        notes = pieces[i]
        prompt = slice_notes(notes, 0.0, t_start) if t_start > 0 else NoteList()
        targets.append((prompt, extract_curve(notes, model, cfg, t_start, t_end)))
    return targets


def cmd_sweep(args):
    params = _search_params(args)
    try:
        values = parse_sweep_values(args.axis, args.values)
    except ValueError as e:
        raise DomainError("bad --values for axis %s: %s" % (args.axis, e))
    if args.seeds < 1:
        raise DomainError("--seeds must be positive: %r" % args.seeds)
    for value in values:
        if args.axis == "ch" and (value is None or value <= 0):
            continue
        params.replace(**{SWEEP_AXES[args.axis]: value})
    model = load_model(args.model)
    cfg = _kernel_config(args, model)
    seeds = [args.seed + i for i in range(args.seeds)]
    targets = _sweep_targets(args, model, cfg, len(seeds))

    result = sweep(targets, model, model, cfg, params, args.axis, values, seeds,
                   progress_class=_progress_class(args))
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_HEADER)
        for row in result.rows:
            writer.writerow([row.axis, "none" if row.value is None else row.value,
                             row.seed, repr(float(row.deviation))])
    for value, median in result.medians.items():
        print("%s=%s median deviation %.6f" % (args.axis, "none" if value is None else value,
                                               median))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    common.add_argument("--progress", action="store_true", help="show progress bars")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--delta-t", type=float, default=DEFAULT_DELTA_T,
                        help="curve grid step in seconds")
    common.add_argument("--window-l", type=float, default=DEFAULT_WINDOW_L,
                        help="kernel window length in seconds")

    target = argparse.ArgumentParser(add_help=False)
    group = target.add_mutually_exclusive_group()
    group.add_argument("--target-shape", help="constant, ramp-up, ramp-down, step-up, step-down")
    group.add_argument("--target-csv", help="target curve CSV")
    target.add_argument("--low", type=float, help="low shape level in nats/s")
    target.add_argument("--high", type=float, help="high shape level in nats/s")
    target.add_argument("--duration", type=float, help="seconds to generate")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--model", required=True)
    search.add_argument("--prompt", help="MIDI file to continue")
    search.add_argument("--step-size", type=float, default=DEFAULT_STEP_SIZE)
    search.add_argument("--k", type=int, help="candidates per step, default %d" % DEFAULT_K)
    search.add_argument("--desk", action="store_true",
                        help="desk-scale preset: k=%d unless --k is given" % DESK_K)
    search.add_argument("--ch", type=float, default=DEFAULT_CH, help="entropy constant")
    search.add_argument("--no-ch", action="store_true", help="disable temperature control")
    search.add_argument("--h-max-type", action="store_true",
                        help="cap target entropy per token type instead of vocabulary")

    parser = argparse.ArgumentParser(prog="iic", description="IIC-controlled MIDI generation")
    parser.add_argument("--version", action="version", version="%(prog)s " + iic.__version__)
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    p_train = sub.add_parser("train", parents=[common], help="train a critic model")
    p_train.add_argument("--corpus", required=True, help="directory of MIDI files")
    p_train.add_argument("--max-order", type=int, default=DEFAULT_MAX_ORDER)
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.set_defaults(func=cmd_train)

    p_curve = sub.add_parser("curve", parents=[common, target],
                             help="write a canonical or extracted IIC curve")
    p_curve.add_argument("--model")
    p_curve.add_argument("--midi", help="piece to extract the curve from")
    p_curve.add_argument("--t-start", type=float, default=0.0)
    p_curve.add_argument("--out", required=True, help="curve CSV to write")
    p_curve.add_argument("--plot", help="SVG plot to write")
    p_curve.set_defaults(func=cmd_curve)

    p_gen = sub.add_parser("generate", parents=[common, target, search],
                           help="generate music following a target curve")
    p_gen.add_argument("--samples", type=int, default=1)
    p_gen.add_argument("--keep", type=int)
    p_gen.add_argument("--tempo", type=int, default=DEFAULT_TEMPO,
                       help="microseconds per quarter note in the written file")
    p_gen.add_argument("--out", required=True, help="MIDI file to write")
    p_gen.add_argument("--plot", help="SVG plot of target and realized curves")
    p_gen.set_defaults(func=cmd_generate)

    p_an = sub.add_parser("analyze", parents=[common],
                          help="correlate complexity metrics with surprisal")
    p_an.add_argument("--model", required=True)
    p_an.add_argument("--corpus", required=True)
    p_an.add_argument("--annotations", help="measure annotation CSV")
    p_an.add_argument("--mask", choices=TOKEN_MASKS, help="only this token mask")
    p_an.add_argument("--n-max", type=int)
    p_an.add_argument("--per-piece", action="store_true",
                      help="average per-piece correlations instead of pooling")
    p_an.add_argument("--out", required=True, help="report CSV to write")
    p_an.add_argument("--plot", help="SVG plot to write")
    p_an.set_defaults(func=cmd_analyze)

    p_sweep = sub.add_parser("sweep", parents=[common, target, search],
                             help="final deviation over a grid of one search parameter")
    p_sweep.add_argument("--corpus", help="take prompts and targets from random snippets")
    p_sweep.add_argument("--axis", choices=sorted(SWEEP_AXES), required=True)
    p_sweep.add_argument("--values", required=True, help="comma separated, 'none' for no C_H")
    p_sweep.add_argument("--seeds", type=int, default=20, help="paired seeds per value")
    p_sweep.add_argument("--out", required=True, help="CSV to write")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SearchAbortedError as e:
        g_logger.error("search aborted: %s", e)
        return EXIT_ABORTED
    except (IICError, BinaryParserException) as e:
        g_logger.error("%s", e)
        return EXIT_INPUT
    except (IOError, OSError) as e:
        g_logger.error("%s", e)
        return EXIT_INPUT
