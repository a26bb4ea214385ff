"""
IC-conditioned beam search.

Iteration i samples `k` continuations of the retained sequence from the
  generator q. Each runs until its newest note group ends past the
  horizon i * t', measured from the start of generation. The one whose
  IIC under the critic p deviates least from the target curve over
  (0, horizon] is kept. Generation stops once the retained
  continuation lasts the requested duration.

With an entropy constant set, every sampled token is drawn at the
  temperature that brings q's distribution to the entropy the target
  asks for at the horizon. The target level is first converted to the
  IC scale of the position's token type with the critic's entropy
  scales. p is always evaluated untempered.
"""
import os
import logging
from collections import OrderedDict
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import iic
from iic import IICError
from iic import DomainError
from iic import Progress
from iic.critic import sample
from iic.critic import token_ic
from iic.critic import corpus_ic
from iic.critic import model_hash
from iic.critic import match_entropy
from iic.critic import target_entropy
from iic.critic import apply_temperature
from iic.critic import type_entropy_ceiling
from iic.tokenizer import ID_TYPES
from iic.tokenizer import OFFSETS
from iic.tokenizer import TIMESHIFT_GRID
from iic.tokenizer import TOKENS_PER_NOTE
from iic.tokenizer import TokenSeq
from iic.tokenizer import TokenType
from iic.tokenizer import StructureError
from iic.tokenizer import tokenize
from iic.tokenizer import detokenize
from iic.tokenizer import type_of_position
from iic.midi import NoteList
from iic.surprisal import KernelConfig
from iic.surprisal import iic_curve
from iic.surprisal import curve_at
from iic.surprisal import ic_deviation
from iic.curves import piece_curve


g_logger = logging.getLogger("iic.search")

DEFAULT_STEP_SIZE = 0.3
DEFAULT_K = 128
DESK_K = 8
DEFAULT_CH = 50.0
DEFAULT_MAX_TOKENS_PER_STEP = 64
H_MAX_MODES = ("vocab", "type")
THREADS_ENV = "IIC_THREADS"
# float slack when comparing note ends with a horizon
TIME_EPS = 1e-9

# manifest entries never parsed as numbers
STRING_KEYS = ("version", "q_hash", "p_hash", "h_max_mode")
SCALE_KEY = "entropy_scale_%s"
UNIT_ENTROPY_SCALES = (1.0,) * TOKENS_PER_NOTE
# lower bound on a calibrated scale
SCALE_FLOOR = 1e-6

SWEEP_AXES = {
    "k": "k",
    "step": "step_size",
    "ch": "c_h",
}


class SearchAbortedError(IICError):
    pass


class SearchParams(object):
    """
    @param c_h: entropy constant; None disables temperature control.
    @param h_max_mode: "vocab" caps target entropy at the uniform entropy
      of the whole vocabulary, "type" at that of the position's type.
    @param threads: worker count; None reads IIC_THREADS, then the CPU count.
    @param entropy_scales: per token type factors from IIC levels to
      per-token nats; None takes the critic's stored calibration.
    """
    def __init__(self, duration, step_size=DEFAULT_STEP_SIZE, k=DEFAULT_K, c_h=DEFAULT_CH,
                 max_tokens_per_step=DEFAULT_MAX_TOKENS_PER_STEP, seed=0,
                 h_max_mode="vocab", threads=None, entropy_scales=None):
        super(SearchParams, self).__init__()
        if not duration > 0:
            raise DomainError("duration must be positive: %r" % duration)
        if not step_size > 0:
            raise DomainError("step size must be positive: %r" % step_size)
        if int(k) != k or k < 1:
            raise DomainError("k must be a positive integer: %r" % k)
        if c_h is not None and not c_h > 0:
            raise DomainError("entropy constant must be positive: %r" % c_h)
        if max_tokens_per_step < TOKENS_PER_NOTE:
            raise DomainError("max tokens per step must allow one note: %r" % max_tokens_per_step)
        if h_max_mode not in H_MAX_MODES:
            raise DomainError("unknown entropy ceiling mode %r" % h_max_mode)
        if seed < 0:
            raise DomainError("seed must be non-negative: %r" % seed)
        if threads is not None and threads < 1:
            raise DomainError("thread count must be positive: %r" % threads)
        if entropy_scales is not None:
            entropy_scales = tuple(float(s) for s in entropy_scales)
            if len(entropy_scales) != TOKENS_PER_NOTE or \
                    not all(np.isfinite(s) and s > 0 for s in entropy_scales):
                raise DomainError("need %d positive entropy scales: %r" % (
                    TOKENS_PER_NOTE, entropy_scales))
        self.duration = float(duration)
        self.step_size = float(step_size)
        self.k = int(k)
        self.c_h = None if c_h is None else float(c_h)
        self.max_tokens_per_step = int(max_tokens_per_step)
        self.seed = int(seed)
        self.h_max_mode = h_max_mode
        self.threads = threads
        self.entropy_scales = entropy_scales

    def replace(self, **kwargs):
        fields = {
            "duration": self.duration,
            "step_size": self.step_size,
            "k": self.k,
            "c_h": self.c_h,
            "max_tokens_per_step": self.max_tokens_per_step,
            "seed": self.seed,
            "h_max_mode": self.h_max_mode,
            "threads": self.threads,
            "entropy_scales": self.entropy_scales,
        }
        fields.update(kwargs)
        return SearchParams(**fields)

    def worker_count(self):
        if self.threads is not None:
            return self.threads
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                g_logger.warning("ignoring non-integer %s=%r", THREADS_ENV, env)
        return os.cpu_count() or 1

    def iteration_count(self):
        return int(np.ceil(self.duration / self.step_size - 1e-9))

    def __repr__(self):
        return "SearchParams(duration=%r, step_size=%r, k=%r, c_h=%r, seed=%r)" % (
            self.duration, self.step_size, self.k, self.c_h, self.seed)


class BeamState(object):
    """
    A prompt plus generated continuation, with the critic's IC of every
      token of both.

    `curve` and `deviation` are filled in by `select_best`. A candidate
      that hit the token cap without its notes advancing time at all is
      `truncated` and never selected.
    """
    def __init__(self, prompt, generated, ics=None, curve=None, deviation=None,
                 truncated=False, index=0, entropies=(), unreached=0):
        super(BeamState, self).__init__()
        self.prompt = prompt
        self.generated = generated
        self.ics = ics
        self.curve = curve
        self.deviation = deviation
        self.truncated = truncated
        self.index = index
        self.entropies = tuple(entropies)
        self.unreached = unreached

    @property
    def sequence(self):
        return self.prompt + self.generated

    @property
    def generated_duration(self):
        return self.generated.duration()

    @property
    def origin(self):
        """
        Prompt time, on the sequence clock, where generation starts.
        """
        return self.prompt.duration()

    def __repr__(self):
        return "BeamState(index=%d, tokens=%d, duration=%.3f, deviation=%r)" % (
            self.index, len(self.generated), self.generated_duration, self.deviation)


def candidate_rng(seed, iteration, index):
    """
    The random stream of one candidate, independent of k and of scheduling.
    """
    return np.random.default_rng([seed, iteration, index])


def _h_max(params, q, position):
    if params.h_max_mode == "type":
        return type_entropy_ceiling(type_of_position(position))
    return float(np.log(q.vocab_size))


def calibrate_entropy_scales(pieces, model, cfg, ics=None, c_h=DEFAULT_CH):
    """
    Factors that turn an IIC level into the IC scale of each token type,
      such that at the corpus mean IIC and entropy constant `c_h` every
      type is asked for its corpus mean IC.

    IIC is a kernel-weighted rate in nats per second; entropy is in
      nats per token.

    @type pieces: sequence of NoteList
    @return: one scale per TokenType
    @raise DomainError: on an empty corpus or one with a zero mean IIC.
    """
    pieces = [notes for notes in pieces if len(notes)]
    if not pieces:
        raise DomainError("cannot calibrate entropy scales on an empty corpus")
    corpus = [tokenize(notes) for notes in pieces]
    if ics is None:
        ics = corpus_ic(model, corpus)

    levels = np.concatenate([piece_curve(notes, model, cfg, ics=ic)[0].values
                             for notes, ic in zip(pieces, ics)])
    mean_level = float(levels.mean())
    if not mean_level > 0:
        raise DomainError("corpus mean IIC is not positive: %r" % mean_level)

    types = np.concatenate([ID_TYPES[list(seq.ids)] for seq in corpus])
    pooled = np.concatenate(ics)
    scales = []
    for ttype in TokenType:
        mean_ic = float(pooled[types == ttype].mean())
        scales.append(max(c_h * mean_ic / mean_level, SCALE_FLOOR))
    g_logger.info("entropy scales at C_H %.1f over mean IIC %.4f: %s",
                  c_h, mean_level, ", ".join("%.4f" % s for s in scales))
    return tuple(scales)


def resolve_entropy_scales(params, p):
    """
    The entropy scales a run uses: the explicit ones of `params`, else
      those stored with the critic, else 1 for every type.
    """
    if params.entropy_scales is not None:
        return params.entropy_scales
    stored = tuple(getattr(p, "entropy_scales", ()) or ())
    if len(stored) == TOKENS_PER_NOTE and all(s > 0 for s in stored):
        return stored
    return UNIT_ENTROPY_SCALES


def _expand_one(state, params, q, p, target, iteration, index, scales):
    rng = candidate_rng(params.seed, iteration, index)
    horizon = min(iteration * params.step_size, params.duration)
    ic_star = curve_at(target, horizon)

    ids = list(state.sequence.ids)
    new_ids = []
    new_ics = []
    entropies = []
    unreached = 0
    start = state.generated_duration
    new_duration = 0.0
    truncated = False
    while True:
        for _ in range(TOKENS_PER_NOTE):
            position = len(ids)
            d = q.next_dist(ids)
            if params.c_h is not None:
                scale = scales[position % TOKENS_PER_NOTE]
                h_target = target_entropy(ic_star * scale, params.c_h,
                                          _h_max(params, q, position))
                m = match_entropy(d, h_target)
                unreached += m.unreached
                entropies.append(m.entropy)
                token = sample(apply_temperature(d, m.r), rng)
            else:
                token = sample(d, rng)
            if ID_TYPES[token] != position % TOKENS_PER_NOTE:
                raise StructureError("generator emitted a %s token" %
                                     TokenType(int(ID_TYPES[token])).name, position)
            dp = d if p is q else p.next_dist(ids)
            new_ics.append(-np.log(dp[token]))
            ids.append(token)
            new_ids.append(token)

        new_duration += TIMESHIFT_GRID[ids[-1] - OFFSETS[TokenType.TIMESHIFT]]
        if start + new_duration > horizon + TIME_EPS:
            break
        if len(new_ids) >= params.max_tokens_per_step:
            truncated = new_duration == 0
            break

    return BeamState(state.prompt, state.generated + TokenSeq(new_ids),
                     ics=np.concatenate([state.ics, new_ics]),
                     truncated=truncated, index=index,
                     entropies=entropies, unreached=unreached)


def expand_step(state, params, q, p, target, iteration, executor=None):
    """
    Sample `params.k` continuations of `state`, each made of whole note
      groups and ending with the first group that passes the horizon.

    @param iteration: 1-based iteration number, used for the target
      horizon and the candidate random streams.
    @rtype: list of BeamState, in candidate index order
    """
    if iteration < 1:
        raise DomainError("iterations are numbered from 1: %r" % iteration)
    scales = resolve_entropy_scales(params, p)

    def expand(index):
        return _expand_one(state, params, q, p, target, iteration, index, scales)

    if executor is None:
        return [expand(j) for j in range(params.k)]
    return list(executor.map(expand, range(params.k)))


def evaluate(candidate, target, p, cfg, horizon, duration):
    """
    Fill in the realized curve and deviation of a candidate under p.
    """
    if candidate.ics is None:
        seq = candidate.sequence
        candidate.ics = token_ic(p, seq) if len(seq) else np.zeros(0)
    candidate.curve = iic_curve(candidate.sequence, candidate.ics, cfg, duration,
                                origin=candidate.origin)
    candidate.deviation = ic_deviation(target, candidate.curve, horizon)
    return candidate


def select_best(candidates, target, p, horizon, cfg=None, duration=None):
    """
    The candidate with the lowest IC deviation from `target` over
      (0, horizon]; ties go to the lowest index.

    @raise DomainError: for an empty candidate set.
    @raise SearchAbortedError: if every candidate is truncated.
    """
    if not candidates:
        raise DomainError("no candidates to select from")
    cfg = cfg or KernelConfig()
    duration = horizon if duration is None else duration

    best = None
    for c in candidates:
        if c.truncated:
            continue
        evaluate(c, target, p, cfg, horizon, duration)
        if best is None or c.deviation < best.deviation:
            best = c
    if best is None:
        raise SearchAbortedError("all %d candidates hit the token cap without advancing time" %
                                 len(candidates))
    return best


class Manifest(object):
    """
    Key/value record of a run: everything needed to repeat it exactly,
      and what it produced.
    """
    def __init__(self, entries=None):
        super(Manifest, self).__init__()
        self._entries = OrderedDict(entries or ())

    @classmethod
    def for_run(cls, params, cfg, q, p, prompt_notes, state, deviation, iterations):
        m = cls()
        m["version"] = iic.__version__
        m["seed"] = params.seed
        m["duration"] = params.duration
        m["step_size"] = params.step_size
        m["k"] = params.k
        m["c_h"] = params.c_h
        m["max_tokens_per_step"] = params.max_tokens_per_step
        m["h_max_mode"] = params.h_max_mode
        for ttype, scale in zip(TokenType, params.entropy_scales or ()):
            m[SCALE_KEY % ttype.name.lower()] = scale
        m["window_l"] = cfg.window_l
        m["c_pitch"] = cfg.c_pitch
        m["c_timeshift"] = cfg.c_timeshift
        m["delta_t"] = cfg.delta_t
        m["q_hash"] = model_hash(q)
        m["p_hash"] = model_hash(p)
        m["prompt_notes"] = len(prompt_notes)
        m["iterations"] = iterations
        m["generated_tokens"] = len(state.generated)
        m["generated_duration"] = state.generated_duration
        m["deviation"] = deviation
        return m

    def __getitem__(self, key):
        return self._entries[key]

    def __setitem__(self, key, value):
        self._entries[key] = value

    def __contains__(self, key):
        return key in self._entries

    def items(self):
        return self._entries.items()

    def __eq__(self, other):
        if not isinstance(other, Manifest):
            return NotImplemented
        return self.to_text() == other.to_text()

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def to_text(self):
        lines = []
        for key, value in self._entries.items():
            if value is None:
                value = "none"
            elif isinstance(value, float):
                value = repr(float(value))
            lines.append("%s=%s" % (key, value))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        m = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError("manifest line %d is not key=value: %r" % (lineno, line))
            key, _, value = line.partition("=")
            key = key.strip()
            m[key] = value.strip() if key in STRING_KEYS else _parse_value(value.strip())
        return m

    def search_params(self, **overrides):
        fields = {
            "duration": self["duration"],
            "step_size": self["step_size"],
            "k": self["k"],
            "c_h": self["c_h"],
            "max_tokens_per_step": self["max_tokens_per_step"],
            "seed": self["seed"],
            "h_max_mode": self["h_max_mode"],
        }
        keys = [SCALE_KEY % t.name.lower() for t in TokenType]
        if all(key in self for key in keys):
            fields["entropy_scales"] = tuple(self[key] for key in keys)
        fields.update(overrides)
        return SearchParams(**fields)

    def kernel_config(self):
        return KernelConfig(window_l=self["window_l"], c_pitch=self["c_pitch"],
                            c_timeshift=self["c_timeshift"], delta_t=self["delta_t"])

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_text())


def _parse_value(value):
    if value == "none":
        return None
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def read_manifest(path):
    with open(path, "r") as f:
        return Manifest.from_text(f.read())


GenerationResult = namedtuple("GenerationResult",
                              ["notes", "curve", "deviation", "manifest", "state"])


def generate(prompt, target, q, p, cfg, params, progress_class=Progress.NullProgress):
    """
    Continue `prompt` for `params.duration` seconds following `target`.

    @type prompt: NoteList, possibly empty
    @type target: Curve on the generation clock, lasting at least the duration
    @rtype: GenerationResult
    @raise SearchAbortedError: if an iteration leaves no usable candidate.
    """
    if target.end() + cfg.delta_t * 1e-6 < params.duration:
        raise DomainError("target lasts %r s, shorter than the requested %r s" % (
            target.end(), params.duration))

    if params.entropy_scales is None:
        params = params.replace(entropy_scales=resolve_entropy_scales(params, p))
        if params.c_h is not None and params.entropy_scales == UNIT_ENTROPY_SCALES:
            g_logger.warning("critic has no entropy calibration, using unit scales")

    prompt_seq = tokenize(prompt)
    prompt_ics = token_ic(p, prompt_seq) if len(prompt_seq) else np.zeros(0)
    state = BeamState(prompt_seq, TokenSeq(), ics=prompt_ics)
    g_logger.info("generating %.2f s from a %d note prompt: k=%d, step %.2f s, C_H %s",
                  params.duration, len(prompt), params.k, params.step_size, params.c_h)

    progress = progress_class(params.iteration_count(), "iterations")
    iteration = 0
    truncated = 0
    with ThreadPoolExecutor(max_workers=params.worker_count()) as executor:
        while state.generated_duration < params.duration:
            iteration += 1
            horizon = min(iteration * params.step_size, params.duration)
            candidates = expand_step(state, params, q, p, target, iteration, executor)
            n_truncated = sum(1 for c in candidates if c.truncated)
            if n_truncated:
                g_logger.warning("iteration %d: %d of %d candidates did not advance time in %d tokens",
                                 iteration, n_truncated, len(candidates),
                                 params.max_tokens_per_step)
                truncated += n_truncated
            try:
                state = select_best(candidates, target, p, horizon, cfg, params.duration)
            except SearchAbortedError:
                g_logger.error("iteration %d: no candidate advanced past %.3f s",
                               iteration, state.generated_duration)
                raise
            g_logger.debug("iteration %d: candidate %d, duration %.3f, deviation %.4f",
                           iteration, state.index, state.generated_duration, state.deviation)
            progress.set_current(iteration)
    progress.set_complete()

    curve = iic_curve(state.sequence, state.ics, cfg, params.duration, origin=state.origin)
    deviation = ic_deviation(target, curve, params.duration)
    notes = NoteList([n for n in detokenize(state.generated) if n.onset < params.duration])
    manifest = Manifest.for_run(params, cfg, q, p, prompt, state, deviation, iteration)
    manifest["truncated_candidates"] = truncated
    g_logger.info("generated %d notes in %d iterations, deviation %.4f",
                  len(notes), iteration, deviation)
    return GenerationResult(notes, curve, deviation, manifest, state)


def derived_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_many(prompt, target, q, p, cfg, params, samples, keep=None,
                  progress_class=Progress.NullProgress):
    """
    Run `samples` searches with seeds derived from `params.seed` and
      return the `keep` with the lowest deviation, best first.
    """
    if samples < 1:
        raise DomainError("need at least one sample: %r" % samples)
    keep = samples if keep is None else keep
    if not 1 <= keep <= samples:
        raise DomainError("cannot keep %r of %r samples" % (keep, samples))

    results = []
    progress = progress_class(samples, "samples")
    for s in range(samples):
        run = params.replace(seed=derived_seed(params.seed, s))
        results.append((s, generate(prompt, target, q, p, cfg, run)))
        progress.set_current(s + 1)
    progress.set_complete()
    results.sort(key=lambda pair: (pair[1].deviation, pair[0]))
    return [r for _, r in results[:keep]]


SweepRow = namedtuple("SweepRow", ["axis", "value", "seed", "deviation"])
SweepResult = namedtuple("SweepResult", ["rows", "medians"])


def sweep(targets, q, p, cfg, base_params, axis, values, seeds,
          progress_class=Progress.NullProgress):
    """
    Final deviation over a grid of one search parameter and paired seeds.

    @param targets: list of (prompt NoteList, target Curve); seed number i
      uses pair i modulo the list length, so every axis value sees the
      same prompts and targets.
    @param axis: "k", "step" or "ch"; a "ch" value of None or <= 0
      disables temperature control.
    @rtype: SweepResult
    """
    if axis not in SWEEP_AXES:
        raise DomainError("unknown sweep axis %r" % axis)
    if not targets:
        raise DomainError("sweep needs at least one target")
    seeds = list(seeds)
    values = list(values)

    rows = []
    progress = progress_class(len(values) * len(seeds), "runs")
    for vi, value in enumerate(values):
        if axis == "ch" and (value is None or value <= 0):
            value = None
        elif axis == "k":
            value = int(value)
        for si, seed in enumerate(seeds):
            prompt, target = targets[si % len(targets)]
            params = base_params.replace(seed=seed, **{SWEEP_AXES[axis]: value})
            result = generate(prompt, target, q, p, cfg, params)
            rows.append(SweepRow(axis, value, seed, result.deviation))
            progress.set_current(vi * len(seeds) + si + 1)
    progress.set_complete()

    medians = OrderedDict()
    for value in OrderedDict.fromkeys(r.value for r in rows):
        medians[value] = float(np.median([r.deviation for r in rows if r.value == value]))
    for value, med in medians.items():
        g_logger.info("%s=%s: median deviation %.4f", axis, value, med)
    return SweepResult(rows, medians)
