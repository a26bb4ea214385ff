#!/usr/bin/env python
"""
Interpolated variable-order Markov critic with Witten-Bell smoothing,
  and its on-disk model format.

Model file layout (all big-endian):

    0x00  char[4]   magic "IICM"
    0x04  word      version
    0x06  byte      max order
    0x07  word      vocabulary size
    0x09  byte      type mask flag
    0x0A  dword     training token count
    0x0E  dword     training sequence count
    0x12  double    pitch weight
    0x1A  double    timeshift weight
    0x22  double    default low level
    0x2A  double    default high level
    0x32  double[4] entropy scale of each token type, 0 if uncalibrated
    0x52  dword     context count
    0x56  context entries, sorted by context

  Each context entry is a byte length, that many int16 ids (-1 is the
  sequence start), a word count n, n word next-token ids and n dword
  next-token counts.
"""
import struct
import logging
from collections import defaultdict

import numpy as np

from iic import DomainError
from iic import Progress
from iic import BinaryParser
from iic.BinaryParser import Block
from iic.BinaryParser import Nestable
from iic.BinaryParser import ParseException
from iic.BinaryParser import OverrunBufferException
from iic.ContextCache import DEFAULT_CAPACITY
from iic.ContextCache import DistributionCache
from iic.critic import CriticModel
from iic.critic import CorpusError
from iic.critic import ModelFormatError
from iic.tokenizer import VOCAB_SIZE
from iic.tokenizer import TOKENS_PER_NOTE
from iic.tokenizer import TokenType
from iic.tokenizer import type_mask


g_logger = logging.getLogger("iic.critic.Markov")

MODEL_MAGIC = "IICM"
MODEL_VERSION = 2
SENTINEL = -1
DEFAULT_MAX_ORDER = 8
DEFAULT_CACHE_SIZE = DEFAULT_CAPACITY


class ModelHeader(Block, Nestable):
    def __init__(self, buf, offset, parent=None):
        super(ModelHeader, self).__init__(buf, offset)
        self.declare_field("string", "magic", 0x0, length=4)
        self.declare_field("word_be", "version")
        self.declare_field("byte", "max_order")
        self.declare_field("word_be", "vocab_size")
        self.declare_field("byte", "type_mask")
        self.declare_field("dword_be", "token_count")
        self.declare_field("dword_be", "sequence_count")
        self.declare_field("double_be", "c_pitch")
        self.declare_field("double_be", "c_timeshift")
        self.declare_field("double_be", "level_low")
        self.declare_field("double_be", "level_high")
        self.declare_field("double_be", "entropy_scales", count=TOKENS_PER_NOTE)
        self.declare_field("dword_be", "context_count")

    @staticmethod
    def structure_size(buf, offset, parent):
        return 0x56

    def __len__(self):
        return 0x56


class ContextEntry(Block, Nestable):
    def __init__(self, buf, offset, parent=None):
        super(ContextEntry, self).__init__(buf, offset)
        self.declare_field("byte", "context_length", 0x0)
        self.declare_field("int16_be", "context", count=self.context_length())
        self.declare_field("word_be", "next_count")
        self.declare_field("word_be", "next_ids", count=self.next_count())
        self.declare_field("dword_be", "next_counts", count=self.next_count())

    @staticmethod
    def structure_size(buf, offset, parent):
        ctx_len = BinaryParser.read_byte(buf, offset)
        n = BinaryParser.read_word_be(buf, offset + 1 + 2 * ctx_len)
        return 1 + 2 * ctx_len + 2 + 6 * n

    def __len__(self):
        return 1 + 2 * self.context_length() + 2 + 6 * self.next_count()


class ContextTable(object):
    """
    Next-token counts observed after one context.
    """
    __slots__ = ("ids", "counts", "total", "distinct")

    def __init__(self, counts):
        """
        @type counts: dict of next token id to count
        """
        ids = sorted(counts)
        self.ids = np.array(ids, dtype=np.int64)
        self.counts = np.array([counts[i] for i in ids], dtype=np.float64)
        self.total = float(self.counts.sum())
        self.distinct = len(ids)

    def lam(self):
        """
        Witten-Bell weight given to this context's own estimate.
        """
        return self.total / (self.total + self.distinct)


class MarkovCritic(CriticModel):
    """
    Next-token distributions interpolated over every context length
      from 0 to `max_order`, backing off to the uniform distribution.

    With `type_mask` on, each distribution is restricted to the token
      type the Pitch, Velocity, Duration, Timeshift cycle forces at the
      next position, and renormalized.

    Instances are immutable once trained and safe to share between threads.
    """
    def __init__(self, tables, max_order, vocab_size=VOCAB_SIZE, mask=True,
                 token_count=0, sequence_count=0,
                 type_weights=(1.0, 1.0), levels=(0.0, 0.0),
                 entropy_scales=(0.0,) * TOKENS_PER_NOTE, cache_size=DEFAULT_CACHE_SIZE):
        super(MarkovCritic, self).__init__()
        if max_order < 1 or max_order > 255:
            raise DomainError("max order out of range: %r" % max_order)
        if mask and vocab_size != VOCAB_SIZE:
            raise DomainError("type masking needs the full %d token vocabulary" % VOCAB_SIZE)
        self._tables = tables
        self._max_order = max_order
        self._vocab_size = vocab_size
        self._mask = mask
        self.token_count = token_count
        self.sequence_count = sequence_count
        self.type_weights = tuple(type_weights)
        self.levels = tuple(levels)
        self.entropy_scales = tuple(entropy_scales)
        if len(self.entropy_scales) != TOKENS_PER_NOTE:
            raise DomainError("need %d entropy scales: %r" % (TOKENS_PER_NOTE, entropy_scales))
        self._cache = DistributionCache(cache_size)
        self._uniform = np.full(vocab_size, 1.0 / vocab_size)
        if mask:
            self._type_masks = [type_mask(t) for t in TokenType]

    @property
    def vocab_size(self):
        return self._vocab_size

    @property
    def max_order(self):
        return self._max_order

    @property
    def type_mask(self):
        return self._mask

    @property
    def context_count(self):
        return len(self._tables)

    def metadata(self):
        return {
            "kind": "markov",
            "max_order": self._max_order,
            "vocab_size": self._vocab_size,
            "type_mask": self._mask,
            "token_count": self.token_count,
            "sequence_count": self.sequence_count,
            "context_count": len(self._tables),
            "cache_size": self._cache.capacity,
        }

    def with_calibration(self, type_weights=None, levels=None, entropy_scales=None):
        """
        A copy sharing the count tables with new stored weights, levels
          or entropy scales.
        """
        return MarkovCritic(self._tables, self._max_order, self._vocab_size, self._mask,
                            self.token_count, self.sequence_count,
                            type_weights if type_weights is not None else self.type_weights,
                            levels if levels is not None else self.levels,
                            entropy_scales if entropy_scales is not None else self.entropy_scales,
                            self._cache.capacity)

    def next_dist(self, prefix):
        ids = getattr(prefix, "ids", prefix)
        history = (SENTINEL,) + tuple(ids)
        history = history[max(0, len(history) - self._max_order):]
        key = (history, len(ids) % TOKENS_PER_NOTE if self._mask else None)

        d = self._cache.get(key)
        if d is not None:
            return d

        d = self._uniform
        for n in range(0, len(history) + 1):
            table = self._tables.get(history[len(history) - n:])
            if table is None:
                break
            ml = np.zeros(self._vocab_size)
            ml[table.ids] = table.counts / table.total
            lam = table.lam()
            d = lam * ml + (1.0 - lam) * d

        if self._mask:
            d = d * self._type_masks[key[1]]
            d = d / d.sum()
        else:
            d = d.copy()
        d.flags.writeable = False
        self._cache.put(key, d)
        return d

    def to_bytes(self):
        out = bytearray()
        out += MODEL_MAGIC.encode("ascii")
        out += struct.pack(">HBHBII", MODEL_VERSION, self._max_order, self._vocab_size,
                           1 if self._mask else 0, self.token_count, self.sequence_count)
        out += struct.pack(">dddd", self.type_weights[0], self.type_weights[1],
                           self.levels[0], self.levels[1])
        out += struct.pack(">%dd" % TOKENS_PER_NOTE, *self.entropy_scales)
        out += struct.pack(">I", len(self._tables))
        for context in sorted(self._tables):
            table = self._tables[context]
            out += struct.pack(">B", len(context))
            out += struct.pack(">%dh" % len(context), *context)
            out += struct.pack(">H", table.distinct)
            out += struct.pack(">%dH" % table.distinct, *table.ids.tolist())
            out += struct.pack(">%dI" % table.distinct, *table.counts.astype(np.int64).tolist())
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf, cache_size=DEFAULT_CACHE_SIZE):
        """
        @param cache_size: distributions kept per model, see DistributionCache
        @raise ModelFormatError: on a bad magic, an unknown version,
          or a truncated file.
        """
        try:
            header = ModelHeader(buf, 0)
            if header.magic() != MODEL_MAGIC:
                g_logger.debug("bad model header:\n%s", BinaryParser.hex_dump(buf[:16]))
                raise ModelFormatError("Bad model magic %r" % header.magic(), 0)
            if header.version() != MODEL_VERSION:
                raise ModelFormatError("Unsupported model version %d" % header.version(),
                                       header._off_version)

            tables = {}
            ofs = len(header)
            for _ in range(header.context_count()):
                entry = ContextEntry(buf, ofs)
                counts = dict(zip(entry.next_ids(), entry.next_counts()))
                tables[tuple(entry.context())] = ContextTable(counts)
                ofs += len(entry)
        except OverrunBufferException as e:
            raise ModelFormatError("Truncated model file", e.offset)
        if ofs != len(buf):
            g_logger.warning("%d trailing bytes after model tables", len(buf) - ofs)

        g_logger.debug("loaded %d contexts, order %d", len(tables), header.max_order())
        return cls(tables, header.max_order(), header.vocab_size(), bool(header.type_mask()),
                   header.token_count(), header.sequence_count(),
                   (header.c_pitch(), header.c_timeshift()),
                   (header.level_low(), header.level_high()),
                   header.entropy_scales(), cache_size)

    def __repr__(self):
        return "MarkovCritic(order=%d, contexts=%d)" % (self._max_order, len(self._tables))


def train(corpus, max_order=DEFAULT_MAX_ORDER, vocab_size=VOCAB_SIZE, mask=True,
          progress_class=Progress.NullProgress, cache_size=DEFAULT_CACHE_SIZE):
    """
    Count next-token occurrences after every context of length 0 through
      `max_order`. Each sequence is preceded by a start sentinel that
      never appears as a predicted token.

    @type corpus: sequence of TokenSeq or of id sequences
    @rtype: MarkovCritic
    @raise CorpusError: if the corpus holds no tokens.
    """
    if max_order < 1:
        raise DomainError("max order must be at least 1: %r" % max_order)
    corpus = [tuple(getattr(seq, "ids", seq)) for seq in corpus]
    if not any(corpus):
        raise CorpusError("cannot train on an empty corpus")

    counts = defaultdict(lambda: defaultdict(int))
    progress = progress_class(len(corpus), "sequences")
    token_count = 0
    for i, ids in enumerate(corpus):
        history = (SENTINEL,) + ids
        for pos, token in enumerate(ids):
            if not 0 <= token < vocab_size:
                raise DomainError("token id %r outside the vocabulary" % token)
            end = pos + 1
            for n in range(0, min(max_order, end) + 1):
                counts[history[end - n:end]][token] += 1
        token_count += len(ids)
        progress.set_current(i + 1)
    progress.set_complete()

    tables = {ctx: ContextTable(nexts) for ctx, nexts in counts.items()}
    g_logger.info("trained order %d model: %d sequences, %d tokens, %d contexts",
                  max_order, len(corpus), token_count, len(tables))
    return MarkovCritic(tables, max_order, vocab_size, mask,
                        token_count=token_count, sequence_count=len(corpus),
                        cache_size=cache_size)
