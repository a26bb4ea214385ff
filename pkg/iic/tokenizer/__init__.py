"""
Structured note encoding: every note becomes the four tokens
  Pitch, Velocity, Duration, Timeshift, in that order.

Tokens are stored as ids in one global vocabulary so that critic models
  can treat a sequence as plain integers:

    Pitch       0 .. 87     (MIDI pitch - 21)
    Velocity   88 .. 215
    Duration  216 .. 319    (index into DURATION_GRID)
    Timeshift 320 .. 424    (index into TIMESHIFT_GRID, 0 is "no shift")
"""
import enum
import logging
from collections import namedtuple

import numpy as np

from iic import IICError
from iic import DomainError
from iic.midi import NoteList
from iic.midi import NoteEvent
from iic.midi import PIANO_LOW
from iic.midi import PIANO_HIGH


g_logger = logging.getLogger("iic.tokenizer")


class TokenType(enum.IntEnum):
    PITCH = 0
    VELOCITY = 1
    DURATION = 2
    TIMESHIFT = 3


TOKENS_PER_NOTE = 4

DURATION_GRID = np.concatenate([
    np.round(np.arange(1, 51) * 0.02, 10),   # 0.02 .. 1.0
    np.round(np.arange(11, 51) * 0.1, 10),   # 1.1 .. 5.0
    np.arange(6, 20, dtype=float),           # 6.0 .. 19.0
])
TIMESHIFT_GRID = np.concatenate([[0.0], DURATION_GRID])
DURATION_GRID.flags.writeable = False
TIMESHIFT_GRID.flags.writeable = False

CODEBOOK_SIZES = {
    TokenType.PITCH: PIANO_HIGH - PIANO_LOW + 1,
    TokenType.VELOCITY: 128,
    TokenType.DURATION: len(DURATION_GRID),
    TokenType.TIMESHIFT: len(TIMESHIFT_GRID),
}

OFFSETS = {}
_o = 0
for _t in TokenType:
    OFFSETS[_t] = _o
    _o += CODEBOOK_SIZES[_t]
VOCAB_SIZE = _o
del _o, _t

# token type of every vocabulary id
ID_TYPES = np.concatenate([np.full(CODEBOOK_SIZES[t], int(t)) for t in TokenType])


class StructureError(IICError):
    """
    A token sequence violates the Pitch, Velocity, Duration, Timeshift cycle.
    """
    def __init__(self, value, index):
        super(StructureError, self).__init__("%s at token %d" % (value, index))
        self.index = index


Token = namedtuple("Token", ["type", "value"])


def token_to_id(token):
    ttype = TokenType(token.type)
    if not 0 <= token.value < CODEBOOK_SIZES[ttype]:
        raise DomainError("%s value out of range: %r" % (ttype.name, token.value))
    return OFFSETS[ttype] + int(token.value)


def id_to_token(token_id):
    if not 0 <= token_id < VOCAB_SIZE:
        raise DomainError("token id out of range: %r" % token_id)
    ttype = TokenType(int(ID_TYPES[token_id]))
    return Token(ttype, int(token_id) - OFFSETS[ttype])


def type_of_position(i):
    """
    The token type the cycle dictates at sequence position `i`.
    """
    return TokenType(i % TOKENS_PER_NOTE)


def type_mask(ttype):
    """
    Boolean vector over the vocabulary selecting the ids of `ttype`.
    """
    return ID_TYPES == int(ttype)


class TokenSeq(object):
    """
    An immutable token sequence, held as global vocabulary ids.
    """
    def __init__(self, ids=()):
        super(TokenSeq, self).__init__()
        self._ids = tuple(int(i) for i in ids)

    @classmethod
    def from_tokens(cls, tokens):
        return cls(token_to_id(t) for t in tokens)

    @property
    def ids(self):
        return self._ids

    @property
    def note_count(self):
        return len(self._ids) // TOKENS_PER_NOTE

    def tokens(self):
        return [id_to_token(i) for i in self._ids]

    def __len__(self):
        return len(self._ids)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return TokenSeq(self._ids[index])
        return id_to_token(self._ids[index])

    def __add__(self, other):
        return TokenSeq(self._ids + tuple(other.ids))

    def __eq__(self, other):
        if not isinstance(other, TokenSeq):
            return NotImplemented
        return self._ids == other._ids

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __hash__(self):
        return hash(self._ids)

    def __repr__(self):
        return "TokenSeq(%d tokens)" % len(self._ids)

    def validate(self, allow_partial=False):
        """
        @raise StructureError: at the first token out of cycle, or at the
          end of a trailing partial note group unless `allow_partial`.
        """
        types = ID_TYPES[list(self._ids)] if self._ids else ()
        for i, t in enumerate(types):
            if t != i % TOKENS_PER_NOTE:
                raise StructureError("expected %s, found %s" % (
                    type_of_position(i).name, TokenType(int(t)).name), i)
        if len(self._ids) % TOKENS_PER_NOTE and not allow_partial:
            raise StructureError("incomplete note group", len(self._ids))

    def timeshifts(self):
        """
        Seconds of every complete note group's Timeshift token.
        """
        ids = np.asarray(self._ids[TokenType.TIMESHIFT::TOKENS_PER_NOTE], dtype=int)
        return TIMESHIFT_GRID[ids - OFFSETS[TokenType.TIMESHIFT]] if len(ids) else np.zeros(0)

    def duration(self):
        """
        Sum of all Timeshift values: the onset of the note that would follow.
        """
        return float(np.sum(self.timeshifts()))


def quantize(value, grid):
    """
    Index of the grid value nearest to `value`. Ties go to the larger bin
      and values past either end clamp to it.

    @raise DomainError: for a negative value.
    """
    if value < 0:
        raise DomainError("cannot quantize negative time %r" % value)
    idx = int(np.searchsorted(grid, value))
    if idx == 0:
        return 0
    if idx >= len(grid):
        return len(grid) - 1
    below, above = value - grid[idx - 1], grid[idx] - value
    # grid values are not exact in binary, so midpoints compare with slack
    if np.isclose(below, above, rtol=1e-9, atol=1e-12) or above < below:
        return idx
    return idx - 1


def tokenize(notes):
    """
    @type notes: NoteList
    @rtype: TokenSeq
    """
    notes = list(notes)
    ids = []
    for i, n in enumerate(notes):
        if not PIANO_LOW <= n.pitch <= PIANO_HIGH:
            raise DomainError("pitch outside piano range: %r" % (n,))
        if i + 1 < len(notes):
            ioi = quantize(notes[i + 1].onset - n.onset, TIMESHIFT_GRID)
        else:
            ioi = 0
        ids.append(OFFSETS[TokenType.PITCH] + n.pitch - PIANO_LOW)
        ids.append(OFFSETS[TokenType.VELOCITY] + n.velocity)
        ids.append(OFFSETS[TokenType.DURATION] + quantize(n.duration, DURATION_GRID))
        ids.append(OFFSETS[TokenType.TIMESHIFT] + ioi)
    return TokenSeq(ids)


def onsets(seq):
    """
    Onset of every note group, the first one at 0.
    """
    shifts = seq.timeshifts()
    return np.concatenate([[0.0], np.cumsum(shifts)])[:len(shifts)]


def detokenize(seq):
    """
    @type seq: TokenSeq
    @rtype: NoteList
    @raise StructureError: if the type cycle is broken.
    """
    seq.validate()
    notes = []
    for g, onset in enumerate(onsets(seq)):
        p, v, d, _ = seq.ids[g * TOKENS_PER_NOTE:(g + 1) * TOKENS_PER_NOTE]
        notes.append(NoteEvent(float(onset),
                               p - OFFSETS[TokenType.PITCH] + PIANO_LOW,
                               v - OFFSETS[TokenType.VELOCITY],
                               float(DURATION_GRID[d - OFFSETS[TokenType.DURATION]])))
    return NoteList(notes)


def localize_all(seq):
    """
    The time at which each token's surprisal is perceived, for every token.

    Pitch, Velocity and Duration tokens sit at their note's onset; a
      Timeshift token sits at the onset of the following note. A trailing
      partial group is localized at its note's onset.
    """
    seq.validate(allow_partial=True)
    n = len(seq)
    shifts = seq.timeshifts()
    group_onsets = np.concatenate([[0.0], np.cumsum(shifts)])
    times = np.repeat(group_onsets, TOKENS_PER_NOTE)[:n]
    ts_positions = np.arange(TokenType.TIMESHIFT, n, TOKENS_PER_NOTE)
    times[ts_positions] = group_onsets[1:len(ts_positions) + 1]
    return times


def localize(i, seq):
    """
    Time in seconds at which token `i` contributes surprisal.

    @raise DomainError: if `i` is out of range.
    """
    if not 0 <= i < len(seq):
        raise DomainError("token index %r out of range for %d tokens" % (i, len(seq)))
    return float(localize_all(seq)[i])
