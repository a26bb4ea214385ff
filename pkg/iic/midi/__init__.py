"""
Performed notes in absolute seconds, read from and written to
  Standard MIDI Files.
"""
import logging
from collections import namedtuple
from operator import itemgetter

from iic import DomainError
from iic.SortedCollection import SortedCollection
from iic.midi.SMF import SMF
from iic.midi.SMF import EVENT_KIND
from iic.midi.SMF import build_smf


g_logger = logging.getLogger("iic.midi")

PIANO_LOW = 21
PIANO_HIGH = 108
DEFAULT_TEMPO = 500000  # microseconds per quarter, 120 bpm
TICKS_PER_QUARTER = 480


NoteEvent = namedtuple("NoteEvent", ["onset", "pitch", "velocity", "duration"])
NoteEvent.__doc__ = """
A performed note. `onset` and `duration` are in seconds.
"""


def note_key(note):
    return (note.onset, note.pitch)


class NoteList(object):
    """
    An immutable sequence of NoteEvents sorted by (onset, pitch).

    Loading from MIDI records what was dropped or repaired in
      `dropped` (notes outside the piano range), `dangling` (note-ons
      closed at track end) and `metadata`.
    """
    def __init__(self, notes=(), dropped=0, dangling=0, metadata=None):
        super(NoteList, self).__init__()
        for n in notes:
            if not n.duration > 0:
                raise DomainError("note duration must be positive: %r" % (n,))
            if not 0 <= n.velocity <= 127:
                raise DomainError("note velocity out of range: %r" % (n,))
            if n.onset < 0:
                raise DomainError("note onset must be non-negative: %r" % (n,))
        self._notes = tuple(sorted(notes, key=note_key))
        self.dropped = dropped
        self.dangling = dangling
        self.metadata = metadata or {}

    @property
    def notes(self):
        return self._notes

    def __len__(self):
        return len(self._notes)

    def __iter__(self):
        return iter(self._notes)

    def __getitem__(self, index):
        return self._notes[index]

    def __eq__(self, other):
        if not isinstance(other, NoteList):
            return NotImplemented
        return self._notes == other._notes

    def __ne__(self, other):
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    def __repr__(self):
        return "NoteList(%d notes)" % len(self._notes)

    def onsets(self):
        return [n.onset for n in self._notes]

    def end_time(self):
        """
        The latest note offset, or 0.0 for an empty list.
        """
        if not self._notes:
            return 0.0
        return max(n.onset + n.duration for n in self._notes)


class TempoMap(object):
    """
    Converts absolute ticks to seconds given the set-tempo events of a file.
    """
    def __init__(self, tempo_events, ticks_per_quarter):
        """
        @type tempo_events: iterable of (tick, microseconds per quarter)
        """
        super(TempoMap, self).__init__()
        self._tpq = float(ticks_per_quarter)
        # (tick, seconds at tick, tempo)
        self._segments = SortedCollection(key=itemgetter(0))
        self._segments.insert((0, 0.0, DEFAULT_TEMPO))

        for tick, tempo in sorted(tempo_events, key=itemgetter(0)):
            prev_tick, prev_seconds, prev_tempo = self._segments.find_le(tick)
            seconds = prev_seconds + (tick - prev_tick) * prev_tempo / 1e6 / self._tpq
            self._segments.insert_right((tick, seconds, tempo))

    def seconds(self, tick):
        seg_tick, seg_seconds, tempo = self._segments.find_le(tick)
        return seg_seconds + (tick - seg_tick) * tempo / 1e6 / self._tpq


def load_midi(buf):
    """
    Parse SMF content into a NoteList.

    Note-on/note-off pairs are matched per pitch; a note-on for a pitch
      that is already sounding closes the earlier note at the new onset.
      Notes still open at the end of their track are closed there and
      counted in `dangling`. Notes outside the piano range are dropped
      and counted in `dropped`.

    @type buf: bytes
    @rtype: NoteList
    @raise ParseException: on a malformed header or track chunk.
    """
    smf = SMF(buf)
    tpq = smf.header().ticks_per_quarter()
    if tpq == 0:
        raise DomainError("ticks per quarter must be positive")

    tracks = []
    tempo_events = []
    for track in smf.tracks():
        events = list(track.events())
        tempo_events.extend((tick, data) for tick, kind, _, data in events
                            if kind == EVENT_KIND.TEMPO)
        tracks.append(events)
    g_logger.debug("parsed %d tracks, %d tempo events", len(tracks), len(tempo_events))

    tempo_map = TempoMap(tempo_events, tpq)
    # (on tick, off tick, pitch, velocity)
    spans = []
    dangling = 0
    for events in tracks:
        sounding = {}
        end_tick = 0
        for tick, kind, channel, data in events:
            end_tick = tick
            if kind == EVENT_KIND.NOTE_ON:
                pitch, velocity = data
                if pitch in sounding:
                    on_tick, on_velocity = sounding.pop(pitch)
                    spans.append((on_tick, tick, pitch, on_velocity))
                sounding[pitch] = (tick, velocity)
            elif kind == EVENT_KIND.NOTE_OFF:
                pitch = data[0]
                if pitch in sounding:
                    on_tick, on_velocity = sounding.pop(pitch)
                    spans.append((on_tick, tick, pitch, on_velocity))
                else:
                    g_logger.debug("note-off without note-on for pitch %d at tick %d",
                                   pitch, tick)
        for pitch, (on_tick, on_velocity) in sorted(sounding.items()):
            dangling += 1
            spans.append((on_tick, end_tick, pitch, on_velocity))

    notes = []
    dropped = 0
    zero_length = 0
    for on_tick, off_tick, pitch, velocity in spans:
        if not PIANO_LOW <= pitch <= PIANO_HIGH:
            dropped += 1
            continue
        onset = tempo_map.seconds(on_tick)
        duration = tempo_map.seconds(off_tick) - onset
        if duration <= 0:
            zero_length += 1
            continue
        notes.append(NoteEvent(onset, pitch, velocity, duration))

    if dropped:
        g_logger.warning("dropped %d notes outside the piano range", dropped)
    if dangling:
        g_logger.warning("closed %d dangling note-ons at track end", dangling)
    if zero_length:
        g_logger.debug("skipped %d zero-length notes", zero_length)

    metadata = {
        "format": smf.header().format(),
        "ticks_per_quarter": tpq,
        "track_count": len(tracks),
        "zero_length": zero_length,
    }
    return NoteList(notes, dropped=dropped, dangling=dangling, metadata=metadata)


def save_midi(notes, tempo=DEFAULT_TEMPO):
    """
    Serialize a NoteList as a format 0 SMF at 480 ticks per quarter
      with a single tempo.

    @type notes: NoteList
    @type tempo: int, microseconds per quarter
    @rtype: bytes
    """
    if tempo <= 0 or tempo > 0xFFFFFF:
        raise DomainError("tempo out of range: %r" % tempo)
    ticks_per_second = TICKS_PER_QUARTER * 1e6 / tempo

    # off events sort before on events at the same tick
    events = []
    for n in notes:
        on_tick = int(round(n.onset * ticks_per_second))
        off_tick = max(on_tick + 1, int(round((n.onset + n.duration) * ticks_per_second)))
        # a zero-velocity note-on would read back as a note-off
        events.append((on_tick, 1, n.pitch, 0x90, max(1, n.velocity)))
        events.append((off_tick, 0, n.pitch, 0x80, 0))
    events.sort()
    return build_smf([(tick, status, pitch, velocity)
                      for tick, _, pitch, status, velocity in events],
                     TICKS_PER_QUARTER, tempo)


def load_midi_file(path):
    with open(path, "rb") as f:
        return load_midi(f.read())


def save_midi_file(notes, path, tempo=DEFAULT_TEMPO):
    with open(path, "wb") as f:
        f.write(save_midi(notes, tempo=tempo))


def slice_notes(notes, t_start, t_end):
    """
    Notes with onset in [t_start, t_end), shifted so that t_start is 0.
    """
    if t_end <= t_start:
        raise DomainError("empty slice [%r, %r)" % (t_start, t_end))
    return NoteList([n._replace(onset=n.onset - t_start)
                     for n in notes if t_start <= n.onset < t_end])
