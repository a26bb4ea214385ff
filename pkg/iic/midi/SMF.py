#!/usr/bin/env python
"""
Standard MIDI File chunk structures.

An SMF is a header chunk `MThd` followed by track chunks `MTrk`; every
  chunk is a four byte id and a big-endian dword length. Track data is a
  run of (delta-time, event) pairs, with delta times as variable-length
  quantities and channel messages allowed to use running status.
"""
import struct
import logging

from .. import BinaryParser
from ..BinaryParser import Block
from ..BinaryParser import Nestable
from ..BinaryParser import ParseException


g_logger = logging.getLogger("iic.midi.SMF")

HEADER_ID = "MThd"
TRACK_ID = "MTrk"

META_END_OF_TRACK = 0x2F
META_SET_TEMPO = 0x51

# data bytes following each channel message status nibble
CHANNEL_DATA_LENGTHS = {
    0x80: 2,  # note off
    0x90: 2,  # note on
    0xA0: 2,  # polyphonic aftertouch
    0xB0: 2,  # control change
    0xC0: 1,  # program change
    0xD0: 1,  # channel aftertouch
    0xE0: 2,  # pitch bend
}


class EVENT_KIND:
    NOTE_ON = "note_on"
    NOTE_OFF = "note_off"
    TEMPO = "tempo"
    END_OF_TRACK = "end_of_track"
    OTHER = "other"


class ChunkHeader(Block, Nestable):
    def __init__(self, buf, offset, parent=None):
        super(ChunkHeader, self).__init__(buf, offset)
        self.declare_field("string", "chunk_id", 0x0, length=4)
        self.declare_field("dword_be", "chunk_length")

    @staticmethod
    def structure_size(buf, offset, parent):
        return 0x8

    def __len__(self):
        return 0x8


class HeaderChunk(Block, Nestable):
    """
    The `MThd` chunk: format, track count, and time division.
    """
    def __init__(self, buf, offset, parent=None):
        super(HeaderChunk, self).__init__(buf, offset)
        self.declare_field(ChunkHeader, "header", 0x0)
        self.declare_field("word_be", "format")
        self.declare_field("word_be", "track_count")
        self.declare_field("word_be", "division")

        if self.header().chunk_id() != HEADER_ID:
            g_logger.debug("bad header chunk:\n%s",
                           BinaryParser.hex_dump(self._buf[offset:offset + 16]))
            raise ParseException("Missing MThd header chunk", offset)
        if self.header().chunk_length() < 6:
            raise ParseException("MThd chunk too short", offset + 4)
        if self.format() not in (0, 1):
            g_logger.debug("header chunk fields:\n%s", self.get_all_string())
            raise ParseException("Unsupported SMF format %d" % self.format(),
                                 offset + self._off_format)
        if self.division() & 0x8000:
            raise ParseException("SMPTE time division is not supported",
                                 offset + self._off_division)

    def ticks_per_quarter(self):
        return self.division()

    @staticmethod
    def structure_size(buf, offset, parent):
        return 0x8 + BinaryParser.read_dword_be(buf, offset + 0x4)

    def __len__(self):
        return 0x8 + self.header().chunk_length()


class TrackChunk(Block, Nestable):
    """
    An `MTrk` chunk. Use `events()` to walk its contents.
    """
    def __init__(self, buf, offset, parent=None):
        super(TrackChunk, self).__init__(buf, offset)
        self.declare_field(ChunkHeader, "header", 0x0)
        self.add_data_field()

    def add_data_field(self):
        self._data_start = self.current_field_offset()
        self._data_end = self._data_start + self.header().chunk_length()
        if self.absolute_offset(self._data_end) > len(self._buf):
            raise ParseException("Track chunk runs past end of file",
                                 self.absolute_offset(0x4))

    def is_track(self):
        return self.header().chunk_id() == TRACK_ID

    @staticmethod
    def structure_size(buf, offset, parent):
        return 0x8 + BinaryParser.read_dword_be(buf, offset + 0x4)

    def __len__(self):
        return 0x8 + self.header().chunk_length()

    def events(self):
        """
        A generator that yields (absolute tick, kind, channel, data) tuples
          for each event in this track, in file order.

        `data` is (pitch, velocity) for notes, the tempo in microseconds
          per quarter for tempo changes, and None otherwise.
        Throws:
        - `ParseException`: on a malformed event, with its byte offset.
        """
        ofs = self._data_start
        tick = 0
        running_status = None
        while ofs < self._data_end:
            delta, size = self.unpack_vlq(ofs)
            ofs += size
            tick += delta
            event_offset = ofs
            status = self.unpack_byte(ofs)

            if status == 0xFF:
                meta_type = self.unpack_byte(ofs + 1)
                length, size = self.unpack_vlq(ofs + 2)
                data_start = ofs + 2 + size
                ofs = data_start + length
                running_status = None
                if meta_type == META_END_OF_TRACK:
                    yield tick, EVENT_KIND.END_OF_TRACK, None, None
                    return
                elif meta_type == META_SET_TEMPO:
                    if length != 3:
                        raise ParseException("Bad set-tempo length %d" % length,
                                             self.absolute_offset(event_offset))
                    b = self.unpack_binary(data_start, 3)
                    yield tick, EVENT_KIND.TEMPO, None, (b[0] << 16) | (b[1] << 8) | b[2]
                else:
                    yield tick, EVENT_KIND.OTHER, None, None
                continue

            if status in (0xF0, 0xF7):
                length, size = self.unpack_vlq(ofs + 1)
                ofs += 1 + size + length
                running_status = None
                yield tick, EVENT_KIND.OTHER, None, None
                continue

            if status & 0x80:
                running_status = status
                ofs += 1
            elif running_status is None:
                g_logger.debug("data byte without status:\n%s",
                               BinaryParser.hex_dump(self._buf[self.absolute_offset(event_offset):
                                                               self.absolute_offset(event_offset) + 16]))
                raise ParseException("Data byte without running status",
                                     self.absolute_offset(event_offset))

            kind = running_status & 0xF0
            channel = running_status & 0x0F
            if kind not in CHANNEL_DATA_LENGTHS:
                raise ParseException("Unknown status byte %s" % hex(running_status),
                                     self.absolute_offset(event_offset))
            n = CHANNEL_DATA_LENGTHS[kind]
            data = [self.unpack_byte(ofs + i) for i in range(n)]
            ofs += n

            if kind == 0x90 and data[1] > 0:
                yield tick, EVENT_KIND.NOTE_ON, channel, (data[0], data[1])
            elif kind == 0x90 or kind == 0x80:
                yield tick, EVENT_KIND.NOTE_OFF, channel, (data[0], data[1])
            else:
                yield tick, EVENT_KIND.OTHER, channel, None

        if ofs > self._data_end:
            raise ParseException("Event runs past end of track chunk",
                                 self.absolute_offset(self._data_end))
        # tracks without an end-of-track meta event end at the chunk boundary
        yield tick, EVENT_KIND.END_OF_TRACK, None, None


class SMF(Block):
    """
    A whole Standard MIDI File.
    """
    def __init__(self, buf, offset=0):
        super(SMF, self).__init__(buf, offset)
        if len(buf) < 14:
            raise ParseException("File too short for an MThd chunk", offset)
        self.declare_field(HeaderChunk, "header", 0x0)

    def tracks(self):
        """
        A generator that yields each `MTrk` TrackChunk. Unknown chunk types
          are skipped, as the format allows.
        """
        ofs = len(self.header())
        found = 0
        while ofs + 8 <= len(self._buf) - self._offset:
            chunk = TrackChunk(self._buf, self.absolute_offset(ofs), self)
            if chunk.is_track():
                found += 1
                yield chunk
            else:
                g_logger.debug("skipping chunk %r at %s",
                               chunk.header().chunk_id(), hex(self.absolute_offset(ofs)))
            ofs += len(chunk)
        if found < self.header().track_count():
            g_logger.debug("header declares %d tracks, found %d",
                           self.header().track_count(), found)


def build_smf(events, ticks_per_quarter, tempo):
    """
    Serialize a single format 0 track.

    @type events: list of (tick, status, data1, data2) sorted by tick
    @type tempo: int, microseconds per quarter note
    @rtype: bytes
    """
    track = bytearray()
    track += BinaryParser.pack_vlq(0)
    track += bytes([0xFF, META_SET_TEMPO, 0x03]) + struct.pack(">I", tempo)[1:]

    last = 0
    for tick, status, data1, data2 in events:
        track += BinaryParser.pack_vlq(tick - last)
        track += bytes([status, data1, data2])
        last = tick
    track += BinaryParser.pack_vlq(0) + bytes([0xFF, META_END_OF_TRACK, 0x00])

    header = HEADER_ID.encode("ascii") + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    return header + TRACK_ID.encode("ascii") + struct.pack(">I", len(track)) + bytes(track)
