import struct

import pytest

from iic import BinaryParser
from iic.BinaryParser import Block
from iic.BinaryParser import ParseException
from iic.BinaryParser import OverrunBufferException
from iic.midi.SMF import ChunkHeader


def test_read_vlq():
    assert BinaryParser.read_vlq(b"\x00", 0) == (0, 1)
    assert BinaryParser.read_vlq(b"\x7f", 0) == (0x7F, 1)
    assert BinaryParser.read_vlq(b"\x81\x00", 0) == (0x80, 2)
    assert BinaryParser.read_vlq(b"\xff\x7f", 0) == (0x3FFF, 2)
    assert BinaryParser.read_vlq(b"\x00\xff\xff\xff\x7f", 1) == (0x0FFFFFFF, 4)


def test_read_vlq_too_long():
    with pytest.raises(ParseException):
        BinaryParser.read_vlq(b"\x80\x80\x80\x80\x00", 0)


def test_pack_vlq():
    assert BinaryParser.pack_vlq(0) == b"\x00"
    assert BinaryParser.pack_vlq(0x80) == b"\x81\x00"
    assert BinaryParser.pack_vlq(0x0FFFFFFF) == b"\xff\xff\xff\x7f"
    for value in (1, 127, 480, 96000, 0x200000):
        assert BinaryParser.read_vlq(BinaryParser.pack_vlq(value), 0)[0] == value
    with pytest.raises(ValueError):
        BinaryParser.pack_vlq(-1)


def test_overrun():
    with pytest.raises(OverrunBufferException) as e:
        BinaryParser.read_dword_be(b"\x00\x01", 0)
    assert isinstance(e.value, ParseException)
    assert e.value.offset == 0
    assert "beyond the end" in str(e.value)


def test_parse_exception_offset():
    e = ParseException("Bad chunk", 0x10)
    assert e.offset == 0x10
    assert "0x10" in str(e)


class Pair(Block):
    def __init__(self, buf, offset):
        super(Pair, self).__init__(buf, offset)
        self.declare_field("word_be", "count", 0x0)
        self.declare_field("int16_be", "values", count=2)
        self.declare_field("double_be", "weight")


def test_block_fields():
    buf = b"\xaa" + struct.pack(">Hhhd", 2, -1, 300, 0.5)
    p = Pair(buf, 1)
    assert p.count() == 2
    assert p.values() == [-1, 300]
    assert p.weight() == 0.5
    assert p._off_weight == 6
    assert p.current_field_offset() == 14
    assert "weight" in p.get_all_string()


def test_nested_chunk_header():
    h = ChunkHeader(b"MTrk\x00\x00\x00\x04", 0)
    assert h.chunk_id() == "MTrk"
    assert h.chunk_length() == 4
    assert len(h) == 8


def test_hex_dump():
    assert BinaryParser.hex_dump(b"MThd").startswith("00000000")
