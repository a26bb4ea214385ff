"""
Declarative parsing of big-endian binary structures.

Standard MIDI Files and the model files written by `iic.critic` are both
  sequences of big-endian chunks, so everything here reads network order.
  A structure subclasses `Block` and declares its fields in order; each
  declaration adds an accessor method and an `_off_<name>` attribute
  holding the field's offset relative to the block.
"""
import struct
import logging

import hexdump

g_logger = logging.getLogger("iic.BinaryParser")


def hex_dump(src, start_addr=0):
    """
    Render `src` as a hexdump string, for debug logging of bad chunks.
    """
    return hexdump.hexdump(bytes(src), result="return")


class BinaryParserException(Exception):
    """
    Root of the errors raised while decoding bytes.
    """
    def __init__(self, value):
        super(BinaryParserException, self).__init__()
        self._value = value

    def __repr__(self):
        return "%s(%r)" % (self.__class__.__name__, self._value)

    def __str__(self):
        return "Binary Parser Exception: %s" % (self._value)


class ParseException(BinaryParserException):
    """
    The bytes do not form a valid structure, eg. a chunk id or a header
      field holds a value the format does not allow.

    @param offset: absolute byte offset of the problem, when known
    """
    def __init__(self, value, offset=None):
        if offset is not None:
            value = "%s at offset %s" % (value, hex(offset))
        super(ParseException, self).__init__(value)
        self.offset = offset

    def __str__(self):
        return "Parse Exception(%s)" % (self._value)


class OverrunBufferException(ParseException):
    """
    A read would run past the end of the buffer.
    """
    def __init__(self, readOffs, bufLen):
        super(OverrunBufferException, self).__init__(
            "read: %s, buffer length: %s" % (hex(readOffs), hex(bufLen)))
        self.offset = readOffs

    def __str__(self):
        return "Tried to parse beyond the end of the buffer (%s)" % (self._value)


# struct format and size of each fixed-width field type
FIELD_FORMATS = {
    "byte": ">B",
    "word_be": ">H",
    "int16_be": ">h",
    "dword_be": ">I",
    "double_be": ">d",
}


def _read(fmt, buf, offset):
    try:
        return struct.unpack_from(fmt, buf, offset)[0]
    except struct.error:
        raise OverrunBufferException(offset, len(buf))


def read_byte(buf, offset):
    """
    @raise OverrunBufferException
    """
    return _read(">B", buf, offset)


def read_word_be(buf, offset):
    """
    @raise OverrunBufferException
    """
    return _read(">H", buf, offset)


def read_dword_be(buf, offset):
    """
    @raise OverrunBufferException
    """
    return _read(">I", buf, offset)


def read_vlq(buf, offset):
    """
    Decode a MIDI variable-length quantity.

    @rtype: (int, int)
    @return: the value and the number of bytes consumed.
    @raise OverrunBufferException
    @raise ParseException: if the quantity runs over four bytes.
    """
    value = 0
    for i in range(4):
        b = read_byte(buf, offset + i)
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, i + 1
    raise ParseException("Variable-length quantity longer than 4 bytes", offset)


def pack_vlq(value):
    """
    Encode a non-negative integer as a MIDI variable-length quantity.
    """
    if value < 0 or value > 0x0FFFFFFF:
        raise ValueError("VLQ out of range: %d" % value)
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


class Block(object):
    """
    A structure at a fixed offset of a byte buffer.

    Fields declared without an offset follow the previous field, so a
      header is usually declared top to bottom with only the first
      offset given.
    """
    basic_sizes = dict((name, struct.calcsize(fmt)) for name, fmt in FIELD_FORMATS.items())

    def __init__(self, buf, offset):
        self._buf = buf
        self._offset = offset
        self._implicit_offset = 0
        self._declared_fields = []

    def __repr__(self):
        return "%s(offset=%r)" % (self.__class__.__name__, self._offset)

    def declare_field(self, type_, name, offset=None, length=None, count=None):
        """
        Add the accessor `name()` for a field of this block.

        @param type_: a key of FIELD_FORMATS, "string" or "binary" (both
          need `length`), or a Nestable subclass.
        @param offset: relative to the block; defaults to the end of the
          previously declared field.
        @param count: for fixed-width types, read that many consecutive
          values; the accessor then returns a list.
        """
        if offset is None:
            offset = self._implicit_offset

        if isinstance(type_, type):
            if not issubclass(type_, Nestable):
                raise TypeError("%s is not a Nestable structure" % type_.__name__)
            at = self.absolute_offset(offset)
            accessor = lambda: type_(self._buf, at, self)
            size = type_.structure_size(self._buf, at, self)
            typename = type_.__name__
        else:
            typename = type_
            unpack = getattr(self, "unpack_" + type_)
            if count is not None:
                width = self.basic_sizes[type_]
                accessor = lambda: [unpack(offset + i * width) for i in range(count)]
                size = count * width
            elif length is not None:
                accessor = lambda: unpack(offset, length)
                size = length
            elif type_ in self.basic_sizes:
                accessor = lambda: unpack(offset)
                size = self.basic_sizes[type_]
            else:
                raise ParseException("field %s of type %s needs a length" % (name, type_))

        self._implicit_offset = offset + size
        setattr(self, name, accessor)
        setattr(self, "_off_" + name, offset)
        self._declared_fields.append((offset, typename, name))

    def get_all_string(self, indent=0):
        """
        One line per declared field, nested blocks indented beneath their
          parent. Used when logging malformed structures.
        """
        lines = []
        pad = "  " * indent
        for offset, typename, name in self._declared_fields:
            v = getattr(self, name)()
            if isinstance(v, Block):
                lines.append("%s%s (%s) %s\n" % (pad, hex(offset), typename, name))
                lines.append(v.get_all_string(indent + 1))
            else:
                lines.append("%s%s (%s) %s\t%s\n" % (
                    pad, hex(offset), typename, name, hex(v) if isinstance(v, int) else v))
        return "".join(lines)

    def current_field_offset(self):
        """
        Relative offset just past the last declared field.
        """
        return self._implicit_offset

    def _unpack(self, type_, offset):
        return _read(FIELD_FORMATS[type_], self._buf, self._offset + offset)

    def unpack_byte(self, offset):
        return self._unpack("byte", offset)

    def unpack_word_be(self, offset):
        return self._unpack("word_be", offset)

    def unpack_int16_be(self, offset):
        return self._unpack("int16_be", offset)

    def unpack_dword_be(self, offset):
        return self._unpack("dword_be", offset)

    def unpack_double_be(self, offset):
        return self._unpack("double_be", offset)

    def unpack_vlq(self, offset):
        """
        @return: (value, size) of the variable-length quantity at `offset`.
        """
        return read_vlq(self._buf, self._offset + offset)

    def unpack_binary(self, offset, length=False):
        """
        @raise OverrunBufferException: if fewer than `length` bytes remain.
        """
        if not length:
            return b""
        start = self._offset + offset
        if start + length > len(self._buf):
            raise OverrunBufferException(start + length, len(self._buf))
        return bytes(self._buf[start:start + length])

    def unpack_string(self, offset, length):
        # chunk ids and magics; any byte decodes
        return self.unpack_binary(offset, length).decode("latin-1")

    def absolute_offset(self, offset):
        return self._offset + offset

    def offset(self):
        return self._offset


class Nestable(object):
    """
    Mixin for a Block that can be declared as a field of another Block.
      Subclasses report their size from the raw buffer so that the parent
      can place the fields that follow.
    """
    def __init__(self, buf, offset):
        super(Nestable, self).__init__()

    @staticmethod
    def structure_size(buf, offset, parent):
        raise NotImplementedError()

    def __len__(self):
        raise NotImplementedError()
