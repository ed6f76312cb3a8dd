"""MSB-first bit packing primitives shared by the entropy coders."""


class BitstreamError(ValueError):
    """Raised when a coded stream is truncated or structurally invalid."""


class BitWriter:
    """Accumulates bits MSB-first into a growing byte buffer.

    The final partial byte is padded with zero bits by ``getvalue``.
    """

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value, nbits):
        if nbits < 0:
            raise ValueError("bit count must be non-negative")
        if nbits == 0:
            return
        acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        total = self._nbits + nbits
        buf = self._buf
        while total >= 8:
            total -= 8
            buf.append((acc >> total) & 0xFF)
        self._acc = acc & ((1 << total) - 1)
        self._nbits = total

    def write_bit(self, bit):
        self.write(bit, 1)

    def getvalue(self):
        """Return the packed bytes, zero-padding the trailing partial byte."""
        out = bytearray(self._buf)
        if self._nbits:
            out.append((self._acc << (8 - self._nbits)) & 0xFF)
        return bytes(out)


class BitReader:
    """Reads bits MSB-first from a bytes-like object.

    Reading past the end raises :class:`BitstreamError`.
    """

    def __init__(self, data):
        self._data = bytes(data)
        self._pos = 0          # next byte index
        self._acc = 0
        self._nbits = 0

    def read(self, nbits):
        if nbits < 0:
            raise ValueError("bit count must be non-negative")
        acc = self._acc
        have = self._nbits
        data = self._data
        pos = self._pos
        while have < nbits:
            if pos >= len(data):
                raise BitstreamError(
                    "bit stream truncated at byte %d" % pos)
            acc = (acc << 8) | data[pos]
            pos += 1
            have += 8
        have -= nbits
        self._pos = pos
        self._acc = acc & ((1 << have) - 1)
        self._nbits = have
        return acc >> have

    def read_bit(self):
        return self.read(1)
