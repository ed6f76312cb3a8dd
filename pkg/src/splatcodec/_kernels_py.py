"""Pure-Python entropy coding kernels.

Fallback twin of the compiled module ``splatcodec._kernels``: both backends
must produce byte-identical streams for identical inputs, so every constant
and every state update here is mirrored there. Integer arithmetic only.
"""

import struct

import numpy as np

from ._bitio import BitReader, BitstreamError, BitWriter

# 32-bit range coder, renormalizing at 2^24 with carry propagation.
RC_TOP = 1 << 24
RC_MASK = 0xFFFFFFFF

# Adaptive frequency model: per-symbol init 1, increment 32, halve at 2^16.
AC_INCREMENT = 32
AC_HALVE_AT = 1 << 16
AC_MAX_ALPHABET = 1 << 15

# Adaptive run-length Golomb-Rice coder. Both parameters are kept scaled by
# L = 16; the working parameter is the integer part. Adaptation steps are in
# scaled units: +4 after a complete run, -6 after a partial run, +2 when a
# coded value reaches 2^k, -1 on a zero value. Scaled parameters start at L
# (k_R = k = 1) and are clamped to [0, 24 * L].
RLGR_L = 16
RLGR_UP_RUN = 4
RLGR_DOWN_RUN = 6
RLGR_UP_GR = 2
RLGR_DOWN_GR = 1
RLGR_PARAM_MAX = 24 * RLGR_L
RLGR_Q_ESCAPE = 20          # unary quotient cap before the 32-bit escape

_U32 = struct.Struct("<I")


class _RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = RC_MASK
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > RC_MASK:
            carry = low >> 32
            out = self.out
            out.append((self.cache + carry) & 0xFF)
            filler = (0xFF + carry) & 0xFF
            for _ in range(self.cache_size - 1):
                out.append(filler)
            self.cache_size = 0
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low << 8) & RC_MASK

    def encode(self, cum_lo, freq, total):
        r = self.range // total
        self.low += r * cum_lo
        self.range = r * freq
        while self.range < RC_TOP:
            self.range = (self.range << 8) & RC_MASK
            self._shift_low()

    def finish(self):
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class _RangeDecoder:
    def __init__(self, data):
        self.data = data
        self.pos = 0
        self.range = RC_MASK
        code = 0
        for _ in range(5):
            code = ((code << 8) | self._next_byte()) & RC_MASK
        self.code = code
        self._r = 1

    def _next_byte(self):
        pos = self.pos
        if pos >= len(self.data):
            raise BitstreamError("coded stream truncated at byte %d" % pos)
        self.pos = pos + 1
        return self.data[pos]

    def decode_target(self, total):
        self._r = r = self.range // total
        t = self.code // r
        return total - 1 if t >= total else t

    def decode_update(self, cum_lo, freq):
        r = self._r
        self.code -= r * cum_lo
        self.range = r * freq
        while self.range < RC_TOP:
            self.code = ((self.code << 8) | self._next_byte()) & RC_MASK
            self.range = (self.range << 8) & RC_MASK


class _AdaptiveModel:
    """Fenwick-tree frequency table shared by encoder and decoder."""

    def __init__(self, nsym):
        self.nsym = nsym
        self.freq = [1] * nsym
        self.total = nsym
        size = 1
        while size < nsym:
            size <<= 1
        self.mask = size
        self._rebuild()

    def _rebuild(self):
        n = self.nsym
        fen = [0] * (n + 1)
        freq = self.freq
        for i in range(n):
            j = i + 1
            fen[j] += freq[i]
            parent = j + (j & -j)
            if parent <= n:
                fen[parent] += fen[j]
        self.fen = fen

    def cum_lo(self, sym):
        s = 0
        fen = self.fen
        i = sym
        while i > 0:
            s += fen[i]
            i -= i & -i
        return s

    def find(self, target):
        """Return (symbol, cum_lo) with cum_lo <= target < cum_lo + freq."""
        idx = 0
        rem = target
        bit = self.mask
        fen = self.fen
        n = self.nsym
        while bit:
            nxt = idx + bit
            if nxt <= n and fen[nxt] <= rem:
                idx = nxt
                rem -= fen[nxt]
            bit >>= 1
        return idx, target - rem

    def update(self, sym):
        self.freq[sym] += AC_INCREMENT
        n = self.nsym
        fen = self.fen
        i = sym + 1
        while i <= n:
            fen[i] += AC_INCREMENT
            i += i & -i
        self.total += AC_INCREMENT
        if self.total >= AC_HALVE_AT:
            freq = self.freq
            total = 0
            for i in range(n):
                f = (freq[i] + 1) >> 1
                freq[i] = f
                total += f
            self.total = total
            self._rebuild()


def _check_alphabet(alphabet):
    if not 1 <= alphabet <= AC_MAX_ALPHABET:
        raise ValueError("alphabet size must be in [1, %d], got %r"
                         % (AC_MAX_ALPHABET, alphabet))


def ac_encode(symbols, alphabet):
    """Adaptive arithmetic coding of ``symbols`` from ``[0, alphabet)``.

    Returns the framed payload ``[u32 count][coded bytes]``.
    """
    _check_alphabet(alphabet)
    syms = np.ascontiguousarray(symbols, dtype=np.int64)
    if syms.ndim != 1:
        raise ValueError("symbols must be one-dimensional")
    if syms.size and (syms.min() < 0 or syms.max() >= alphabet):
        raise ValueError("symbol out of range for alphabet %d" % alphabet)
    out = bytearray(_U32.pack(syms.size))
    if syms.size == 0:
        return bytes(out)
    enc = _RangeEncoder()
    model = _AdaptiveModel(alphabet)
    freq = model.freq
    for s in syms.tolist():
        enc.encode(model.cum_lo(s), freq[s], model.total)
        model.update(s)
    out += enc.finish()
    return bytes(out)


def ac_decode(data, alphabet):
    """Inverse of :func:`ac_encode`. Returns an int64 array."""
    _check_alphabet(alphabet)
    data = bytes(data)
    if len(data) < 4:
        raise BitstreamError("payload shorter than its count header")
    count = _U32.unpack_from(data)[0]
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    dec = _RangeDecoder(data[4:])
    model = _AdaptiveModel(alphabet)
    freq = model.freq
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        sym, cum_lo = model.find(dec.decode_target(model.total))
        dec.decode_update(cum_lo, freq[sym])
        model.update(sym)
        out[i] = sym
    return out


def _gr_write(bw, val, k):
    q = val >> k
    if q < RLGR_Q_ESCAPE:
        bw.write(((1 << q) - 1) << 1, q + 1)
        if k:
            bw.write(val & ((1 << k) - 1), k)
    else:
        bw.write((1 << RLGR_Q_ESCAPE) - 1, RLGR_Q_ESCAPE)
        bw.write(val, 32)


def _gr_read(br, k):
    q = 0
    while q < RLGR_Q_ESCAPE and br.read(1):
        q += 1
    if q == RLGR_Q_ESCAPE:
        return br.read(32)
    rem = br.read(k) if k else 0
    return (q << k) | rem


def _adapt_gr(uk, val, k):
    if val == 0:
        uk -= RLGR_DOWN_GR
        return uk if uk > 0 else 0
    if val >= (1 << k):
        uk += RLGR_UP_GR
        return uk if uk < RLGR_PARAM_MAX else RLGR_PARAM_MAX
    return uk


def rlgr_encode(values):
    """Adaptive run-length Golomb-Rice coding of signed 32-bit values.

    Values are zigzag-mapped internally. Returns ``[u32 count][coded bits]``.
    """
    vals = np.ascontiguousarray(values, dtype=np.int64)
    if vals.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if vals.size and (vals.min() < -(1 << 31) or vals.max() > (1 << 31) - 1):
        raise ValueError("values exceed the signed 32-bit range")
    u = np.where(vals >= 0, vals << 1, (-vals << 1) - 1).tolist()
    n = len(u)
    out = bytearray(_U32.pack(n))
    if n == 0:
        return bytes(out)
    bw = BitWriter()
    u_r = RLGR_L
    u_k = RLGR_L
    i = 0
    while i < n:
        kr = u_r // RLGR_L
        if kr > 0:
            m = 1 << kr
            limit = i + m
            if limit > n:
                limit = n
            j = i
            while j < limit and u[j] == 0:
                j += 1
            run = j - i
            if run == m or j == n:
                # complete run (clamped to the stream end by the decoder)
                bw.write(1, 1)
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
                i = j
            else:
                bw.write(0, 1)
                bw.write(run, kr)
                k = u_k // RLGR_L
                val = u[j] - 1
                _gr_write(bw, val, k)
                u_k = _adapt_gr(u_k, val, k)
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
                i = j + 1
        else:
            k = u_k // RLGR_L
            val = u[i]
            _gr_write(bw, val, k)
            u_k = _adapt_gr(u_k, val, k)
            if val == 0:
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
            else:
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
            i += 1
    out += bw.getvalue()
    return bytes(out)


def rlgr_decode(data):
    """Inverse of :func:`rlgr_encode`. Returns an int64 array."""
    data = bytes(data)
    if len(data) < 4:
        raise BitstreamError("payload shorter than its count header")
    n = _U32.unpack_from(data)[0]
    u = np.zeros(n, dtype=np.int64)
    if n == 0:
        return u
    br = BitReader(data[4:])
    u_r = RLGR_L
    u_k = RLGR_L
    i = 0
    while i < n:
        kr = u_r // RLGR_L
        if kr > 0:
            if br.read(1):
                m = 1 << kr
                rem = n - i
                i += m if m < rem else rem
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
            else:
                run = br.read(kr)
                if i + run >= n:
                    raise BitstreamError("partial run exceeds element count")
                i += run            # zeros are already in place
                k = u_k // RLGR_L
                val = _gr_read(br, k)
                u[i] = val + 1
                u_k = _adapt_gr(u_k, val, k)
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
                i += 1
        else:
            k = u_k // RLGR_L
            val = _gr_read(br, k)
            u[i] = val
            u_k = _adapt_gr(u_k, val, k)
            if val == 0:
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
            else:
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
            i += 1
    return np.where(u & 1, -((u + 1) >> 1), u >> 1)
