# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled entropy coding kernels.

Bit-exact twin of ``splatcodec._kernels_py``; see that module for the
format documentation. Any constant or state-update change must be made in
both files.
"""

import struct

import numpy as np

from ._bitio import BitstreamError

from libc.stdint cimport int64_t, uint8_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc, realloc

cdef uint64_t RC_TOP = 1 << 24
cdef uint64_t RC_MASK = 0xFFFFFFFF

cdef int64_t AC_INCREMENT = 32
cdef int64_t AC_HALVE_AT = 1 << 16
cdef int64_t AC_MAX_ALPHABET = 1 << 15

cdef int64_t RLGR_L = 16
cdef int64_t RLGR_UP_RUN = 4
cdef int64_t RLGR_DOWN_RUN = 6
cdef int64_t RLGR_UP_GR = 2
cdef int64_t RLGR_DOWN_GR = 1
cdef int64_t RLGR_PARAM_MAX = 24 * 16
cdef int64_t RLGR_Q_ESCAPE = 20

_U32 = struct.Struct("<I")


cdef class _ByteBuf:
    cdef uint8_t *data
    cdef Py_ssize_t size
    cdef Py_ssize_t cap

    def __cinit__(self):
        self.cap = 4096
        self.size = 0
        self.data = <uint8_t *>malloc(self.cap)
        if self.data == NULL:
            raise MemoryError()

    def __dealloc__(self):
        if self.data != NULL:
            free(self.data)

    cdef inline void append(self, uint8_t b):
        if self.size == self.cap:
            self.cap <<= 1
            self.data = <uint8_t *>realloc(self.data, self.cap)
            if self.data == NULL:
                raise MemoryError()
        self.data[self.size] = b
        self.size += 1

    cdef bytes tobytes(self):
        return self.data[:self.size]


cdef class _RangeEncoder:
    cdef uint64_t low
    cdef uint64_t range_
    cdef uint64_t cache
    cdef uint64_t cache_size
    cdef _ByteBuf out

    def __cinit__(self):
        self.low = 0
        self.range_ = RC_MASK
        self.cache = 0
        self.cache_size = 1
        self.out = _ByteBuf()

    cdef inline void _shift_low(self):
        cdef uint64_t low = self.low
        cdef uint64_t carry, i
        cdef uint8_t filler
        if low < <uint64_t>0xFF000000 or low > RC_MASK:
            carry = low >> 32
            self.out.append(<uint8_t>((self.cache + carry) & 0xFF))
            filler = <uint8_t>((0xFF + carry) & 0xFF)
            for i in range(self.cache_size - 1):
                self.out.append(filler)
            self.cache_size = 0
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low << 8) & RC_MASK

    cdef inline void encode(self, uint64_t cum_lo, uint64_t freq,
                            uint64_t total):
        cdef uint64_t r = self.range_ // total
        self.low += r * cum_lo
        self.range_ = r * freq
        while self.range_ < RC_TOP:
            self.range_ = (self.range_ << 8) & RC_MASK
            self._shift_low()

    cdef bytes finish(self):
        cdef int i
        for i in range(5):
            self._shift_low()
        return self.out.tobytes()


cdef class _RangeDecoder:
    cdef const uint8_t[::1] data
    cdef Py_ssize_t pos
    cdef uint64_t range_
    cdef uint64_t code
    cdef uint64_t _r

    def __cinit__(self, const uint8_t[::1] data):
        cdef int i
        self.data = data
        self.pos = 0
        self.range_ = RC_MASK
        self.code = 0
        self._r = 1
        for i in range(5):
            self.code = ((self.code << 8) | self._next_byte()) & RC_MASK

    cdef inline uint64_t _next_byte(self) except? 0xFFFF:
        if self.pos >= self.data.shape[0]:
            raise BitstreamError("coded stream truncated at byte %d"
                                 % self.pos)
        cdef uint64_t b = self.data[self.pos]
        self.pos += 1
        return b

    cdef inline uint64_t decode_target(self, uint64_t total):
        self._r = self.range_ // total
        cdef uint64_t t = self.code // self._r
        return total - 1 if t >= total else t

    cdef inline int decode_update(self, uint64_t cum_lo,
                                  uint64_t freq) except -1:
        cdef uint64_t r = self._r
        self.code -= r * cum_lo
        self.range_ = r * freq
        while self.range_ < RC_TOP:
            self.code = ((self.code << 8) | self._next_byte()) & RC_MASK
            self.range_ = (self.range_ << 8) & RC_MASK
        return 0


cdef class _AdaptiveModel:
    cdef int64_t nsym
    cdef int64_t total
    cdef int64_t mask
    cdef int64_t *freq
    cdef int64_t *fen

    def __cinit__(self, int64_t nsym):
        cdef int64_t i
        self.nsym = nsym
        self.freq = <int64_t *>malloc(nsym * sizeof(int64_t))
        self.fen = <int64_t *>malloc((nsym + 1) * sizeof(int64_t))
        if self.freq == NULL or self.fen == NULL:
            raise MemoryError()
        for i in range(nsym):
            self.freq[i] = 1
        self.total = nsym
        self.mask = 1
        while self.mask < nsym:
            self.mask <<= 1
        self._rebuild()

    def __dealloc__(self):
        if self.freq != NULL:
            free(self.freq)
        if self.fen != NULL:
            free(self.fen)

    cdef void _rebuild(self):
        cdef int64_t i, j, parent
        for i in range(self.nsym + 1):
            self.fen[i] = 0
        for i in range(self.nsym):
            j = i + 1
            self.fen[j] += self.freq[i]
            parent = j + (j & -j)
            if parent <= self.nsym:
                self.fen[parent] += self.fen[j]

    cdef inline int64_t cum_lo(self, int64_t sym):
        cdef int64_t s = 0
        cdef int64_t i = sym
        while i > 0:
            s += self.fen[i]
            i -= i & -i
        return s

    cdef inline int64_t find(self, int64_t target, int64_t *cum_out):
        cdef int64_t idx = 0
        cdef int64_t rem = target
        cdef int64_t bit = self.mask
        cdef int64_t nxt
        while bit:
            nxt = idx + bit
            if nxt <= self.nsym and self.fen[nxt] <= rem:
                idx = nxt
                rem -= self.fen[nxt]
            bit >>= 1
        cum_out[0] = target - rem
        return idx

    cdef inline void update(self, int64_t sym):
        cdef int64_t i = sym + 1
        cdef int64_t f, total
        self.freq[sym] += AC_INCREMENT
        while i <= self.nsym:
            self.fen[i] += AC_INCREMENT
            i += i & -i
        self.total += AC_INCREMENT
        if self.total >= AC_HALVE_AT:
            total = 0
            for i in range(self.nsym):
                f = (self.freq[i] + 1) >> 1
                self.freq[i] = f
                total += f
            self.total = total
            self._rebuild()


def _check_alphabet(alphabet):
    if not 1 <= alphabet <= AC_MAX_ALPHABET:
        raise ValueError("alphabet size must be in [1, %d], got %r"
                         % (AC_MAX_ALPHABET, alphabet))


def ac_encode(symbols, alphabet):
    """Adaptive arithmetic coding; framed ``[u32 count][coded bytes]``."""
    _check_alphabet(alphabet)
    syms_arr = np.ascontiguousarray(symbols, dtype=np.int64)
    if syms_arr.ndim != 1:
        raise ValueError("symbols must be one-dimensional")
    if syms_arr.size and (syms_arr.min() < 0 or syms_arr.max() >= alphabet):
        raise ValueError("symbol out of range for alphabet %d" % alphabet)
    out = bytearray(_U32.pack(syms_arr.size))
    if syms_arr.size == 0:
        return bytes(out)
    cdef const int64_t[::1] syms = syms_arr
    cdef _RangeEncoder enc = _RangeEncoder()
    cdef _AdaptiveModel model = _AdaptiveModel(alphabet)
    cdef Py_ssize_t i
    cdef int64_t s
    for i in range(syms.shape[0]):
        s = syms[i]
        enc.encode(model.cum_lo(s), model.freq[s], model.total)
        model.update(s)
    out += enc.finish()
    return bytes(out)


def ac_decode(data, alphabet):
    """Inverse of :func:`ac_encode`. Returns an int64 array."""
    _check_alphabet(alphabet)
    data = bytes(data)
    if len(data) < 4:
        raise BitstreamError("payload shorter than its count header")
    cdef uint32_t count = _U32.unpack_from(data)[0]
    out_arr = np.zeros(count, dtype=np.int64)
    if count == 0:
        return out_arr
    cdef _RangeDecoder dec = _RangeDecoder(data[4:])
    cdef _AdaptiveModel model = _AdaptiveModel(alphabet)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t i
    cdef int64_t sym, cum
    for i in range(count):
        sym = model.find(<int64_t>dec.decode_target(model.total), &cum)
        dec.decode_update(cum, model.freq[sym])
        model.update(sym)
        out[i] = sym
    return out_arr


cdef class _BitWriter:
    cdef _ByteBuf buf
    cdef uint64_t acc
    cdef int nbits

    def __cinit__(self):
        self.buf = _ByteBuf()
        self.acc = 0
        self.nbits = 0

    cdef inline void write(self, uint64_t value, int nbits):
        if nbits == 0:
            return
        cdef uint64_t acc = (self.acc << nbits) | \
            (value & ((<uint64_t>1 << nbits) - 1))
        cdef int total = self.nbits + nbits
        while total >= 8:
            total -= 8
            self.buf.append(<uint8_t>((acc >> total) & 0xFF))
        self.acc = acc & ((<uint64_t>1 << total) - 1)
        self.nbits = total

    cdef bytes getvalue(self):
        if self.nbits:
            self.buf.append(<uint8_t>((self.acc << (8 - self.nbits)) & 0xFF))
            self.acc = 0
            self.nbits = 0
        return self.buf.tobytes()


cdef class _BitReader:
    cdef const uint8_t[::1] data
    cdef Py_ssize_t pos
    cdef uint64_t acc
    cdef int nbits

    def __cinit__(self, const uint8_t[::1] data):
        self.data = data
        self.pos = 0
        self.acc = 0
        self.nbits = 0

    cdef inline uint64_t read(self, int nbits) except? 0xFFFFFFFFFFFF:
        cdef uint64_t acc = self.acc
        cdef int have = self.nbits
        while have < nbits:
            if self.pos >= self.data.shape[0]:
                raise BitstreamError("bit stream truncated at byte %d"
                                     % self.pos)
            acc = (acc << 8) | self.data[self.pos]
            self.pos += 1
            have += 8
        have -= nbits
        self.acc = acc & ((<uint64_t>1 << have) - 1)
        self.nbits = have
        return acc >> have


cdef inline void _gr_write(_BitWriter bw, uint64_t val, int64_t k):
    cdef uint64_t q = val >> k
    if q < <uint64_t>RLGR_Q_ESCAPE:
        bw.write(((<uint64_t>1 << q) - 1) << 1, <int>(q + 1))
        if k:
            bw.write(val & ((<uint64_t>1 << k) - 1), <int>k)
    else:
        bw.write((<uint64_t>1 << RLGR_Q_ESCAPE) - 1, <int>RLGR_Q_ESCAPE)
        bw.write(val, 32)


cdef inline uint64_t _gr_read(_BitReader br, int64_t k) except? 0xFFFFFFFFFFFF:
    cdef int64_t q = 0
    while q < RLGR_Q_ESCAPE and br.read(1):
        q += 1
    if q == RLGR_Q_ESCAPE:
        return br.read(32)
    cdef uint64_t rem = br.read(<int>k) if k else 0
    return (<uint64_t>q << k) | rem


cdef inline int64_t _adapt_gr(int64_t uk, uint64_t val, int64_t k):
    if val == 0:
        uk -= RLGR_DOWN_GR
        return uk if uk > 0 else 0
    if val >= (<uint64_t>1 << k):
        uk += RLGR_UP_GR
        return uk if uk < RLGR_PARAM_MAX else RLGR_PARAM_MAX
    return uk


def rlgr_encode(values):
    """Adaptive RLGR coding of signed 32-bit values; framed payload."""
    vals = np.ascontiguousarray(values, dtype=np.int64)
    if vals.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if vals.size and (vals.min() < -(1 << 31) or vals.max() > (1 << 31) - 1):
        raise ValueError("values exceed the signed 32-bit range")
    u_arr = np.where(vals >= 0, vals << 1, (-vals << 1) - 1)
    cdef Py_ssize_t n = u_arr.size
    out = bytearray(_U32.pack(n))
    if n == 0:
        return bytes(out)
    cdef const int64_t[::1] u = u_arr
    cdef _BitWriter bw = _BitWriter()
    cdef int64_t u_r = RLGR_L
    cdef int64_t u_k = RLGR_L
    cdef Py_ssize_t i = 0, j, limit, run
    cdef int64_t kr, k, m
    cdef uint64_t val
    while i < n:
        kr = u_r // RLGR_L
        if kr > 0:
            m = <int64_t>1 << kr
            limit = i + m
            if limit > n:
                limit = n
            j = i
            while j < limit and u[j] == 0:
                j += 1
            run = j - i
            if run == m or j == n:
                bw.write(1, 1)
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
                i = j
            else:
                bw.write(0, 1)
                bw.write(<uint64_t>run, <int>kr)
                k = u_k // RLGR_L
                val = <uint64_t>(u[j] - 1)
                _gr_write(bw, val, k)
                u_k = _adapt_gr(u_k, val, k)
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
                i = j + 1
        else:
            k = u_k // RLGR_L
            val = <uint64_t>u[i]
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
    cdef uint32_t n = _U32.unpack_from(data)[0]
    u_arr = np.zeros(n, dtype=np.int64)
    if n == 0:
        return u_arr
    cdef _BitReader br = _BitReader(data[4:])
    cdef int64_t[::1] u = u_arr
    cdef int64_t u_r = RLGR_L
    cdef int64_t u_k = RLGR_L
    cdef Py_ssize_t i = 0, rem
    cdef int64_t kr, k, m, run
    cdef uint64_t val
    while i < n:
        kr = u_r // RLGR_L
        if kr > 0:
            if br.read(1):
                m = <int64_t>1 << kr
                rem = n - i
                i += m if m < rem else rem
                u_r += RLGR_UP_RUN
                if u_r > RLGR_PARAM_MAX:
                    u_r = RLGR_PARAM_MAX
            else:
                run = <int64_t>br.read(<int>kr)
                if i + run >= n:
                    raise BitstreamError("partial run exceeds element count")
                i += run
                k = u_k // RLGR_L
                val = _gr_read(br, k)
                u[i] = <int64_t>(val + 1)
                u_k = _adapt_gr(u_k, val, k)
                u_r -= RLGR_DOWN_RUN
                if u_r < 0:
                    u_r = 0
                i += 1
        else:
            k = u_k // RLGR_L
            val = _gr_read(br, k)
            u[i] = <int64_t>val
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
    return np.where(u_arr & 1, -((u_arr + 1) >> 1), u_arr >> 1)
