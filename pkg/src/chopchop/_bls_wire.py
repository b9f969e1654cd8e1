"""Uncompressed BLS12-381 point encodings.

blspy only speaks the compressed ZCash encoding (48 B in G1, 96 B in G2).
The wire format carries uncompressed points (96 B / 192 B), so this module
converts between the two.  Decoding an uncompressed point checks the curve
equation here and leaves the subgroup check to blspy's compressed parser.
"""

P = 0x1A0111EA397FE69A4B1BA7B6434BACD764774B84F38512BF6730D2A0F6B0F6241EABFFFEB153FFFFB9FEFFFFFFFFAAAB
_HALF = (P - 1) // 2

_C_FLAG = 0x80
_I_FLAG = 0x40
_S_FLAG = 0x20


# Fp2 = Fp[u] / (u^2 + 1), elements as (c0, c1)

def _f2_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    return ((a0 * b0 - a1 * b1) % P, (a0 * b1 + a1 * b0) % P)


def _f2_sqr(a):
    a0, a1 = a
    return ((a0 + a1) * (a0 - a1) % P, 2 * a0 * a1 % P)


def _f2_pow(a, e):
    result = (1, 0)
    base = a
    while e:
        if e & 1:
            result = _f2_mul(result, base)
        base = _f2_sqr(base)
        e >>= 1
    return result


def _f2_sqrt(a):
    # p = 3 mod 4 variant (Adj & Rodriguez-Henriquez, algorithm 9)
    a1 = _f2_pow(a, (P - 3) // 4)
    alpha = _f2_mul(_f2_sqr(a1), a)
    conj = (alpha[0], -alpha[1] % P)
    if _f2_mul(conj, alpha) == (P - 1, 0):
        return None
    x0 = _f2_mul(a1, a)
    if alpha == (P - 1, 0):
        return (-x0[1] % P, x0[0])
    b = _f2_pow(((1 + alpha[0]) % P, alpha[1]), _HALF)
    return _f2_mul(b, x0)


def _fp_sqrt(a):
    y = pow(a, (P + 1) // 4, P)
    return y if y * y % P == a else None


def _g1_rhs(x):
    return (x * x * x + 4) % P


def _g2_rhs(x):
    x3 = _f2_mul(_f2_sqr(x), x)
    return ((x3[0] + 4) % P, (x3[1] + 4) % P)


def _f2_larger(y):
    if y[1]:
        return y[1] > _HALF
    return y[0] > _HALF


def _int(data):
    return int.from_bytes(data, "big")


def _be(value):
    return value.to_bytes(48, "big")


def g1_uncompress(compressed: bytes) -> bytes:
    if len(compressed) != 48 or not compressed[0] & _C_FLAG:
        raise ValueError("not a compressed G1 point")
    if compressed[0] & _I_FLAG:
        return bytes([_I_FLAG]) + bytes(95)
    x = _int(bytes([compressed[0] & 0x1F]) + compressed[1:])
    y = _fp_sqrt(_g1_rhs(x))
    if y is None:
        raise ValueError("x not on curve")
    if bool(compressed[0] & _S_FLAG) != (y > _HALF):
        y = P - y
    return _be(x) + _be(y)


def g1_compress(uncompressed: bytes) -> bytes:
    if len(uncompressed) != 96:
        raise ValueError("G1 point must be 96 bytes")
    flags = uncompressed[0] & 0xE0
    if flags & (_C_FLAG | _S_FLAG):
        raise ValueError("bad G1 flags")
    if flags & _I_FLAG:
        if uncompressed[0] != _I_FLAG or any(uncompressed[1:]):
            raise ValueError("non-canonical point at infinity")
        return bytes([_C_FLAG | _I_FLAG]) + bytes(47)
    x, y = _int(uncompressed[:48]), _int(uncompressed[48:])
    if x >= P or y >= P or y * y % P != _g1_rhs(x):
        raise ValueError("G1 point not on curve")
    head = _C_FLAG | (_S_FLAG if y > _HALF else 0)
    raw = bytearray(_be(x))
    raw[0] |= head
    return bytes(raw)


def g2_uncompress(compressed: bytes) -> bytes:
    if len(compressed) != 96 or not compressed[0] & _C_FLAG:
        raise ValueError("not a compressed G2 point")
    if compressed[0] & _I_FLAG:
        return bytes([_I_FLAG]) + bytes(191)
    x1 = _int(bytes([compressed[0] & 0x1F]) + compressed[1:48])
    x0 = _int(compressed[48:])
    y = _f2_sqrt(_g2_rhs((x0, x1)))
    if y is None:
        raise ValueError("x not on curve")
    if bool(compressed[0] & _S_FLAG) != _f2_larger(y):
        y = (-y[0] % P, -y[1] % P)
    return _be(x1) + _be(x0) + _be(y[1]) + _be(y[0])


def g2_compress(uncompressed: bytes) -> bytes:
    if len(uncompressed) != 192:
        raise ValueError("G2 point must be 192 bytes")
    flags = uncompressed[0] & 0xE0
    if flags & (_C_FLAG | _S_FLAG):
        raise ValueError("bad G2 flags")
    if flags & _I_FLAG:
        if uncompressed[0] != _I_FLAG or any(uncompressed[1:]):
            raise ValueError("non-canonical point at infinity")
        return bytes([_C_FLAG | _I_FLAG]) + bytes(95)
    x1, x0, y1, y0 = (_int(uncompressed[i:i + 48]) for i in range(0, 192, 48))
    if max(x1, x0, y1, y0) >= P:
        raise ValueError("coordinate out of range")
    y = (y0, y1)
    if _f2_sqr(y) != _g2_rhs((x0, x1)):
        raise ValueError("G2 point not on curve")
    raw = bytearray(_be(x1) + _be(x0))
    raw[0] |= _C_FLAG | (_S_FLAG if _f2_larger(y) else 0)
    return bytes(raw)
