"""Prime-order groups used by the re-encryption scheme.

Two groups are provided behind one interface:

* ``SECP256K1`` -- the production group (secp256k1, cofactor 1). Points are
  affine ``(x, y)`` tuples, the identity is ``None``; encodings are 33-byte
  SEC1 compressed points and 32-byte big-endian scalars.
* ``MockGroup(q)`` -- the integers mod a small prime ``q`` under addition with
  generator 1. It has no security whatsoever and exists so that every
  algebraic identity of the scheme can be checked exhaustively. Elements and
  scalars are encoded as 4-byte big-endian integers.

Scalars are plain ``int`` values in ``[0, q)`` for both groups.
"""

from __future__ import annotations

import enum
import importlib.util
import random
import secrets
from abc import ABC, abstractmethod
from typing import Any, Optional, Tuple

__all__ = [
    "DecodeError",
    "GroupId",
    "Group",
    "Secp256k1Group",
    "MockGroup",
    "SECP256K1",
    "group_from_bytes",
]


class DecodeError(ValueError):
    """Raised when bytes are not the canonical encoding of a valid value."""


class GroupId(enum.IntEnum):
    PRODUCTION256 = 0x01
    MOCK = 0x02


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for p in small:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    # deterministic for n < 3.3e24, probabilistic (negligible error) above
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


class Group(ABC):
    """A cyclic group of prime order ``order`` with a fixed generator."""

    group_id: GroupId
    order: int
    generator: Any
    identity: Any
    scalar_bytes: int
    point_bytes: int

    # -- group law -------------------------------------------------------

    @abstractmethod
    def point_add(self, a, b):
        ...

    @abstractmethod
    def point_neg(self, a):
        ...

    @abstractmethod
    def point_mul(self, k: int, point):
        ...

    def base_mul(self, k: int):
        """``k`` times the generator."""
        return self.point_mul(k, self.generator)

    def is_identity(self, point) -> bool:
        return point == self.identity

    @abstractmethod
    def is_valid_point(self, point) -> bool:
        ...

    # -- scalars ---------------------------------------------------------

    def random_scalar(self, rng: Optional[random.Random] = None) -> int:
        """Uniform nonzero scalar. ``rng=None`` draws from the OS CSPRNG."""
        if rng is None:
            return secrets.randbelow(self.order - 1) + 1
        return rng.randrange(1, self.order)

    def encode_scalar(self, k: int) -> bytes:
        if not 0 <= k < self.order:
            raise ValueError(f"scalar out of range: {k}")
        return k.to_bytes(self.scalar_bytes, "big")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_bytes:
            raise DecodeError(f"scalar must be {self.scalar_bytes} bytes, got {len(data)}")
        k = int.from_bytes(data, "big")
        if k >= self.order:
            raise DecodeError("scalar not reduced modulo the group order")
        return k

    # -- points ----------------------------------------------------------

    @abstractmethod
    def encode_point(self, point) -> bytes:
        ...

    @abstractmethod
    def decode_point(self, data: bytes, *, allow_identity: bool = True):
        ...

    # -- parameters ------------------------------------------------------

    @abstractmethod
    def to_bytes(self) -> bytes:
        """Serialized parameters, prefixed by the 1-byte group id."""


# ---------------------------------------------------------------------------
# secp256k1
# ---------------------------------------------------------------------------

_P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

Affine = Optional[Tuple[int, int]]
_Jac = Tuple[int, int, int]  # Z == 0 encodes the identity

_JAC_INF: _Jac = (1, 1, 0)


def _jac_double(pt: _Jac) -> _Jac:
    x, y, z = pt
    if z == 0 or y == 0:
        return _JAC_INF
    p = _P
    yy = y * y % p
    s = 4 * x * yy % p
    m = 3 * x * x % p  # curve a = 0
    x3 = (m * m - 2 * s) % p
    y3 = (m * (s - x3) - 8 * yy * yy) % p
    z3 = 2 * y * z % p
    return (x3, y3, z3)


def _jac_add_affine(pt: _Jac, q: Tuple[int, int]) -> _Jac:
    """Mixed addition: Jacobian ``pt`` plus affine ``q``."""
    x1, y1, z1 = pt
    if z1 == 0:
        return (q[0], q[1], 1)
    p = _P
    z1z1 = z1 * z1 % p
    u2 = q[0] * z1z1 % p
    s2 = q[1] * z1 * z1z1 % p
    h = (u2 - x1) % p
    r = (s2 - y1) % p
    if h == 0:
        if r == 0:
            return _jac_double(pt)
        return _JAC_INF
    hh = h * h % p
    hhh = h * hh % p
    v = x1 * hh % p
    x3 = (r * r - hhh - 2 * v) % p
    y3 = (r * (v - x3) - y1 * hhh) % p
    z3 = z1 * h % p
    return (x3, y3, z3)


def _jac_to_affine(pt: _Jac) -> Affine:
    x, y, z = pt
    if z == 0:
        return None
    zinv = pow(z, -1, _P)
    zinv2 = zinv * zinv % _P
    return (x * zinv2 % _P, y * zinv2 * zinv % _P)


def _affine_add(a: Affine, b: Affine) -> Affine:
    if a is None:
        return b
    if b is None:
        return a
    if a[0] == b[0]:
        if (a[1] + b[1]) % _P == 0:
            return None
        lam = 3 * a[0] * a[0] * pow(2 * a[1], -1, _P) % _P
    else:
        lam = (b[1] - a[1]) * pow(b[0] - a[0], -1, _P) % _P
    x3 = (lam * lam - a[0] - b[0]) % _P
    return (x3, (lam * (a[0] - x3) - a[1]) % _P)


_WINDOW = 4


class Secp256k1Group(Group):
    group_id = GroupId.PRODUCTION256
    order = _N
    generator: Affine = (_GX, _GY)
    identity: Affine = None
    scalar_bytes = 32
    point_bytes = 33
    field_prime = _P

    def __init__(self, backend: str = "auto") -> None:
        if backend == "auto":
            backend = "coincurve" if importlib.util.find_spec("coincurve") else "python"
        if backend not in ("coincurve", "python"):
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend
        self._base_table: Optional[list] = None

    def __repr__(self) -> str:
        return f"Secp256k1Group(backend={self.backend!r})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Secp256k1Group)

    def __hash__(self) -> int:
        return hash(self.group_id)

    def is_valid_point(self, point) -> bool:
        if point is None:
            return True
        x, y = point
        return 0 <= x < _P and 0 <= y < _P and (y * y - x * x * x - 7) % _P == 0

    def point_add(self, a: Affine, b: Affine) -> Affine:
        return _affine_add(a, b)

    def point_neg(self, a: Affine) -> Affine:
        if a is None:
            return None
        return (a[0], (-a[1]) % _P)

    def point_mul(self, k: int, point: Affine) -> Affine:
        k %= _N
        if k == 0 or point is None:
            return None
        if self.backend == "coincurve":
            return _coincurve_mul(k, point)
        if point == self.generator:
            return self._fixed_base_mul(k)
        # 4-bit fixed window over the affine multiples 1..15 of the point
        jac = [(point[0], point[1], 1)]
        for _ in range(14):
            jac.append(_jac_add_affine(jac[-1], point))
        table = _batch_to_affine(jac)
        acc = _JAC_INF
        nbits = k.bit_length()
        top = ((nbits + _WINDOW - 1) // _WINDOW) * _WINDOW
        for shift in range(top - _WINDOW, -1, -_WINDOW):
            if acc[2] != 0:
                for _ in range(_WINDOW):
                    acc = _jac_double(acc)
            digit = (k >> shift) & 0xF
            if digit:
                acc = _jac_add_affine(acc, table[digit - 1])
        return _jac_to_affine(acc)

    def _fixed_base_mul(self, k: int) -> Affine:
        if self._base_table is None:
            self._base_table = _build_comb_table(self.generator)
        acc = _JAC_INF
        table = self._base_table
        i = 0
        while k:
            digit = k & 0xF
            if digit:
                acc = _jac_add_affine(acc, table[i][digit - 1])
            k >>= _WINDOW
            i += 1
        return _jac_to_affine(acc)

    def encode_point(self, point: Affine) -> bytes:
        if point is None:
            return bytes(33)
        x, y = point
        return bytes([2 + (y & 1)]) + x.to_bytes(32, "big")

    def decode_point(self, data: bytes, *, allow_identity: bool = True) -> Affine:
        if len(data) != 33:
            raise DecodeError(f"point must be 33 bytes, got {len(data)}")
        if data == bytes(33):
            if not allow_identity:
                raise DecodeError("identity point not allowed here")
            return None
        prefix = data[0]
        if prefix not in (2, 3):
            raise DecodeError(f"bad point prefix 0x{prefix:02x}")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise DecodeError("x coordinate not reduced")
        y_sq = (pow(x, 3, _P) + 7) % _P
        y = pow(y_sq, (_P + 1) // 4, _P)
        if y * y % _P != y_sq:
            raise DecodeError("x coordinate is not on the curve")
        if (y & 1) != (prefix & 1):
            y = _P - y
        return (x, y)

    def to_bytes(self) -> bytes:
        return bytes([self.group_id])


def _coincurve_mul(k: int, point: Tuple[int, int]) -> Affine:
    from coincurve import PublicKey

    x, y = point
    raw = b"\x04" + x.to_bytes(32, "big") + y.to_bytes(32, "big")
    out = PublicKey(raw).multiply(k.to_bytes(32, "big")).format(compressed=False)
    return (int.from_bytes(out[1:33], "big"), int.from_bytes(out[33:], "big"))


def _batch_to_affine(points: list) -> list:
    """Normalise many Jacobian points with a single inversion."""
    zs = [pt[2] for pt in points]
    prefix = [1]
    for z in zs:
        prefix.append(prefix[-1] * z % _P)
    inv = pow(prefix[-1], -1, _P)
    out = [None] * len(points)
    for i in range(len(points) - 1, -1, -1):
        zinv = inv * prefix[i] % _P
        inv = inv * zs[i] % _P
        x, y, _ = points[i]
        zinv2 = zinv * zinv % _P
        out[i] = (x * zinv2 % _P, y * zinv2 * zinv % _P)
    return out


def _build_comb_table(base: Tuple[int, int]) -> list:
    # row i holds d * 16^i * base for d = 1..15
    rows = []
    row_base = (base[0], base[1], 1)
    for _ in range(64):
        affine_base = _jac_to_affine(row_base)
        jac = [row_base]
        for _ in range(14):
            jac.append(_jac_add_affine(jac[-1], affine_base))
        rows.append(_batch_to_affine(jac))
        for _ in range(_WINDOW):
            row_base = _jac_double(row_base)
    return rows


SECP256K1 = Secp256k1Group()


# ---------------------------------------------------------------------------
# Mock group
# ---------------------------------------------------------------------------


class MockGroup(Group):
    """Additive group of integers modulo a small prime. Test use only.

    Construction requires ``insecure=True`` so the group cannot be picked up
    by accident.
    """

    group_id = GroupId.MOCK
    generator = 1
    identity = 0
    scalar_bytes = 4
    point_bytes = 4

    def __init__(self, q: int, *, insecure: bool = False) -> None:
        if not insecure:
            raise ValueError("MockGroup is insecure; pass insecure=True to use it in tests")
        if not _is_prime(q) or q >= 2**32:
            raise ValueError(f"mock group order must be a prime below 2**32, got {q}")
        self.order = q

    def __repr__(self) -> str:
        return f"MockGroup({self.order})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MockGroup) and other.order == self.order

    def __hash__(self) -> int:
        return hash((self.group_id, self.order))

    def is_valid_point(self, point) -> bool:
        return isinstance(point, int) and 0 <= point < self.order

    def point_add(self, a: int, b: int) -> int:
        return (a + b) % self.order

    def point_neg(self, a: int) -> int:
        return (-a) % self.order

    def point_mul(self, k: int, point: int) -> int:
        return k * point % self.order

    def encode_point(self, point: int) -> bytes:
        return point.to_bytes(4, "big")

    def decode_point(self, data: bytes, *, allow_identity: bool = True) -> int:
        if len(data) != 4:
            raise DecodeError(f"mock element must be 4 bytes, got {len(data)}")
        v = int.from_bytes(data, "big")
        if v >= self.order:
            raise DecodeError("mock element not reduced")
        if v == 0 and not allow_identity:
            raise DecodeError("identity element not allowed here")
        return v

    def to_bytes(self) -> bytes:
        return bytes([self.group_id]) + self.order.to_bytes(4, "big")


def group_from_bytes(data: bytes, *, insecure: bool = False) -> Group:
    """Inverse of :meth:`Group.to_bytes`. Mock groups need ``insecure=True``."""
    if not data:
        raise DecodeError("empty group parameters")
    try:
        tag = GroupId(data[0])
    except ValueError:
        raise DecodeError(f"unknown group id 0x{data[0]:02x}") from None
    if tag is GroupId.PRODUCTION256:
        if len(data) != 1:
            raise DecodeError("trailing bytes after group id")
        return SECP256K1
    if len(data) != 5:
        raise DecodeError("mock group parameters must be 5 bytes")
    q = int.from_bytes(data[1:], "big")
    try:
        return MockGroup(q, insecure=insecure)
    except ValueError as exc:
        raise DecodeError(str(exc)) from None
