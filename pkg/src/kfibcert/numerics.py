"""Ball arithmetic over MPFR.

A :class:`Ball` is a midpoint/radius pair.  Midpoints are MPFR numbers at the
ball's working precision; radii are kept at a fixed 64-bit precision and are
always rounded upwards.  MPFR rounds ``log``, ``exp``, ``sqrt`` and integer
powers correctly in every rounding mode, so computing endpoint images with
directed rounding gives rigorous enclosures without any hand-derived error
terms.

Comparisons never guess.  When two balls overlap the caller either supplies
a way to recompute them at higher precision (a callable ``prec -> Ball``) or
receives :class:`PrecisionExhausted`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, Sequence, Union

import gmpy2
from gmpy2 import mpfr, mpz

RAD_PREC = 64

Exact = Union[int, Fraction, str]
BallSource = Union["Ball", Callable[[int], "Ball"]]


class PrecisionExhausted(ArithmeticError):
    """Raised when a required strict condition could not be certified."""


class Undecided(ArithmeticError):
    """A ball straddles a singularity or boundary at the current precision.

    Internal signal: :func:`ball_eval` and the certified predicates catch it
    and escalate precision.
    """


@lru_cache(maxsize=None)
def _ctx(prec: int, rnd: int) -> gmpy2.context:
    return gmpy2.context(precision=prec, round=rnd)


def _down(prec: int) -> gmpy2.context:
    return _ctx(prec, gmpy2.RoundDown)


def _up(prec: int) -> gmpy2.context:
    return _ctx(prec, gmpy2.RoundUp)


def _near(prec: int) -> gmpy2.context:
    return _ctx(prec, gmpy2.RoundToNearest)


_RUP = _up(RAD_PREC)
_ZERO = mpfr(0)
MPFR = type(_ZERO)


def _neg(x: mpfr) -> mpfr:
    # gmpy2's unary minus rounds to the global 53-bit context; this does not.
    return _near(max(x.precision, 2)).minus(x)


def _abs(x: mpfr) -> mpfr:
    return _near(max(x.precision, 2)).abs(x)


def floor_int(x: mpfr) -> int:
    """Exact floor of an MPFR value (``gmpy2.floor`` rounds to 53 bits)."""
    n, d = x.as_integer_ratio()
    return int(n // d)


def _to_fraction(x: mpfr) -> Fraction:
    n, d = x.as_integer_ratio()
    return Fraction(int(n), int(d))


def _exact_to_fraction(value: Exact | float) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, mpz)):
        return Fraction(int(value))
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot convert {type(value).__name__} to an exact value")


@dataclass(frozen=True)
class PrecisionPolicy:
    initial_bits: int = 256
    escalation_factor: Fraction = Fraction(2)
    max_bits: int = 1 << 20

    def __post_init__(self) -> None:
        if self.initial_bits < 2:
            raise ValueError("initial_bits must be at least 2")
        if self.initial_bits > self.max_bits:
            raise ValueError("initial_bits must not exceed max_bits")
        if Fraction(self.escalation_factor) <= 1:
            raise ValueError("escalation_factor must be > 1")

    def schedule(self, start: int | None = None) -> Iterator[int]:
        """Strictly increasing working precisions, ending exactly at ``max_bits``."""
        prec = self.initial_bits if start is None else max(2, start)
        factor = Fraction(self.escalation_factor)
        while prec < self.max_bits:
            yield prec
            nxt = math.ceil(prec * factor)
            prec = max(nxt, prec + 1)
        yield self.max_bits


DEFAULT_POLICY = PrecisionPolicy()


@dataclass(frozen=True, slots=True)
class Ball:
    """Closed ball ``[mid - rad, mid + rad]``."""

    mid: mpfr
    rad: mpfr
    prec: int

    def __init__(self, mid, rad=0, prec: int = DEFAULT_POLICY.initial_bits):
        prec = int(prec)
        extra = _ZERO
        if not (isinstance(mid, MPFR) and mid.precision <= prec):
            f = _to_fraction(mid) if isinstance(mid, MPFR) else _exact_to_fraction(mid)
            num, den = mpz(f.numerator), mpz(f.denominator)
            m = _near(prec).div(num, den)
            if _to_fraction(m) != f:
                extra = max(_RUP.sub(_up(prec).div(num, den), m), _RUP.sub(m, _down(prec).div(num, den)))
            mid = m
        if not isinstance(rad, MPFR):
            rf = _exact_to_fraction(rad)
            rad = _RUP.div(mpz(rf.numerator), mpz(rf.denominator))
        if not gmpy2.is_finite(mid):
            raise ValueError("midpoint must be finite")
        if not gmpy2.is_finite(rad) or rad < 0:
            raise ValueError(f"radius must be finite and non-negative, got {rad!r}")
        object.__setattr__(self, "mid", mid)
        object.__setattr__(self, "rad", _RUP.add(rad, extra))
        object.__setattr__(self, "prec", prec)

    # -- construction -------------------------------------------------------

    @classmethod
    def exact(cls, value: Exact | float, prec: int = DEFAULT_POLICY.initial_bits) -> "Ball":
        """Smallest convenient ball containing an exact rational value."""
        if isinstance(value, Ball):
            return value
        f = _exact_to_fraction(value)
        num, den = mpz(f.numerator), mpz(f.denominator)
        mid = _near(prec).div(num, den)
        if _to_fraction(mid) == f:
            return cls(mid, _ZERO, prec)
        lo = _down(prec).div(num, den)
        hi = _up(prec).div(num, den)
        return cls.from_endpoints(lo, hi, prec)

    @classmethod
    def from_endpoints(cls, lo: mpfr, hi: mpfr, prec: int) -> "Ball":
        if lo > hi:
            raise ValueError("lower endpoint exceeds upper endpoint")
        near = _near(prec)
        mid = near.div_2exp(near.add(lo, hi), 1)
        rad = max(_RUP.sub(hi, mid), _RUP.sub(mid, lo))
        return cls(mid, rad, prec)

    def with_prec(self, prec: int) -> "Ball":
        return self if prec == self.prec else _reround(self, prec)

    # -- inspection ---------------------------------------------------------

    def lower(self) -> mpfr:
        return _down(self.prec).sub(self.mid, self.rad)

    def upper(self) -> mpfr:
        return _up(self.prec).add(self.mid, self.rad)

    def is_exact(self) -> bool:
        return self.rad == 0

    def contains(self, value: Exact | float) -> bool:
        f = _exact_to_fraction(value)
        return _to_fraction(self.lower()) <= f <= _to_fraction(self.upper())

    def contains_ball(self, other: "Ball") -> bool:
        return self.lower() <= other.lower() and other.upper() <= self.upper()

    def overlaps(self, other: "Ball") -> bool:
        return not (self.upper() < other.lower() or other.upper() < self.lower())

    def is_positive(self) -> bool:
        return self.lower() > 0

    def is_negative(self) -> bool:
        return self.upper() < 0

    def rel_accuracy_bits(self) -> int:
        """Roughly how many leading bits of the midpoint are trustworthy."""
        if self.rad == 0:
            return self.prec
        if self.mid == 0:
            return 0
        return max(0, int(gmpy2.floor(gmpy2.log2(abs(self.mid)) - gmpy2.log2(self.rad))))

    def __float__(self) -> float:
        return float(self.mid)

    def __repr__(self) -> str:
        return f"Ball({self.mid_str(20)} +/- {mpfr_str(self.rad, 4)}, prec={self.prec})"

    def mid_str(self, digits: int = 0) -> str:
        """Decimal midpoint; ``digits=0`` gives enough digits to round-trip."""
        return mpfr_str(self.mid, digits)

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "Ball":
        if isinstance(other, Ball):
            return other
        return Ball.exact(other, self.prec)

    def __neg__(self) -> "Ball":
        return Ball(_neg(self.mid), self.rad, self.prec)

    def __pos__(self) -> "Ball":
        return self

    def __add__(self, other) -> "Ball":
        b = self._coerce(other)
        prec = max(self.prec, b.prec)
        mid = _near(prec).add(self.mid, b.mid)
        rad = _RUP.add(_RUP.add(self.rad, b.rad), _rounding_error(mid, prec))
        return Ball(mid, rad, prec)

    __radd__ = __add__

    def __sub__(self, other) -> "Ball":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Ball":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Ball":
        b = self._coerce(other)
        prec = max(self.prec, b.prec)
        mid = _near(prec).mul(self.mid, b.mid)
        rad = _RUP.mul(_abs(self.mid), b.rad)
        rad = _RUP.add(rad, _RUP.mul(_abs(b.mid), self.rad))
        rad = _RUP.add(rad, _RUP.mul(self.rad, b.rad))
        rad = _RUP.add(rad, _rounding_error(mid, prec))
        return Ball(mid, rad, prec)

    __rmul__ = __mul__

    def inv(self) -> "Ball":
        lo, hi = self.lower(), self.upper()
        if lo <= 0 <= hi:
            raise Undecided("division by a ball containing zero")
        if self.rad == 0:
            return Ball.from_endpoints(_down(self.prec).div(1, self.mid), _up(self.prec).div(1, self.mid), self.prec)
        return Ball.from_endpoints(_down(self.prec).div(1, hi), _up(self.prec).div(1, lo), self.prec)

    def __truediv__(self, other) -> "Ball":
        b = self._coerce(other)
        if b.rad == 0 and self.rad == 0:
            prec = max(self.prec, b.prec)
            if b.mid == 0:
                raise Undecided("division by exact zero")
            return Ball.from_endpoints(_down(prec).div(self.mid, b.mid), _up(prec).div(self.mid, b.mid), prec)
        return self * b.inv()

    def __rtruediv__(self, other) -> "Ball":
        return self._coerce(other) / self

    def __abs__(self) -> "Ball":
        lo, hi = self.lower(), self.upper()
        if lo >= 0:
            return self
        if hi <= 0:
            return -self
        return Ball.from_endpoints(_ZERO, max(_neg(lo), hi), self.prec)

    def __pow__(self, n) -> "Ball":
        if isinstance(n, Ball):
            return (n * self.log()).exp()
        if not isinstance(n, (int, mpz)):
            f = _exact_to_fraction(n)
            if f.denominator == 1:
                n = f.numerator
            else:
                return (Ball.exact(f, self.prec) * self.log()).exp()
        n = int(n)
        if n == 0:
            return Ball(mpfr(1), _ZERO, self.prec)
        if n < 0:
            return (self ** (-n)).inv()
        lo, hi = self.lower(), self.upper()
        down, up = _down(self.prec), _up(self.prec)
        if lo >= 0:
            return Ball.from_endpoints(down.pow(lo, n), up.pow(hi, n), self.prec)
        if hi <= 0:
            if n % 2 == 0:
                return Ball.from_endpoints(down.pow(_neg(hi), n), up.pow(_neg(lo), n), self.prec)
            return Ball.from_endpoints(_neg(up.pow(_neg(lo), n)), _neg(down.pow(_neg(hi), n)), self.prec)
        if n % 2 == 0:
            return Ball.from_endpoints(_ZERO, up.pow(max(_neg(lo), hi), n), self.prec)
        return Ball.from_endpoints(_neg(up.pow(_neg(lo), n)), up.pow(hi, n), self.prec)

    def sqr(self) -> "Ball":
        return self ** 2

    def log(self) -> "Ball":
        lo, hi = self.lower(), self.upper()
        if lo <= 0:
            raise Undecided("log of a ball that is not certified positive")
        return Ball.from_endpoints(_down(self.prec).log(lo), _up(self.prec).log(hi), self.prec)

    def exp(self) -> "Ball":
        return Ball.from_endpoints(_down(self.prec).exp(self.lower()), _up(self.prec).exp(self.upper()), self.prec)

    def sqrt(self) -> "Ball":
        lo, hi = self.lower(), self.upper()
        if lo < 0:
            raise Undecided("sqrt of a ball that is not certified non-negative")
        return Ball.from_endpoints(_down(self.prec).sqrt(lo), _up(self.prec).sqrt(hi), self.prec)

    # Certified predicates.  Each returns True/False only when decided.

    def lt(self, other) -> bool:
        return certified_compare(self, self._coerce(other)) is Order.LESS

    def gt(self, other) -> bool:
        return certified_compare(self, self._coerce(other)) is Order.GREATER


def mpfr_str(x: mpfr, digits: int = 0) -> str:
    m, e, _ = x.digits(10, digits)
    sign = "-" if m.startswith("-") else ""
    m = m.lstrip("-")
    if not m.strip("0"):
        return "0"
    return f"{sign}{m[0]}.{m[1:]}e{e - 1}"


def parse_mpfr(text: str, prec: int) -> mpfr:
    return _near(prec).add(mpfr(text, prec), 0)


def _rounding_error(mid: mpfr, prec: int) -> mpfr:
    # |RN(z) - z| <= |RN(z)| * 2^-prec for any precision-`prec` rounding to nearest.
    if mid == 0:
        return _ZERO
    return _RUP.mul_2exp(_abs(mid), -prec)


def _reround(b: Ball, prec: int) -> Ball:
    lo = _down(prec).sub(b.mid, b.rad)
    hi = _up(prec).add(b.mid, b.rad)
    return Ball.from_endpoints(lo, hi, prec)


def log(x: Ball) -> Ball:
    return x.log()


def exp(x: Ball) -> Ball:
    return x.exp()


def sqrt(x: Ball) -> Ball:
    return x.sqrt()


class Order(enum.Enum):
    LESS = -1
    GREATER = 1


def _resolve(src: BallSource | Exact, prec: int) -> Ball:
    if callable(src):
        return src(prec)
    return src if isinstance(src, Ball) else Ball.exact(src, prec)


def _refinable(*srcs: BallSource) -> bool:
    return any(callable(s) for s in srcs)


def ball_eval(
    expr: Callable[..., Ball],
    inputs: Sequence[Exact | BallSource],
    precision: int | None = None,
    policy: PrecisionPolicy = DEFAULT_POLICY,
) -> Ball:
    """Evaluate ``expr`` on balls built from ``inputs``.

    Inputs may be exact numbers (converted at each working precision), fixed
    balls, or callables producing a ball at a requested precision.  When the
    expression hits an undecidable branch (log or division of a ball touching
    zero) the evaluation is repeated at the next precision of ``policy``.
    """
    last: Exception | None = None
    for prec in policy.schedule(precision):
        args = [
            inp(prec) if callable(inp) else (inp if isinstance(inp, Ball) else Ball.exact(inp, prec))
            for inp in inputs
        ]
        try:
            return expr(*args)
        except Undecided as exc:
            last = exc
            if all(isinstance(i, Ball) for i in inputs):
                break
    raise PrecisionExhausted(f"could not certify expression: {last}")


def certified_floor(x: BallSource, policy: PrecisionPolicy = DEFAULT_POLICY) -> int:
    """The unique integer ``n`` with ``n <= x < n + 1`` for every point of ``x``."""
    for prec in policy.schedule():
        b = _resolve(x, prec)
        f_lo = floor_int(b.lower())
        f_hi = floor_int(b.upper())
        if f_lo == f_hi:
            return f_lo
        if not callable(x):
            break
    raise PrecisionExhausted("ball cannot be separated from an integer boundary")


def certified_compare(x: BallSource, y: BallSource, policy: PrecisionPolicy = DEFAULT_POLICY) -> Order:
    """Strict ordering of two balls; overlap is never reported as equality."""
    for prec in policy.schedule():
        a, b = _resolve(x, prec), _resolve(y, prec)
        if a.upper() < b.lower():
            return Order.LESS
        if a.lower() > b.upper():
            return Order.GREATER
        if not _refinable(x, y):
            break
    raise PrecisionExhausted("balls overlap; candidates possibly equal")


def certify_le(x: BallSource, y: BallSource, policy: PrecisionPolicy = DEFAULT_POLICY) -> bool:
    """Decide ``x <= y`` pointwise.  Touching exact endpoints count as ``<=``."""
    for prec in policy.schedule():
        a, b = _resolve(x, prec), _resolve(y, prec)
        if a.upper() <= b.lower():
            return True
        if a.lower() > b.upper():
            return False
        if not _refinable(x, y):
            break
    raise PrecisionExhausted("cannot decide <= between overlapping balls")


def dist_to_int(x: Ball) -> Ball:
    """Ball for the distance of ``x`` to its nearest integer.

    Raises :class:`Undecided` if ``x`` straddles a half-integer, where the
    nearest integer is ambiguous.
    """
    lo, hi = x.lower(), x.upper()
    half = mpfr("0.5")
    j_lo = floor_int(_down(x.prec + 2).add(lo, half))
    j_hi = floor_int(_down(x.prec + 2).add(hi, half))
    if j_lo != j_hi:
        raise Undecided("ball straddles a half-integer")
    d = x - j_lo
    return abs(d)


def fraction_bounds(x: Ball) -> tuple[Fraction, Fraction]:
    """Exact rational endpoints of ``x``."""
    return _to_fraction(x.lower()), _to_fraction(x.upper())
