"""Certified continued-fraction expansion of real numbers given as balls."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

from gmpy2 import f_divmod, mpz

from .numerics import DEFAULT_POLICY, Ball, PrecisionExhausted, PrecisionPolicy, fraction_bounds

TauSource = Union[Ball, Fraction, Callable[[int], Ball]]


@dataclass(frozen=True)
class Convergent:
    index: int
    a: int
    p: int
    q: int


def quotients_from_interval(lo: Fraction, hi: Fraction, limit: int) -> list[int]:
    """Partial quotients shared by every real number in ``[lo, hi]``.

    Both endpoints are expanded in lockstep with exact integer division.  A
    quotient is emitted only while the two floors agree and neither endpoint
    has hit an exact integer, so every point of the interval has the same
    expansion prefix.
    """
    n1, d1 = mpz(lo.numerator), mpz(lo.denominator)
    n2, d2 = mpz(hi.numerator), mpz(hi.denominator)
    out: list[int] = []
    while len(out) < limit:
        a1, r1 = f_divmod(n1, d1)
        a2, r2 = f_divmod(n2, d2)
        if a1 != a2 or r1 == 0 or r2 == 0:
            break
        out.append(int(a1))
        n1, d1 = d1, r1
        n2, d2 = d2, r2
    return out


def rational_quotients(x: Fraction) -> list[int]:
    n, d = x.numerator, x.denominator
    out = []
    while d:
        a, r = divmod(n, d)
        out.append(a)
        n, d = d, r
    return out


def convergents(quotients: list[int]) -> list[Convergent]:
    p_prev, p = 0, 1
    q_prev, q = 1, 0
    out = []
    for i, a in enumerate(quotients):
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        out.append(Convergent(i, a, p, q))
    return out


def cf_expand(tau: TauSource, count: int, policy: PrecisionPolicy = DEFAULT_POLICY) -> list[Convergent]:
    """First ``count`` convergents of ``tau`` (index 0 is ``a_0 / 1``).

    ``tau`` is a fixed ball, an exact rational, or a callable returning a
    ball at a requested precision; only the callable form can be refined.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if isinstance(tau, (Fraction, int)):
        qs = rational_quotients(Fraction(tau))
        if len(qs) < count:
            raise PrecisionExhausted(f"rational input terminates after {len(qs)} partial quotients")
        return convergents(qs[:count])
    best = 0
    for prec in policy.schedule():
        ball = tau(prec) if callable(tau) else tau
        lo, hi = fraction_bounds(ball)
        qs = quotients_from_interval(lo, hi, count)
        if len(qs) >= count:
            return convergents(qs)
        best = max(best, len(qs))
        if not callable(tau) or ball.is_exact():
            break
    raise PrecisionExhausted(f"only {best} of {count} partial quotients could be certified")


@dataclass(frozen=True)
class LegendreResult:
    N: int
    a_max: int
    convergents: tuple[Convergent, ...]

    def gap(self, s: int) -> Fraction:
        """Lower bound for ``|tau - r/s|`` whenever ``0 < s < M``."""
        return Fraction(1, (self.a_max + 2) * s * s)


def legendre_bound(tau: TauSource, M, policy: PrecisionPolicy = DEFAULT_POLICY) -> LegendreResult:
    """Smallest index N with ``q_N > M`` and ``a(M) = max(a_0..a_N)``."""
    M = Fraction(M)
    if M <= 0:
        raise ValueError("M must be positive")
    count = 32
    while True:
        convs = cf_expand(tau, count, policy)
        for c in convs:
            if c.q > M:
                kept = convs[: c.index + 1]
                return LegendreResult(c.index, max(x.a for x in kept), tuple(kept))
        count *= 2
