"""Dominant root of ``x^k - x^(k-1) - ... - 1`` and the Binet coefficient.

The enclosure of the dominant root is not taken on trust from Newton's
method: Newton only proposes a midpoint, and the final bracket is certified
by the exact sign of ``(x - 1) * Psi_k(x) = x^(k+1) - 2 x^k + 1`` at two
dyadic rationals.  On ``x > 1`` that polynomial has a single root, so a
sign change pins it down.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from gmpy2 import mpfr, mpz

from .numerics import Ball, PrecisionExhausted, _near, _to_fraction


def _phi_sign(k: int, num: int, den: int) -> int:
    """Sign of ``t^(k+1) - 2 t^k + 1`` at ``t = num/den`` (den > 0)."""
    a, b = mpz(num), mpz(den)
    ak = a**k
    v = ak * a - 2 * ak * b + b ** (k + 1)
    return (v > 0) - (v < 0)


def psi_sign(k: int, t: Fraction) -> int:
    """Exact sign of ``Psi_k(t)`` for rational ``t``."""
    t = Fraction(t)
    if t == 1:
        return -1  # Psi_k(1) = 1 - k
    s = _phi_sign(k, t.numerator, t.denominator)
    return s if t > 1 else -s


def psi_ball(k: int, x: Ball) -> Ball:
    """``Psi_k`` evaluated on a ball by Horner's rule."""
    acc = Ball.exact(1, x.prec)
    for _ in range(k):
        acc = acc * x - 1
    return acc


def root_lower_bracket(k: int) -> Fraction:
    return 2 * (1 - Fraction(1, 2**k))


def _newton(k: int, w: int) -> mpfr:
    ctx = _near(w)
    x = mpfr(2, w)
    tol = ctx.mul_2exp(mpfr(1), -(w - 8))
    for _ in range(10 * w.bit_length() + 50):
        xk1 = ctx.pow(x, k - 1)
        xk = ctx.mul(xk1, x)
        f = ctx.add(ctx.sub(ctx.mul(xk, x), ctx.mul_2exp(xk, 1)), 1)
        df = ctx.sub(ctx.mul(k + 1, xk), ctx.mul(2 * k, xk1))
        step = ctx.div(f, df)
        x = ctx.sub(x, step)
        if abs(step) < tol:
            break
    return x


@lru_cache(maxsize=4096)
def dominant_root(k: int, precision: int) -> Ball:
    """Ball around ``alpha(k)`` with radius at most ``2^-precision``."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    low = root_lower_bracket(k)
    w = precision + 64
    delta_exp = precision + 2
    for _ in range(8):
        x = _newton(k, w)
        ctx = _near(w)
        lo = ctx.sub(x, ctx.mul_2exp(mpfr(1), -delta_exp))
        hi = ctx.add(x, ctx.mul_2exp(mpfr(1), -delta_exp))
        flo, fhi = _to_fraction(lo), _to_fraction(hi)
        if flo > low and fhi <= 2:
            if _phi_sign(k, flo.numerator, flo.denominator) < 0 < _phi_sign(k, fhi.numerator, fhi.denominator):
                return Ball.from_endpoints(lo, hi, precision + 8)
        w *= 2
    raise PrecisionExhausted(f"could not certify the dominant root for k={k}")


def binet_from_alpha(alpha: Ball, k: int) -> Ball:
    return (alpha - 1) / (2 + (k + 1) * (alpha - 2))


@dataclass(frozen=True)
class KFibContext:
    k: int
    prec: int
    alpha: Ball
    g: Ball
    log_alpha: Ball

    @property
    def log_g(self) -> Ball:
        return self.g.log()


@lru_cache(maxsize=2048)
def kfib_context(k: int, prec: int = 256) -> KFibContext:
    alpha = dominant_root(k, prec)
    return KFibContext(k, alpha.prec, alpha, binet_from_alpha(alpha, k), alpha.log())


def binet_coefficient(ctx: KFibContext) -> Ball:
    """``g = (alpha - 1) / (2 + (k + 1)(alpha - 2))``, so ``F_n ~ g alpha^(n-1)``."""
    return binet_from_alpha(ctx.alpha, ctx.k)


def g_norm(k: int) -> Fraction:
    """Absolute norm of g in ``Q(alpha)``; below 1 for every k >= 2."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    return Fraction((k - 1) ** 2, 2 ** (k + 1) * k**k - (k + 1) ** (k + 1))


def _dresden_error(k: int, n: int, value: int, prec: int) -> Ball:
    ctx = kfib_context(k, prec)
    return abs(Ball.exact(value, ctx.prec) - ctx.g * ctx.alpha ** (n - 1))


def check_size_bounds(k: int, n: int, value: int | None = None) -> bool:
    """``alpha^(n-2) <= F_n <= alpha^(n-1)`` and ``|F_n - g alpha^(n-1)| < 1/2``.

    Every comparison is certified; precision is raised until it separates.
    Equalities (``n = 1, 2``) are recognised exactly.
    """
    from .kfib import kfib_at
    from .numerics import Order, certified_compare, certify_le

    if n < 1:
        raise ValueError("n must be >= 1")
    F = kfib_at(k, n) if value is None else value

    def power(e: int):
        if e == 0:
            return Ball.exact(1, 64)
        return lambda p: kfib_context(k, p).alpha ** e

    lower = certify_le(power(n - 2), Ball.exact(F, 64))
    upper = certify_le(Ball.exact(F, 64), power(n - 1))
    close = certified_compare(lambda p: _dresden_error(k, n, F, p), Ball.exact(Fraction(1, 2), 64)) is Order.LESS
    return lower and upper and close
