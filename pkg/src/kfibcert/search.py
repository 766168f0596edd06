"""Exhaustive search on finite windows, the t-interval, and the final minimisation.

Size bracket used by the filtered search: for k >= 2, m >= 2, x >= 1 we have
``F_{m+1} >= F_m + F_{m-1} >= 2 F_{m-1}``, so ``D >= F_{m+1}^x / 2``.  With
``alpha^(n-2) <= F_n <= alpha^(n-1)`` and ``log 2 / log alpha < 1.45`` this
gives ``(m-1) x <= n <= m x + 1``.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable

import gmpy2

from .kfib import kfib_at, kfib_mod_sequence, kfib_sequence
from .numerics import Ball, floor_int
from .roots import KFibContext, kfib_context


class WindowTooLarge(RuntimeError):
    pass


def _default_moduli(count: int = 8) -> tuple[int, ...]:
    out, p = [], gmpy2.mpz(1) << 61
    while len(out) < count:
        p = gmpy2.next_prime(p)
        out.append(int(p))
    return tuple(out)


DEFAULT_MODULI = _default_moduli()
DEFAULT_BUDGET = 10**8


def _irange(r) -> range:
    if isinstance(r, range):
        return r
    lo, hi = r
    return range(lo, hi + 1)


@dataclass(frozen=True)
class SearchWindow:
    """Inclusive ranges.  ``moduli=()`` selects pure exact mode."""

    k_range: tuple[int, int]
    m_range: tuple[int, int]
    x_range: tuple[int, int]
    moduli: tuple[int, ...] = DEFAULT_MODULI
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        for name in ("k_range", "m_range", "x_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"empty {name}: {lo}..{hi}")
        if self.k_range[0] < 2 or self.m_range[0] < 2 or self.x_range[0] < 1:
            raise ValueError("need k >= 2, m >= 2 and x >= 1")
        if any(p < 2 for p in self.moduli):
            raise ValueError("moduli must be >= 2")

    def cells(self) -> Iterable[tuple[int, int, int]]:
        """``(k, m, x)`` with ``m >= k``; cells with ``m < k`` are outside the theorem."""
        for k in _irange(self.k_range):
            for m in _irange(self.m_range):
                if m < k:
                    continue
                for x in _irange(self.x_range):
                    yield k, m, x

    def estimated_work(self) -> int:
        """Rough cost in word operations, used only for the budget check.

        Closed form over the ranges, so it stays cheap for huge windows.
        """
        x_lo, x_hi = self.x_range
        nx = x_hi - x_lo + 1
        sx = (x_lo + x_hi) * nx // 2
        total = 0
        for k in _irange(self.k_range):
            m_lo, m_hi = max(k, self.m_range[0]), self.m_range[1]
            if m_lo > m_hi:
                continue
            nm = m_hi - m_lo + 1
            sm = (m_lo + m_hi) * nm // 2
            if self.moduli:
                total += nm * (sx + (2 + x_hi.bit_length()) * nx) * len(self.moduli)
            else:
                # exact D has about m x bits; squaring-based powering is superlinear
                total += sm * sx + (m_hi * x_hi) ** 2 * nm * nx // 4096
        return total


@dataclass(frozen=True)
class SolutionRecord:
    k: int
    m: int
    n: int
    x: int
    verified: bool


def n_bracket(m: int, x: int) -> range:
    return range(max(1, (m - 1) * x), m * x + 2)


def _exact_lhs(k: int, m: int, x: int) -> int:
    return kfib_at(k, m + 1) ** x - kfib_at(k, m - 1) ** x


def _solve_exact(k: int, D: int, n_hint: int) -> list[int]:
    """Every ``n >= 1`` with ``F_n = D`` (F is non-decreasing from ``n = 1``)."""
    size = max(n_hint, 64)
    while True:
        seq = kfib_sequence(k, size)
        if seq[-1] >= D:
            break
        size *= 2
    lo = bisect.bisect_left(seq, D, 1)
    hi = bisect.bisect_right(seq, D, 1)
    return list(range(lo, hi))


@lru_cache(maxsize=64)
def _residues(k: int, n_max: int, p: int) -> tuple[int, ...]:
    return tuple(kfib_mod_sequence(k, n_max, p))


def exhaustive_search(window: SearchWindow) -> list[SolutionRecord]:
    """All ``(k, m, n, x)`` in ``window`` with ``F_{m+1}^x - F_{m-1}^x = F_n``."""
    work = window.estimated_work()
    if work > window.budget:
        raise WindowTooLarge(f"estimated work {work} exceeds budget {window.budget}; shard the window")
    out: list[SolutionRecord] = []
    n_cap = window.m_range[1] * window.x_range[1] + 2
    for k, m, x in window.cells():
        if not window.moduli:
            D = _exact_lhs(k, m, x)
            for n in _solve_exact(k, D, m * x + 2):
                out.append(SolutionRecord(k, m, n, x, True))
            continue
        survivors = list(n_bracket(m, x))
        for p in window.moduli:
            res = _residues(k, n_cap, p)
            d = (pow(res[m + 1], x, p) - pow(res[m - 1], x, p)) % p
            survivors = [n for n in survivors if res[n] == d]
            if not survivors:
                break
        if survivors:
            D = _exact_lhs(k, m, x)
            for n in survivors:
                if kfib_at(k, n) == D:
                    out.append(SolutionRecord(k, m, n, x, True))
    return out


# -- the large-m endgame -----------------------------------------------------

T_LO = (Fraction(68, 100), Fraction(-69, 100))
T_HI = (Fraction(127, 100), Fraction(-126, 100))


def t_interval(x: int, ctx: KFibContext | None = None) -> range:
    """Integers strictly inside ``(0.68x - 0.69, 1.27x - 1.26)``.

    With ``ctx`` given, also certifies that ``(x - 1) beta_k`` lies inside the
    interval, where ``beta_k = -log g / log alpha`` is the centre of the
    admissible ``t = m x + 1 - n``.
    """
    if x < 2:
        raise ValueError("x must be >= 2")
    lo = T_LO[0] * x + T_LO[1]
    hi = T_HI[0] * x + T_HI[1]
    first = floor_int_frac(lo) + 1
    last = -floor_int_frac(-hi) - 1
    if first > last:
        raise ValueError(f"empty t-interval at x={x}")
    if ctx is not None:
        centre = (x - 1) * (-ctx.log_g) / ctx.log_alpha
        if not (centre.gt(lo) and centre.lt(hi)):
            raise ValueError(f"(x-1) beta_k = {centre.mid_str(8)} escapes the t-interval at x={x}, k={ctx.k}")
    return range(first, last + 1)


def floor_int_frac(v: Fraction) -> int:
    return v.numerator // v.denominator


@dataclass
class FinalMinResult:
    variant: str
    minimum: Ball
    argmin: tuple[int, int, int]
    cells: int
    m_bound: int
    threshold: Fraction | None = None
    above_threshold: bool | None = None
    threshold_m_bound: int | None = None
    per_k: dict[int, Ball] = field(default_factory=dict)


def m_bound_from_min(lower, upper_const=Fraction("2.11"), alpha_low=Fraction(7, 4), prec: int = 256) -> int:
    """Largest m allowed by ``2.11 / alpha^((m-2)/2) > lower``."""
    if isinstance(lower, Ball):
        lb = lower
    elif isinstance(lower, (int, Fraction, str)):
        lb = Ball.exact(Fraction(lower), prec)
    else:
        lb = Ball(lower, 0, prec)
    v = 2 + 2 * (Ball.exact(upper_const, prec) / lb).log() / Ball.exact(alpha_low, prec).log()
    return floor_int(v.upper())


def final_min_scan(
    x_range: tuple[int, int] = (20, 150),
    k_range: tuple[int, int] = (3, 5),
    variant: str = "exp_x",
    prec: int = 256,
    threshold=Fraction("0.0003"),
) -> FinalMinResult:
    """Certified minimum of ``|alpha^-t g^(1-x) / (1 + alpha^-e) - 1|``.

    ``e = x`` for ``variant="exp_x"`` and ``e = 2x`` for ``"exp_2x"``; ``t``
    runs over :func:`t_interval`.  The returned ball's lower endpoint is a
    certified lower bound for every value scanned.
    """
    if variant not in ("exp_x", "exp_2x"):
        raise ValueError(f"unknown variant {variant!r}")
    best: Ball | None = None
    arg = None
    cells = 0
    per_k: dict[int, Ball] = {}
    for k in _irange(k_range):
        ctx = kfib_context(k, prec)
        la, lg = ctx.log_alpha, ctx.log_g
        for x in _irange(x_range):
            e = x if variant == "exp_x" else 2 * x
            denom = 1 + (-(e * la)).exp()
            for t in t_interval(x, ctx):
                val = abs(((-(x - 1)) * lg - t * la).exp() / denom - 1)
                cells += 1
                if best is None or val.lower() < best.lower():
                    best, arg = val, (x, k, t)
                if k not in per_k or val.lower() < per_k[k].lower():
                    per_k[k] = val
    if best is None:
        raise ValueError("empty scan")
    res = FinalMinResult(variant, best, arg, cells, m_bound_from_min(best.lower(), prec=prec), per_k=per_k)
    if threshold is not None:
        res.threshold = Fraction(threshold)
        res.above_threshold = best.gt(res.threshold)
        res.threshold_m_bound = m_bound_from_min(res.threshold, prec=prec)
    return res
