"""Exact k-generalized Fibonacci numbers.

``F^(k)`` starts with k-1 zeros at indices ``-(k-2) .. 0`` followed by
``F_1 = 1``; every later term is the sum of the previous k.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache


class IndexBelowDefinition(ValueError):
    pass


class DomainError(ValueError):
    pass


def _check(k: int, n: int) -> None:
    if k < 2:
        raise DomainError(f"order k must be >= 2, got {k}")
    if n < -(k - 2):
        raise IndexBelowDefinition(f"F^({k}) is defined from index {-(k - 2)}, got {n}")


@dataclass(frozen=True)
class KFibWindow:
    """k consecutive terms ``F_start .. F_{start+k-1}`` plus their sum."""

    k: int
    start_index: int
    values: tuple[int, ...]
    running_sum: int

    @classmethod
    def initial(cls, k: int) -> "KFibWindow":
        if k < 2:
            raise DomainError(f"order k must be >= 2, got {k}")
        values = (0,) * (k - 1) + (1,)
        return cls(k, -(k - 2), values, 1)

    @property
    def last_index(self) -> int:
        return self.start_index + self.k - 1

    def shifted(self) -> "KFibWindow":
        new = self.running_sum
        total = 2 * new - self.values[0]
        return KFibWindow(self.k, self.start_index + 1, self.values[1:] + (new,), total)

    def term(self, n: int) -> int:
        return self.values[n - self.start_index]


def kfib_at(k: int, n: int) -> int:
    _check(k, n)
    if n <= 0:
        return 0
    if n <= k + 1:
        return 1 if n == 1 else 1 << (n - 2)
    return kfib_sequence(k, n)[n]


@lru_cache(maxsize=512)
def _sequence(k: int, n_max: int) -> tuple[int, ...]:
    out = [0, 1]
    window = deque([0] * (k - 1) + [1], maxlen=k)
    total = 1
    for _ in range(2, n_max + 1):
        new = total
        total += new - window[0]
        window.append(new)
        out.append(new)
    return tuple(out[: n_max + 1])


def kfib_sequence(k: int, n_max: int) -> tuple[int, ...]:
    """``(F_0, F_1, ..., F_{n_max})`` for order k."""
    _check(k, 0)
    if n_max < 1:
        return (0,) * (n_max + 1)
    # Round the cache key up so nearby requests share one computation.
    size = max(64, 1 << (n_max - 1).bit_length())
    return _sequence(k, size)[: n_max + 1]


def kfib_mod_sequence(k: int, n_max: int, modulus: int) -> list[int]:
    """``F_n mod modulus`` for ``0 <= n <= n_max`` using only add/subtract mod p."""
    if modulus < 2:
        raise ValueError("modulus must be >= 2")
    _check(k, 0)
    out = [0, 1 % modulus]
    window = deque([0] * (k - 1) + [1 % modulus], maxlen=k)
    total = 1 % modulus
    for _ in range(2, n_max + 1):
        new = total
        total = (total + new - window[0]) % modulus
        window.append(new)
        out.append(new)
    return out[: n_max + 1]


def kfib_mod(k: int, n: int, modulus: int) -> int:
    _check(k, n)
    if n <= 0:
        return 0
    return kfib_mod_sequence(k, n, modulus)[n]


def ratio_check(k: int, m: int) -> bool:
    """Whether ``7 F_{m-1} <= 3 F_{m+1}``, i.e. ``F_{m-1}/F_{m+1} <= 3/7``."""
    if k < 3 or m < 3:
        raise DomainError(f"ratio bound needs k >= 3 and m >= 3, got k={k}, m={m}")
    seq = kfib_sequence(k, m + 1)
    return 7 * seq[m - 1] <= 3 * seq[m + 1]
