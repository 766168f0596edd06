import random
from fractions import Fraction

import mpmath
import pytest

from kfibcert.kfib import (
    DomainError,
    IndexBelowDefinition,
    KFibWindow,
    kfib_at,
    kfib_mod,
    kfib_sequence,
    ratio_check,
)
from kfibcert.numerics import Ball
from kfibcert.roots import (
    binet_coefficient,
    check_size_bounds,
    dominant_root,
    g_norm,
    kfib_context,
    psi_ball,
    psi_sign,
    root_lower_bracket,
)


def naive(k: int, n: int) -> int:
    vals = [0] * (k - 1) + [1]
    while len(vals) < n + k - 1:
        vals.append(sum(vals[-k:]))
    return vals[n + k - 2]


def test_examples():
    assert kfib_at(7, 8) == 64
    assert kfib_at(5, 7) == 31
    assert kfib_at(2, 10) == 55
    assert kfib_at(3, 0) == 0 and kfib_at(3, -1) == 0


def test_errors():
    with pytest.raises(DomainError):
        kfib_at(1, 5)
    with pytest.raises(IndexBelowDefinition):
        kfib_at(4, -3)
    with pytest.raises(DomainError):
        ratio_check(2, 5)
    with pytest.raises(ValueError):
        kfib_mod(3, 5, 1)


def test_against_naive():
    for k in range(2, 9):
        for n in range(-(k - 2), 60):
            assert kfib_at(k, n) == naive(k, n)


def test_window_shift():
    w = KFibWindow.initial(4)
    for _ in range(30):
        w = w.shifted()
        assert w.running_sum == sum(w.values)
        assert w.term(w.last_index) == kfib_at(4, w.last_index)


def test_powers_of_two_and_three_term():
    for k in range(2, 40):
        seq = kfib_sequence(k, 4 * k + 10)
        for n in range(2, k + 2):
            assert seq[n] == 2 ** (n - 2)
        assert seq[k + 2] == 2**k - 1
        for n in range(2, len(seq) - 1):
            if n - k >= 0:
                assert seq[n + 1] == 2 * seq[n] - seq[n - k]


def test_fibonacci_identity_and_growth():
    seq = kfib_sequence(2, 200)
    for n in range(1, 199):
        assert seq[n + 1] * seq[n - 1] - seq[n] ** 2 == (-1) ** n
    for k in (3, 5, 10):
        s = kfib_sequence(k, 300)
        assert all(s[n + 1] > s[n] for n in range(2, 300))


def test_mod_matches_exact():
    rng = random.Random(7)
    for _ in range(200):
        k, n, p = rng.randint(2, 12), rng.randint(0, 400), rng.randint(2, 10**12)
        assert kfib_mod(k, n, p) == kfib_at(k, n) % p


def test_ratio_lemma():
    for k in range(3, 31):
        for m in range(3, 301):
            assert ratio_check(k, m)


# -- roots ---------------------------------------------------------------------


def test_alpha_values():
    a3 = dominant_root(3, 256)
    assert a3.mid_str(17).startswith("1.8392867552141611")
    golden = dominant_root(2, 256)
    assert golden.contains_ball(golden) and golden.overlaps((1 + Ball.exact(5, 300).sqrt()) / 2)
    for k in range(2, 60):
        a = dominant_root(k, 200)
        assert a.gt(root_lower_bracket(k)) and a.lt(2)
        assert a.rad <= Fraction(1, 2**200)
        assert psi_ball(k, Ball(a.lower(), 0, a.prec)).is_negative()
        assert psi_ball(k, Ball(a.upper(), 0, a.prec)).is_positive()


def test_alpha_against_mpmath_roots():
    for k in (2, 3, 4, 7):
        with mpmath.workdps(60):
            roots = mpmath.polyroots([1] + [-1] * k, maxsteps=200, extraprec=300)
            dom = max(roots, key=abs)
            assert abs(mpmath.im(dom)) < mpmath.mpf(10) ** -50
            assert abs(float(dominant_root(k, 200)) - float(mpmath.re(dom))) < 1e-15


def test_psi_sign():
    assert psi_sign(3, Fraction(1)) == -1
    assert psi_sign(3, Fraction(2)) == 1
    assert psi_sign(3, root_lower_bracket(3)) == -1


def test_binet_and_norm():
    assert abs(float(binet_coefficient(kfib_context(2))) - 0.7236067977499790) < 1e-15
    assert g_norm(2) == Fraction(1, 5)
    assert g_norm(3) == Fraction(1, 44)
    assert all(g_norm(k) < 1 for k in range(2, 300))


def test_norm_against_conjugates():
    # N(g) = prod over roots r of (r - 1) / (2 + (k + 1)(r - 2)), via floating-point conjugates.
    for k in (2, 3, 4, 5, 6):
        with mpmath.workdps(50):
            roots = mpmath.polyroots([1] + [-1] * k, maxsteps=200, extraprec=200)
            prod = mpmath.fprod((r - 1) / (2 + (k + 1) * (r - 2)) for r in roots)
            assert abs(mpmath.re(prod) - mpmath.mpf(g_norm(k).numerator) / g_norm(k).denominator) < 1e-30


def test_size_bounds_small():
    for k in range(2, 8):
        for n in range(1, 120):
            assert check_size_bounds(k, n)
