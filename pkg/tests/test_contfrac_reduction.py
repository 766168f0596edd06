import math
import random
from fractions import Fraction
from functools import partial

import mpmath
import pytest

from kfibcert.contfrac import cf_expand, convergents, legendre_bound, rational_quotients
from kfibcert.numerics import Ball, PrecisionExhausted, PrecisionPolicy
from kfibcert.reduction import (
    NoPositiveEpsilon,
    ReductionInstance,
    dp_reduce_cell,
    dp_reduce_grid,
    grid_gamma,
    grid_instance,
    grid_mu,
)
from kfibcert.roots import kfib_context


def golden(p):
    return (1 + Ball.exact(5, p).sqrt()) / 2


def test_golden_expansion():
    cs = cf_expand(golden, 20)
    assert [c.a for c in cs] == [1] * 20
    assert [c.q for c in cs[:8]] == [1, 1, 2, 3, 5, 8, 13, 21]


def test_rational_terminates():
    assert rational_quotients(Fraction(22, 7)) == [3, 7]
    with pytest.raises(PrecisionExhausted):
        cf_expand(Fraction(22, 7), 5)
    with pytest.raises(PrecisionExhausted):
        cf_expand(Ball.exact(Fraction(22, 7)), 5)


def test_against_high_precision_oracle():
    def tau(p):
        ctx = kfib_context(3, p)
        return Ball.exact(2, ctx.prec).log() / ctx.log_alpha

    got = [c.a for c in cf_expand(tau, 50)]
    with mpmath.workdps(2000):
        alpha = mpmath.findroot(lambda t: t**3 - t**2 - t - 1, mpmath.mpf("1.839"))
        v = mpmath.log(2) / mpmath.log(alpha)
        want = []
        for _ in range(50):
            a = int(mpmath.floor(v))
            want.append(a)
            v = 1 / (v - a)
    assert got == want


def test_convergent_invariants():
    cs = cf_expand(lambda p: Ball.exact(7, p).sqrt() + Ball.exact(3, p).log(), 60)
    prev_err = None
    tau = Ball.exact(7, 4096).sqrt() + Ball.exact(3, 4096).log()
    for c, nxt in zip(cs, cs[1:]):
        assert math.gcd(c.p, c.q) == 1
        assert nxt.q > c.q or c.index == 0
        err = abs(tau * c.q - c.p)
        assert err.lt(Fraction(1, nxt.q))
        if prev_err is not None and prev_err.lt(1):
            assert err.lt(prev_err)
        prev_err = err
    for t in range(2, len(cs)):
        assert cs[t].p == cs[t].a * cs[t - 1].p + cs[t - 2].p
        assert cs[t].q == cs[t].a * cs[t - 1].q + cs[t - 2].q


def test_legendre_examples():
    r = legendre_bound(golden, 100)
    assert r.N == 11 and r.a_max == 1 and r.convergents[-1].q == 144 and r.convergents[-2].q == 89
    assert r.gap(5) == Fraction(1, 75)
    with pytest.raises(ValueError):
        legendre_bound(golden, 0)


def test_legendre_beta3():
    def beta(p):
        ctx = kfib_context(3, p)
        return -ctx.log_g / ctx.log_alpha

    r = legendre_bound(beta, Fraction("2.27e105"))
    assert r.N <= 230


def test_legendre_gap_property():
    rng = random.Random(11)
    for _ in range(40):
        d = rng.choice([n for n in range(2, 200) if math.isqrt(n) ** 2 != n])
        c = rng.randint(1, 9)

        def tau(p, d=d, c=c):
            return Ball.exact(d, p).sqrt() / c + Fraction(1, 7)

        M = rng.randint(2, 10**4)
        res = legendre_bound(tau, M)
        t = tau(512)
        for s in range(1, min(50, M)):
            gap = res.gap(s)
            for r in range(math.floor(float(t) * s) - 1, math.floor(float(t) * s) + 3):
                assert abs(t - Fraction(r, s)).gt(gap)


# -- reduction ------------------------------------------------------------------


def _sqrt_ball(d, c, shift, p):
    return Ball.exact(d, p).sqrt() / c + shift


class FixedPoint:
    """``value * 2^P`` as an exact integer for ``sqrt(d)/c + shift``; error below 2^-(P-2)."""

    P = 400

    def __init__(self, d, c, shift: Fraction):
        root = math.isqrt(d << (2 * self.P))
        self.v = root // c + (shift.numerator << self.P) // shift.denominator


def brute_force_violations(d1, c1, s1, d2, c2, s2, A, B, lo, hi):
    """Every u in (lo, hi] with ``||u gamma + mu|| < A B^-u`` (up to a 2^-390 margin)."""
    g, m = FixedPoint(d1, c1, s1).v, FixedPoint(d2, c2, s2).v
    one = 1 << FixedPoint.P
    lnB, lnA = math.log(B), math.log(A)
    out = []
    for u in range(lo + 1, hi + 1):
        r = (u * g + m) % one
        dist = min(r, one - r)
        if dist <= (1 << 12):  # within rounding of an integer: count as violation
            out.append(u)
            continue
        # dist/2^P < A B^-u  <=>  u log B < log A - log(dist / 2^P); 1e-9 slack keeps it one-sided.
        if u * lnB < lnA - (math.log(dist) - FixedPoint.P * math.log(2)) + 1e-9:
            out.append(u)
    return out


def test_reduction_soundness_random_instances():
    rng = random.Random(5)
    non_squares = [n for n in range(2, 400) if math.isqrt(n) ** 2 != n]
    done = 0
    while done < 100:
        d1, d2 = rng.sample(non_squares, 2)
        if math.isqrt(d1 * d2) ** 2 == d1 * d2:
            continue
        c1, c2 = rng.randint(1, 5), rng.randint(1, 5)
        s1, s2 = Fraction(rng.randint(0, 9), 10), Fraction(rng.randint(0, 9), 10)
        A, B = rng.randint(1, 10), rng.choice([2, 3, 5])
        M = rng.randint(10, 10**4)
        inst = ReductionInstance(
            gamma=partial(_sqrt_ball, d1, c1, s1),
            mu=partial(_sqrt_ball, d2, c2, s2),
            A=Fraction(A),
            B=lambda p, B=B: Ball.exact(B, p),
            M=M,
        )
        try:
            out = dp_reduce_cell(inst)
        except NoPositiveEpsilon:
            continue
        assert out.q > 6 * M and out.epsilon.is_positive()
        assert brute_force_violations(d1, c1, s1, d2, c2, s2, A, B, out.u_bound, M) == []
        done += 1


def test_tiny_M():
    out = dp_reduce_cell(grid_instance(3, 3, M=1))
    assert out.q > 6 and out.epsilon.is_positive()


def test_desk_cell_against_scan():
    M = 10**6
    out = dp_reduce_cell(grid_instance(3, 3, M=M))
    # Exact scan over u <= M of ||u gamma + mu|| against A B^-u using 2^-300 fixed point.
    P = 300
    g = grid_gamma(3, 3, 600)
    mu = grid_mu(3, 3, 600)
    G = int(Fraction(*g.mid.as_integer_ratio()) * 2**P)
    MU = int(Fraction(*mu.mid.as_integer_ratio()) * 2**P)
    one = 1 << P
    lnB = math.log(2.3) / 1457
    lnA = math.log(3.01)
    for u in range(out.u_bound + 1, M + 1):
        r = (u * G + MU) % one
        dist = min(r, one - r)
        assert dist > 0
        assert u * lnB >= lnA - (math.log(dist) - P * math.log(2)) - 1e-9, u


def test_epsilon_stable_under_doubling():
    inst = grid_instance(100, 10)
    out = dp_reduce_cell(inst, start_index=700)
    q = out.q
    from kfibcert.numerics import dist_to_int

    for prec in (out.epsilon.prec * 2, out.epsilon.prec * 4):
        eps = dist_to_int(inst.mu(prec) * q) - dist_to_int(inst.gamma(prec) * q) * inst.M
        assert eps.is_positive() and eps.overlaps(out.epsilon)


def test_grid_skips_and_aggregates():
    rep = dp_reduce_grid([3, 4], [3, 10], M=10**6, index=20)
    assert (3, 10) in rep.skipped_cells and (4, 10) in rep.skipped_cells
    assert set(rep.outcomes) == {(3, 3), (4, 3)}
    assert rep.min_q <= rep.max_q
    assert rep.max_u_bound == max(o.u_bound for o in rep.outcomes.values())


def test_instance_validation():
    with pytest.raises(ValueError):
        ReductionInstance(gamma=golden, mu=golden, A=Fraction(0), B=lambda p: Ball.exact(2, p), M=5)
    with pytest.raises(ValueError):
        ReductionInstance(gamma=golden, mu=golden, A=Fraction(1), B=lambda p: Ball.exact(1, p), M=5)


def test_no_positive_epsilon():
    # mu = gamma makes ||mu q|| = ||gamma q|| < M ||gamma q|| for every q.
    inst = ReductionInstance(gamma=golden, mu=golden, A=Fraction(1), B=lambda p: Ball.exact(2, p), M=10)
    with pytest.raises(NoPositiveEpsilon):
        dp_reduce_cell(inst, index_cap=40, policy=PrecisionPolicy(256, max_bits=1024))
