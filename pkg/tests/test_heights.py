import math
import random
from fractions import Fraction

import pytest

from kfibcert.heights import (
    PUBLISHED,
    ChainBroken,
    InvalidInstance,
    LinearFormInstance,
    bound_chain,
    lmn_exponent,
    log_height_constants,
    logarithmic_height,
    matveev_constant,
    matveev_exponent,
    sl_absorb,
)
from kfibcert.kfib import kfib_at
from kfibcert.numerics import Ball, certify_le
from kfibcert.roots import kfib_context


def B(v, prec=256):
    return Ball.exact(Fraction(v), prec)


def test_height_constants():
    golden = kfib_context(2)
    h = log_height_constants(golden, 3)
    assert abs(float(h.h_alpha) - 0.2406059125298) < 1e-12
    h3 = log_height_constants(kfib_context(3), 5)
    assert abs(float(h3.h_g_bound) - 3 * math.log(3)) < 1e-14
    for k in (3, 4, 10, 74):
        ctx = kfib_context(k)
        for m in (3, 10, 100, 1457):
            hF = log_height_constants(ctx, m).h_F
            assert certify_le(hF, m * ctx.log_alpha) and hF.lt(Fraction(7, 10) * m)
    with pytest.raises(ValueError):
        log_height_constants(golden, 2)


def test_logarithmic_height_low_degree():
    assert abs(logarithmic_height([1, -1, -1]) - math.log((1 + 5**0.5) / 2) / 2) < 1e-12
    assert abs(logarithmic_height([1, 0, -2]) - math.log(2) / 2) < 1e-12
    assert abs(logarithmic_height([2, -3]) - math.log(3)) < 1e-12
    trib = float(kfib_context(3).log_alpha) / 3
    assert abs(logarithmic_height([1, -1, -1, -1]) - trib) < 1e-12


def test_matveev_examples():
    inst = LinearFormInstance(D=1, b=(1, -1), A=(B("0.16"), B("0.16")), B=B(1))
    E = matveev_exponent(inst)
    want = B("1.4") * 30**5 * B(2) ** Fraction(9, 2) * B("0.0256")
    assert E.overlaps(want)
    assert abs(float(E) - 1.4 * 30**5 * 2**4.5 * 0.0256) / float(E) < 1e-14
    doubled = LinearFormInstance(D=1, b=(1, -1), A=(B("0.32"), B("0.16")), B=B(1))
    assert abs(float(matveev_exponent(doubled)) / float(E) - 2) < 1e-12


def test_matveev_errors():
    with pytest.raises(InvalidInstance):
        matveev_exponent(LinearFormInstance(D=1, b=(1, -1), A=(B("0.1"), B("0.16")), B=B(1)))
    with pytest.raises(InvalidInstance):
        matveev_exponent(LinearFormInstance(D=1, b=(5, -1), A=(B("0.16"), B("0.16")), B=B(3)))
    with pytest.raises(InvalidInstance):
        matveev_exponent(LinearFormInstance(D=1, b=(1,), A=(B(1),), B=B(1)))


def test_matveev_instantiation_constant():
    # The small-m instance against its factored form.
    k, m, n, x = 5, 40, 100, 3
    ctx = kfib_context(k)
    inst = LinearFormInstance(
        D=k,
        b=(-x, n - 1, 1),
        A=(B("0.7") * k * m, B("0.7"), 3 * k * B(k).log()),
        B=B(n - 1),
    )
    E = matveev_exponent(inst)
    factored = matveev_constant(3) * B("0.7") ** 2 * 3 * k**4 * m * B(k).log() * (1 + B(k).log()) * (1 + B(n - 1).log())
    assert abs(float(E) / float(factored) - 1) < 1e-12
    assert ctx.log_alpha.lt(Fraction(7, 10))


def test_lmn_examples():
    E = lmn_exponent(1, B(1), B(1), B(1))
    assert abs(float(E) - 24.34 * 441) < 1e-9
    # k = 3, x = 2: the max picks 21/k = 7 over log(2.8).
    k, x = 3, 2
    E3 = lmn_exponent(k, 4 * B(k).log(), B(Fraction(1, k)), B("1.2") * x)
    assert abs(float(E3) - 24.34 * k**4 * 49 * 4 * math.log(k) / k) / float(E3) < 1e-12
    with pytest.raises(InvalidInstance):
        lmn_exponent(2, B(0), B(1), B(1))
    base = float(lmn_exponent(5, B(2), B(3), B(100)))
    for bumped in (lmn_exponent(5, B(3), B(3), B(100)), lmn_exponent(5, B(2), B(4), B(100)), lmn_exponent(5, B(2), B(3), B(10**6))):
        assert float(bumped) >= base


def test_sl_absorb():
    assert abs(float(sl_absorb(1, B(100))) - 200 * math.log(100)) < 1e-9
    with pytest.raises(InvalidInstance):
        sl_absorb(1, B(4))
    with pytest.raises(InvalidInstance):
        sl_absorb(2, B(256))
    rng = random.Random(3)
    checked = 0
    while checked < 1000:
        r = rng.choice([1, 2])
        a = Fraction(rng.randint(3, 10**15))
        T = B(a) / B(a).log() ** r * Fraction(101, 100)
        if not T.gt((4 * r * r) ** r):
            continue
        assert sl_absorb(r, T).gt(a)
        checked += 1


def test_small_m_chain():
    rep = bound_chain("small_m")
    assert rep.x_bound.lt(Fraction("1.81e32"))
    assert rep.n_bound < Fraction("2.63e35") and rep.k_bound <= 74
    assert [s.name for s in rep.errata] == ["exp-gamma1"]
    stage = rep.stage("logT-absorb")
    assert stage.holds
    assert rep.constants["dp_A"].lt(Fraction("3.01"))
    for key in ("matveev_x", "absorb_T", "x_of_m", "x_small", "n_small"):
        assert rep.constants[key].lt(PUBLISHED[key]), key


def test_large_m_chain():
    rep = bound_chain("large_m")
    assert rep.x_bound.lt(Fraction("2.27e105"))
    assert rep.k_bound < 242
    for key in ("l_coeff", "l_21k", "m_21k", "l_logx", "x_of_k", "m_over_log2", "m_of_k", "x_k15"):
        assert rep.constants[key].lt(PUBLISHED[key]), key
    assert {s.name for s in rep.errata} == {"exp-gamma1", "x-logk-cube"}
    assert rep.stage("x-logk-cube").lhs.gt(PUBLISHED["x_logk_cube"])


def test_corrupted_constant_breaks_chain():
    with pytest.raises(ChainBroken) as info:
        bound_chain("small_m", published={"x_of_m": "5e13"})
    assert info.value.stage.name == "x-of-m"
    with pytest.raises(ChainBroken):
        bound_chain("large_m", published={"x_abs": "9e104"})


def test_x_min_precondition():
    with pytest.raises(ChainBroken) as info:
        bound_chain("large_m", x_min=2)
    assert info.value.stage.name == "x-min"
    with pytest.raises(ChainBroken) as info:
        bound_chain("large_m", x_min=3)
    assert info.value.stage.name == "lambda2-tiny"


def test_unknown_scenario():
    with pytest.raises(ValueError):
        bound_chain("medium_m")


def test_h_F_below_published_height():
    assert B(kfib_at(74, 1458)).log().lt(Fraction(7, 10) * 1457)
