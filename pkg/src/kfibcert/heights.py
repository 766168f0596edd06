"""Heights, lower bounds for linear forms in logarithms, and the bound chains.

The chains re-derive every intermediate constant with ball arithmetic and
compare the result to the published value, which acts only as a regression
expectation.  Downstream stages consume the *recomputed* constant, which is
never larger than the published one once its stage passes.

Auxiliary absorption inequalities of the form ``f(v) < c * g(v)`` are checked
at the boundary of their domain.  Each is monotone in the direction that
makes the boundary the worst case; the argument is recorded in the stage's
``note``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath

from .kfib import kfib_at
from .numerics import Ball, Order, PrecisionExhausted, certified_compare, certify_le, floor_int
from .roots import KFibContext, kfib_context

PREC = 256


class InvalidInstance(ValueError):
    pass


def _b(v, prec: int = PREC) -> Ball:
    return v if isinstance(v, Ball) else Ball.exact(Fraction(v) if isinstance(v, str) else v, prec)


def _log(v, prec: int = PREC) -> Ball:
    return _b(v, prec).log()


def _lo(b: Ball) -> Fraction:
    return Fraction(*b.lower().as_integer_ratio())


def _hi(b: Ball) -> Fraction:
    return Fraction(*b.upper().as_integer_ratio())


def ball_max(*balls: Ball) -> Ball:
    lo = max(b.lower() for b in balls)
    hi = max(b.upper() for b in balls)
    return Ball.from_endpoints(lo, hi, max(b.prec for b in balls))


# -- heights -----------------------------------------------------------------


def logarithmic_height(coeffs: Sequence[int], dps: int = 50) -> float:
    """Height of a root of the primitive integer polynomial ``coeffs`` (leading first).

    Uses floating-point conjugates; meant for low-degree sanity checks only.
    """
    if len(coeffs) < 2 or coeffs[0] == 0:
        raise ValueError("need a non-constant polynomial with nonzero leading coefficient")
    with mpmath.workdps(dps):
        roots = mpmath.polyroots([mpmath.mpf(c) for c in coeffs], maxsteps=200, extraprec=2 * dps)
        d = len(coeffs) - 1
        total = mpmath.log(abs(coeffs[0])) + sum(mpmath.log(max(abs(r), 1)) for r in roots)
        return float(total / d)


@dataclass(frozen=True)
class HeightConstants:
    h_alpha: Ball
    h_g_bound: Ball
    h_F: Ball


def log_height_constants(ctx: KFibContext, m: int) -> HeightConstants:
    """Heights of ``alpha``, a bound for that of ``g``, and the height of ``F_{m+1}``.

    ``alpha`` is a unit whose conjugates other than itself lie inside the
    unit circle, so ``h(alpha) = log(alpha) / k``.  The bound ``3 log k`` for
    ``h(g)`` is quoted, not derived.
    """
    if m < 3:
        raise ValueError("m must be >= 3")
    k = ctx.k
    return HeightConstants(
        h_alpha=ctx.log_alpha / k,
        h_g_bound=3 * _log(k, ctx.prec),
        h_F=_log(kfib_at(k, m + 1), ctx.prec),
    )


# -- lower bounds ------------------------------------------------------------


@dataclass(frozen=True)
class LinearFormInstance:
    D: int
    b: tuple[int, ...]
    A: tuple[Ball, ...]
    B: Ball

    @property
    def t(self) -> int:
        return len(self.b)


def matveev_constant(t: int, prec: int = PREC) -> Ball:
    """``1.4 * 30^(t+3) * t^4.5``."""
    return _b("1.4", prec) * 30 ** (t + 3) * _b(t, prec) ** Fraction(9, 2)


def matveev_exponent(inst: LinearFormInstance, prec: int = PREC) -> Ball:
    """E with ``|Lambda| >= exp(-E)`` for a nonzero ``Lambda = prod gamma_i^b_i - 1``."""
    if inst.t not in (2, 3):
        raise InvalidInstance(f"only t in {{2, 3}} is supported, got t={inst.t}")
    if len(inst.A) != inst.t:
        raise InvalidInstance("one height bound per term is required")
    for a in inst.A:
        if _hi(_b(a, prec)) < Fraction(16, 100):
            raise InvalidInstance(f"height bound {a} below 0.16")
    bmax = max(abs(x) for x in inst.b)
    B = _b(inst.B, prec)
    if _hi(B) < bmax:
        raise InvalidInstance(f"B={B} smaller than max |b_i| = {bmax}")
    D = _b(inst.D, prec)
    E = matveev_constant(inst.t, prec) * D * D * (1 + D.log()) * (1 + B.log())
    for a in inst.A:
        E = E * _b(a, prec)
    return E


def lmn_exponent(D: int, logB1, logB2, b_prime, prec: int = PREC) -> Ball:
    """E with ``log|Gamma| > -E`` for two multiplicatively independent logs."""
    l1, l2, bp = _b(logB1, prec), _b(logB2, prec), _b(b_prime, prec)
    if not (l1.is_positive() and l2.is_positive()):
        raise InvalidInstance("log B_i must be positive")
    Db = _b(D, prec)
    inner = ball_max(bp.log() + _b("0.14", prec), _b(21, prec) / Db, _b(Fraction(1, 2), prec))
    return _b("24.34", prec) * Db**4 * inner * inner * l1 * l2


def sl_absorb(r: int, T, prec: int = PREC) -> Ball:
    """``2^r T (log T)^r``: bounds every ``a`` with ``a / (log a)^r < T``."""
    if r < 1:
        raise InvalidInstance("r must be >= 1")
    Tb = _b(T, prec)
    if _lo(Tb) <= (4 * r * r) ** r:
        raise InvalidInstance(f"T must exceed (4r^2)^r = {(4 * r * r) ** r}")
    return 2**r * Tb * Tb.log() ** r


# -- bound chains ------------------------------------------------------------

PUBLISHED: dict[str, Fraction] = {
    k: Fraction(v)
    for k, v in {
        "matveev_x": "1.04e12",
        "absorb_T": "1.1e12",
        "logT_absorb": "28",
        "x_of_m": "7.1e13",
        "x_small": "1.81e32",
        "n_small": "2.63e35",
        "M": "2.64e35",
        "k_small": "74",
        "lambda1_small": "0.379",
        "exp_gamma1": "1.5",
        "dp_A": "3.01",
        "y_tail": "0.1",
        "upper": "2.11",
        "lambda2": "3.11",
        "lmn": "97.4",
        "b_prime": "1.2",
        "log_1.4x": "1.02",
        "l_coeff": "174.1",
        "l_21k": "7.7e4",
        "m_21k": "1.55e5",
        "l_logx": "3.5e2",
        "x_logk_sq": "72",
        "x_of_k": "1.01e5",
        "m_logm_sq": "1.1e2",
        "m_over_log2": "7.72e4",
        "m_logk_sq": "1.8e2",
        "m_of_k": "5.6e7",
        "x_logk_cube": "4.7e3",
        "x_k15": "1.85e56",
        "x_abs": "2.27e105",
        "k_abs": "242",
        "lambda2_tiny": "1.9e-10",
        "alpha_728": "2.32e71",
        "legendre_gap": "4.14e70",
    }.items()
}

SMALL_M_MAX = 1457
LARGE_M_MIN = 1458


class ChainBroken(RuntimeError):
    def __init__(self, stage: "Stage"):
        super().__init__(f"stage {stage.name!r} failed: {stage.claim} ({stage.note})")
        self.stage = stage


@dataclass
class Stage:
    name: str
    claim: str
    lhs: Ball
    rhs: Ball
    holds: bool
    note: str = ""
    repaired: bool = False


@dataclass
class BoundChainReport:
    scenario: str
    parameters: dict
    stages: list[Stage] = field(default_factory=list)
    x_bound: Ball | None = None
    n_bound: int | None = None
    m_bound: int | None = None
    k_bound: int | None = None
    constants: dict[str, Ball] = field(default_factory=dict)

    @property
    def errata(self) -> list[Stage]:
        return [s for s in self.stages if s.repaired]

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


class _Chain:
    def __init__(self, report: BoundChainReport, published: dict[str, Fraction], prec: int):
        self.report = report
        self.pub = published
        self.prec = prec

    def b(self, v) -> Ball:
        return _b(v, self.prec)

    def P(self, key: str) -> Ball:
        return self.b(self.pub[key])

    def check(self, name, claim, lhs, rhs, strict=True, note="", repair: str | None = None) -> Stage:
        exact = all(isinstance(v, (int, Fraction)) for v in (lhs, rhs))
        if exact:
            holds = lhs < rhs if strict else lhs <= rhs
        lhs, rhs = self.b(lhs), self.b(rhs)
        try:
            if exact:
                pass
            elif strict:
                holds = certified_compare(lhs, rhs) is Order.LESS
            else:
                holds = certify_le(lhs, rhs)
        except PrecisionExhausted:
            holds = False
            note = (note + "; " if note else "") + "undecided at working precision"
        stage = Stage(name, claim, lhs, rhs, holds, note)
        if not holds and repair is not None:
            stage.repaired = True
            stage.note = (note + "; " if note else "") + repair
        self.report.stages.append(stage)
        if not holds and repair is None:
            raise ChainBroken(stage)
        return stage

    def keep(self, name: str, value: Ball) -> Ball:
        self.report.constants[name] = value
        return value


def _small_m(ch: _Chain) -> Ball:
    b, P = ch.b, ch.P
    log = lambda v: b(v).log()  # noqa: E731
    l3, l7 = log(3), log(7)

    # Matveev with t=3, D=k, A = (0.7km, 0.7, 3k log k), B = n-1 against |Lambda_1| < 2/2.3^x.
    c_mat = matveev_constant(3, ch.prec) * b("0.7") * b("0.7") * 3
    ch.check(
        "one-plus-log",
        "1 + log(n-1) < 2 log(mx+1) at m=3, x=2",
        1 + log(6),
        2 * l7,
        note="n-1 <= mx and (mx+1)^2/(mx) grows with mx",
    )
    rho = (1 + l3) / l3  # sup of (1 + log k)/log k over k >= 3
    smallest = 3 * 81 * l3 * l3 * l7  # m k^4 (log k)^2 log(mx+1) at m=k=3, x=2
    c1 = ch.keep("matveev_x", 2 * c_mat * rho / log("2.3") + log(2) / log("2.3") / smallest)
    ch.check("matveev-x", "x < c m k^4 (log k)^2 log(mx+1)", c1, P("matveev_x"))

    c2 = ch.keep("absorb_T", c1 + 1 / (3 * smallest))
    ch.check("absorb-T", "(mx+1)/log(mx+1) < T = c m^2 k^4 (log k)^2", c2, P("absorb_T"))
    ch.check("absorb-T-pre", "T > 4 (absorption with r=1)", 4, c2 * 9 * 81 * l3 * l3)
    ch.check(
        "logT-absorb",
        "log c + 6 log m + 2 log log m < 32 log m at m=3",
        c2.log() + 6 * l3 + 2 * l3.log(),
        32 * l3,
        note="32L - 6L - 2 log L grows for L = log m > 1/13",
    )
    ch.check("logT-const", "log T-coefficient <= 28", c2.log(), P("logT_absorb"))
    c8 = ch.keep("x_of_m", 64 * c2)
    ch.check("x-of-m", "x < c m^5 (log m)^3", c8, P("x_of_m"))

    mmax = SMALL_M_MAX
    x_small = ch.keep("x_small", c8 * mmax**5 * log(mmax) ** 3)
    ch.check("x-small", f"x <= c * {mmax}^5 (log {mmax})^3", x_small, P("x_small"))
    n_small = ch.keep("n_small", mmax * x_small + 1)
    ch.check("n-small", "n <= mx + 1", n_small, P("n_small"))
    ch.check("n-below-M", "n bound below reduction M", n_small, P("M"))
    k_small = x_small.log()
    ch.check("k-small", "k <= log x", k_small, P("k_small") + 1, note="integer k <= floor(log x)")

    lam = ch.keep("lambda1_small", 2 / b("2.3") ** 2)
    ch.check("lambda1-small", "|Lambda_1| < 2/2.3^x <= 0.379 for x >= 2", lam, P("lambda1_small"))
    exp_g = ch.keep("exp_gamma1", 1 / (1 - lam))
    ch.check(
        "exp-gamma1",
        "e^|Gamma_1| < 1.5",
        exp_g,
        P("exp_gamma1"),
        note="e^|Gamma_1| <= 1/(1-|Lambda_1|) ~ 1.61 at x = 2",
        repair="bound holds for x >= 3 only; the reduction constant A is re-derived with the true factor",
    )
    A_need = ch.keep("dp_A", 2 * exp_g * b("2.3") ** Fraction(1, mmax) / log(4))
    ch.check(
        "dp-A",
        "A = 2 e^|Gamma_1| 2.3^(1/1457) / log F_{m+1} <= 3.01",
        A_need,
        P("dp_A"),
        note="log F_{m+1} >= log F_4 = log 4 for m, k >= 3",
    )
    return x_small


def _large_m(ch: _Chain, x_min: int, c8: Ball, k_max_scan: int) -> tuple[Ball, int, int]:
    b, P = ch.b, ch.P
    log = lambda v: b(v).log()  # noqa: E731
    a74 = b(Fraction(7, 4))
    la = a74.log()
    l3 = log(3)
    m0 = LARGE_M_MIN

    ch.check(
        "x-min",
        "large-m analysis assumes x >= 3",
        3,
        x_min,
        strict=False,
        note="several absorption steps need x >= 3; x_min is a scenario parameter",
    )
    ch.check(
        "y-tail",
        "c m^5 (log m)^3 < (7/4)^((m-1)/2) at m=1458",
        c8.log() + 5 * log(m0) + 3 * log(m0).log(),
        (m0 - 1) * la / 2,
        note="difference grows for m >= 1458",
    )
    g_min = min((kfib_context(k, ch.prec).g for k in range(3, k_max_scan + 1)), key=lambda g: g.lower())
    ch.check(
        "g-half",
        "g > 1/2",
        Fraction(1, 2),
        g_min,
        note="2g - 1 has the sign of (2 - alpha)(k - 1); scanned k <= %d" % k_max_scan,
    )
    ch.check("alpha-2x", "2 (7/4)^(-2x) < 0.1", 2 * a74 ** (-2 * x_min), P("y_tail"))
    ch.check(
        "tail-1e3",
        "2 g^x alpha^(mx-(m-2)/2) > 10^3 at m=1458, x=2",
        3 * log(10),
        log(2) - 2 * log(2) + (2 * m0 - (m0 - 2) // 2) * la,
    )
    up = ch.keep("upper", 2 / a74 + b("0.1") + b("0.001"))
    ch.check("upper", "2/alpha + 0.1 + 0.001 <= 2.11", up, P("upper"), strict=False)
    ch.check("lambda2", "2.11 + 1 <= 3.11", ch.pub["upper"] + 1, ch.pub["lambda2"], strict=False)
    ch.check("logB1", "max(h(g), |log g|/k, 1/k) < 4 log k at k=3", ball_max(3 * l3, log(2) / 3, b(Fraction(1, 3))), 4 * l3)
    ch.check("logB2", "log alpha < 1, so log B_2 = 1/k", log(2), 1)
    bp = ch.keep("b_prime", 1 + 1 / (2 * 3 * l3))
    ch.check("b-prime", "(x-1) + 2x/(4k log k) < 1.2x", bp, P("b_prime"), strict=False)
    lmn = ch.keep("lmn", 4 * b("24.34"))
    ch.check("lmn", "24.34 * 4 <= 97.4", 4 * Fraction("24.34"), ch.pub["lmn"], strict=False)
    ch.check("lmn-1.4", "1.2 e^0.14 < 1.4", b("1.2") * b("0.14").exp(), b("1.4"))
    ch.check("max-not-half", "log(1.4x) > 1.02 > 1/2 for x >= 2", P("log_1.4x"), log("2.8"))

    worst = 27 * l3 * 49  # k^3 log k max(21/k, log 2.8)^2 is smallest at k=3
    cl = ch.keep("l_coeff", (P("lmn") + log("3.11") / worst) / la)
    ch.check("l-coeff", "l < c k^3 log k (max)^2", cl, P("l_coeff"))

    c22 = ch.keep("l_21k", cl * 441)
    ch.check("l-21k", "l < c k log k when the max is 21/k", c22, P("l_21k"))
    ch.check("m-1.002", "m - 2 > m/1.002 for m >= 1458", m0, b("1.002") * (m0 - 2))
    c24 = ch.keep("m_21k", b("1.002") * 2 * c22)
    ch.check("m-21k", "m < c k log k", c24, P("m_21k"))

    ch.check(
        "log-1.4x",
        "log(1.4x) < 1.4 log x at x = x_min",
        log("1.4") + log(x_min),
        b("1.4") * log(x_min),
        note="0.4 log x - log 1.4 grows with x; false at x = 2",
    )
    clx = ch.keep("l_logx", cl * b("1.96"))
    ch.check("l-logx", "l < c k^3 log k (log x)^2", clx, P("l_logx"))

    ch.check("absorb-x-pre", "T = c k^3 log k > 256 at k=3", 256, clx * 27 * l3)
    r31 = ch.keep("x_logk_sq", ((clx.log() + 3 * l3 + l3.log()) / l3) ** 2)
    ch.check(
        "x-logk-sq",
        "(log c + 3 log k + log log k)^2 < r (log k)^2 at k=3",
        r31,
        P("x_logk_sq"),
        note="ratio decreases in k",
    )
    c31 = ch.keep("x_of_k", 4 * clx * r31)
    ch.check("x-of-k", "x < c k^3 (log k)^3", c31, P("x_of_k"))

    s33 = ch.keep("m_logm_sq", ((c8.log() + 5 * log(m0) + 3 * log(m0).log()) / log(m0)) ** 2)
    ch.check(
        "m-logm-sq",
        "(log c + 5 log m + 3 log log m)^2 < s (log m)^2 at m=1458",
        s33,
        P("m_logm_sq"),
        note="ratio decreases in m",
    )
    c33 = ch.keep("m_over_log2", b("1.002") * 2 * clx * s33)
    ch.check("m-over-log2", "m/(log m)^2 < c k^3 log k", c33, P("m_over_log2"))

    ch.check("absorb-m-pre", "T = c k^3 log k > 256 at k=3", 256, c33 * 27 * l3)
    u34 = ch.keep("m_logk_sq", ((c33.log() + 3 * l3 + l3.log()) / l3) ** 2)
    ch.check("m-logk-sq", "(log c + 3 log k + log log k)^2 < u (log k)^2 at k=3", u34, P("m_logk_sq"))
    c34 = ch.keep("m_of_k", 4 * c33 * u34)
    ch.check("m-of-k", "m < c k^3 (log k)^3", c34, P("m_of_k"))

    def cube_ratio(k: int) -> Ball:
        lk = log(k)
        return ((c34.log() + 3 * lk + 3 * lk.log()) / lk) ** 3

    ch.check(
        "x-logk-cube",
        "(log c + 3 log k + 3 log log k)^3 < 4.7e3 (log k)^3 at k=3",
        cube_ratio(3),
        P("x_logk_cube"),
        note="ratio decreases in k",
        repair="applied for k >= 4 only; k = 3 is bounded directly",
    )
    w4 = ch.keep("x_logk_cube", cube_ratio(4))
    ch.check("x-logk-cube-k4", "the same absorption at k=4", w4, P("x_logk_cube"))
    c35 = ch.keep("x_k15", c8 * c34**5 * w4)
    ch.check("x-k15", "x < c k^15 (log k)^18 for k >= 4", c35, P("x_k15"))
    m3 = c34 * 27 * l3**3
    x3 = ch.keep("x_k3", c8 * m3**5 * m3.log() ** 3)

    # x < c35 (log x)^15 (log log x)^18: f(L) = L - log c35 - 15 log L - 18 log log L grows for L >= 20.
    def f(L: Ball) -> Ball:
        return L - c35.log() - 15 * L.log() - 18 * L.log().log()

    lo, hi = Fraction(100), Fraction(400)
    while hi - lo > Fraction(1, 10**9):
        mid = (lo + hi) / 2
        if f(b(mid)).is_positive():
            hi = mid
        else:
            lo = mid
    ch.check("abs-x-root", "x >= bound implies x > c (log x)^15 (log log x)^18", 0, f(b(hi)))
    x_abs = ch.keep("x_abs", b(hi).exp())
    ch.check("abs-x-k3", "k = 3 branch stays below the absolute bound", x3, x_abs)
    ch.check("abs-x", "x < 2.27e105", x_abs, P("x_abs"))
    ch.check("abs-x-published", "x = 2.27e105 already violates the k-free inequality", 0, f(P("x_abs").log()))
    log_x = ch.keep("k_abs_real", x_abs.log())
    k_bound = floor_int(log_x.upper())
    ch.check(
        "k-abs",
        "k <= floor(log x) <= 242",
        k_bound,
        P("k_abs"),
        strict=False,
        note=f"log of the x bound is {log_x.mid_str(6)}; the integer bound is what is used downstream",
    )

    # Legendre preparation.
    alpha3 = Ball(kfib_context(3, ch.prec).alpha.lower(), 0, ch.prec)
    tiny = ch.keep("lambda2_tiny", 1 / alpha3 ** (2 * x_min) + P("upper") / alpha3 ** ((m0 - 2) // 2))
    ch.check(
        "lambda2-tiny",
        "1/alpha^(2x) + 2.11/alpha^728 < 1.9e-10",
        tiny,
        P("lambda2_tiny"),
        note="alpha(k) >= alpha(3) for k >= 3; uses x >= x_min",
    )
    ch.check("alpha-728", "(7/4)^728 > 2.32e71 * x", P("alpha_728") * x_abs, a74 ** ((m0 - 2) // 2))
    ch.check(
        "alpha-2x-150",
        "alpha^(2x) > 2.32e71 x for x > 150",
        P("alpha_728").log() + log(151),
        302 * alpha3.log(),
        note="2x log alpha - log x grows in x",
    )
    gap = ch.keep("legendre_gap", P("alpha_728") * alpha3.log() / (2 * (1 + P("lambda2_tiny"))))
    ch.check("legendre-gap", "right side of the Legendre inequality is below 1/(4.14e70 (x-1)^2)", P("legendre_gap"), gap, strict=False)

    m_bound = floor_int((c34 * k_bound**3 * log(k_bound) ** 3).upper())
    return x_abs, k_bound, m_bound


def bound_chain(
    scenario: str,
    published: dict | None = None,
    x_min: int = 20,
    prec: int = PREC,
    k_max_scan: int = 242,
) -> BoundChainReport:
    """Re-derive the explicit bounds for ``scenario`` in {"small_m", "large_m"}.

    ``published`` overrides entries of :data:`PUBLISHED`.  Raises
    :class:`ChainBroken` at the first stage whose inequality cannot be
    certified and has no recorded repair.
    """
    pub = dict(PUBLISHED)
    if published:
        pub.update({k: Fraction(v) for k, v in published.items()})
    if scenario not in ("small_m", "large_m"):
        raise ValueError(f"unknown scenario {scenario!r}")
    params = {"x_min": x_min, "prec": prec}
    if scenario == "small_m":
        params.update(m_range=(3, SMALL_M_MAX))
    else:
        params.update(m_min=LARGE_M_MIN, k_max_scan=k_max_scan)
    report = BoundChainReport(scenario, params)
    ch = _Chain(report, pub, prec)
    x_small = _small_m(ch)
    if scenario == "small_m":
        report.x_bound = x_small
        report.n_bound = floor_int(report.constants["n_small"].upper())
        report.k_bound = floor_int(x_small.log().upper())
        report.m_bound = SMALL_M_MAX
        return report
    c8 = report.constants["x_of_m"]
    x_abs, k_bound, m_bound = _large_m(ch, x_min, c8, k_max_scan)
    report.x_bound, report.k_bound, report.m_bound = x_abs, k_bound, m_bound
    return report
