"""Dujella-Petho reduction for inequalities ``0 < |u*gamma - v + mu| < A*B^-u``.

Given a convergent ``p/q`` of ``gamma`` with ``q > 6M`` and

    eps = ||mu q|| - M ||gamma q|| > 0,

there are no solutions with ``log(A q / eps) / log B <= u <= M``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from typing import Callable, Iterable

from .contfrac import Convergent, cf_expand
from .kfib import kfib_at
from .numerics import Ball, PrecisionExhausted, PrecisionPolicy, Undecided, dist_to_int, floor_int
from .roots import kfib_context

log = logging.getLogger(__name__)

# Per-cell budget: an unlucky cell gives up instead of escalating to 2^20 bits.
CELL_POLICY = PrecisionPolicy(initial_bits=256, max_bits=1 << 16)
DEFAULT_INDEX_CAP = 300

GRID_A = Fraction("3.01")
GRID_B_BASE = Fraction("2.3")
GRID_B_ROOT = 1457
GRID_M = Fraction("2.64e35")


class NoPositiveEpsilon(RuntimeError):
    pass


@dataclass(frozen=True)
class ReductionInstance:
    gamma: Callable[[int], Ball]
    mu: Callable[[int], Ball]
    A: Fraction
    B: Callable[[int], Ball]
    M: int
    label: tuple = ()

    def __post_init__(self) -> None:
        if Fraction(self.A) <= 0:
            raise ValueError("A must be positive")
        if self.M < 1:
            raise ValueError("M must be a positive integer")
        if not self.B(64).lower() > 1:
            raise ValueError("B must exceed 1")


@dataclass(frozen=True)
class ReductionOutcome:
    label: tuple
    convergent_index: int
    q: int
    epsilon: Ball
    u_bound: int
    mu_dist: Ball
    gamma_term: Ball
    skipped: tuple[int, ...] = ()

    @property
    def m(self):
        return self.label[0] if self.label else None

    @property
    def k(self):
        return self.label[1] if len(self.label) > 1 else None


def _epsilon(inst: ReductionInstance, q: int, policy: PrecisionPolicy):
    """``(eps, ||mu q||, M ||gamma q||)`` at the first precision deciding the sign of eps.

    Returns ``None`` when eps is certified negative or undecidable within budget.
    """
    start = max(policy.initial_bits, 2 * q.bit_length() + 128)
    for prec in policy.schedule(start):
        try:
            mu_d = dist_to_int(inst.mu(prec) * q)
            g_term = dist_to_int(inst.gamma(prec) * q) * inst.M
        except Undecided:
            continue
        eps = mu_d - g_term
        if eps.is_positive():
            return eps, mu_d, g_term
        if eps.is_negative():
            return None
    return None


def lemma_u_bound(A, q: int, eps: Ball, log_B: Ball) -> int:
    """Largest integer that may still carry a solution: ``floor(log(Aq/eps)/log B)``."""
    eps_lo = Ball(eps.lower(), 0, eps.prec)
    v = (Ball.exact(Fraction(A), eps.prec) * q / eps_lo).log() / log_B
    return floor_int(v.upper())


def dp_reduce_cell(
    inst: ReductionInstance,
    start_index: int = 0,
    index_cap: int = DEFAULT_INDEX_CAP,
    policy: PrecisionPolicy = CELL_POLICY,
    convergents: list[Convergent] | None = None,
) -> ReductionOutcome:
    """First convergent at or after ``start_index`` with ``q > 6M`` and ``eps > 0``."""
    count = max(start_index + 2, 16)
    stop = start_index + index_cap
    skipped: list[int] = []
    idx = start_index
    convs = convergents or []
    while idx < stop:
        if len(convs) <= idx:
            count = max(count, idx + 1, 2 * len(convs))
            convs = cf_expand(inst.gamma, min(count, stop), policy)
        c = convs[idx]
        if c.q > 6 * inst.M:
            res = _epsilon(inst, c.q, policy)
            if res is not None:
                eps, mu_d, g_term = res
                log_B = inst.B(eps.prec).log()
                u = lemma_u_bound(inst.A, c.q, eps, log_B)
                return ReductionOutcome(inst.label, idx, c.q, eps, u, mu_d, g_term, tuple(skipped))
            skipped.append(idx)
        idx += 1
    raise NoPositiveEpsilon(f"no index in [{start_index}, {stop}) certified eps > 0 for {inst.label}")


# -- the small-m grid ---------------------------------------------------------


def _log_F(m: int, k: int, prec: int) -> Ball:
    return Ball.exact(kfib_at(k, m + 1), prec).log()


def grid_gamma(m: int, k: int, prec: int) -> Ball:
    """``log alpha / log F_{m+1}``."""
    ctx = kfib_context(k, prec)
    return ctx.log_alpha / _log_F(m, k, ctx.prec)


def grid_mu(m: int, k: int, prec: int) -> Ball:
    """``-log(alpha / g) / log F_{m+1}``."""
    ctx = kfib_context(k, prec)
    return -(ctx.log_alpha - ctx.g.log()) / _log_F(m, k, ctx.prec)


def grid_B(prec: int, base: Fraction = GRID_B_BASE, root: int = GRID_B_ROOT) -> Ball:
    return Ball.exact(base, prec) ** Fraction(1, root)


def grid_instance(m: int, k: int, M=GRID_M, A=GRID_A, base=GRID_B_BASE, root: int = GRID_B_ROOT) -> ReductionInstance:
    return ReductionInstance(
        gamma=partial(grid_gamma, m, k),
        mu=partial(grid_mu, m, k),
        A=Fraction(A),
        B=partial(grid_B, base=Fraction(base), root=root),
        M=math.floor(Fraction(M)),
        label=(m, k),
    )


@dataclass
class GridReport:
    outcomes: dict[tuple[int, int], ReductionOutcome] = field(default_factory=dict)
    errors: dict[tuple[int, int], str] = field(default_factory=dict)
    skipped_cells: list[tuple[int, int]] = field(default_factory=list)

    @property
    def min_q(self) -> int | None:
        return min((o.q for o in self.outcomes.values()), default=None)

    @property
    def max_q(self) -> int | None:
        return max((o.q for o in self.outcomes.values()), default=None)

    @property
    def min_epsilon(self) -> Ball | None:
        eps = [o.epsilon for o in self.outcomes.values()]
        return min(eps, key=lambda b: b.lower()) if eps else None

    @property
    def max_u_bound(self) -> int | None:
        return max((o.u_bound for o in self.outcomes.values()), default=None)


def _run_cell(args) -> tuple[tuple[int, int], ReductionOutcome | None, str | None]:
    m, k, M, A, base, root, index = args
    try:
        out = dp_reduce_cell(grid_instance(m, k, M, A, base, root), start_index=index)
        return (m, k), out, None
    except (NoPositiveEpsilon, PrecisionExhausted) as exc:
        return (m, k), None, f"{type(exc).__name__}: {exc}"


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("KFIBCERT_WORKERS", default)))
    except ValueError:
        return default


def dp_reduce_grid(
    m_range: Iterable[int],
    k_range: Iterable[int],
    M=GRID_M,
    A=GRID_A,
    base=GRID_B_BASE,
    root: int = GRID_B_ROOT,
    index: int = 700,
    workers: int | None = None,
    on_cell: Callable[[tuple[int, int], ReductionOutcome | None, str | None], None] | None = None,
) -> GridReport:
    """Run :func:`dp_reduce_cell` over every admissible ``(m, k)`` with ``k <= m``.

    Cell failures are collected in ``errors``; they never abort the grid.
    """
    m_values, k_values = sorted(set(m_range)), sorted(set(k_range))
    if not m_values or not k_values:
        raise ValueError("grid ranges must be nonempty")
    report = GridReport()
    jobs = []
    for m in m_values:
        for k in k_values:
            if k > m:
                report.skipped_cells.append((m, k))
                continue
            jobs.append((m, k, M, A, base, root, index))
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        results = map(_run_cell, jobs)
    for key, out, err in results:
        if out is not None:
            report.outcomes[key] = out
        else:
            report.errors[key] = err
            log.warning("cell %s failed: %s", key, err)
        if on_cell is not None:
            on_cell(key, out, err)
    report.outcomes = dict(sorted(report.outcomes.items()))
    return report
