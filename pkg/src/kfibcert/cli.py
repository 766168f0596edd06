"""Command-line driver: one certificate per stage, written to an append-only log.

Exit codes: 0 verified, 1 failed, 2 error, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Callable

from . import __version__
from .certificate import Certificate, CertificateLog, Quantity, StageName, Verdict, emit
from .contfrac import cf_expand
from .heights import ChainBroken, bound_chain, log_height_constants
from .kfib import kfib_at, kfib_sequence, ratio_check
from .numerics import Ball, PrecisionExhausted, certify_le
from .reduction import GRID_A, GRID_M, dp_reduce_grid
from .roots import check_size_bounds, g_norm, kfib_context, root_lower_bracket
from .search import DEFAULT_BUDGET, DEFAULT_MODULI, SearchWindow, WindowTooLarge, exhaustive_search, final_min_scan

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("kfibcert")

EXIT = {Verdict.VERIFIED: 0, Verdict.FAILED: 1, Verdict.ERROR: 2}
EXIT_CONFIG = 3


class ConfigInvalid(ValueError):
    pass


# -- config parsing -----------------------------------------------------------


def parse_range(v) -> tuple[int, int]:
    """``"3..5"``, ``"7"``, ``7`` or ``[3, 5]`` to an inclusive pair."""
    if isinstance(v, int) and not isinstance(v, bool):
        return v, v
    if isinstance(v, (list, tuple)) and len(v) == 2:
        lo, hi = int(v[0]), int(v[1])
    elif isinstance(v, str):
        lo_s, sep, hi_s = v.partition("..")
        try:
            lo = int(lo_s)
            hi = int(hi_s) if sep else lo
        except ValueError:
            raise ConfigInvalid(f"bad range {v!r}") from None
    else:
        raise ConfigInvalid(f"bad range {v!r}")
    if lo > hi:
        raise ConfigInvalid(f"empty range {v!r}")
    return lo, hi


def parse_number(v) -> Fraction:
    try:
        return Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        raise ConfigInvalid(f"bad number {v!r}") from None


def parse_int(v) -> int:
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigInvalid(f"bad integer {v!r}") from None


def parse_moduli(v) -> tuple[int, ...]:
    if v in ("default", None):
        return DEFAULT_MODULI
    if v in ("none", "exact", ""):
        return ()
    if isinstance(v, str):
        v = v.split(",")
    return tuple(parse_int(p) for p in v)


def parse_published(v) -> dict:
    if not isinstance(v, dict):
        raise ConfigInvalid("published overrides must be a table")
    return {str(k): parse_number(x) for k, x in v.items()}


SCHEMAS: dict[str, dict[str, tuple[Callable, object]]] = {
    "fib": {"k": (parse_range, "2..100"), "ratio_k": (parse_range, "3..30"), "ratio_m": (parse_range, "3..300")},
    "root": {"k": (parse_range, "2..30"), "n": (parse_int, 300), "prec": (parse_int, 256)},
    "heights": {"k": (parse_range, "3..10"), "m": (parse_range, "3..300"), "prec": (parse_int, 256)},
    "bounds": {
        "scenario": (str, "both"),
        "x_min": (parse_int, 20),
        "published": (parse_published, {}),
        "prec": (parse_int, 256),
    },
    "reduce": {
        "k": (parse_range, "3..5"),
        "m": (parse_range, "3..30"),
        "M": (parse_number, str(GRID_M)),
        "A": (parse_number, str(GRID_A)),
        "index": (parse_int, 700),
        "eps_floor": (parse_number, "0"),
        "workers": (parse_int, 0),
    },
    "legendre": {
        "k": (parse_range, "3..242"),
        "terms": (parse_int, 231),
        "q_index": (parse_int, 230),
        "q_min": (parse_number, "3.88e109"),
        "a_max": (parse_number, "4.09e70"),
    },
    "search": {
        "k": (parse_range, "3..5"),
        "m": (parse_range, "3..30"),
        "x": (parse_range, "2..30"),
        "moduli": (parse_moduli, "default"),
        "budget": (parse_int, DEFAULT_BUDGET),
    },
    "final-min": {
        "x": (parse_range, "20..150"),
        "k": (parse_range, "3..5"),
        "threshold": (parse_number, "0.0003"),
        "m_max": (parse_int, 33),
        "prec": (parse_int, 256),
    },
}

PIPELINE_ORDER = ["fib", "root", "heights", "bounds:small_m", "reduce", "search", "bounds:large_m", "legendre", "final-min"]

STAGE_OF = {
    "fib": StageName.KFIB_IDENTITIES,
    "root": StageName.ROOT,
    "heights": StageName.HEIGHTS,
    "bounds": StageName.BOUND_CHAIN,
    "reduce": StageName.DP_REDUCTION,
    "legendre": StageName.LEGENDRE,
    "search": StageName.SEARCH,
    "final-min": StageName.FINAL_MIN,
}


def validate(command: str, raw: dict) -> dict:
    schema = SCHEMAS.get(command)
    if schema is None:
        raise ConfigInvalid(f"unknown stage {command!r}")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigInvalid(f"unknown keys for {command}: {sorted(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        out[key] = conv(raw[key]) if key in raw else conv(default)
    if command == "bounds" and out["scenario"] not in ("small_m", "large_m", "both"):
        raise ConfigInvalid(f"bad scenario {out['scenario']!r}")
    return out


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, tuple) and len(v) == 2 and k not in ("moduli",):
            out[k] = f"{v[0]}..{v[1]}"
        elif isinstance(v, Fraction):
            out[k] = str(v)
        elif isinstance(v, dict):
            out[k] = _jsonable(v)
        elif isinstance(v, tuple):
            out[k] = [str(x) for x in v]
        else:
            out[k] = v
    return out


def _ir(r: tuple[int, int]) -> range:
    return range(r[0], r[1] + 1)


# -- stages ----------------------------------------------------------------------


def _stage_fib(p):
    q, bad = [], []
    for k in _ir(p["k"]):
        for n in range(2, k + 2):
            if kfib_at(k, n) != 2 ** (n - 2):
                bad.append(f"F({k},{n}) != 2^{n - 2}")
        if kfib_at(k, k + 2) != 2**k - 1:
            bad.append(f"F({k},{k + 2}) != 2^{k}-1")
    ratio_cells = 0
    for k in _ir(p["ratio_k"]):
        for m in _ir(p["ratio_m"]):
            ratio_cells += 1
            if not ratio_check(k, m):
                bad.append(f"ratio fails at k={k}, m={m}")
    q += [Quantity.of("ratio_cells", ratio_cells), Quantity.of("failures", len(bad))]
    q += [Quantity.of(f"failure_{i}", s) for i, s in enumerate(bad[:20])]
    return q, not bad, ""


def _stage_root(p):
    q, ok = [], True
    prec = p["prec"]
    for k in _ir(p["k"]):
        ctx = kfib_context(k, prec)
        alpha, g = ctx.alpha, ctx.g
        ok &= alpha.gt(root_lower_bracket(k)) and alpha.lt(2)
        ok &= g_norm(k) < 1
        seq = kfib_sequence(k, p["n"])
        ok &= all(check_size_bounds(k, n, seq[n]) for n in range(1, p["n"] + 1))
        q += [Quantity.of(f"alpha[{k}]", alpha), Quantity.of(f"g[{k}]", g), Quantity.of(f"g_norm[{k}]", g_norm(k))]
    return q, ok, ""


def _stage_heights(p):
    q, ok = [], True
    for k in _ir(p["k"]):
        ctx = kfib_context(k, p["prec"])
        ok &= (ctx.log_alpha / k).lt(Fraction(7, 10) / k)
        for m in _ir(p["m"]):
            if m < k:
                continue
            h = log_height_constants(ctx, m)
            ok &= certify_le(h.h_F, m * ctx.log_alpha) and h.h_F.lt(Fraction(7, 10) * m)
        h = log_height_constants(ctx, max(k, p["m"][0]))
        q += [Quantity.of(f"h_alpha[{k}]", h.h_alpha), Quantity.of(f"h_g_bound[{k}]", h.h_g_bound)]
    return q, ok, ""


def _chain_quantities(report) -> list[Quantity]:
    q = [Quantity.of("scenario", report.scenario)]
    for s in report.stages:
        tag = "holds" if s.holds else ("repaired" if s.repaired else "fails")
        q += [Quantity.of(f"{s.name}.lhs", s.lhs), Quantity.of(f"{s.name}.rhs", s.rhs), Quantity.of(f"{s.name}.status", tag)]
    if report.x_bound is not None:
        q.append(Quantity.of("x_bound", report.x_bound))
    for name in ("n_bound", "m_bound", "k_bound"):
        v = getattr(report, name)
        if v is not None:
            q.append(Quantity.of(name, v))
    return q


def _stage_bounds(p):
    scenarios = ["small_m", "large_m"] if p["scenario"] == "both" else [p["scenario"]]
    q = []
    for sc in scenarios:
        try:
            rep = bound_chain(sc, published=p["published"], x_min=p["x_min"], prec=p["prec"])
        except ChainBroken as exc:
            st = exc.stage
            q += [Quantity.of("broken_stage", st.name), Quantity.of("lhs", st.lhs), Quantity.of("rhs", st.rhs)]
            return q, False, f"ChainBroken: {exc}"
        q += [Quantity(f"{sc}:{x.name}", x.kind, x.value, x.rad, x.prec) for x in _chain_quantities(rep)]
        errata = ", ".join(s.name for s in rep.errata)
        if errata:
            q.append(Quantity.of(f"{sc}:errata", errata))
    return q, True, ""


def _stage_reduce(p):
    workers = p["workers"] or None
    rep = dp_reduce_grid(_ir(p["m"]), _ir(p["k"]), M=p["M"], A=p["A"], index=p["index"], workers=workers)
    q = []
    ok = not rep.errors and bool(rep.outcomes)
    for (m, k), o in rep.outcomes.items():
        q += [
            Quantity.of(f"cell[{m},{k}].index", o.convergent_index),
            Quantity.of(f"cell[{m},{k}].q", o.q),
            Quantity.of(f"cell[{m},{k}].epsilon", o.epsilon),
            Quantity.of(f"cell[{m},{k}].u_bound", o.u_bound),
        ]
        if p["eps_floor"] and not o.epsilon.gt(p["eps_floor"]):
            ok = False
    for key, err in rep.errors.items():
        q.append(Quantity.of(f"cell[{key[0]},{key[1]}].error", err))
    if rep.outcomes:
        q += [
            Quantity.of("min_q", rep.min_q),
            Quantity.of("max_q", rep.max_q),
            Quantity.of("min_epsilon", rep.min_epsilon),
            Quantity.of("max_u_bound", rep.max_u_bound),
        ]
    q.append(Quantity.of("skipped_cells", len(rep.skipped_cells)))
    return q, ok, ""


def legendre_scan(k_range: tuple[int, int], terms: int, q_index: int, prec: int = 1536):
    """Expand ``beta_k = -log g / log alpha`` to ``terms + 1`` quotients for every k."""
    min_q = max_a = None
    arg_q = arg_a = None
    for k in _ir(k_range):
        def beta(bits: int, k=k) -> Ball:
            ctx = kfib_context(k, bits)
            return -ctx.log_g / ctx.log_alpha

        convs = cf_expand(beta, terms + 1)
        qk = convs[q_index].q
        ak = max(c.a for c in convs)
        if min_q is None or qk < min_q:
            min_q, arg_q = qk, k
        if max_a is None or ak > max_a:
            max_a, arg_a = ak, k
    return min_q, arg_q, max_a, arg_a


def _stage_legendre(p):
    min_q, arg_q, max_a, arg_a = legendre_scan(p["k"], p["terms"], p["q_index"])
    ok = min_q > p["q_min"] and max_a < p["a_max"]
    q = [
        Quantity.of(f"min_q{p['q_index']}", min_q),
        Quantity.of("argmin_k", arg_q),
        Quantity.of("max_partial_quotient", max_a),
        Quantity.of("argmax_k", arg_a),
    ]
    return q, ok, ""


def _stage_search(p):
    win = SearchWindow(p["k"], p["m"], p["x"], moduli=p["moduli"], budget=p["budget"])
    sols = exhaustive_search(win)
    q = [Quantity.of("solutions", len(sols))]
    q += [Quantity.of(f"solution_{i}", f"k={s.k} m={s.m} n={s.n} x={s.x}") for i, s in enumerate(sols)]
    theorem_window = p["k"][0] >= 3 and p["x"][0] >= 2
    return q, (not sols) if theorem_window else True, ""


def _stage_final_min(p):
    q, ok = [], False
    for variant in ("exp_x", "exp_2x"):
        r = final_min_scan(p["x"], p["k"], variant, prec=p["prec"], threshold=p["threshold"])
        q += [
            Quantity.of(f"{variant}.minimum", r.minimum),
            Quantity.of(f"{variant}.argmin", "x={} k={} t={}".format(*r.argmin)),
            Quantity.of(f"{variant}.above_threshold", bool(r.above_threshold)),
            Quantity.of(f"{variant}.m_bound", r.m_bound),
            Quantity.of(f"{variant}.threshold_m_bound", r.threshold_m_bound),
        ]
        ok |= bool(r.above_threshold) and r.threshold_m_bound <= p["m_max"]
    return q, ok, ""


RUNNERS = {
    "fib": _stage_fib,
    "root": _stage_root,
    "heights": _stage_heights,
    "bounds": _stage_bounds,
    "reduce": _stage_reduce,
    "legendre": _stage_legendre,
    "search": _stage_search,
    "final-min": _stage_final_min,
}


def run_stage(command: str, config: dict | None = None) -> Certificate:
    """Validate ``config`` for ``command``, run it, and return its certificate.

    Raises :class:`ConfigInvalid`; every other failure is embedded in the
    certificate with verdict ``error``.
    """
    params = validate(command, config or {})
    stage = STAGE_OF[command]
    t0 = time.perf_counter()
    try:
        quantities, ok, message = RUNNERS[command](params)
        verdict = Verdict.VERIFIED if ok else Verdict.FAILED
    except (PrecisionExhausted, WindowTooLarge, ArithmeticError, ValueError, RuntimeError) as exc:
        quantities, verdict, message = [], Verdict.ERROR, f"{type(exc).__name__}: {exc}"
    log.info("%s: %s in %.2fs", command, verdict.value, time.perf_counter() - t0)
    return Certificate(stage, _jsonable(params), tuple(quantities), verdict, message=message)


def pipeline_plan(config: dict) -> list[tuple[str, dict]]:
    plan = []
    for entry in PIPELINE_ORDER:
        command, _, scenario = entry.partition(":")
        section = dict(config.get(command, {}))
        if scenario:
            section["scenario"] = scenario
        validate(command, section)
        plan.append((command, section))
    return plan


def _consume(command: str, section: dict, cert: Certificate, facts: dict) -> Certificate:
    """Check a stage against bounds certified earlier in the run and record its own."""
    if cert.verdict is not Verdict.VERIFIED:
        return cert
    params = validate(command, section)
    problem = ""
    if command == "bounds":
        for q in cert.quantities:
            if q.name in ("small_m:n_bound", "large_m:x_bound"):
                facts[q.name] = q.to_python()
    elif command == "reduce" and "small_m:n_bound" in facts:
        if params["M"] < facts["small_m:n_bound"]:
            problem = f"M = {params['M']} does not cover the certified n bound {facts['small_m:n_bound']}"
    elif command == "legendre" and "large_m:x_bound" in facts:
        if not facts["large_m:x_bound"].lt(params["q_min"]):
            problem = "q_min does not exceed the certified absolute x bound"
    if not problem:
        return cert
    return Certificate(cert.stage, cert.parameters, cert.quantities, Verdict.FAILED, cert.timestamp, cert.tool_version, problem)


def run_pipeline(config: dict | None = None, sink: Callable[[Certificate], None] | None = None) -> list[Certificate]:
    """Run every stage in proof order; stop after the first non-verified one."""
    out = []
    facts: dict[str, object] = {}
    for command, section in pipeline_plan(config or {}):
        cert = run_stage(command, section)
        cert = _consume(command, section, cert, facts)
        out.append(cert)
        if sink is not None:
            sink(cert)
        if cert.verdict is not Verdict.VERIFIED:
            break
    return out


# -- argument parsing -------------------------------------------------------------

FLAG_KEYS = {
    "fib": ["k"],
    "root": ["k", "n", "prec"],
    "heights": ["k", "m", "prec"],
    "bounds": ["scenario", "x_min", "prec"],
    "reduce": ["k", "m", "M", "A", "index", "eps_floor", "workers"],
    "legendre": ["k", "terms", "q_index", "q_min", "a_max"],
    "search": ["k", "m", "x", "moduli", "budget"],
    "final-min": ["x", "k", "threshold", "m_max", "prec"],
    "pipeline": [],
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kfibcert", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with one table per stage")
    common.add_argument("--log", type=Path, help="append certificates to this file (default: stdout)")
    common.add_argument("--dry-run", action="store_true", help="print the stage plan and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for command, keys in FLAG_KEYS.items():
        sp = sub.add_parser(command, parents=[common])
        for key in keys:
            sp.add_argument(f"--{key}", dest=key, default=None)
    return ap


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        config = load_config(args.config)
        for key in FLAG_KEYS[args.command]:
            val = getattr(args, key)
            if val is not None:
                config.setdefault(args.command, {})[key] = val
        if args.command == "pipeline":
            plan = pipeline_plan(config)
        else:
            validate(args.command, config.get(args.command, {}))
            plan = [(args.command, config.get(args.command, {}))]
    except ConfigInvalid as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        for command, section in plan:
            print(f"{STAGE_OF[command].value}: {_jsonable(validate(command, section))}")
        return 0

    sink_log = CertificateLog(args.log) if args.log else None

    def sink(cert: Certificate) -> None:
        if sink_log is not None:
            sink_log.append(cert)
        else:
            print(emit(cert), flush=True)
        print(f"{cert.stage.value}: {cert.verdict.value}{' - ' + cert.message if cert.message else ''}", file=sys.stderr)

    if args.command == "pipeline":
        certs = run_pipeline(config, sink)
    else:
        certs = [run_stage(args.command, plan[0][1])]
        sink(certs[0])
    worst = max(EXIT[c.verdict] for c in certs)
    return worst


if __name__ == "__main__":
    sys.exit(main())
