"""Verification certificates: one JSON document per line, append-only.

Every numeric value is stored as a decimal string.  Balls keep their
midpoint, radius and working precision, so a reader can rebuild the exact
enclosure with :meth:`Quantity.to_ball`.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import __version__
from .numerics import Ball, mpfr_str, parse_mpfr


class StageName(str, enum.Enum):
    KFIB_IDENTITIES = "kfib-identities"
    ROOT = "root"
    HEIGHTS = "heights"
    BOUND_CHAIN = "bound-chain"
    DP_REDUCTION = "dp-reduction"
    LEGENDRE = "legendre"
    SEARCH = "search"
    FINAL_MIN = "final-min"


class Verdict(str, enum.Enum):
    VERIFIED = "verified"
    FAILED = "failed"
    ERROR = "error"


@dataclass(frozen=True)
class Quantity:
    name: str
    kind: str  # int | rational | ball | bool | str
    value: str
    rad: str | None = None
    prec: int | None = None

    @classmethod
    def of(cls, name: str, v) -> "Quantity":
        if isinstance(v, Ball):
            return cls(name, "ball", mpfr_str(v.mid), mpfr_str(v.rad), v.prec)
        if isinstance(v, bool):
            return cls(name, "bool", "true" if v else "false")
        if isinstance(v, int):
            return cls(name, "int", str(v))
        if isinstance(v, Fraction):
            return cls(name, "rational", str(v))
        return cls(name, "str", str(v))

    def to_python(self):
        if self.kind == "ball":
            return self.to_ball()
        if self.kind == "int":
            return int(self.value)
        if self.kind == "rational":
            return Fraction(self.value)
        if self.kind == "bool":
            return self.value == "true"
        return self.value

    def to_ball(self) -> Ball:
        if self.kind != "ball":
            raise TypeError(f"{self.name} is not a ball")
        return Ball(parse_mpfr(self.value, self.prec), parse_mpfr(self.rad, 64), self.prec)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class Certificate:
    stage: StageName
    parameters: dict
    quantities: tuple[Quantity, ...]
    verdict: Verdict
    timestamp: str = field(default_factory=_now)
    tool_version: str = __version__
    message: str = ""

    def quantity(self, name: str):
        for q in self.quantities:
            if q.name == name:
                return q.to_python()
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "parameters": self.parameters,
            "quantities": [
                {k: v for k, v in vars(q).items() if v is not None} for q in self.quantities
            ],
            "verdict": self.verdict.value,
            "timestamp": self.timestamp,
            "tool_version": self.tool_version,
            "message": self.message,
        }


def emit(cert: Certificate) -> str:
    return json.dumps(cert.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def parse(line: str) -> Certificate:
    d = json.loads(line)
    return Certificate(
        stage=StageName(d["stage"]),
        parameters=d["parameters"],
        quantities=tuple(Quantity(**q) for q in d["quantities"]),
        verdict=Verdict(d["verdict"]),
        timestamp=d["timestamp"],
        tool_version=d["tool_version"],
        message=d.get("message", ""),
    )


class CertificateLog:
    """Append-only sink; the single writer for a run."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, cert: Certificate) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(emit(cert) + "\n")

    def read(self) -> list[Certificate]:
        if not self.path.exists():
            return []
        with self.path.open(encoding="utf-8") as fh:
            return [parse(line) for line in fh if line.strip()]
