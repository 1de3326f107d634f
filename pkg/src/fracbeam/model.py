"""System parameters and regime classification for the damped Timoshenko beam."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

REL_TOL = 1e-12

FIELD_NAMES = ("rho1", "rho2", "k1", "k2", "gamma", "eta", "alpha")


class ParameterError(ValueError):
    """Raised when physical constants violate their admissible ranges."""


@dataclass(frozen=True)
class SystemParams:
    rho1: float
    rho2: float
    k1: float
    k2: float
    gamma: float = 1.0
    eta: float = 1.0
    alpha: float = 0.5

    def __post_init__(self):
        for name in FIELD_NAMES:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")
        for name in ("rho1", "rho2", "k1", "k2"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be strictly positive")
        if self.gamma < 0:
            raise ParameterError("gamma must be nonnegative")
        if self.eta < 0:
            raise ParameterError("eta must be nonnegative")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in the open interval (0, 1)")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SystemParams":
        unknown = set(data) - set(FIELD_NAMES)
        if unknown:
            raise ParameterError(f"unknown parameter fields: {sorted(unknown)}")
        missing = [k for k in ("rho1", "rho2", "k1", "k2") if k not in data]
        if missing:
            raise ParameterError(f"missing parameter fields: {missing}")
        return cls(**{k: data[k] for k in FIELD_NAMES if k in data})

    @classmethod
    def from_json(cls, text: str) -> "SystemParams":
        return cls.from_mapping(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def replace(self, **changes) -> "SystemParams":
        data = self.to_dict()
        data.update(changes)
        return SystemParams(**data)


@dataclass(frozen=True)
class SpeedClass:
    tag: str  # "EqualSpeeds" or "DifferentSpeeds"
    wave_speed_1: float
    wave_speed_2: float
    ratio: float

    @property
    def equal(self) -> bool:
        return self.tag == "EqualSpeeds"


def _close(a: float, b: float, rel: float = REL_TOL) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b))


def classify_speeds(p: SystemParams) -> SpeedClass:
    """Compare the squared wave speeds k1/rho1 and k2/rho2."""
    c1 = p.k1 / p.rho1
    c2 = p.k2 / p.rho2
    ratio = (p.k1 * p.rho2) / (p.k2 * p.rho1)
    tag = "EqualSpeeds" if _close(c1, c2) else "DifferentSpeeds"
    return SpeedClass(tag=tag, wave_speed_1=c1, wave_speed_2=c2, ratio=ratio)


@dataclass(frozen=True)
class A1Report:
    holds_on_range: bool
    scan_limit: int
    nearest_violation_gap: float
    witness: tuple[int, int] | None
    nearest_pair: tuple[int, int]
    violations: tuple[tuple[int, int], ...] = field(default=())


def a1_rhs(p: SystemParams, m1: int, m2: int) -> float:
    c1 = p.k1 / p.rho1
    c2 = p.k2 / p.rho2
    a, b = m1 * m1, m2 * m2
    num = (c2 * a - c1 * b) * (c1 * a - c2 * b) * math.pi**2
    return num / ((c1 + c2) * (a + b))


def check_condition_A1(p: SystemParams, scan_limit: int, rel_tol: float = REL_TOL) -> A1Report:
    """Scan integer pairs for equality k1/rho2 == RHS(m1, m2).

    The right-hand side depends on m1**2 and m2**2 only, so the scan covers
    the nonnegative quadrant; sign changes of either index give the same value.
    The witness is the violating pair of smallest m1**2 + m2**2, ties broken
    toward larger m1.
    """
    if int(scan_limit) != scan_limit or scan_limit < 1:
        raise ValueError("scan_limit must be a positive integer")
    scan_limit = int(scan_limit)
    target = p.k1 / p.rho2
    best_gap = math.inf
    best_pair = (1, 0)
    violations = []
    for m1 in range(scan_limit + 1):
        for m2 in range(scan_limit + 1):
            if m1 == 0 and m2 == 0:
                continue
            rhs = a1_rhs(p, m1, m2)
            gap = abs(target - rhs)
            if gap < best_gap:
                best_gap, best_pair = gap, (m1, m2)
            if gap <= rel_tol * max(target, abs(rhs)):
                violations.append((m1, m2))
    violations.sort(key=lambda q: (q[0] ** 2 + q[1] ** 2, -q[0]))
    witness = violations[0] if violations else None
    return A1Report(
        holds_on_range=not violations,
        scan_limit=scan_limit,
        nearest_violation_gap=best_gap,
        witness=witness,
        nearest_pair=best_pair,
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class ResonanceClass:
    tag: str  # "NonResonant", "EvenResonant" or "OddResonant"
    k0: int | None = None

    @property
    def resonant(self) -> bool:
        return self.tag != "NonResonant"


def resonance_class(p: SystemParams, rel_tol: float = REL_TOL) -> ResonanceClass:
    """Decide whether sqrt(k1/k2) is an integer multiple k0*pi."""
    s = math.sqrt(p.k1 / p.k2) / math.pi
    k0 = round(s)
    if k0 >= 1 and abs(s - k0) <= rel_tol * s:
        return ResonanceClass("EvenResonant" if k0 % 2 == 0 else "OddResonant", int(k0))
    return ResonanceClass("NonResonant")
