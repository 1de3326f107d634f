"""Damped and conservative spectra of the Timoshenko beam.

The damped eigenvalues are zeros of a 2x2 characteristic determinant built
from the four roots of an even quartic; the damper enters only through the
closed-form transfer (lam + eta)**(alpha - 1).  The conservative spectrum
(clamped ends, no damper) is available in closed form.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .fractional import diffusive_integral
from .model import SystemParams, classify_speeds, resonance_class


class SpectrumError(RuntimeError):
    pass


class NonConvergence(SpectrumError):
    def __init__(self, branch: int, n: int, detail: str = ""):
        super().__init__(f"Newton did not converge for branch {branch}, n={n}. {detail}".strip())
        self.branch, self.n = branch, n


class BasinEscape(SpectrumError):
    def __init__(self, branch: int, n: int, detail: str = ""):
        super().__init__(f"root for branch {branch}, n={n} left its seed basin. {detail}".strip())
        self.branch, self.n = branch, n


class OverflowGuard(SpectrumError):
    """The scaled determinant is not representable at this lam."""


# ---------------------------------------------------------------- quartic


@dataclass(frozen=True)
class QuarticRoots:
    roots: tuple[complex, complex, complex, complex]  # (r1, -r1, r2, -r2)
    degenerate: bool


def _quartic_parts(lam: complex, p: SystemParams):
    """Squares of the two root families, computed without cancellation.

    Returns (r1sq, r2sq, f1, f2, S) with f(r) = r^2 - (rho1/k1) lam^2.
    """
    a1 = p.rho1 / p.k1
    a2 = p.rho2 / p.k2
    lam2 = lam * lam
    d = a2 - a1
    c = 4.0 * p.rho1 / (p.k2 * lam2)
    S = cmath.sqrt(d * d - c)
    # (d + S)(d - S) = c; evaluate the larger factor directly.
    plus, minus = d + S, d - S
    if abs(plus) >= abs(minus):
        minus = c / plus if plus != 0 else minus
    else:
        plus = c / minus
    f1 = 0.5 * lam2 * plus
    f2 = 0.5 * lam2 * minus
    r1sq = f1 + a1 * lam2
    r2sq = f2 + a1 * lam2
    return r1sq, r2sq, f1, f2, S


def _is_degenerate(lam: complex, p: SystemParams, rel: float = 1e-12) -> bool:
    lhs = (p.rho2 * p.k1 - p.rho1 * p.k2) ** 2 * lam * lam
    rhs = 4.0 * p.rho1 * p.k1**2 * p.k2
    return abs(lhs - rhs) <= rel * max(abs(lhs), rhs)


def _right_half(z: complex) -> complex:
    if z.real < 0 or (z.real == 0 and z.imag < 0):
        return -z
    return z


def quartic_roots(lam: complex, p: SystemParams) -> QuarticRoots:
    """Roots of r^4 - (rho2/k2 + rho1/k1) lam^2 r^2 + (rho1 rho2/(k1 k2)) lam^2 (lam^2 + k1/rho2)."""
    lam = complex(lam)
    if lam == 0:
        return QuarticRoots((0j, 0j, 0j, 0j), degenerate=True)
    r1sq, r2sq, *_ = _quartic_parts(lam, p)
    r1 = _right_half(cmath.sqrt(r1sq))
    r2 = _right_half(cmath.sqrt(r2sq))
    return QuarticRoots((r1, -r1, r2, -r2), degenerate=_is_degenerate(lam, p))


def quartic_value(r: complex, lam: complex, p: SystemParams) -> complex:
    a = p.rho2 / p.k2 + p.rho1 / p.k1
    c0 = (p.rho1 * p.rho2 / (p.k1 * p.k2)) * lam**2 * (lam**2 + p.k1 / p.rho2)
    return r**4 - a * lam**2 * r**2 + c0


# ------------------------------------------------------------ determinant


def damper_coefficient(lam: complex, p: SystemParams) -> complex:
    """R(lam) = -((rho2 lam^2 + k1)/(k1 k2)) * lam * gamma * (lam + eta)^(alpha-1)."""
    if p.gamma == 0:
        return 0j
    h = diffusive_integral(lam, p.eta, p.alpha)
    return -((p.rho2 * lam * lam + p.k1) / (p.k1 * p.k2)) * lam * p.gamma * h


def _scaled_terms(lam: complex, p: SystemParams):
    lam = complex(lam)
    if lam == 0:
        raise ValueError("det(M) is not defined at lam = 0")
    r1sq, r2sq, f1, f2, S = _quartic_parts(lam, p)
    a = p.rho1 / p.k1 + p.rho2 / p.k2
    lam2 = lam * lam
    # r = lam * sqrt(r^2 / lam^2) keeps the lam -> r map analytic off the axes.
    r1 = lam * cmath.sqrt(r1sq / lam2)
    r2 = lam * cmath.sqrt(r2sq / lam2)
    if min(r1.real, r2.real) < -340.0:
        raise OverflowGuard(f"Re r too negative at lam={lam}")
    e1 = cmath.exp(-2.0 * r1)
    e2 = cmath.exp(-2.0 * r2)
    s1, c1 = 0.5 * (1.0 - e1), 0.5 * (1.0 + e1)
    s2, c2 = 0.5 * (1.0 - e2), 0.5 * (1.0 + e2)
    g1 = (r1sq - a * lam2) * r1
    g2 = (r2sq - a * lam2) * r2
    R = damper_coefficient(lam, p)
    a12 = (lam2 * S) * R  # f1 - f2 = lam^2 S
    a2, a3 = f1 * g2, -f2 * g1
    envelope = abs(a12) + abs(a2) + abs(a3)
    return (a12 * s1 * s2, a2 * s1 * c2, a3 * s2 * c1), envelope


def determinant_terms(lam: complex, p: SystemParams) -> tuple[complex, complex, complex]:
    """The three summands of det(M), each multiplied by exp(-(r1 + r2)).

    r1, r2 follow the analytic branch r = lam * sqrt(.) so that the scaled
    determinant is holomorphic where Newton iterates live.
    """
    return _scaled_terms(lam, p)[0]


def char_determinant(lam: complex, p: SystemParams) -> complex:
    """det(M)(lam) times the nonvanishing factor exp(-(r1 + r2))."""
    t1, t2, t3 = determinant_terms(lam, p)
    return t1 + t2 + t3


def relative_residual(lam: complex, p: SystemParams) -> float:
    """|scaled det| over its algebraic envelope |f1 g2| + |f2 g1| + |(f1 - f2) R|.

    The scaled hyperbolic factors are O(1) near the imaginary axis, so the
    envelope is the natural size of det at lam and the ratio is a backward
    error that does not blow up when a sinh or cosh factor happens to be small.
    """
    terms, envelope = _scaled_terms(lam, p)
    return abs(sum(terms)) / envelope if envelope > 0 else 0.0


# ------------------------------------------------------------ asymptotics


@dataclass(frozen=True)
class AsymptoticSeed:
    value: complex
    regime: str
    remainder: str  # order of the neglected remainder


def branch_labels(p: SystemParams) -> tuple[int, int]:
    return (1, 2) if classify_speeds(p).equal else (0, 1)


def asymptotic_eigenvalue(branch: int, n: int, p: SystemParams) -> AsymptoticSeed:
    """Printed large-|n| expansion of the damped eigenvalue (branch, n).

    Negative indices are the complex conjugates of the positive ones.
    """
    if n == 0:
        raise ValueError("index n must be nonzero")
    if n < 0:
        s = asymptotic_eigenvalue(branch, -n, p)
        return AsymptoticSeed(s.value.conjugate(), s.regime, s.remainder)
    speeds = classify_speeds(p)
    sq1 = math.sqrt(p.k1 / p.rho1)
    if not speeds.equal:
        if branch == 0:
            return AsymptoticSeed(1j * (n + 0.5) * math.pi * sq1, "DifferentSpeeds", "o(1)")
        if branch == 1:
            return AsymptoticSeed(1j * n * math.pi * math.sqrt(p.k2 / p.rho2), "DifferentSpeeds", "o(1)")
        raise ValueError("different-speed branches are labeled 0 and 1")
    if branch not in (1, 2):
        raise ValueError("equal-speed branches are labeled 1 and 2")
    g, al = p.gamma, p.alpha
    rot = complex(-math.sin(math.pi * al / 2), math.cos(math.pi * al / 2))
    slow = g * rot / (math.sqrt(p.rho1 ** (1 + al) * p.k1 ** (1 - al)) * (n * math.pi) ** (1 - al))
    q = p.k1 / p.k2
    fast = g * math.sqrt(p.k1 ** (5 + al)) * rot / (
        256.0 * p.k2**3 * math.sqrt(p.rho1 ** (1 + al)) * math.pi ** (5 - al) * n ** (5 - al)
    )
    base = 1j * n * math.pi * sq1
    shift = 0.5j * math.pi * sq1
    res = resonance_class(p)
    pi = math.pi
    if res.tag == "NonResonant":
        cs = math.cos(math.sqrt(q))
        weight = (1 - cs) / 2 if branch == 1 else (1 + cs) / 2
        value = base + weight * slow + (shift if branch == 2 else 0)
        return AsymptoticSeed(value, "EqualSpeeds/NonResonant", "o(n^-(1-alpha))")
    if res.tag == "EvenResonant":
        if branch == 1:
            value = base + 1j * q * sq1 / (8 * n * pi) - 1j * q * q * sq1 / (128 * pi**3 * n**3) + fast
            return AsymptoticSeed(value, "EqualSpeeds/EvenResonant", "O(n^-5)")
        return AsymptoticSeed(base + shift + slow, "EqualSpeeds/EvenResonant", "o(n^-(1-alpha))")
    if branch == 1:
        return AsymptoticSeed(base + slow, "EqualSpeeds/OddResonant", "o(n^-(1-alpha))")
    value = (
        base
        + shift
        + 1j * q * sq1 / (8 * n * pi)
        - 1j * q * sq1 / (16 * pi * n**2)
        + 1j * q * sq1 * (4 * pi**2 - q) / (128 * pi**3 * n**3)
        - 1j * q * sq1 * (4 * pi**2 - 3 * q) / (256 * pi**3 * n**4)
        + fast
    )
    return AsymptoticSeed(value, "EqualSpeeds/OddResonant", "O(n^-5)")


# ------------------------------------------------------------ root search


@dataclass(frozen=True)
class EigenMode:
    branch: int
    index: int
    lam: complex
    residual: float
    seed: complex
    kind: str = "Damped"
    status: str = "converged"
    iterations: int = 0

    @property
    def seed_distance(self) -> float:
        return abs(self.lam - self.seed)


def _derivative(f, z: complex, h: float) -> complex:
    # Four-point stencil for holomorphic f; error O(h^4).
    return (f(z + h) - f(z - h) - 1j * f(z + 1j * h) + 1j * f(z - 1j * h)) / (4.0 * h)


def newton_root(
    p: SystemParams,
    seed: complex,
    radius: float,
    tol: float = 1e-10,
    max_iter: int = 60,
    h: float = 1e-4,
) -> tuple[complex, float, int, str]:
    """Damped Newton on the scaled determinant, confined to |z - seed| < radius.

    Returns (root, residual, iterations, status) with status one of
    "converged", "NonConvergence", "BasinEscape".
    """
    f = lambda z: char_determinant(z, p)
    z = complex(seed)
    fz = f(z)
    it = 0
    for it in range(1, max_iter + 1):
        df = _derivative(f, z, h)
        if df == 0 or not cmath.isfinite(df):
            return z, relative_residual(z, p), it, "NonConvergence"
        step = fz / df
        t = 1.0
        for _ in range(30):
            cand = z - t * step
            try:
                fc = f(cand)
            except (OverflowGuard, ValueError):
                fc = complex("inf")
            if abs(fc) < abs(fz) or abs(t * step) <= 1e-15 * abs(z):
                break
            t *= 0.5
        z, fz = cand, fc
        if abs(z - seed) >= radius:
            return z, relative_residual(z, p), it, "BasinEscape"
        if abs(t * step) <= 4e-16 * max(1.0, abs(z)):
            break
    res = relative_residual(z, p)
    return z, res, it, "converged" if res <= tol else "NonConvergence"


def _seed_table(p: SystemParams, indices: Iterable[int]) -> dict:
    table = {}
    for b in branch_labels(p):
        for n in indices:
            if n != 0:
                table[(b, n)] = asymptotic_eigenvalue(b, n, p).value
    return table


def find_eigenvalues(
    p: SystemParams,
    n_range: Sequence[int] | range,
    tol: float = 1e-10,
    branches: Sequence[int] | None = None,
    strict: bool = True,
    threads: int = 1,
) -> list[EigenMode]:
    """Newton search seeded by the asymptotic expansion for every (branch, n).

    The basin radius is half the distance from each seed to the nearest other
    seed (index neighbours n-1 and n+1 of both branches are always included).
    With ``strict=False`` failures come back as modes whose ``status`` names
    the failure instead of raising.
    """
    indices = sorted({int(n) for n in n_range if n != 0})
    if not indices:
        raise ValueError("n_range contains no nonzero index")
    labels = branch_labels(p)
    branches = tuple(labels if branches is None else branches)
    for b in branches:
        if b not in labels:
            raise ValueError(f"branch {b} not valid for this regime (expected {labels})")
    neighbours = set()
    for n in indices:
        neighbours.update({n - 1, n, n + 1, -n})
    seeds = _seed_table(p, sorted(k for k in neighbours if k != 0))
    seed_keys = list(seeds)
    seed_vals = np.array([seeds[k] for k in seed_keys])

    def solve(key):
        b, n = key
        s = seeds[key]
        dist = np.abs(seed_vals - s)
        dist[seed_keys.index(key)] = np.inf
        radius = 0.5 * float(dist.min())
        z, res, it, status = newton_root(p, s, radius, tol=tol)
        if status == "converged" and z.real >= 0:
            status = "NonConvergence"
        return EigenMode(b, n, z, res, s, "Damped", status, it)

    keys = [(b, n) for b in branches for n in indices]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            modes = list(pool.map(solve, keys))
    else:
        modes = [solve(k) for k in keys]
    if strict:
        for m in modes:
            if m.status == "BasinEscape":
                raise BasinEscape(m.branch, m.index, f"|lam - seed| = {m.seed_distance:.3e}")
            if m.status != "converged":
                raise NonConvergence(m.branch, m.index, f"residual {m.residual:.3e}, lam={m.lam}")
    return modes


# ------------------------------------------------------- conservative modes


@dataclass(frozen=True)
class ConservativeMode:
    branch: int
    index: int
    mu_squared: float
    C: float
    D: float
    kind: str = "Conservative"

    @property
    def mu(self) -> float:
        return math.sqrt(self.mu_squared)

    @property
    def lam(self) -> complex:
        return complex(0.0, math.copysign(self.mu, self.index))

    @property
    def trace_coeff(self) -> float:
        return boundary_trace_coeff(self)


def conservative_coefficients(p: SystemParams, n: int) -> tuple[float, float]:
    """(B, P) such that mu^4 - B mu^2 + P = 0 for index n."""
    w = (n * math.pi) ** 2
    c1 = p.k1 / p.rho1
    c2 = p.k2 / p.rho2
    return (c1 + c2) * w + p.k1 / p.rho2, c1 * c2 * w * w


def conservative_mu_squared(p: SystemParams, n: int) -> tuple[float, float]:
    """(mu1^2, mu2^2) for index n.  Branch 1 tracks the speed k1/rho1.

    The discriminant is written as a sum of nonnegative terms and the smaller
    root is recovered from the product, so neither root suffers cancellation.
    """
    if n == 0:
        raise ValueError("index n must be nonzero")
    w = (n * math.pi) ** 2
    c1 = p.k1 / p.rho1
    c2 = p.k2 / p.rho2
    e = p.k1 / p.rho2
    B, P = conservative_coefficients(p, n)
    disc = ((c1 - c2) * w) ** 2 + 2.0 * (c1 + c2) * w * e + e * e
    big = 0.5 * (B + math.sqrt(disc))
    small = P / big
    return (big, small) if c1 >= c2 else (small, big)


def conservative_spectrum(p: SystemParams, n_range: Iterable[int]) -> list[ConservativeMode]:
    """Both branches for every nonzero n, ordered by (branch, n)."""
    out = []
    indices = sorted({int(n) for n in n_range if n != 0})
    rows = {n: conservative_mu_squared(p, abs(n)) for n in indices}
    for branch in (1, 2):
        for n in indices:
            mu2 = rows[n][branch - 1]
            npi = n * math.pi
            gap = p.rho1 * mu2 / p.k1 - npi * npi
            if branch == 1:
                C = 1.0 / npi
                D = C * gap / npi
            else:
                # |n| keeps the -n eigenfunction equal to the +n one, so the
                # trace coefficient is even in n and conjugate pairing is exact
                D = 1.0 / abs(npi)
                C = npi * D / gap
            out.append(ConservativeMode(branch, n, mu2, C, D))
    return out


def boundary_trace_coeff(m: ConservativeMode) -> float:
    """phi_x(1) + psi(1) for phi = C sin(n pi x), psi = D cos(n pi x)."""
    npi = m.index * math.pi
    sign = -1.0 if m.index % 2 else 1.0
    return sign * (m.C * npi + m.D)
