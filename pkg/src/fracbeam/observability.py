"""Gap structure, exponential-family Gram systems and truncated observability
constants for the conservative beam observed through phi_x(1, t) + psi(1, t).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral, Rational
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .model import SystemParams, classify_speeds

SINGULAR_GRAM_FLOOR = 1e-14


class ChainTooLong(RuntimeError):
    """Three or more consecutive exponents lie within the chain threshold."""


class ThresholdViolation(ValueError):
    """The time horizon does not exceed the Ingham threshold."""


class SingularGram(RuntimeError):
    """The Gram matrix is numerically singular."""


def mode_key(m) -> tuple[int, int]:
    return (int(m.branch), int(m.index))


# ---------------------------------------------------------------------------
# gaps


@dataclass(frozen=True)
class ScalingFit:
    """gap * n**beta stays within [c1, c2] over the fitted indices."""

    beta: float
    c1: float
    c2: float
    n_points: int
    n_min: int
    n_max: int


@dataclass(frozen=True)
class GapReport:
    sorted_modes: tuple
    chains: tuple[tuple[int, int], ...]
    min_same_branch_gap: float
    min_cross_branch_gap: float
    scaling_fit: ScalingFit
    gamma_gap: float

    def chain_keys(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        return [(mode_key(self.sorted_modes[i]), mode_key(self.sorted_modes[j])) for i, j in self.chains]


def _freqs(modes) -> np.ndarray:
    return np.array([complex(m.lam).imag for m in modes])


def same_branch_gaps(modes) -> dict[int, float]:
    out = {}
    for b in sorted({m.branch for m in modes}):
        f = np.sort(_freqs([m for m in modes if m.branch == b]))
        out[b] = float(np.diff(f).min()) if f.size > 1 else math.inf
    return out


def cross_branch_minima(modes) -> list[tuple[object, object, float]]:
    """For each mode of the second branch with positive index, its nearest
    mode on the first branch and their distance."""
    branches = sorted({m.branch for m in modes})
    if len(branches) != 2:
        return []
    first = [m for m in modes if m.branch == branches[0]]
    f = _freqs(first)
    out = []
    for m in modes:
        if m.branch != branches[1] or m.index <= 0:
            continue
        d = np.abs(f - complex(m.lam).imag)
        j = int(np.argmin(d))
        out.append((first[j], m, float(d[j])))
    return out


def _fit(ns: np.ndarray, gaps: np.ndarray) -> ScalingFit:
    ns = np.asarray(ns, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if ns.size < 3:
        raise ValueError("need at least three points for a scaling fit")
    slope, _ = np.polyfit(np.log(ns), np.log(gaps), 1)
    beta = float(-slope)
    scaled = gaps * ns**beta
    return ScalingFit(beta, float(scaled.min()), float(scaled.max()), int(ns.size), int(ns.min()), int(ns.max()))


def pair_gap_fit(modes, pairs: Iterable[tuple[tuple[int, int], tuple[int, int]]]) -> ScalingFit:
    """Fit |lam_a - lam_b| against the larger index along explicit key pairs."""
    table = {mode_key(m): m for m in modes}
    ns, gaps = [], []
    for ka, kb in pairs:
        a, b = table[ka], table[kb]
        ns.append(max(abs(ka[1]), abs(kb[1])))
        gaps.append(abs(complex(a.lam) - complex(b.lam)))
    return _fit(np.array(ns), np.array(gaps))


def record_low_fit(cross) -> ScalingFit:
    """Regress the record lows of the cross-branch minima on the index.

    Only indices where the minimum drops below every earlier one enter the
    fit.  Families with bounded-below gaps produce fewer than three records
    and are reported as uniform (beta = 0) with the range of all minima.
    """
    if not cross:
        return ScalingFit(0.0, math.nan, math.nan, 0, 0, 0)
    cross = sorted(cross, key=lambda c: c[1].index)
    ns = np.array([m.index for _, m, _ in cross], dtype=float)
    g = np.array([d for _, _, d in cross])
    keep = g < np.minimum.accumulate(np.concatenate(([np.inf], g[:-1])))
    # a trailing plateau of equal minima is not a record, but the first hit is
    if keep.sum() >= 3 and g[keep].min() < 0.5 * g[keep].max():
        return _fit(ns[keep], g[keep])
    return ScalingFit(0.0, float(g.min()), float(g.max()), int(g.size), int(ns.min()), int(ns.max()))


def default_gamma_gap(modes) -> float:
    return 0.5 * min(same_branch_gaps(modes).values())


def gap_report(modes, gamma_gap: float | None = None) -> GapReport:
    """Merge both branches by frequency and pair up close cross-branch exponents.

    A chain is an adjacent pair in the merged order closer than gamma_gap.
    """
    modes = sorted(modes, key=lambda m: complex(m.lam).imag)
    if len(modes) < 2:
        raise ValueError("need at least two modes")
    sb = same_branch_gaps(modes)
    if gamma_gap is None:
        gamma_gap = 0.5 * min(sb.values())
    if not gamma_gap > 0:
        raise ValueError("gamma_gap must be positive")
    f = _freqs(modes)
    adj = np.diff(f)
    close = adj <= gamma_gap
    for i in range(close.size - 1):
        if close[i] and close[i + 1]:
            raise ChainTooLong(
                f"modes {mode_key(modes[i])}, {mode_key(modes[i + 1])}, {mode_key(modes[i + 2])}"
                f" lie within gamma_gap={gamma_gap:.3e}"
            )
    chains = tuple((i, i + 1) for i in np.flatnonzero(close).tolist())

    cross = cross_branch_minima(modes)
    min_cross = min((d for _, _, d in cross), default=math.inf)
    if len(sb) == 2:
        # negative indices mirror the positive ones, but check both signs anyway
        by_branch = {b: np.array([fi for fi, m in zip(f, modes) if m.branch == b]) for b in sb}
        b0, b1 = sorted(sb)
        d = np.abs(by_branch[b0][:, None] - by_branch[b1][None, :])
        min_cross = float(d.min())

    fit = record_low_fit(cross)
    return GapReport(
        sorted_modes=tuple(modes),
        chains=chains,
        min_same_branch_gap=float(min(sb.values())),
        min_cross_branch_gap=float(min_cross),
        scaling_fit=fit,
        gamma_gap=float(gamma_gap),
    )


# ---------------------------------------------------------------------------
# wave-speed ratio


@dataclass(frozen=True)
class DiophantineClass:
    tag: str  # UniformGap, RationalNonSquare, PerfectRationalSquare, GenericIrrational
    beta: float
    log_correction: bool
    p0: int | None = None
    q0: int | None = None
    note: str = ""

    @property
    def predicted_gap_law(self) -> tuple[float, bool]:
        return (self.beta, self.log_correction)

    def close_pairs(self, k_max: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Index pairs ((1, q0*k), (2, p0*k)) along which the gap closes."""
        if self.tag != "PerfectRationalSquare":
            raise ValueError("close pairs only exist for perfect rational squares")
        return [((1, self.q0 * k), (2, self.p0 * k)) for k in range(1, k_max + 1)]


def _exact_fraction(ratio) -> Fraction:
    if isinstance(ratio, tuple):
        num, den = ratio
        if not (isinstance(num, Integral) and isinstance(den, Integral)):
            raise TypeError("exact ratios must be integer pairs")
        return Fraction(int(num), int(den))
    if isinstance(ratio, (Rational, Fraction)):
        return Fraction(ratio)
    raise TypeError("exact ratios must be given as integers, Fractions or integer pairs")


def classify_ratio(ratio, is_exact_rational: bool = False) -> DiophantineClass:
    """Classify k1*rho2/(k2*rho1) by how well its square root is approximated
    by rationals.  Floats are never promoted to rationals."""
    if is_exact_rational:
        q = _exact_fraction(ratio)
        if q <= 0:
            raise ValueError("ratio must be positive")
        if q == 1:
            return DiophantineClass("UniformGap", 0.0, False, note="equal speeds; the gap law follows the resonance class")
        rn, rd = math.isqrt(q.numerator), math.isqrt(q.denominator)
        if rn * rn == q.numerator and rd * rd == q.denominator:
            return DiophantineClass("PerfectRationalSquare", 1.0, False, p0=rn, q0=rd)
        return DiophantineClass("RationalNonSquare", 1.0, False, note="square root is a quadratic irrational")
    value = float(ratio)
    if not value > 0:
        raise ValueError("ratio must be positive")
    return DiophantineClass(
        "GenericIrrational",
        1.0,
        True,
        note="holds for almost every ratio; unverifiable for a specific machine number",
    )


def ingham_threshold(p: SystemParams) -> float:
    if classify_speeds(p).equal:
        return 4.0 * math.sqrt(p.rho1 / p.k1)
    return 2.0 * (math.sqrt(p.rho1 / p.k1) + math.sqrt(p.rho2 / p.k2))


# ---------------------------------------------------------------------------
# Gram systems


def exp_integral(z, T: float):
    """integral_0^T exp(z t) dt, with the limit T at z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) * T < 1e-8
    zs = np.where(small, 1.0, z)
    # 2 e^{zT/2} sinh(zT/2) / z avoids cancellation in e^{zT} - 1 for small zT
    val = 2.0 * np.exp(0.5 * zs * T) * np.sinh(0.5 * zs * T) / zs
    return np.where(small, T * (1.0 + 0.5 * z * T), val)


def _integral_expm(K: np.ndarray, T: float) -> np.ndarray:
    """Batched integral_0^T expm(t K) dt via one augmented exponential."""
    b, n, _ = K.shape
    aug = np.zeros((b, 2 * n, 2 * n), dtype=complex)
    aug[:, :n, :n] = K * T
    aug[:, :n, n:] = np.eye(n) * T
    # an orthogonal similarity keeps expm off its slow triangular path
    Q = sla.hadamard(2 * n) / math.sqrt(2 * n)
    E = Q @ sla.expm(Q @ aug @ Q) @ Q
    return E[:, :n, n:]


@dataclass(frozen=True)
class MomentSystem:
    """Gram system of the boundary-output family on (0, T).

    The k-th output exponential is tau_k exp(lam_k t).  The family actually
    assembled replaces the second member b of each chain (a, b) by the divided
    difference (exp(lam_b t) - exp(lam_a t)) / (lam_b - lam_a); ``transform``
    maps tau-scaled exponential coefficients to family coefficients.
    """

    modes: tuple[tuple[int, int], ...]
    lams: np.ndarray
    T: float
    gram: np.ndarray
    weights: np.ndarray
    chains: tuple[tuple[int, int], ...]
    transform: np.ndarray
    divided_differences: bool
    threshold: float
    eig_min: float
    eig_max: float

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def truncation(self) -> int:
        return max(abs(n) for _, n in self.modes)

    @property
    def condition(self) -> float:
        return self.eig_max / self.eig_min if self.eig_min > 0 else math.inf

    def index_of(self, key: tuple[int, int]) -> int:
        return self.modes.index(tuple(key))

    def output_form(self, space_weights=None) -> np.ndarray:
        """Hermitian H with integral |output|^2 = x^H H x for space coordinates x."""
        s = np.ones(self.size) if space_weights is None else resolve_space_weights(space_weights, self.modes)
        B = self.transform * (self.weights * s)[None, :]
        H = B.conj().T @ self.gram.conj() @ B
        return 0.5 * (H + H.conj().T)


def _family(lams: np.ndarray, chains, dd: bool):
    n = lams.size
    second = {}
    if dd:
        for a, b in chains:
            second[b] = a
    return second


def _assemble_gram(lams: np.ndarray, second: dict, T: float, threads: int = 1) -> np.ndarray:
    n = lams.size
    G = exp_integral(lams[:, None] + lams.conj()[None, :], T)
    dd = sorted(second)
    if not dd:
        return G
    plain = [k for k in range(n) if k not in second]
    jobs = []
    # divided-difference rows against plain columns: K = J_i + conj(lam_j) I
    Ji = np.zeros((len(dd), 2, 2), dtype=complex)
    for r, b in enumerate(dd):
        Ji[r] = [[lams[second[b]], 1.0], [0.0, lams[b]]]
    if plain:
        K = Ji[:, None, :, :] + (lams[plain].conj()[None, :, None, None] * np.eye(2))
        jobs.append(("dp", K.reshape(-1, 2, 2)))
    # divided-difference rows against divided-difference columns: J_i (+) conj(J_j)
    I2 = np.eye(2)
    Kdd = np.einsum("rab,cd->racbd", Ji, I2)[:, None] + np.einsum("ab,scd->sacbd", I2, Ji.conj())[None]
    jobs.append(("dd", Kdd.reshape(-1, 4, 4)))

    def run(K):
        if threads <= 1 or K.shape[0] < 2 * threads:
            return _integral_expm(K, T)
        parts = np.array_split(K, threads)
        with ThreadPoolExecutor(threads) as ex:
            return np.concatenate(list(ex.map(lambda k: _integral_expm(k, T), parts)))

    for kind, K in jobs:
        W = run(K)
        if kind == "dp":
            # g_i = e1^T e^{tJ} e2, plain column: entry (0, 1)
            vals = W[:, 0, 1].reshape(len(dd), len(plain))
            rows = np.array(dd)[:, None]
            cols = np.array(plain)[None, :]
            G[rows, cols] = vals
            G[cols.T, rows.T] = vals.conj().T
        else:
            # u = e1 (x) e1, v = e2 (x) e2 in the Kronecker basis: indices 0 and 3
            vals = W[:, 0, 3].reshape(len(dd), len(dd))
            idx = np.array(dd)
            G[np.ix_(idx, idx)] = vals
    return 0.5 * (G + G.conj().T)


def assemble_moment_system(
    modes,
    chains,
    T: float,
    weights=None,
    *,
    threshold: float | None = None,
    params: SystemParams | None = None,
    divided_differences: bool = True,
    allow_below_threshold: bool = False,
    threads: int = 1,
) -> MomentSystem:
    """Assemble the Gram system for ``modes`` on (0, T).

    ``chains`` is a sequence of ((branch, n), (branch, n)) key pairs, for
    example ``GapReport.chain_keys()``.  The horizon is checked against
    ``threshold`` (or the Ingham threshold of ``params``).
    """
    if threshold is None:
        if params is None:
            raise ValueError("pass threshold or params to check the horizon")
        threshold = ingham_threshold(params)
    if not T > 0:
        raise ValueError("T must be positive")
    if T <= threshold and not allow_below_threshold:
        raise ThresholdViolation(f"T={T:.6g} does not exceed the threshold {threshold:.6g}")
    modes = sorted(modes, key=lambda m: complex(m.lam).imag)
    keys = tuple(mode_key(m) for m in modes)
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate modes")
    lams = np.array([complex(m.lam) for m in modes])
    if weights is None:
        tau = np.array([float(getattr(m, "trace_coeff", 1.0)) for m in modes])
    else:
        tau = np.asarray(weights, dtype=float)
        if tau.shape != (len(modes),):
            raise ValueError("weights must match the mode list")
    pos = {k: i for i, k in enumerate(keys)}
    pairs = []
    used = set()
    for ka, kb in chains:
        a, b = pos[tuple(ka)], pos[tuple(kb)]
        if a > b:
            a, b = b, a
        if a in used or b in used:
            raise ChainTooLong(f"chains overlap at {keys[a]} / {keys[b]}")
        used.update((a, b))
        pairs.append((a, b))
    pairs.sort()
    second = _family(lams, pairs, divided_differences)
    G = _assemble_gram(lams, second, T, threads)
    P = np.eye(len(modes), dtype=complex)
    for b, a in second.items():
        P[a, b] = 1.0
        P[b, b] = lams[b] - lams[a]
    ev = np.linalg.eigvalsh(G)
    return MomentSystem(
        modes=keys,
        lams=lams,
        T=float(T),
        gram=G,
        weights=tau,
        chains=tuple(pairs),
        transform=P,
        divided_differences=bool(divided_differences),
        threshold=float(threshold),
        eig_min=float(ev[0]),
        eig_max=float(ev[-1]),
    )


def resolve_space_weights(space_weights, keys: Sequence[tuple[int, int]]) -> np.ndarray:
    if hasattr(space_weights, "weight"):
        s = np.array([space_weights.weight(b, n) for b, n in keys], dtype=float)
    elif callable(space_weights):
        s = np.array([space_weights(b, n) for b, n in keys], dtype=float)
    else:
        s = np.asarray(space_weights, dtype=float)
    if s.shape != (len(keys),):
        raise ValueError("space weights must match the mode list")
    if not np.all(s > 0):
        raise ValueError("space weights must be strictly positive")
    return s


@dataclass(frozen=True)
class ObservabilityConstants:
    """Truncated estimates; unpack as ``ell0, ell1 = constants``."""

    ell0: float
    ell1: float
    truncation: int
    n_modes: int

    def __iter__(self):
        return iter((self.ell0, self.ell1))


def observability_constants(ms: MomentSystem, space_weights=None) -> ObservabilityConstants:
    """Extreme Rayleigh quotients of integral |output|^2 against the space norm."""
    if not ms.eig_min >= SINGULAR_GRAM_FLOOR:
        raise SingularGram(f"smallest Gram eigenvalue {ms.eig_min:.3e} is below {SINGULAR_GRAM_FLOOR:.0e}")
    s = np.ones(ms.size) if space_weights is None else resolve_space_weights(space_weights, ms.modes)
    try:
        L = np.linalg.cholesky(ms.gram.conj())
    except np.linalg.LinAlgError as exc:
        raise SingularGram("Gram matrix is not positive definite") from exc
    B = L.conj().T @ (ms.transform * (ms.weights * s)[None, :])
    sv = np.linalg.svd(B, compute_uv=False)
    return ObservabilityConstants(float(sv[0] ** 2), float(sv[-1] ** 2), ms.truncation, ms.size)


def _is_conjugate_symmetric(coeffs: np.ndarray, keys, lams: np.ndarray, tol: float = 1e-14) -> bool:
    pos = {k: i for i, k in enumerate(keys)}
    scale = max(float(np.abs(coeffs).max(initial=0.0)), 1e-300)
    for (b, n), i in pos.items():
        j = pos.get((b, -n))
        if j is None:
            if abs(coeffs[i]) > tol * scale:
                return False
            continue
        if abs(coeffs[i] - np.conj(coeffs[j])) > tol * scale:
            return False
        if abs(lams[i] - np.conj(lams[j])) > 1e-12 * max(abs(lams[i]), 1.0):
            return False
    return True


def boundary_output(coeffs, modes, T: float, n_samples: int):
    """Sample sum_k coeffs_k * trace_coeff_k * exp(lam_k t) uniformly on [0, T].

    Returns (t, series); the series is real when the coefficients are
    conjugate symmetric across n -> -n.
    """
    modes = list(modes)
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (len(modes),):
        raise ValueError("coeffs must be aligned with modes")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    keys = [mode_key(m) for m in modes]
    lams = np.array([complex(m.lam) for m in modes])
    tau = np.array([float(getattr(m, "trace_coeff", 1.0)) for m in modes])
    t = np.linspace(0.0, T, int(n_samples))
    series = np.exp(np.outer(t, lams)) @ (c * tau)
    if _is_conjugate_symmetric(c, keys, lams):
        return t, series.real.copy()
    return t, series


def family_output(ms: MomentSystem, coeffs, t) -> np.ndarray:
    """Output sum_k coeffs_k tau_k exp(lam_k t) for basis coordinates of ms."""
    c = np.asarray(coeffs, dtype=complex)
    return np.exp(np.outer(np.asarray(t, dtype=float), ms.lams)) @ (c * ms.weights)
