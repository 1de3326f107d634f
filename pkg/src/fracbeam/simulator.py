"""Finite-element simulation of the augmented damped beam and decay fitting.

Space: continuous P1 elements for the displacement u (u(0) = 0) and the
rotation y (zero mean, imposed by deflating the nodal basis).  The damper is
the family of relaxation ODEs on the nodes of a DiffusiveGrid, coupled to the
tip velocity.  Time: implicit midpoint (default) or backward Euler, one sparse
LU factorization per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fractional import DiffusiveGrid, kappa
from .model import SystemParams, classify_speeds, resonance_class


class AssemblyError(RuntimeError):
    pass


class InvalidState(ValueError):
    pass


class SolveFailure(RuntimeError):
    pass


class DegenerateWindow(ValueError):
    pass


def _p1_matrices(n_elems: int):
    h = 1.0 / n_elems
    n = n_elems + 1
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    mass = sp.diags([np.full(n - 1, h / 6), main * h / 3, np.full(n - 1, h / 6)], [-1, 0, 1], format="csr")
    stiff = sp.diags([np.full(n - 1, -1 / h), main / h, np.full(n - 1, -1 / h)], [-1, 0, 1], format="csr")
    # cross[a, b] = int phi_a * phi_b' dx
    diag = np.zeros(n)
    diag[0], diag[-1] = -0.5, 0.5
    cross = sp.diags([np.full(n - 1, -0.5), diag, np.full(n - 1, 0.5)], [-1, 0, 1], format="csr")
    return mass, stiff, cross


@dataclass(frozen=True)
class DiscreteOperator:
    params: SystemParams
    n_elems: int
    boundary: str  # "damped" (free tip with damper) or "clamped" (u(1) = 0)
    grid: DiffusiveGrid | None
    P_u: sp.csr_matrix  # reduced -> nodal for u
    P_y: sp.csr_matrix  # reduced -> nodal for y (zero-mean columns)
    mass_r: sp.csr_matrix  # reduced block diag(rho1 M, rho2 M)
    stiff_r: sp.csr_matrix  # reduced energy stiffness
    tip: np.ndarray  # reduced-coordinate row picking u(1)
    nodal_mass: sp.csr_matrix
    relax: np.ndarray  # xi_j^2 + eta
    mu: np.ndarray
    w: np.ndarray
    gk: float  # gamma * kappa(alpha)
    nodes: np.ndarray = field(repr=False)

    @property
    def n_q(self) -> int:
        return self.mass_r.shape[0]

    @property
    def n_omega(self) -> int:
        return self.relax.size

    @property
    def size(self) -> int:
        return 2 * self.n_q + self.n_omega

    def system_matrices(self):
        """(E, A) with E x' = A x for x = (q, v, omega)."""
        nq, nw = self.n_q, self.n_omega
        eye = sp.identity(nq, format="csr")
        tip = sp.csr_matrix(self.tip.reshape(1, -1))
        wmu = sp.csr_matrix((self.w * self.mu).reshape(1, -1)) if nw else sp.csr_matrix((1, 0))
        blocks_A = [
            [None, eye, None],
            [-self.stiff_r, None, -self.gk * (tip.T @ wmu) if nw else None],
            [None, sp.csr_matrix(self.mu.reshape(-1, 1)) @ tip if nw else None, -sp.diags(self.relax) if nw else None],
        ]
        E = sp.block_diag([eye, self.mass_r] + ([sp.identity(nw)] if nw else []), format="csc")
        A = _bmat(blocks_A, nq, nw)
        return E, A

    def energy_matrix(self) -> sp.csr_matrix:
        nw = self.n_omega
        parts = [self.stiff_r, self.mass_r]
        if nw:
            parts.append(sp.diags(self.gk * self.w))
        return sp.block_diag(parts, format="csr")

    def energy_generator(self) -> sp.csr_matrix:
        """G with d/dt (x^T Q x / 2) = x^T G x, G = Q E^{-1} A; skew when gamma = 0."""
        nq, nw = self.n_q, self.n_omega
        tip = sp.csr_matrix(self.tip.reshape(1, -1))
        blocks = [[None, self.stiff_r, None], [-self.stiff_r, None, None], [None, None, None]]
        if nw:
            wmu = sp.csr_matrix((self.w * self.mu).reshape(1, -1))
            blocks[1][2] = -self.gk * (tip.T @ wmu)
            blocks[2][1] = self.gk * sp.csr_matrix((self.w * self.mu).reshape(-1, 1)) @ tip
            blocks[2][2] = -sp.diags(self.gk * self.w * self.relax)
        return _bmat(blocks, nq, nw)

    def energy(self, x: np.ndarray) -> float:
        nq = self.n_q
        q, v, om = x[:nq], x[nq : 2 * nq], x[2 * nq :]
        e = 0.5 * (q @ (self.stiff_r @ q) + v @ (self.mass_r @ v))
        if om.size:
            e += 0.5 * self.gk * float(np.sum(self.w * om * om))
        return float(e)

    def dissipation_rate(self, x: np.ndarray) -> float:
        om = x[2 * self.n_q :]
        return -self.gk * float(np.sum(self.w * self.relax * om * om)) if om.size else 0.0

    # -------------------------------------------------------- state mapping

    def _split(self, nodal: np.ndarray, which: str) -> np.ndarray:
        nodal = np.asarray(nodal, dtype=float)
        if which == "u":
            return self.P_u.T @ nodal  # P_u selects nodes, so its transpose restricts
        # zero-mean columns e_j - c_j e_last: the first n-1 nodal values are the coordinates.
        return nodal[:-1].copy()

    def pack(self, state: "BeamState") -> np.ndarray:
        check_state(self, state)
        qu = self._split(state.u, "u")
        qv = self._split(state.u_t, "u")
        yu = self._split(state.y, "y")
        yv = self._split(state.y_t, "y")
        om = np.zeros(self.n_omega) if state.omega is None else np.asarray(state.omega, float)
        return np.concatenate([qu, yu, qv, yv, om])

    def unpack(self, x: np.ndarray, time: float = 0.0) -> "BeamState":
        nu = self.P_u.shape[1]
        nq = self.n_q
        q, v, om = x[:nq], x[nq : 2 * nq], x[2 * nq :]
        return BeamState(
            u=self.P_u @ q[:nu],
            u_t=self.P_u @ v[:nu],
            y=self.P_y @ q[nu:],
            y_t=self.P_y @ v[nu:],
            omega=om.copy(),
            time=time,
        )

    def lowest_frequency(self) -> float:
        vals = spla.eigsh(self.stiff_r.tocsc(), k=1, M=self.mass_r.tocsc(), sigma=0.0, which="LM")[0]
        return float(math.sqrt(max(vals[0], 0.0)))

    def frequencies(self, k: int) -> np.ndarray:
        vals = spla.eigsh(self.stiff_r.tocsc(), k=k, M=self.mass_r.tocsc(), sigma=0.0, which="LM")[0]
        return np.sqrt(np.sort(np.maximum(vals, 0.0)))


def _bmat(blocks, nq, nw):
    shapes = [nq, nq, nw]
    rows = []
    for i in range(3):
        if shapes[i] == 0:
            continue
        row = []
        for j in range(3):
            if shapes[j] == 0:
                continue
            b = blocks[i][j]
            row.append(sp.csr_matrix((shapes[i], shapes[j])) if b is None else b)
        rows.append(row)
    return sp.bmat(rows, format="csc")


def assemble(
    p: SystemParams,
    n_elems: int,
    grid: DiffusiveGrid | None,
    boundary: str = "damped",
) -> DiscreteOperator:
    """Reduced mass, stiffness and damper coupling on a uniform mesh of [0, 1]."""
    if int(n_elems) != n_elems or n_elems < 4:
        raise AssemblyError("n_elems must be an integer >= 4")
    if boundary not in ("damped", "clamped"):
        raise AssemblyError("boundary must be 'damped' or 'clamped'")
    n_elems = int(n_elems)
    if boundary == "damped" and p.gamma > 0:
        if grid is None:
            raise AssemblyError("a DiffusiveGrid is required when gamma > 0")
        if abs(grid.alpha - p.alpha) > 0 or abs(grid.eta - p.eta) > 0:
            raise AssemblyError("grid alpha/eta do not match the parameters")
    M, K, G = _p1_matrices(n_elems)
    n = n_elems + 1
    keep_u = np.arange(1, n) if boundary == "damped" else np.arange(1, n - 1)
    P_u = sp.csr_matrix((np.ones(keep_u.size), (keep_u, np.arange(keep_u.size))), shape=(n, keep_u.size))
    m = np.asarray(M.sum(axis=1)).ravel()  # int phi_a
    rows = np.concatenate([np.arange(n - 1), np.full(n - 1, n - 1)])
    cols = np.concatenate([np.arange(n - 1), np.arange(n - 1)])
    vals = np.concatenate([np.ones(n - 1), -m[:-1] / m[-1]])
    P_y = sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))
    S_full = sp.bmat([[p.k1 * K, p.k1 * G.T], [p.k1 * G, p.k1 * M + p.k2 * K]], format="csr")
    M_full = sp.block_diag([p.rho1 * M, p.rho2 * M], format="csr")
    P = sp.block_diag([P_u, P_y], format="csr")
    stiff_r = (P.T @ S_full @ P).tocsr()
    mass_r = (P.T @ M_full @ P).tocsr()
    tip = np.zeros(P.shape[1])
    if boundary == "damped":
        tip[keep_u.size - 1] = 1.0
    use_grid = boundary == "damped" and grid is not None
    relax = grid.nodes**2 + p.eta if use_grid else np.zeros(0)
    mu_v = grid.mu_values.copy() if use_grid else np.zeros(0)
    w = grid.weights.copy() if use_grid else np.zeros(0)
    gk = p.gamma * kappa(p.alpha) if use_grid else 0.0
    op = DiscreteOperator(
        params=p,
        n_elems=n_elems,
        boundary=boundary,
        grid=grid if use_grid else None,
        P_u=P_u,
        P_y=P_y,
        mass_r=mass_r,
        stiff_r=stiff_r,
        tip=tip,
        nodal_mass=M,
        relax=relax,
        mu=mu_v,
        w=w,
        gk=gk,
        nodes=np.linspace(0.0, 1.0, n),
    )
    try:
        spla.splu(stiff_r.tocsc())
    except RuntimeError as exc:  # singular factor
        raise AssemblyError(f"singular stiffness: {exc}") from exc
    return op


@dataclass
class BeamState:
    u: np.ndarray
    u_t: np.ndarray
    y: np.ndarray
    y_t: np.ndarray
    omega: np.ndarray | None = None
    time: float = 0.0


def check_state(op: DiscreteOperator, s: BeamState, tol: float = 1e-10) -> None:
    n = op.n_elems + 1
    for name in ("u", "u_t", "y", "y_t"):
        arr = np.asarray(getattr(s, name))
        if arr.shape != (n,):
            raise InvalidState(f"{name} must have {n} nodal values")
        if not np.all(np.isfinite(arr)):
            raise InvalidState(f"{name} contains non-finite values")
    scale = max(1.0, *(float(np.max(np.abs(getattr(s, k)))) for k in ("u", "u_t", "y", "y_t")))
    if abs(s.u[0]) > tol * scale or abs(s.u_t[0]) > tol * scale:
        raise InvalidState("u(0) = 0 is violated")
    if op.boundary == "clamped" and (abs(s.u[-1]) > tol * scale or abs(s.u_t[-1]) > tol * scale):
        raise InvalidState("u(1) = 0 is violated for the clamped variant")
    m = np.asarray(op.nodal_mass.sum(axis=1)).ravel()
    if abs(m @ s.y) > tol * scale or abs(m @ s.y_t) > tol * scale:
        raise InvalidState("y and y_t must have zero mean")
    if s.omega is not None and np.asarray(s.omega).shape != (op.n_omega,):
        raise InvalidState(f"omega must have {op.n_omega} entries")


def state_from_functions(op: DiscreteOperator, u0, u1, y0, y1) -> BeamState:
    """Nodal interpolation; the y components are shifted to zero mean."""
    x = op.nodes
    m = np.asarray(op.nodal_mass.sum(axis=1)).ravel()

    def ev(f):
        return np.zeros_like(x) if f is None else np.asarray(f(x), dtype=float) * np.ones_like(x)

    u, ut, y, yt = ev(u0), ev(u1), ev(y0), ev(y1)
    y = y - (m @ y) / m.sum()
    yt = yt - (m @ yt) / m.sum()
    if op.boundary == "clamped":
        u[-1] = ut[-1] = 0.0
    u[0] = ut[0] = 0.0
    return BeamState(u, ut, y, yt, np.zeros(op.n_omega), 0.0)


@dataclass
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray
    fitted_exponent: float | None = None
    fit_window: tuple[float, float] | None = None
    scheme: str = "midpoint"
    fundamental_period: float | None = None
    dissipation: np.ndarray | None = None

    def max_step_increase(self) -> float:
        if self.energies.size < 2:
            return 0.0
        return float(np.max(np.diff(self.energies)))


def evolve(
    op: DiscreteOperator,
    init: BeamState,
    dt: float,
    t_end: float,
    scheme: str = "midpoint",
    record_every: int = 1,
    return_state: bool = False,
):
    """March E x' = A x from init to t_end, recording E1 every ``record_every`` steps."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if scheme not in ("midpoint", "backward_euler"):
        raise ValueError("scheme must be 'midpoint' or 'backward_euler'")
    x = op.pack(init)
    E, A = op.system_matrices()
    if scheme == "midpoint":
        lhs = (E - 0.5 * dt * A).tocsc()
        rhs_mat = (E + 0.5 * dt * A).tocsr()
    else:
        lhs = (E - dt * A).tocsc()
        rhs_mat = E.tocsr()
    try:
        lu = spla.splu(lhs)
    except RuntimeError as exc:
        raise SolveFailure(str(exc)) from exc
    n_steps = int(round(t_end / dt))
    times = [init.time]
    energies = [op.energy(x)]
    for k in range(1, n_steps + 1):
        x = lu.solve(rhs_mat @ x)
        if not np.all(np.isfinite(x)):
            raise SolveFailure(f"non-finite state at step {k}")
        if k % record_every == 0 or k == n_steps:
            times.append(init.time + k * dt)
            energies.append(op.energy(x))
    try:
        period = 2.0 * math.pi / op.lowest_frequency()
    except Exception:  # noqa: BLE001 - diagnostics only
        period = None
    trace = EnergyTrace(np.array(times), np.array(energies), scheme=scheme, fundamental_period=period)
    if return_state:
        return trace, op.unpack(x, init.time + n_steps * dt)
    return trace


# ------------------------------------------------------------ decay fitting


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    poly_residual: float
    exp_rate: float
    exp_residual: float
    window: tuple[float, float]
    n_samples: int
    not_polynomial: bool


def predicted_exponent(p: SystemParams) -> float:
    """2/(1-alpha) for equal speeds without resonance, 2/(5-alpha) otherwise."""
    if classify_speeds(p).equal and not resonance_class(p).resonant:
        return 2.0 / (1.0 - p.alpha)
    return 2.0 / (5.0 - p.alpha)


def fit_decay_exponent(trace: EnergyTrace, window: tuple[float, float] | None = None) -> DecayFit:
    """Least squares of log E against log t (power law) and against t (exponential).

    Residuals are RMS deviations of log E.  The default window starts after five
    fundamental periods and runs to the end of the trace.
    """
    t = np.asarray(trace.times, float)
    e = np.asarray(trace.energies, float)
    if window is None:
        start = 5.0 * trace.fundamental_period if trace.fundamental_period else t[0]
        window = (max(start, t[0]), t[-1])
    lo, hi = window
    sel = (t >= lo) & (t <= hi) & (t > 0)
    if np.count_nonzero(sel) < 10:
        raise DegenerateWindow(f"only {np.count_nonzero(sel)} samples in window {window}")
    ts, es = t[sel], e[sel]
    if np.any(es <= 0):
        raise DegenerateWindow("energies must be positive on the fit window")
    le = np.log(es)
    A_pow = np.column_stack([np.log(ts), np.ones_like(ts)])
    c_pow, *_ = np.linalg.lstsq(A_pow, le, rcond=None)
    r_pow = float(np.sqrt(np.mean((A_pow @ c_pow - le) ** 2)))
    A_exp = np.column_stack([ts, np.ones_like(ts)])
    c_exp, *_ = np.linalg.lstsq(A_exp, le, rcond=None)
    r_exp = float(np.sqrt(np.mean((A_exp @ c_exp - le) ** 2)))
    exponent = float(-c_pow[0])
    trace.fitted_exponent = exponent
    trace.fit_window = (float(lo), float(hi))
    return DecayFit(
        exponent=exponent,
        poly_residual=r_pow,
        exp_rate=float(-c_exp[0]),
        exp_residual=r_exp,
        window=(float(lo), float(hi)),
        n_samples=int(ts.size),
        not_polynomial=r_exp < r_pow,
    )
