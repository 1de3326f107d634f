"""Independent reference computations used by several test modules."""

import mpmath as mp
import numpy as np
from scipy.linalg import expm


def shooting_determinant(lam, p):
    """Boundary determinant from the transfer matrix of the first-order system.

    State (u, u_x, y, y_x) with u(0) = 0 and y_x(0) = 0; the two free initial
    values u_x(0), y(0) are propagated to x = 1 and tested against the damped
    tip condition and y_x(1) = 0.
    """
    k1, k2, r1, r2 = p.k1, p.k2, p.rho1, p.rho2
    A = np.array(
        [
            [0, 1, 0, 0],
            [r1 * lam**2 / k1, 0, 0, -1],
            [0, 0, 0, 1],
            [0, k1 / k2, (r2 * lam**2 + k1) / k2, 0],
        ],
        dtype=complex,
    )
    cols = expm(A)[:, [1, 2]]
    damp = p.gamma * lam * (lam + p.eta) ** (p.alpha - 1) if p.gamma else 0.0
    tip = k1 * (cols[1] + cols[2]) + damp * cols[0]
    yx = cols[3]
    return tip[0] * yx[1] - tip[1] * yx[0]


def newton_oracle(f, z0, tol=1e-13, maxiter=100, h=1e-7):
    z = complex(z0)
    for _ in range(maxiter):
        fz = f(z)
        d = (f(z + h) - f(z - h)) / (2 * h)
        step = fz / d
        z -= step
        if abs(step) < tol * max(1.0, abs(z)):
            return z
    raise RuntimeError("oracle Newton did not converge")


def mp_determinant(lam, p, dps=40):
    """det(M) written out term by term in multiprecision, no rescaling."""
    with mp.workdps(dps):
        lam = mp.mpc(lam)
        rho1, rho2, k1, k2 = (mp.mpf(v) for v in (p.rho1, p.rho2, p.k1, p.k2))
        a = rho2 / k2 + rho1 / k1
        S = mp.sqrt((rho2 / k2 - rho1 / k1) ** 2 - 4 * rho1 / (k2 * lam**2))
        q1 = lam * mp.sqrt((a + S) / 2)
        q2 = lam * mp.sqrt((a - S) / 2)
        f = lambda r: r**2 - rho1 / k1 * lam**2
        g = lambda r: (r**2 - (rho1 / k1 + rho2 / k2) * lam**2) * r
        R = -((rho2 * lam**2 + k1) / (k1 * k2)) * lam * p.gamma * (lam + p.eta) ** (mp.mpf(p.alpha) - 1)
        return (f(q1) - f(q2)) * R * mp.sinh(q1) * mp.sinh(q2) + f(q1) * g(q2) * mp.sinh(q1) * mp.cosh(q2) - f(q2) * g(q1) * mp.sinh(q2) * mp.cosh(q1)


def mp_root(p, seed, dps=40):
    with mp.workdps(dps):
        z = mp.findroot(lambda l: mp_determinant(l, p, dps), mp.mpc(seed))
        return complex(z)


def conservative_mu2_by_polyroots(p, n):
    """Both mu^2 roots of the conservative dispersion relation by a dense
    polynomial solver on the quartic in mu (not the quadratic formula)."""
    w = (n * np.pi) ** 2
    c1, c2 = p.k1 / p.rho1, p.k2 / p.rho2
    coeffs = [1.0, 0.0, -((c1 + c2) * w + p.k1 / p.rho2), 0.0, c1 * c2 * w * w]
    mus = np.roots(coeffs)
    mu2 = np.sort(np.real(mus[np.real(mus) > 0] ** 2))
    return mu2
