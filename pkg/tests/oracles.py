"""Independent reference values and brute-force models used by the tests.

Constants are closed forms evaluated once and frozen here as literals; the
functions re-derive quantities by a route that shares no code with the
package (explicit Kraus sums, matrix-form ODE integration, grid search).
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

# sin(0.2 pi) / (0.2 pi): block-average gain of a 200 MHz tone over 1 ns
SINC_200MHZ = 0.935489283788639
# exp(-220 ns / 220 us)
DECAY_220NS = 0.999000499833375
# omega12 - omega01 of the QuDIT device, GHz
QUDIT_ALPHA_GHZ = -0.209
# diag(1, 1, -2) / sqrt(3)
LAMBDA8_DIAG = (0.5773502691896258, 0.5773502691896258, -1.1547005383792517)
# sSW02 squared: the 0-2 swap with phases
SSW02_SQUARED = np.array([[0, 0, -1j], [0, 1, 0], [-1j, 0, 0]])
# (I - iX) / sqrt(2)
EXP_MINUS_I_PI4_X = np.array([[1, -1j], [-1j, 1]]) / np.sqrt(2)


def clock_shift(d: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Shift ``X|j> = |j+1>`` and clock ``Z|j> = w^j |j>``, built from scratch."""
    x = np.roll(np.eye(d), 1, axis=0).astype(complex)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


def pauli_expansion(u: np.ndarray) -> np.ndarray:
    """Coefficients ``c_ab`` with ``U = sum c_ab Z^a X^b``, by the trace formula."""
    d = u.shape[0]
    x, z = clock_shift(d)
    c = np.zeros((d, d), dtype=complex)
    for a in range(d):
        for b in range(d):
            p = np.linalg.matrix_power(z, a) @ np.linalg.matrix_power(x, b)
            c[a, b] = np.trace(p.conj().T @ u) / d
    return c


def apply_kraus(kraus, rho: np.ndarray) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in kraus)


def depolarizing_kraus(d: int, eps: float) -> list[np.ndarray]:
    """Kraus operators of ``rho -> (1-eps) rho + eps I/d``."""
    x, z = clock_shift(d)
    ops = [np.linalg.matrix_power(z, a) @ np.linalg.matrix_power(x, b) for a in range(d) for b in range(d)]
    ks = [np.sqrt(1 - eps + eps / d**2) * ops[0]]
    ks += [np.sqrt(eps / d**2) * p for p in ops[1:]]
    return ks


def depolarizing_chi_pauli(d: int, eps: float) -> np.ndarray:
    """Process matrix of the depolarizing channel in the ``Z^a X^b`` basis."""
    chi = np.eye(d * d) * eps / d**2
    chi[0, 0] += 1 - eps
    return chi


def random_kraus(d: int, rank: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Kraus set of a random CPTP map: blocks of a Haar-ish isometry."""
    g = rng.normal(size=(rank * d, d)) + 1j * rng.normal(size=(rank * d, d))
    q, _ = np.linalg.qr(g)
    return [q[i * d : (i + 1) * d] for i in range(rank)]


def frozen_dataset_probabilities(kraus, preparations, projections) -> np.ndarray:
    """Exact outcome probabilities ``[prep, proj, outcome]`` of a Kraus channel."""
    d = preparations.shape[1]
    out = np.zeros((len(preparations), len(projections), d))
    ket0 = np.zeros(d)
    ket0[0] = 1
    for k, up in enumerate(preparations):
        psi = up @ ket0
        rho = apply_kraus(kraus, np.outer(psi, psi.conj()))
        for j, pj in enumerate(projections):
            out[k, j] = np.real(np.diag(pj @ rho @ pj.conj().T))
    return out


def lindblad_matrix_ode(segments, collapse, rho0: np.ndarray, rtol=1e-11, atol=1e-13) -> np.ndarray:
    """Integrate the master equation in matrix form with an adaptive solver.

    ``segments`` is a sequence of ``(H, duration)`` pieces of constant
    Hamiltonian; each piece is integrated separately so the adaptive
    stepper never straddles a discontinuity.
    """
    d = rho0.shape[0]
    y = rho0.astype(complex).ravel()
    for h, tau in segments:

        def rhs(t, y, h=h):
            rho = y.reshape(d, d)
            out = -1j * (h @ rho - rho @ h)
            for c in collapse:
                cd = c.conj().T
                out = out + c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
            return out.ravel()

        y = solve_ivp(rhs, (0.0, tau), y, method="DOP853", rtol=rtol, atol=atol).y[:, -1]
    return y.reshape(d, d)


def simplex_least_squares_grid(c: np.ndarray, f: np.ndarray, n: int = 400) -> tuple[np.ndarray, float]:
    """Brute-force ``min ||C p - f||`` over a triangular grid of the 3-simplex."""
    best, arg = np.inf, None
    for i in range(n + 1):
        for j in range(n + 1 - i):
            p = np.array([i, j, n - i - j]) / n
            r = float(np.sum((c @ p - f) ** 2))
            if r < best:
                best, arg = r, p
    return arg, best


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
