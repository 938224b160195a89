"""Linear-algebra primitives shared across the package.

Operator bases (Pauli, Gell-Mann, generalized Pauli), the exponential
measurement/projection set used for process tomography, Haar sampling and
process-matrix helpers. Matrices are plain complex ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Primitive cube root of unity used by the qutrit clock matrix.
BETA = -0.5 + 1j * np.sqrt(3) / 2

#: Square root of the 0-2 swap gate, the qutrit calibration reference.
SSW02 = np.array(
    [[1, 0, -1j], [0, np.sqrt(2), 0], [-1j, 0, 1]], dtype=complex
) / np.sqrt(2)

SUPPORTED_DIMS = (2, 3)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2).conj()


def is_unitary(u: np.ndarray, atol: float = 1e-10) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return np.allclose(dagger(u) @ u, np.eye(u.shape[0]), atol=atol, rtol=0)


def _check_dim(d: int) -> None:
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported dimension d={d}; expected one of {SUPPORTED_DIMS}")


def pauli_matrices() -> np.ndarray:
    """X, Y, Z stacked as a ``(3, 2, 2)`` array."""
    return np.array(
        [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
    )


def gell_mann_matrices() -> np.ndarray:
    """The eight Gell-Mann matrices as a ``(8, 3, 3)`` array.

    Index ``m`` of the returned array holds lambda_{m+1} in the usual
    physics ordering: lambda_1/2 couple levels 0-1, lambda_3 is diagonal,
    lambda_4/5 couple 0-2, lambda_6/7 couple 1-2 and lambda_8 is
    ``diag(1, 1, -2)/sqrt(3)``.
    """
    lam = np.zeros((8, 3, 3), dtype=complex)
    lam[0][0, 1] = lam[0][1, 0] = 1
    lam[1][0, 1], lam[1][1, 0] = -1j, 1j
    lam[2][0, 0], lam[2][1, 1] = 1, -1
    lam[3][0, 2] = lam[3][2, 0] = 1
    lam[4][0, 2], lam[4][2, 0] = -1j, 1j
    lam[5][1, 2] = lam[5][2, 1] = 1
    lam[6][1, 2], lam[6][2, 1] = -1j, 1j
    lam[7] = np.diag([1, 1, -2]) / np.sqrt(3)
    return lam


def hermitian_generators(d: int) -> np.ndarray:
    """Traceless Hermitian generators: Paulis for ``d=2``, Gell-Mann for ``d=3``."""
    _check_dim(d)
    return pauli_matrices() if d == 2 else gell_mann_matrices()


def expm_hermitian(h: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i t h)`` for Hermitian ``h`` (batched over leading axes).

    Uses the eigendecomposition, so the result is unitary to machine
    precision.
    """
    e, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * t * e)[..., None, :]) @ dagger(v)


@dataclass(frozen=True)
class OperatorBasis:
    """A labelled set of ``d**2`` operators spanning the ``d x d`` matrices."""

    name: str
    operators: np.ndarray
    labels: tuple[str, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.operators.shape[-1]

    def __len__(self) -> int:
        return self.operators.shape[0]

    def gram(self) -> np.ndarray:
        """Hilbert-Schmidt Gram matrix ``G[m, n] = tr(A_m^dag A_n)``."""
        ops = self.operators
        return np.einsum("mji,nji->mn", ops.conj(), ops)

    def is_complete(self, tol: float = 1e-10) -> bool:
        return np.linalg.matrix_rank(self.gram(), tol=tol) == self.dim**2

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``c`` with ``op = sum_m c[m] A_m``."""
        b = np.einsum("mji,ji->m", self.operators.conj(), op)
        return np.linalg.solve(self.gram(), b)


def projection_operator_set(d: int) -> OperatorBasis:
    """The tomography operator set ``{I} + {exp(-i pi/4 lambda_m)}``.

    ``A_0`` is the identity so that the set has the ``d**2`` members needed
    for a complete basis; the remaining elements are generated by the Paulis
    (``d=2``) or the Gell-Mann matrices (``d=3``).
    """
    gens = hermitian_generators(d)
    ops = np.concatenate([np.eye(d, dtype=complex)[None], expm_hermitian(gens, np.pi / 4)])
    labels = ("I",) + tuple(f"A{m}" for m in range(1, d * d))
    return OperatorBasis("projection", ops, labels)


def clock_and_shift() -> tuple[np.ndarray, np.ndarray]:
    """Qutrit shift ``X3`` and clock ``Z3 = diag(1, beta, beta**2)``."""
    x3 = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=complex)
    z3 = np.diag([1, BETA, BETA**2])
    return x3, z3


def generalized_pauli_basis(d: int = 3) -> OperatorBasis:
    """Orthogonal Pauli-type basis with ``tr(P_m^dag P_n) = d delta_mn``.

    For ``d=3`` the order is ``I, X1, X2, Z1, Z1X1, Z1X2, Z2, Z2X1, Z2X2``;
    for ``d=2`` it is the ordinary ``I, X, Y, Z``.
    """
    _check_dim(d)
    if d == 2:
        ops = np.concatenate([np.eye(2, dtype=complex)[None], pauli_matrices()])
        return OperatorBasis("pauli", ops, ("I", "X", "Y", "Z"))
    x3, z3 = clock_and_shift()
    mp = np.linalg.matrix_power
    ops, labels = [], []
    for a in range(3):
        for b in range(3):
            ops.append(mp(z3, a) @ mp(x3, b))
            zs = f"Z{a}" if a else ""
            xs = f"X{b}" if b else ""
            labels.append(zs + xs or "I")
    return OperatorBasis("pauli", np.array(ops), tuple(labels))


def haar_random_unitary(d: int, seed: int | None = None, special: bool = False) -> np.ndarray:
    """Haar-distributed ``d x d`` unitary from QR of a complex Ginibre matrix.

    The diagonal of ``R`` is made positive so the distribution is exactly
    Haar. With ``special=True`` the global phase is fixed so ``det U = 1``.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    u = q * (diag / np.abs(diag))
    if special:
        u = u / np.linalg.det(u) ** (1.0 / d)
    return u


def completion_unitary(psi: np.ndarray) -> np.ndarray:
    """A unitary whose first column is the normalized vector ``psi``."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    d = psi.size
    m = np.eye(d, dtype=complex)
    m[:, 0] = psi
    q, r = np.linalg.qr(m)
    # undo the phase QR puts on the first column
    return q * (r[0, 0] / abs(r[0, 0]))


@dataclass
class ProcessMatrix:
    """Process matrix ``chi`` of a channel in a given operator basis.

    The channel acts as ``rho -> sum_mn chi[m, n] A_m rho A_n^dag``.
    """

    chi: np.ndarray
    basis: OperatorBasis

    @property
    def dim(self) -> int:
        return self.basis.dim

    def apply(self, rho: np.ndarray) -> np.ndarray:
        ops = self.basis.operators
        return np.einsum("mn,mij,jk,nlk->il", self.chi, ops, rho, ops.conj())

    def tp_residual(self) -> float:
        """Max-norm deviation of ``sum_mn chi_mn A_n^dag A_m`` from identity."""
        ops = self.basis.operators
        s = np.einsum("mn,nji,mjk->ik", self.chi, ops.conj(), ops)
        return float(np.max(np.abs(s - np.eye(self.dim))))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of ``chi`` in the orthonormal Pauli frame."""
        c = to_pauli_frame(self)
        return float(np.linalg.eigvalsh((c + dagger(c)) / 2)[0])

    def in_basis(self, basis: OperatorBasis) -> ProcessMatrix:
        return change_basis(self, basis)


def _transfer(src: OperatorBasis, dst: OperatorBasis) -> np.ndarray:
    # src_m = sum_k T[k, m] dst_k
    return np.stack([dst.coefficients(op) for op in src.operators], axis=1)


def change_basis(pm: ProcessMatrix, basis: OperatorBasis) -> ProcessMatrix:
    """Exact linear basis change ``chi' = T chi T^dag``."""
    if basis.dim != pm.dim:
        raise ValueError("basis dimension mismatch")
    t = _transfer(pm.basis, basis)
    return ProcessMatrix(t @ pm.chi @ dagger(t), basis)


def to_pauli_frame(pm: ProcessMatrix) -> np.ndarray:
    if pm.basis.name == "pauli":
        return pm.chi
    return change_basis(pm, generalized_pauli_basis(pm.dim)).chi


def unitary_to_chi(u: np.ndarray, basis: OperatorBasis, atol: float = 1e-8) -> ProcessMatrix:
    """Process matrix of the unitary channel ``rho -> U rho U^dag``."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (basis.dim, basis.dim):
        raise ValueError(f"unitary shape {u.shape} does not match basis dimension {basis.dim}")
    if not is_unitary(u, atol):
        raise ValueError("input is not unitary")
    c = basis.coefficients(u)
    return ProcessMatrix(np.outer(c, c.conj()), basis)


def _psd_sqrt(h: np.ndarray) -> np.ndarray:
    e, v = np.linalg.eigh((h + dagger(h)) / 2)
    return (v * np.sqrt(np.clip(e, 0, None))) @ dagger(v)


def process_fidelity(chi_ideal: ProcessMatrix, chi_meas: ProcessMatrix, method: str = "uhlmann") -> float:
    """Fidelity between two process matrices.

    Both inputs are moved to the orthonormal Pauli frame and normalized to
    unit trace. ``method="uhlmann"`` (default) returns
    ``||sqrt(chi_ideal) sqrt(chi_meas)||_tr ** 2``, which equals
    ``tr(chi_ideal chi_meas)`` when the ideal channel is unitary and hence
    ``|tr(U^dag V)|**2 / d**2`` for two unitary channels.
    ``method="trace_norm"`` returns the plain ``||chi_ideal^dag chi_meas||_tr``.
    """
    if chi_ideal.dim != chi_meas.dim:
        raise ValueError("process matrices have different dimensions")
    a = to_pauli_frame(chi_ideal)
    b = to_pauli_frame(chi_meas)
    a = a / np.trace(a).real
    b = b / np.trace(b).real
    if method == "uhlmann":
        s = np.linalg.svd(_psd_sqrt(a) @ _psd_sqrt(b), compute_uv=False)
        return float(np.sum(s) ** 2)
    if method == "trace_norm":
        return float(np.sum(np.linalg.svd(dagger(a) @ b, compute_uv=False)))
    raise ValueError(f"unknown fidelity method {method!r}")


def unitary_superoperator(u: np.ndarray) -> np.ndarray:
    """Row-major Liouville matrix of ``rho -> U rho U^dag``."""
    return np.kron(u, u.conj())
