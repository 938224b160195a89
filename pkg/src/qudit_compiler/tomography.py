"""Quantum process tomography on the virtual QPU.

Experiment design is ``preparations x projections``: each preparation
unitary maps ``|0>`` to one of the informationally complete input states,
the gate is applied ``n`` times, a projection unitary rotates the
measurement basis and all ``d`` computational-basis outcomes are recorded.

Reconstruction (``pgdb_reconstruct``) is least squares on outcome
frequencies, solved by projected gradient descent with backtracking over
CPTP process matrices. It runs in the orthogonal generalized-Pauli frame,
where ``chi`` is positive semidefinite with unit trace for a CPTP map, and
the result is returned in the requested basis.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .compiler import CompileRequest, _matrix_from_json, _matrix_to_json, compile_gate
from .core import (
    OperatorBasis,
    ProcessMatrix,
    change_basis,
    completion_unitary,
    dagger,
    generalized_pauli_basis,
    pauli_matrices,
    process_fidelity,
    projection_operator_set,
    unitary_to_chi,
    expm_hermitian,
)
from .qpu import VirtualQpu
from .readout import ConfusionMatrix, spam_correct
from .transmon import ControlPulse, DeviceParams

logger = logging.getLogger(__name__)

Gate = Union[ControlPulse, np.ndarray]


# ---- experiment design ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PreparationSet:
    """Pure input states; their projectors must span the operator space."""

    states: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        s = np.array(self.states, dtype=complex)
        if s.ndim != 2:
            raise ValueError("states must be a 2-D array (n_states, d)")
        if not np.allclose(np.linalg.norm(s, axis=1), 1, atol=1e-12):
            raise ValueError("preparation states must be normalized")
        object.__setattr__(self, "states", s)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]

    def density_matrices(self) -> np.ndarray:
        return np.einsum("ki,kj->kij", self.states, self.states.conj())

    def gram_rank(self, tol: float = 1e-10) -> int:
        flat = self.density_matrices().reshape(len(self), -1)
        return int(np.linalg.matrix_rank(flat, tol=tol))

    def unitaries(self) -> np.ndarray:
        """Preparation unitaries with ``U|0> = psi``."""
        return np.array([completion_unitary(s) for s in self.states])

    @classmethod
    def standard(cls, d: int) -> PreparationSet:
        r = 1 / np.sqrt(2)
        if d == 2:
            states = [[1, 0], [0, 1], [r, r], [r, -r], [r, 1j * r], [r, -1j * r]]
            labels = ("0", "1", "+", "-", "+i", "-i")
        elif d == 3:
            states = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
            labels = ["0", "1", "2"]
            for phase, tag in ((1, ""), (1j, "i")):
                for a, b in ((0, 1), (1, 2), (0, 2)):
                    v = np.zeros(3, dtype=complex)
                    v[a], v[b] = r, phase * r
                    states.append(v)
                    labels.append(f"{a}+{tag}{b}")
            labels = tuple(labels)
        else:
            raise ValueError(f"unsupported dimension {d}")
        return cls(np.array(states, dtype=complex), labels)


def projection_unitaries(d: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """Measurement-basis rotations applied before computational readout.

    Qutrits use the full ``A_m`` set. Qubits use Z, X and Y readout: X via
    ``exp(+i pi/4 Y)`` and Y via ``exp(-i pi/4 X)``, which rotate the
    respective +1 eigenstate onto ``|0>``.
    """
    if d == 3:
        basis = projection_operator_set(3)
        return basis.operators, basis.labels
    if d == 2:
        x, y, _ = pauli_matrices()
        ops = np.array([np.eye(2, dtype=complex), expm_hermitian(y, -np.pi / 4), expm_hermitian(x, np.pi / 4)])
        return ops, ("Z", "X", "Y")
    raise ValueError(f"unsupported dimension {d}")


@dataclass
class TomographyDataset:
    """Outcomes indexed by ``(preparation, projection, outcome)``.

    ``counts`` holds integer counts when ``shots`` is set and exact outcome
    probabilities when ``shots`` is ``None``.
    """

    counts: np.ndarray
    shots: int | None
    preparations: np.ndarray
    projections: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        n_prep, n_proj, d = self.counts.shape
        if self.preparations.shape != (n_prep, d, d) or self.projections.shape != (n_proj, d, d):
            raise ValueError("dataset shapes are inconsistent")
        if self.shots is not None and not np.allclose(self.counts.sum(axis=2), self.shots):
            raise ValueError("counts must sum to shots for every setting")

    @property
    def dim(self) -> int:
        return self.counts.shape[2]

    def frequencies(self, confusion: ConfusionMatrix | None = None) -> np.ndarray:
        """Outcome frequencies, optionally SPAM-corrected per setting."""
        c = self.counts
        if confusion is None:
            return c / c.sum(axis=2, keepdims=True)
        flat = c.reshape(-1, self.dim)
        return np.array([spam_correct(row, confusion) for row in flat]).reshape(c.shape)

    def to_dict(self) -> dict:
        return {
            "format": "qudit-tomography-dataset/1",
            "shots": self.shots,
            "counts": self.counts.tolist(),
            "preparations": [_matrix_to_json(u) for u in self.preparations],
            "projections": [_matrix_to_json(u) for u in self.projections],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TomographyDataset:
        return cls(
            counts=np.array(data["counts"], dtype=float),
            shots=data["shots"],
            preparations=np.array([_matrix_from_json(m) for m in data["preparations"]]),
            projections=np.array([_matrix_from_json(m) for m in data["projections"]]),
            metadata=data.get("metadata", {}),
        )


class CompiledOperations:
    """Compiles preparation/projection unitaries to pulses, once per unitary."""

    def __init__(self, dev: DeviceParams, duration: float, **request_options):
        self.dev = dev
        self.duration = duration
        self.options = request_options
        self._pulses: dict[bytes, ControlPulse] = {}
        self.fidelities: dict[bytes, float] = {}

    def __call__(self, u: np.ndarray) -> Gate:
        u = np.asarray(u, dtype=complex)
        if np.allclose(u, np.eye(u.shape[0]), atol=1e-12):
            return u
        key = np.round(u, 12).tobytes()
        if key not in self._pulses:
            res = compile_gate(CompileRequest(u, self.duration, **self.options), self.dev)
            if not res.converged:
                logger.warning("operation compiled only to fidelity %.6f", res.achieved_fidelity)
            self._pulses[key] = res.synthesis_pulse
            self.fidelities[key] = res.achieved_fidelity
        return self._pulses[key]


def qpt_experiment(
    qpu: VirtualQpu,
    gate: Gate,
    n_reps: int = 1,
    shots: int | None = 10_000,
    prep_mode: str = "ideal",
    compiled: CompiledOperations | None = None,
    metadata: dict | None = None,
) -> TomographyDataset:
    """Run every ``(preparation, projection)`` setting and record readout.

    ``gate`` may be a pulse or an ideal unitary. In ``ideal`` mode the
    preparation and projection unitaries are applied exactly; in
    ``compiled`` mode they are played as pulses from ``compiled``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if shots is not None and shots < 1:
        raise ValueError("shots must be positive")
    if prep_mode not in ("ideal", "compiled"):
        raise ValueError(f"unknown prep_mode {prep_mode!r}")
    d = qpu.d
    preps = PreparationSet.standard(d).unitaries()
    projs, proj_labels = projection_unitaries(d)
    if prep_mode == "compiled":
        if compiled is None:
            raise ValueError("compiled prep_mode needs a CompiledOperations source")
        as_op = compiled
    else:
        as_op = np.asarray
    counts = np.zeros((len(preps), len(projs), d))
    for k, up in enumerate(preps):
        rho = qpu.final_state([as_op(up), gate], reps=[1, n_reps])
        for j, uj in enumerate(projs):
            pops = qpu.populations([as_op(uj)], rho0=rho)
            counts[k, j] = qpu.measure(pops, shots)
    meta = {"n_reps": n_reps, "prep_mode": prep_mode, "qpu_seed": qpu.seed, "projections": list(proj_labels)}
    meta.update(metadata or {})
    return TomographyDataset(counts, shots, preps, projs, meta)


# ---- reconstruction -------------------------------------------------------


def design_matrix(data: TomographyDataset, basis: OperatorBasis) -> np.ndarray:
    """Linear map ``vec(chi) -> outcome probabilities`` for ``basis``.

    Row ``(k, j, o)`` holds ``v_m conj(v_n)`` flattened, where
    ``v_m = <o| P_j B_m U_k |0>``; then ``p = Re(M @ chi.ravel())``.
    """
    psi = data.preparations[:, :, 0]
    ops = basis.operators
    # v[k, j, o, m]
    v = np.einsum("joa,mab,kb->kjom", data.projections, ops, psi)
    m = np.einsum("kjom,kjon->kjomn", v, v.conj())
    return m.reshape(-1, len(basis) ** 2)


def _tp_constraint(basis: OperatorBasis) -> np.ndarray:
    # Phi vec(chi) = vec(sum_mn chi_mn B_n^dag B_m)
    ops = basis.operators
    phi = np.einsum("nai,mab->ibmn", ops.conj(), ops)
    d = basis.dim
    return phi.reshape(d * d, len(basis) ** 2)


class CptpProjector:
    """Euclidean projection onto CPTP process matrices in an orthogonal frame.

    Dykstra's alternating projections between the PSD cone (eigenvalue
    clipping) and the trace-preserving affine subspace, iterated until both
    constraints hold to ``tol``.
    """

    def __init__(self, basis: OperatorBasis, tol: float = 1e-8, max_iterations: int = 20_000):
        self.n = len(basis)
        self.d = basis.dim
        self.tol = tol
        self.max_iterations = max_iterations
        self.phi = _tp_constraint(basis)
        self.rhs = np.eye(self.d, dtype=complex).ravel()
        self.phi_pinv = np.linalg.pinv(self.phi)

    def tp(self, chi: np.ndarray) -> np.ndarray:
        x = chi.ravel()
        x = x - self.phi_pinv @ (self.phi @ x - self.rhs)
        x = x.reshape(self.n, self.n)
        return (x + dagger(x)) / 2

    @staticmethod
    def psd(chi: np.ndarray) -> np.ndarray:
        e, v = np.linalg.eigh((chi + dagger(chi)) / 2)
        return (v * np.clip(e, 0, None)) @ dagger(v)

    def tp_residual(self, chi: np.ndarray) -> float:
        return float(np.max(np.abs(self.phi @ chi.ravel() - self.rhs)))

    def __call__(self, chi: np.ndarray) -> np.ndarray:
        x = (chi + dagger(chi)) / 2
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        for _ in range(self.max_iterations):
            y = self.psd(x + p)
            p = x + p - y
            x_new = self.tp(y + q)
            q = y + q - x_new
            change = np.max(np.abs(x_new - x))
            x = x_new
            if change < self.tol and np.linalg.eigvalsh(x)[0] > -self.tol:
                return x
        logger.warning("CPTP projection stopped at the iteration cap")
        return x


@dataclass
class ReconstructionResult:
    process: ProcessMatrix
    cost: float
    iterations: int
    converged: bool


def pgdb_reconstruct(
    data: TomographyDataset,
    basis: OperatorBasis | None = None,
    confusion: ConfusionMatrix | None = None,
    *,
    ftol: float = 1e-14,
    max_iterations: int = 5000,
    armijo: float = 1e-4,
    shrink: float = 0.5,
    full_output: bool = False,
) -> ProcessMatrix | ReconstructionResult:
    """Least-squares CPTP fit of a process matrix to tomography data.

    Parameters
    ----------
    data
        Measured outcomes; must be informationally complete.
    basis
        Basis of the returned process matrix (default: the ``A_m`` set).
    confusion
        If given, every setting is SPAM-corrected before fitting.
    ftol
        Stop once an accepted step lowers the cost by less than ``ftol``.

    Notes
    -----
    Each iteration takes a gradient step, projects it onto the CPTP set and
    backtracks along the resulting feasible direction until the Armijo
    condition holds. The gradient step length is the Barzilai-Borwein
    estimate clipped below at ``1/L`` (``L`` the Lipschitz constant of the
    cost gradient). The start is the completely depolarizing channel.
    """
    d = data.dim
    basis = projection_operator_set(d) if basis is None else basis
    if basis.dim != d:
        raise ValueError("basis dimension does not match the dataset")
    frame = generalized_pauli_basis(d)
    m = design_matrix(data, frame)
    n = len(frame)
    if np.linalg.matrix_rank(m) < n * n:
        raise ValueError("tomography design is not informationally complete")
    f = data.frequencies(confusion).ravel()
    lipschitz = 2 * np.linalg.norm(m, ord=2) ** 2
    project = CptpProjector(frame)

    def cost_grad(chi):
        r = np.real(m @ chi.ravel()) - f
        g = 2 * (m.conj().T @ r).reshape(n, n)
        return float(r @ r), (g + dagger(g)) / 2

    chi = np.eye(n, dtype=complex) / n
    cost, grad = cost_grad(chi)
    mu = 1.0 / lipschitz
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        direction = project(chi - mu * grad) - chi
        slope = float(np.real(np.vdot(grad, direction)))
        if slope >= 0:
            converged = True
            break
        step = 1.0
        while True:
            trial = chi + step * direction
            new_cost, new_grad = cost_grad(trial)
            if new_cost <= cost + armijo * step * slope or step < 1e-8:
                break
            step *= shrink
        improvement = cost - new_cost
        if improvement < 0:
            converged = True
            break
        ds, dg = trial - chi, new_grad - grad
        curv = float(np.real(np.vdot(ds, dg)))
        # Barzilai-Borwein step, kept within [1/L, 1e4/L]
        mu = np.clip(float(np.real(np.vdot(ds, ds))) / curv, 1 / lipschitz, 1e4 / lipschitz) if curv > 0 else 1 / lipschitz
        chi, cost, grad = trial, new_cost, new_grad
        if improvement < ftol:
            converged = True
            break
    # the A_m basis is not orthogonal and amplifies tiny negative eigenvalues
    # left by the alternating projection; clip them here (TP moves by ~1e-9)
    chi = project.psd(chi)
    pm = change_basis(ProcessMatrix(chi, frame), basis) if basis.name != frame.name else ProcessMatrix(chi, frame)
    if full_output:
        return ReconstructionResult(pm, cost, it, converged)
    return pm


def chi_to_pauli_basis(pm: ProcessMatrix) -> ProcessMatrix:
    """Re-express a process matrix in the generalized Pauli basis."""
    return change_basis(pm, generalized_pauli_basis(pm.dim))


def chi_table(pm: ProcessMatrix) -> list[tuple[str, str, float, float]]:
    """``(row label, column label, |chi|, arg chi)`` for every entry."""
    labels = pm.basis.labels
    rows = []
    for a, la in enumerate(labels):
        for b, lb in enumerate(labels):
            z = pm.chi[a, b]
            rows.append((la, lb, float(abs(z)), float(np.angle(z)) if abs(z) > 1e-12 else 0.0))
    return rows


def chi_table_csv(pm: ProcessMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "magnitude", "phase_rad"])
    for la, lb, mag, ph in chi_table(pm):
        w.writerow([la, lb, f"{mag:.10g}", f"{ph:.10g}"])
    return buf.getvalue()


def gate_fidelity(
    qpu: VirtualQpu,
    gate: Gate,
    target: np.ndarray,
    n_reps: int = 1,
    shots: int | None = 10_000,
    confusion: ConfusionMatrix | None = None,
    **kwargs,
) -> float:
    """QPT fidelity of ``n_reps`` gate applications against ``target**n_reps``."""
    data = qpt_experiment(qpu, gate, n_reps, shots, **kwargs)
    chi = pgdb_reconstruct(data, confusion=confusion)
    ideal = unitary_to_chi(np.linalg.matrix_power(np.asarray(target, dtype=complex), n_reps), chi.basis)
    return process_fidelity(ideal, chi)


def repeated_gate_fidelity(
    qpu: VirtualQpu,
    gate_pulse: Gate,
    target: np.ndarray,
    n_list: Sequence[int],
    shots: int | None = 10_000,
    confusion: ConfusionMatrix | None = None,
    **kwargs,
) -> list[tuple[int, float, float]]:
    """``(n, F_n, F_n ** (1/n))`` from QPT of ``n``-fold repetitions."""
    if len(n_list) == 0:
        raise ValueError("n_list must not be empty")
    if any(n < 1 for n in n_list):
        raise ValueError("repetition counts must be >= 1")
    out = []
    for n in n_list:
        fid = gate_fidelity(qpu, gate_pulse, target, n, shots, confusion, **kwargs)
        out.append((int(n), fid, float(max(fid, 0.0) ** (1.0 / n))))
    return out
