"""Noisy virtual QPU: Lindblad evolution of a driven transmon plus readout.

Density matrices are vectorized row-major, so ``vec(A X B) = (A kron B.T) vec(X)``.
Within one control sample the Lindbladian is constant and the default
integrator propagates it exactly via a matrix exponential. A fixed-step RK4
integrator with step-doubling refinement is available as a cross-check.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .core import dagger, unitary_superoperator
from .readout import ConfusionMatrix, sample_counts, spam_correct
from .spectral import CalibrationParams, apply_calibration
from .transmon import (
    ControlPulse,
    DeviceParams,
    cumulative_products,
    drift_and_controls,
    hamiltonians,
    propagate_closed,
)

Operation = Union[ControlPulse, np.ndarray]


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Per-manifold energy decay and pure dephasing rates (1/us).

    Index ``j`` refers to the ``j``-``j+1`` manifold.
    """

    decay: tuple[float, ...]
    dephasing: tuple[float, ...]

    def __post_init__(self):
        if any(r < 0 for r in self.decay + self.dephasing):
            raise ValueError("noise rates must be non-negative")

    @classmethod
    def from_device(cls, dev: DeviceParams) -> NoiseModel:
        t1 = (dev.t1_01, dev.t1_12)[: dev.levels - 1]
        t2 = (dev.t2s_01, dev.t2s_12)[: dev.levels - 1]
        decay = tuple(1.0 / a for a in t1)
        dephasing = tuple(max(0.0, 1.0 / b - 0.5 / a) for a, b in zip(t1, t2))
        return cls(decay, dephasing)

    @classmethod
    def none(cls, d: int) -> NoiseModel:
        return cls((0.0,) * (d - 1), (0.0,) * (d - 1))

    @property
    def is_zero(self) -> bool:
        return not any(self.decay) and not any(self.dephasing)

    def collapse_operators(self, d: int) -> list[np.ndarray]:
        """Collapse operators in units of ``ns**-1/2``."""
        ops = []
        for j, (g1, gphi) in enumerate(zip(self.decay, self.dephasing)):
            if g1 > 0:
                c = np.zeros((d, d), dtype=complex)
                c[j, j + 1] = np.sqrt(g1 * 1e-3)
                ops.append(c)
            if gphi > 0:
                z = np.zeros((d, d), dtype=complex)
                z[j, j], z[j + 1, j + 1] = 1, -1
                ops.append(np.sqrt(gphi * 1e-3 / 2) * z)
        return ops


def dissipator(collapse: Sequence[np.ndarray], d: int) -> np.ndarray:
    eye = np.eye(d)
    out = np.zeros((d * d, d * d), dtype=complex)
    for c in collapse:
        cdc = dagger(c) @ c
        out += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return out


def hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    """``-i[H, .]`` for a (batch of) Hamiltonians."""
    d = h.shape[-1]
    eye = np.eye(d)
    return -1j * (np.einsum("...ij,kl->...ikjl", h, eye) - np.einsum("ij,...lk->...ikjl", eye, h)).reshape(
        h.shape[:-2] + (d * d, d * d)
    )


def validate_density_matrix(rho: np.ndarray, atol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.allclose(rho, dagger(rho), atol=atol, rtol=0):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh((rho + dagger(rho)) / 2)[0] < -1e-9:
        raise ValueError("density matrix is not positive semidefinite")


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def basis_dm(d: int, j: int) -> np.ndarray:
    rho = np.zeros((d, d), dtype=complex)
    rho[j, j] = 1
    return rho


class VirtualQpu:
    """Stateful simulated device with its own seeded outcome stream.

    Parameters
    ----------
    dev : DeviceParams
        Nominal transmon parameters.
    noise : NoiseModel, optional
        Defaults to the rates implied by ``dev``.
    confusion : ConfusionMatrix, optional
        Readout model; defaults to perfect readout.
    hidden_distortion : CalibrationParams, optional
        Ground-truth transfer function. Every incoming pulse is passed through
        the *inverse* transform, so a correctly calibrated pulse is restored.
    seed : int
        Seed of the measurement outcome stream.
    method : {"auto", "expm", "rk4"}
        ``auto`` uses unitary propagation when the noise model is zero and
        exact per-sample Lindblad exponentials otherwise.
    """

    def __init__(
        self,
        dev: DeviceParams,
        noise: NoiseModel | None = None,
        confusion: ConfusionMatrix | None = None,
        hidden_distortion: CalibrationParams | None = None,
        seed: int = 0,
        method: str = "auto",
        rk4_tol: float = 1e-7,
    ):
        if method not in ("auto", "expm", "rk4"):
            raise ValueError(f"unknown integration method {method!r}")
        self.dev = dev
        self.d = dev.levels
        self.noise = NoiseModel.from_device(dev) if noise is None else noise
        self.confusion = ConfusionMatrix.identity(self.d) if confusion is None else confusion
        if self.confusion.dim != self.d:
            raise ValueError("confusion matrix dimension does not match device")
        self.hidden_distortion = hidden_distortion
        self.seed = seed
        self.method = method
        self.rk4_tol = rk4_tol
        self.rng = np.random.default_rng(seed)
        self._cache: OrderedDict = OrderedDict()
        h0, hp, hq = drift_and_controls(dev)
        diss = dissipator(self.noise.collapse_operators(self.d), self.d)
        self._l0 = hamiltonian_superop(h0) + diss
        self._lp = hamiltonian_superop(hp)
        self._lq = hamiltonian_superop(hq)

    def clone(self, **changes) -> VirtualQpu:
        kw = dict(
            dev=self.dev,
            noise=self.noise,
            confusion=self.confusion,
            hidden_distortion=self.hidden_distortion,
            seed=self.seed,
            method=self.method,
            rk4_tol=self.rk4_tol,
        )
        kw.update(changes)
        return VirtualQpu(**kw)

    def nominal(self) -> VirtualQpu:
        """Model-side twin: same device and noise, no distortion, ideal readout."""
        return self.clone(hidden_distortion=None, confusion=ConfusionMatrix.identity(self.d))

    def config(self) -> dict:
        return {
            "device": self.dev.to_dict(),
            "noise": {"decay_per_us": list(self.noise.decay), "dephasing_per_us": list(self.noise.dephasing)},
            "confusion": self.confusion.matrix.tolist(),
            "hidden_distortion": None if self.hidden_distortion is None else self.hidden_distortion.to_dict(),
            "seed": self.seed,
            "method": self.method,
        }

    # ---- dynamics -------------------------------------------------------

    def played(self, pulse: ControlPulse) -> ControlPulse:
        """The pulse as it reaches the qudit (after the hidden transfer function)."""
        if self.hidden_distortion is None:
            return pulse
        return apply_calibration(pulse, self.hidden_distortion.inverse())

    def liouvillians(self, pulse: ControlPulse) -> np.ndarray:
        p = pulse.p[:, None, None]
        q = pulse.q[:, None, None]
        return self._l0 + p * self._lp + q * self._lq

    def _step_superops(self, pulse: ControlPulse) -> np.ndarray:
        return scipy.linalg.expm(self.liouvillians(pulse) * pulse.dt)

    def _rk4_step(self, lk: np.ndarray, vec: np.ndarray, h: float, n: int) -> np.ndarray:
        for _ in range(n):
            k1 = lk @ vec
            k2 = lk @ (vec + 0.5 * h * k1)
            k3 = lk @ (vec + 0.5 * h * k2)
            k4 = lk @ (vec + h * k3)
            vec = vec + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return vec

    def _rk4_evolve(self, vec: np.ndarray, pulse: ControlPulse, record: Sequence[int]) -> list[np.ndarray]:
        """RK4 with substeps doubled until the recorded states stop changing.

        ``vec`` may be a single vectorized state or a matrix of column states.
        """
        ls = self.liouvillians(pulse)
        norm = max(np.linalg.norm(ls, ord=2, axis=(1, 2)).max(), 1e-12) if len(ls) else 1.0
        sub = max(1, int(np.ceil(norm * pulse.dt / 0.2)))
        prev = None
        for _ in range(8):
            out, v = [], vec.copy()
            rec = set(record)
            if 0 in rec:
                out.append(v.copy())
            for k, lk in enumerate(ls):
                v = self._rk4_step(lk, v, pulse.dt / sub, sub)
                if k + 1 in rec:
                    out.append(v.copy())
            if prev is not None and max(np.max(np.abs(a - b)) for a, b in zip(out, prev)) < self.rk4_tol:
                return out
            prev, sub = out, sub * 2
        raise IntegrationError("RK4 step doubling did not converge")

    def channel(self, op: Operation) -> np.ndarray:
        """Liouville matrix of a pulse played on the device, or of an ideal unitary."""
        if not isinstance(op, ControlPulse):
            return unitary_superoperator(np.asarray(op, dtype=complex))
        key = op.key()
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        pulse = self.played(op)
        d = self.d
        if pulse.n_samples == 0:
            s = np.eye(d * d, dtype=complex)
        elif self.method == "auto" and self.noise.is_zero:
            s = unitary_superoperator(propagate_closed(self.dev, pulse))
        elif self.method == "rk4":
            s = self._rk4_evolve(np.eye(d * d, dtype=complex), pulse, [pulse.n_samples])[0]
        else:
            s = cumulative_products(self._step_superops(pulse))[-1]
        self._cache[key] = s
        if len(self._cache) > 64:
            self._cache.popitem(last=False)
        return s

    def evolve(self, rho0: np.ndarray, pulse: ControlPulse, t_end: float | None = None, every_ns: float = 1.0):
        """Density-matrix trajectory sampled every ``every_ns`` (and at ``t_end``).

        Returns ``(times_ns, states)`` with ``states`` of shape ``(T, d, d)``.
        """
        validate_density_matrix(rho0)
        if t_end is None:
            t_end = pulse.duration
        if t_end > pulse.duration + 1e-9 or t_end < 0:
            raise ValueError("t_end must lie within the pulse duration")
        n_end = int(round(t_end * pulse.sample_rate))
        pulse = self.played(pulse).slice(0, n_end)
        stride = max(1, int(round(every_ns * pulse.sample_rate)))
        record = sorted(set(range(0, n_end + 1, stride)) | {n_end})
        vec = np.asarray(rho0, dtype=complex).reshape(-1)
        d = self.d
        if self.method == "rk4":
            vecs = self._rk4_evolve(vec, pulse, record)
        else:
            if self.method == "auto" and self.noise.is_zero:
                h = hamiltonians(self.dev, pulse.p, pulse.q)
                e, v = np.linalg.eigh(h)
                us = (v * np.exp(-1j * pulse.dt * e)[:, None, :]) @ dagger(v)
                steps = np.einsum("kij,kab->kiajb", us, us.conj()).reshape(-1, d * d, d * d)
            else:
                steps = self._step_superops(pulse) if n_end else np.zeros((0, d * d, d * d))
            vecs = [vec]
            for a, b in zip(record[:-1], record[1:]):
                vecs.append(cumulative_products(steps[a:b])[-1] @ vecs[-1])
        states = np.array([v.reshape(d, d) for v in vecs])
        drift = np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1))
        if drift > 1e-6:
            raise IntegrationError(f"trace drift {drift:.3g} exceeds 1e-6")
        times = np.array(record) / pulse.sample_rate
        return times, states

    # ---- measurement ----------------------------------------------------

    def final_state(self, ops: Sequence[Operation], rho0: np.ndarray | None = None, reps: Sequence[int] | None = None):
        """Apply operations in order (``reps[i]`` times each) to ``rho0`` (default ``|0><0|``)."""
        d = self.d
        vec = (basis_dm(d, 0) if rho0 is None else np.asarray(rho0, dtype=complex)).reshape(-1)
        reps = [1] * len(ops) if reps is None else reps
        for op, n in zip(ops, reps):
            if n == 0:
                continue
            s = self.channel(op)
            for _ in range(n):
                vec = s @ vec
        return vec.reshape(d, d)

    def populations(self, ops: Sequence[Operation], rho0: np.ndarray | None = None, reps=None) -> np.ndarray:
        rho = self.final_state(ops, rho0, reps)
        return np.clip(np.real(np.diagonal(rho)), 0, None)

    def measure(self, populations: np.ndarray, shots: int | None) -> np.ndarray:
        """Readout of true populations: confusion, then multinomial sampling.

        With ``shots=None`` the exact reported-outcome probabilities are returned.
        """
        reported = self.confusion.apply(populations / populations.sum())
        if shots is None:
            return reported
        return sample_counts(reported, shots, self.rng)

    def measure_confusion(self, shots: int | None = 100_000) -> ConfusionMatrix:
        """Independently characterize readout by preparing each basis state."""
        cols = [self.measure(np.eye(self.d)[j], shots) for j in range(self.d)]
        return ConfusionMatrix.from_counts(np.stack(cols, axis=1))


def lindblad_evolve(qpu: VirtualQpu, rho0: np.ndarray, pulse: ControlPulse, t_end: float | None = None):
    """Trajectory of ``rho0`` under ``pulse`` sampled every ns."""
    return qpu.evolve(rho0, pulse, t_end)


def run_and_measure(qpu: VirtualQpu, prep: np.ndarray, pulse: ControlPulse, reps: int, shots: int | None) -> np.ndarray:
    """Prepare ``prep|0>``, play ``pulse`` ``reps`` times and read out."""
    if reps < 0:
        raise ValueError("reps must be non-negative")
    if shots is not None and shots < 1:
        raise ValueError("shots must be positive")
    pops = qpu.populations([prep, pulse], reps=[1, reps])
    return qpu.measure(pops, shots)


def repetition_sweep(
    qpu: VirtualQpu, pulse: ControlPulse, n_max: int, shots: int | None, initial: int = 0
) -> np.ndarray:
    """Readout after ``n = 1..n_max`` back-to-back applications; shape ``(n_max, d)``."""
    s = qpu.channel(pulse)
    vec = basis_dm(qpu.d, initial).reshape(-1)
    out = []
    for _ in range(n_max):
        vec = s @ vec
        pops = np.clip(np.real(np.diagonal(vec.reshape(qpu.d, qpu.d))), 0, None)
        out.append(qpu.measure(pops, shots))
    return np.array(out)


def trajectory_experiment(
    qpu: VirtualQpu,
    pulse: ControlPulse,
    initial: int,
    shots: int | None = 10_000,
    confusion: ConfusionMatrix | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-ns populations from truncated-pulse experiments starting in ``|initial>``.

    Each time point is read out with ``shots`` shots and SPAM-corrected with
    ``confusion`` (default: the device's own readout model).
    """
    if not 0 <= initial < qpu.d:
        raise ValueError(f"initial state {initial} out of range")
    times, states = qpu.evolve(basis_dm(qpu.d, initial), pulse)
    conf = qpu.confusion if confusion is None else confusion
    table = []
    for rho in states:
        pops = np.clip(np.real(np.diagonal(rho)), 0, None)
        raw = qpu.measure(pops, shots)
        table.append(spam_correct(raw, conf) if shots is not None else np.linalg.solve(conf.matrix, raw))
    return times, np.array(table)
