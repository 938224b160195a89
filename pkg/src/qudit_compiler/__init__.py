"""Pulse-level compilation, calibration and tomography of single-qudit gates."""

from .calibration import CalibrationReport, calibrate
from .compiler import CompileRequest, CompileResult, compile_gate, downsample, fidelity_gradient
from .core import (
    SSW02,
    OperatorBasis,
    ProcessMatrix,
    gell_mann_matrices,
    generalized_pauli_basis,
    haar_random_unitary,
    process_fidelity,
    projection_operator_set,
    unitary_to_chi,
)
from .qpu import NoiseModel, VirtualQpu, lindblad_evolve, run_and_measure, trajectory_experiment
from .readout import ConfusionMatrix, spam_correct
from .spectral import CalibrationParams, apply_calibration, pulse_fft
from .tomography import (
    PreparationSet,
    TomographyDataset,
    chi_to_pauli_basis,
    pgdb_reconstruct,
    qpt_experiment,
    repeated_gate_fidelity,
)
from .transmon import (
    ControlPulse,
    DeviceParams,
    closed_gate_fidelity,
    hamiltonian_at,
    propagate_closed,
    qudit_device,
)

compile = compile_gate  # noqa: A001

__all__ = [
    "SSW02",
    "CalibrationParams",
    "CalibrationReport",
    "CompileRequest",
    "CompileResult",
    "ConfusionMatrix",
    "ControlPulse",
    "DeviceParams",
    "NoiseModel",
    "OperatorBasis",
    "PreparationSet",
    "ProcessMatrix",
    "TomographyDataset",
    "VirtualQpu",
    "apply_calibration",
    "calibrate",
    "chi_to_pauli_basis",
    "closed_gate_fidelity",
    "compile",
    "compile_gate",
    "downsample",
    "fidelity_gradient",
    "gell_mann_matrices",
    "generalized_pauli_basis",
    "haar_random_unitary",
    "hamiltonian_at",
    "lindblad_evolve",
    "pgdb_reconstruct",
    "process_fidelity",
    "projection_operator_set",
    "propagate_closed",
    "pulse_fft",
    "qpt_experiment",
    "qudit_device",
    "repeated_gate_fidelity",
    "run_and_measure",
    "spam_correct",
    "trajectory_experiment",
    "unitary_to_chi",
]
