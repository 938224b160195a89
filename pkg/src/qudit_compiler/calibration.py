"""Closed-loop identification of the two-scalar pulse transform.

The objective compares SPAM-corrected populations after ``n = 1..n_reps``
back-to-back gate applications on the device, from a few basis input
states, against what the nominal open-system model predicts for the
uncalibrated pulse. ``gamma`` and ``sigma`` are first located by coordinate
descent (grid sweep over the bracket, then golden-section refinement) and
then polished by damped Gauss-Newton steps on the residual vector, which
copes with the strong gamma/sigma correlation that stalls pure coordinate
descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .qpu import VirtualQpu, repetition_sweep
from .readout import ConfusionMatrix, SingularConfusionError, spam_correct  # noqa: F401  (re-exported)
from .spectral import CalibrationParams, apply_calibration  # noqa: F401  (re-exported)
from .transmon import ControlPulse

logger = logging.getLogger(__name__)

_GOLDEN = (np.sqrt(5) - 1) / 2


@dataclass
class CalibrationReport:
    params: CalibrationParams
    residual: float
    iterations: int
    trace: list[tuple[float, float, float]] = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "trace": [{"gamma": g, "sigma": s, "residual": r} for g, s, r in self.trace],
        }


class RepetitionObjective:
    """Squared population mismatch of a calibrated pulse over a repetition sweep."""

    def __init__(
        self,
        reference_pulse: ControlPulse,
        qpu: VirtualQpu,
        n_reps: int = 10,
        shots: int | None = 200_000,
        confusion: ConfusionMatrix | None = None,
        omega_c: float | None = None,
        initial_states: tuple[int, ...] = (0, 1, 2),
    ):
        if n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if not initial_states or any(not 0 <= i < qpu.d for i in initial_states):
            raise ValueError(f"invalid initial states {initial_states}")
        self.pulse = reference_pulse
        self.qpu = qpu
        self.n_reps = n_reps
        self.shots = shots
        self.initial_states = tuple(initial_states)
        if confusion is None:
            confusion = qpu.measure_confusion(None if shots is None else 10 * shots)
        self.confusion = confusion
        self.omega_c = 0.5 * qpu.dev.alpha * 1e3 if omega_c is None else omega_c
        nominal = qpu.nominal()
        self.prediction = np.array([repetition_sweep(nominal, reference_pulse, n_reps, None, i) for i in self.initial_states])
        self.evaluations = 0

    def measured(self, gamma: float, sigma: float) -> np.ndarray:
        """SPAM-corrected populations, shape ``(n_initial, n_reps, d)``.

        Correction is plain linear inversion of the confusion matrix: the
        simplex-constrained estimate is biased for populations near zero,
        and that bias would shift the fitted parameters.
        """
        cal = CalibrationParams(gamma, sigma, self.omega_c)
        pulse = apply_calibration(self.pulse, cal)
        raw = np.array([repetition_sweep(self.qpu, pulse, self.n_reps, self.shots, i) for i in self.initial_states])
        freqs = raw / raw.sum(axis=2, keepdims=True)
        return np.einsum("ij,snj->sni", np.linalg.inv(self.confusion.matrix), freqs)

    def residuals(self, gamma: float, sigma: float) -> np.ndarray:
        self.evaluations += 1
        return (self.measured(gamma, sigma) - self.prediction).ravel()

    def __call__(self, gamma: float, sigma: float) -> float:
        return float(np.sum(self.residuals(gamma, sigma) ** 2))


def _golden_section(f, a: float, b: float, tol: float) -> tuple[float, float]:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _line_search(f, lo: float, hi: float, n_grid: int, tol: float) -> tuple[float, float, bool]:
    """Grid sweep then golden-section; flags a minimum on the bracket edge."""
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmin(vals))
    edge = i in (0, n_grid - 1)
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    x, fx = _golden_section(f, a, b, tol)
    if vals[i] < fx:
        x, fx = grid[i], vals[i]
    return float(x), float(fx), edge


def _levenberg_marquardt(obj, params, fit, bounds, best, record, tol, max_steps, h=2e-2):
    """Damped Gauss-Newton on the population residuals; returns residual and step count."""
    lam = 1e-3
    r = obj.residuals(**params)
    best = min(best, float(r @ r))
    for k in range(1, max_steps + 1):
        cols = []
        for name in fit:
            up = obj.residuals(**{**params, name: params[name] + h})
            dn = obj.residuals(**{**params, name: params[name] - h})
            cols.append((up - dn) / (2 * h))
        jac = np.stack(cols, axis=1)
        jtj, jtr = jac.T @ jac, jac.T @ r
        for _ in range(8):
            step = -np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), jtr)
            trial = dict(params)
            for name, dx in zip(fit, step):
                trial[name] = float(np.clip(params[name] + dx, *bounds[name]))
            r_new = obj.residuals(**trial)
            if r_new @ r_new < best:
                params.update(trial)
                r, best = r_new, float(r_new @ r_new)
                lam = max(lam / 10, 1e-6)
                record(params, best)
                break
            lam *= 10
        else:
            return best, k
        if np.max(np.abs(step)) < tol:
            return best, k
    return best, max_steps


def calibrate(
    reference_pulse: ControlPulse,
    reference_unitary: np.ndarray,
    qpu: VirtualQpu,
    init: CalibrationParams | None = None,
    *,
    n_reps: int = 10,
    shots: int | None = 1_000_000,
    confusion: ConfusionMatrix | None = None,
    initial_states: tuple[int, ...] = (0, 1, 2),
    fit: tuple[str, ...] = ("gamma", "sigma"),
    gamma_bounds: tuple[float, float] = (0.6, 1.4),
    sigma_bounds: tuple[float, float] = (0.4, 3.0),
    n_grid: int = 17,
    tol: float = 1e-3,
    max_rounds: int = 2,
    max_refine: int = 20,
) -> CalibrationReport:
    """Fit ``(gamma, sigma)`` so the device reproduces the model's repetition sweep.

    Parameters
    ----------
    reference_pulse
        Uncalibrated pulse of the reference gate.
    reference_unitary
        Target of ``reference_pulse``; used to check that the gate moves
        population, which the objective needs.
    init
        Starting point; also fixes the crossover frequency and any
        coordinate not being fitted.
    initial_states
        Basis states each repetition sweep starts from. Starting from
        ``|0>`` alone leaves gamma and sigma nearly degenerate for the
        reference gate; adding ``|1>`` and ``|2>`` separates them.
    fit
        Coordinates to optimize, in update order. ``("sigma",)`` refines only
        the spectral weight for a specific gate.
    tol
        Convergence threshold on parameter steps.
    max_rounds, max_refine
        Caps on coordinate-descent rounds and Gauss-Newton steps.

    Notes
    -----
    A step is accepted only if it lowers the residual, so the reported trace
    is non-increasing. A coordinate minimum on the edge of its bracket, or a
    refinement that hits its step cap, leaves the report unconverged.
    """
    bad = set(fit) - {"gamma", "sigma"}
    if bad or not fit or len(set(fit)) != len(fit):
        raise ValueError(f"fit must name gamma and/or sigma, got {fit}")
    u = np.asarray(reference_unitary, dtype=complex)
    if u.shape != (qpu.d, qpu.d):
        raise ValueError("reference unitary does not match the device dimension")
    if np.allclose(np.abs(u), np.eye(qpu.d), atol=1e-6):
        raise ValueError("reference gate is diagonal; populations carry no amplitude information")
    init = CalibrationParams.for_device(qpu.dev) if init is None else init
    bounds = {"gamma": gamma_bounds, "sigma": sigma_bounds}
    params = {"gamma": init.gamma, "sigma": init.sigma}
    for name in fit:
        lo, hi = bounds[name]
        if not lo < params[name] < hi:
            raise ValueError(f"initial {name} lies outside its bracket {bounds[name]}")
    obj = RepetitionObjective(reference_pulse, qpu, n_reps, shots, confusion, init.omega_c, initial_states)
    best = obj(**params)
    trace = [(params["gamma"], params["sigma"], best)]

    def record(p, value):
        trace.append((p["gamma"], p["sigma"], value))

    edge_hit = False
    for _ in range(max_rounds):
        start = dict(params)
        for name in fit:
            lo, hi = bounds[name]

            def f(x, name=name):
                return obj(**{**params, name: x})

            x, fx, edge = _line_search(f, lo, hi, n_grid, tol / 4)
            if fx < best:
                params[name], best = x, fx
                edge_hit = edge
                record(params, best)
            logger.info("coordinate %s=%.5f residual=%.3g", name, params[name], best)
        if max(abs(params[k] - start[k]) for k in fit) < tol:
            break
    best, steps = _levenberg_marquardt(obj, params, fit, bounds, best, record, tol, max_refine)
    on_edge = any(np.isclose(params[k], bounds[k][0], atol=tol) or np.isclose(params[k], bounds[k][1], atol=tol) for k in fit)
    if edge_hit and on_edge:
        converged, message = False, "minimum on bracket edge"
    elif steps >= max_refine:
        converged, message = False, "refinement step limit"
    else:
        converged, message = True, "converged"
    out = replace(init, gamma=params["gamma"], sigma=params["sigma"])
    return CalibrationReport(out, best, len(trace) - 1, trace, converged, message)
