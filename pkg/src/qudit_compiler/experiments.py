"""End-to-end experiment drivers behind the command-line interface.

Each driver takes a resolved :class:`ExperimentConfig`, runs against a
freshly built virtual QPU and returns plain data (dicts and row lists);
writing files is left to :mod:`qudit_compiler.cli`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .calibration import CalibrationReport, calibrate
from .compiler import DURATION_PRESETS, CompileRequest, CompileResult, compile_gate
from .core import SSW02, haar_random_unitary, is_unitary, projection_operator_set, process_fidelity, unitary_to_chi
from .qpu import NoiseModel, VirtualQpu, repetition_sweep, trajectory_experiment
from .readout import ConfusionMatrix, spam_correct
from .spectral import CalibrationParams, apply_calibration, pulse_fft
from .tomography import (
    CompiledOperations,
    chi_to_pauli_basis,
    pgdb_reconstruct,
    qpt_experiment,
)
from .transmon import PRESETS, DeviceParams

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass
class ExperimentConfig:
    device: str = "qudit"
    cal: str | None = None
    seed: int = 0
    out: str = "out"
    shots: int = 100_000
    gate: str = "ssw02"
    random: int | None = None
    matrix: str | None = None
    duration: float | None = None
    fidelity_goal: float = 0.9998
    max_iterations: int = 500
    amplitude_limit: float = 30.0
    band_halfwidth: float | None = 15.0
    distortion: tuple[float, float] | None = None
    confusion_error: float = 0.03
    noiseless: bool = False
    cal_reps: int = 10
    cal_shots: int = 1_000_000
    max_reps: int = 30
    reps: list[int] = field(default_factory=lambda: [1])
    prep_mode: str = "ideal"
    runs: int = 10
    jitter_gamma: float = 0.0
    jitter_freq_mhz: float = 0.0

    def __post_init__(self):
        if self.distortion is not None:
            self.distortion = tuple(float(v) for v in self.distortion)
            if len(self.distortion) != 2 or min(self.distortion) <= 0:
                raise ConfigError("distortion must be two positive numbers gamma,sigma")
        if self.shots < 1 or self.cal_shots < 1:
            raise ConfigError("shot counts must be positive")
        if self.random is not None and self.random < 1:
            raise ConfigError("--random needs a positive count")
        if self.random is not None and self.matrix is not None:
            raise ConfigError("choose at most one of --random and --matrix")
        if self.prep_mode not in ("ideal", "compiled"):
            raise ConfigError("prep_mode must be 'ideal' or 'compiled'")
        if not self.reps or min(self.reps) < 1:
            raise ConfigError("reps must be a non-empty list of positive integers")
        if not 0 <= self.confusion_error < 0.5:
            raise ConfigError("confusion_error must lie in [0, 0.5)")
        if self.runs < 1 or self.max_reps < 1 or self.cal_reps < 1:
            raise ConfigError("runs, max_reps and cal_reps must be positive")
        if self.jitter_gamma < 0 or self.jitter_freq_mhz < 0:
            raise ConfigError("jitter magnitudes must be non-negative")

    @classmethod
    def from_sources(cls, file: str | None = None, **overrides) -> ExperimentConfig:
        """Defaults, then a JSON config file, then explicit overrides."""
        values: dict = {}
        if file is not None:
            try:
                values = json.loads(Path(file).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {file}: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError("config file must hold a JSON object")
            known = {f.name for f in fields(cls)}
            unknown = set(values) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.distortion is not None:
            d["distortion"] = list(self.distortion)
        return d


@dataclass
class Context:
    """Resolved runtime objects for a config."""

    config: ExperimentConfig
    dev: DeviceParams
    duration: float
    cal: CalibrationParams
    gates: list[tuple[str, np.ndarray]]

    def describe(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "resolved": {
                "device": self.dev.to_dict(),
                "duration_ns": self.duration,
                "calibration": self.cal.to_dict(),
            },
        }


def load_device(spec: str) -> DeviceParams:
    try:
        return DeviceParams.load(spec)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load device {spec!r}: {exc}") from exc


def default_duration(device: str, dev: DeviceParams) -> float:
    name = Path(device).stem if device not in PRESETS else device
    key = f"{name}_{'qutrit' if dev.levels == 3 else 'qubit'}"
    if key in DURATION_PRESETS:
        return DURATION_PRESETS[key]
    return 220.0 if dev.levels == 3 else 52.0


def gate_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def resolve_gates(cfg: ExperimentConfig, d: int) -> list[tuple[str, np.ndarray]]:
    if cfg.random is not None:
        return [
            (f"random_{cfg.seed}_{i}", haar_random_unitary(d, gate_seed(cfg.seed, i), special=True))
            for i in range(cfg.random)
        ]
    if cfg.matrix is not None:
        try:
            data = json.loads(Path(cfg.matrix).read_text())
            u = np.array(data["re"], dtype=float) + 1j * np.array(data.get("im", 0.0), dtype=float)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read matrix file {cfg.matrix}: {exc}") from exc
        if u.shape != (d, d) or not is_unitary(u, 1e-8):
            raise ConfigError(f"matrix in {cfg.matrix} is not a {d}x{d} unitary")
        return [(Path(cfg.matrix).stem, u)]
    if cfg.gate != "ssw02":
        raise ConfigError(f"unknown gate preset {cfg.gate!r}")
    if d != 3:
        raise ConfigError("the ssw02 preset is a qutrit gate; use a 3-level device")
    return [("ssw02", SSW02)]


def build_context(cfg: ExperimentConfig) -> Context:
    dev = load_device(cfg.device)
    duration = cfg.duration if cfg.duration is not None else default_duration(cfg.device, dev)
    if duration <= 0:
        raise ConfigError("duration must be positive")
    cal = CalibrationParams.for_device(dev)
    if cfg.cal is not None:
        try:
            data = json.loads(Path(cfg.cal).read_text())
            cal = CalibrationParams.from_dict(data.get("params", data))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read calibration {cfg.cal}: {exc}") from exc
    return Context(cfg, dev, duration, cal, resolve_gates(cfg, dev.levels))


def make_qpu(ctx: Context, seed_offset: int = 0, dev: DeviceParams | None = None, distortion=None) -> VirtualQpu:
    cfg = ctx.config
    dev = ctx.dev if dev is None else dev
    d = dev.levels
    noise = NoiseModel.none(d) if cfg.noiseless else NoiseModel.from_device(dev)
    conf = ConfusionMatrix.identity(d) if cfg.noiseless else ConfusionMatrix.symmetric(d, cfg.confusion_error)
    if distortion is None and cfg.distortion is not None:
        distortion = CalibrationParams.for_device(ctx.dev, *cfg.distortion)
    return VirtualQpu(dev, noise, conf, distortion, seed=cfg.seed + seed_offset)


def compile_one(ctx: Context, u: np.ndarray, seed: int | None = None, duration: float | None = None) -> CompileResult:
    cfg = ctx.config
    req = CompileRequest(
        target=u,
        duration=ctx.duration if duration is None else duration,
        amplitude_limit=cfg.amplitude_limit,
        fidelity_goal=cfg.fidelity_goal,
        max_iterations=cfg.max_iterations,
        seed=cfg.seed if seed is None else seed,
        band_halfwidth=cfg.band_halfwidth,
    )
    return compile_gate(req, ctx.dev)


def spectrum_rows(pulse) -> list[list[float]]:
    f, x = pulse_fft(pulse)
    return [[fi, xi.real, xi.imag, abs(xi) ** 2] for fi, xi in zip(f, x)]


# ---- drivers ------------------------------------------------------------


def run_compile(ctx: Context) -> list[tuple[str, CompileResult]]:
    out = []
    for i, (name, u) in enumerate(ctx.gates):
        res = compile_one(ctx, u, seed=gate_seed(ctx.config.seed, i))
        logger.info("%s: fidelity %.6f after %d iterations", name, res.achieved_fidelity, res.iterations)
        out.append((name, res))
    return out


def reference_pulse(ctx: Context) -> CompileResult:
    """Compiled sSW02 used as the calibration reference."""
    if ctx.dev.levels != 3:
        raise ConfigError("calibration against sSW02 needs a 3-level device")
    return compile_one(ctx, SSW02, seed=ctx.config.seed)


def run_calibrate(ctx: Context, ref: CompileResult | None = None) -> CalibrationReport:
    ref = reference_pulse(ctx) if ref is None else ref
    qpu = make_qpu(ctx, seed_offset=1)
    confusion = qpu.measure_confusion(10 * ctx.config.cal_shots)
    return calibrate(
        ref.synthesis_pulse,
        SSW02,
        qpu,
        ctx.cal,
        n_reps=ctx.config.cal_reps,
        shots=ctx.config.cal_shots,
        confusion=confusion,
    )


def qpt_fidelity(
    ctx: Context, qpu: VirtualQpu, pulse, target: np.ndarray, n_reps: int = 1, compiled: CompiledOperations | None = None
) -> tuple[float, object]:
    """SPAM-corrected QPT fidelity of ``n_reps`` applications of ``pulse``."""
    cfg = ctx.config
    confusion = qpu.measure_confusion(cfg.shots * 10)
    data = qpt_experiment(qpu, pulse, n_reps, cfg.shots, cfg.prep_mode, compiled)
    chi = pgdb_reconstruct(data, confusion=confusion)
    ideal = unitary_to_chi(np.linalg.matrix_power(target, n_reps), projection_operator_set(qpu.d))
    return process_fidelity(ideal, chi), chi


def _compiled_ops(ctx: Context) -> CompiledOperations | None:
    if ctx.config.prep_mode != "compiled":
        return None
    return CompiledOperations(ctx.dev, ctx.duration, seed=ctx.config.seed, band_halfwidth=ctx.config.band_halfwidth)


def run_benchmark(ctx: Context) -> tuple[list[dict], dict]:
    """Compile, calibrate and tomograph every configured gate."""
    rows = []
    qpu = make_qpu(ctx, seed_offset=2)
    compiled = _compiled_ops(ctx)
    for i, (name, u) in enumerate(ctx.gates):
        row = {"gate": name, "compile_fidelity": float("nan"), "converged": False, "qpt_fidelity": float("nan"), "error": ""}
        try:
            res = compile_one(ctx, u, seed=gate_seed(ctx.config.seed, i))
            row["compile_fidelity"] = res.achieved_fidelity
            row["converged"] = res.converged
            pulse = apply_calibration(res.synthesis_pulse, ctx.cal)
            row["qpt_fidelity"], _ = qpt_fidelity(ctx, qpu, pulse, u, 1, compiled)
        except Exception as exc:  # per-gate failures are recorded, the batch continues
            logger.exception("gate %s failed", name)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    fids = np.array([r["qpt_fidelity"] for r in rows if np.isfinite(r["qpt_fidelity"])])
    summary = {
        "n_gates": len(rows),
        "n_failed": int(sum(1 for r in rows if r["error"] or not r["converged"])),
        "mean_fidelity": float(fids.mean()) if fids.size else None,
        "std_fidelity": float(fids.std(ddof=1)) if fids.size > 1 else None,
        "calibration": ctx.cal.to_dict(),
    }
    return rows, summary


def run_stability(ctx: Context) -> list[dict]:
    """Repeated QPT of one gate on devices with per-run parameter jitter."""
    cfg = ctx.config
    name, u = ctx.gates[0]
    res = compile_one(ctx, u, seed=gate_seed(cfg.seed, 0))
    pulse = apply_calibration(res.synthesis_pulse, ctx.cal)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    base = CalibrationParams.for_device(ctx.dev, *(cfg.distortion or (1.0, 1.0)))
    rows = []
    for run in range(cfg.runs):
        dg = rng.normal(0.0, cfg.jitter_gamma)
        df = rng.normal(0.0, cfg.jitter_freq_mhz)
        dev = replace(ctx.dev, omega12=ctx.dev.omega12 + df * 1e-3)
        distortion = replace(base, gamma=base.gamma * (1 + dg))
        qpu = make_qpu(ctx, seed_offset=100 + run, dev=dev, distortion=distortion)
        fid, _ = qpt_fidelity(ctx, qpu, pulse, u)
        rows.append({"run": run, "gamma_jitter": dg, "freq_jitter_mhz": df, "fidelity": fid})
    return rows


def run_trajectory(ctx: Context) -> tuple[dict[int, tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Per-ns populations for each initial basis state plus a repetition sweep."""
    cfg = ctx.config
    name, u = ctx.gates[0]
    res = compile_one(ctx, u, seed=gate_seed(cfg.seed, 0))
    pulse = apply_calibration(res.synthesis_pulse, ctx.cal)
    qpu = make_qpu(ctx, seed_offset=3)
    confusion = qpu.measure_confusion(cfg.shots * 10)
    panels = {}
    for i in range(qpu.d):
        panels[i] = trajectory_experiment(qpu, pulse, i, cfg.shots, confusion)
    raw = repetition_sweep(qpu, pulse, cfg.max_reps, cfg.shots)
    sweep = np.array([spam_correct(r, confusion) for r in raw])
    return panels, sweep


def run_tomography(ctx: Context) -> list[dict]:
    """QPT of each configured gate for every repetition count in ``reps``."""
    cfg = ctx.config
    qpu = make_qpu(ctx, seed_offset=4)
    compiled = _compiled_ops(ctx)
    out = []
    for i, (name, u) in enumerate(ctx.gates):
        res = compile_one(ctx, u, seed=gate_seed(cfg.seed, i))
        pulse = apply_calibration(res.synthesis_pulse, ctx.cal)
        for n in cfg.reps:
            fid, chi = qpt_fidelity(ctx, qpu, pulse, u, n, compiled)
            out.append(
                {
                    "gate": name,
                    "n": n,
                    "fidelity": fid,
                    "fidelity_per_gate": max(fid, 0.0) ** (1.0 / n),
                    "chi": chi,
                    "chi_pauli": chi_to_pauli_basis(chi),
                }
            )
    return out
