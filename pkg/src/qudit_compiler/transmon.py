"""Rotating-frame transmon model and closed-system propagation.

User-facing quantities follow the device tables: frequencies in GHz, drive
amplitudes in MHz, times in ns and coherence times in us. The Hamiltonian
itself is built in rad/ns; the conversion lives in :data:`TWO_PI_GHZ` and
:data:`TWO_PI_MHZ` only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .core import dagger

TWO_PI_GHZ = 2 * np.pi          # GHz -> rad/ns
TWO_PI_MHZ = 2 * np.pi * 1e-3   # MHz -> rad/ns

PRESETS = ("qudit", "aspen")

_CFG_KEYS = ("omega01_ghz", "omega12_ghz", "t1_01_us", "t1_12_us", "t2s_01_us", "t2s_12_us", "levels")


@dataclass(frozen=True)
class DeviceParams:
    omega01: float
    omega12: float
    t1_01: float
    t1_12: float
    t2s_01: float
    t2s_12: float
    levels: int = 3

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        for name in ("t1_01", "t1_12", "t2s_01", "t2s_12"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.omega12 < self.omega01:
            raise ValueError("transmon requires omega12 < omega01")

    @property
    def alpha(self) -> float:
        """Anharmonicity ``omega12 - omega01`` in GHz."""
        return self.omega12 - self.omega01

    def transition_offsets_mhz(self) -> np.ndarray:
        """Rotating-frame frequencies of the ladder transitions (MHz)."""
        return np.arange(self.levels - 1) * self.alpha * 1e3

    def with_levels(self, levels: int) -> DeviceParams:
        return replace(self, levels=levels)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_config(self) -> str:
        vals = (self.omega01, self.omega12, self.t1_01, self.t1_12, self.t2s_01, self.t2s_12, self.levels)
        return "".join(f"{k} = {v}\n" for k, v in zip(_CFG_KEYS, vals))

    @classmethod
    def from_config(cls, text: str) -> DeviceParams:
        """Parse the ``key = value`` device format.

        Missing 1-2 manifold coherence times default to the 0-1 values.
        """
        vals = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _CFG_KEYS:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
            vals[key] = value
        for req in ("omega01_ghz", "omega12_ghz", "t1_01_us", "t2s_01_us"):
            if req not in vals:
                raise ValueError(f"missing required key {req!r}")
        vals.setdefault("t1_12_us", vals["t1_01_us"])
        vals.setdefault("t2s_12_us", vals["t2s_01_us"])
        return cls(
            omega01=float(vals["omega01_ghz"]),
            omega12=float(vals["omega12_ghz"]),
            t1_01=float(vals["t1_01_us"]),
            t1_12=float(vals["t1_12_us"]),
            t2s_01=float(vals["t2s_01_us"]),
            t2s_12=float(vals["t2s_12_us"]),
            levels=int(vals.get("levels", 3)),
        )

    @classmethod
    def load(cls, path_or_preset: str | Path) -> DeviceParams:
        """Load a device file, or one of the shipped presets by name."""
        if str(path_or_preset) in PRESETS:
            ref = resources.files("qudit_compiler") / "devices" / f"{path_or_preset}.cfg"
            return cls.from_config(ref.read_text())
        return cls.from_config(Path(path_or_preset).read_text())


def qudit_device(levels: int = 3) -> DeviceParams:
    return DeviceParams.load("qudit").with_levels(levels)


@dataclass(frozen=True, eq=False)
class ControlPulse:
    """Piecewise-constant baseband controls ``p`` (in-phase) and ``q`` (MHz).

    Sample ``k`` is held constant over ``[k, k+1) / sample_rate`` ns.
    """

    p: np.ndarray
    q: np.ndarray
    sample_rate: float
    frame: str = "rot01"

    def __post_init__(self):
        p = np.array(self.p, dtype=float).ravel()
        q = np.array(self.q, dtype=float).ravel()
        if p.shape != q.shape:
            raise ValueError("p and q must have the same length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("pulse amplitudes must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def zeros(cls, duration: float, sample_rate: float) -> ControlPulse:
        n = int(round(duration * sample_rate))
        return cls(np.zeros(n), np.zeros(n), sample_rate)

    @property
    def n_samples(self) -> int:
        return self.p.size

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def signal(self) -> np.ndarray:
        """Complex baseband ``p + i q``."""
        return self.p + 1j * self.q

    @classmethod
    def from_signal(cls, z: np.ndarray, sample_rate: float, frame: str = "rot01") -> ControlPulse:
        return cls(np.real(z), np.imag(z), sample_rate, frame)

    def scaled(self, factor: float) -> ControlPulse:
        return ControlPulse(self.p * factor, self.q * factor, self.sample_rate, self.frame)

    def slice(self, start: int, stop: int) -> ControlPulse:
        return ControlPulse(self.p[start:stop], self.q[start:stop], self.sample_rate, self.frame)

    def key(self) -> tuple:
        """Hashable content key (used for caching propagators)."""
        return (self.sample_rate, self.p.tobytes(), self.q.tobytes())

    def __eq__(self, other):
        if not isinstance(other, ControlPulse):
            return NotImplemented
        return self.key() == other.key() and self.frame == other.frame

    __hash__ = None

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "duration_ns": self.duration,
            "frame": self.frame,
            "p": self.p.tolist(),
            "q": self.q.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ControlPulse:
        return cls(np.array(data["p"]), np.array(data["q"]), data["sample_rate"], data.get("frame", "rot01"))


def lowering_operator(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


def drift_and_controls(dev: DeviceParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(H0, Hp, Hq)`` in rad/ns, with the controls per MHz of drive.

    ``H(t) = H0 + p(t) Hp + q(t) Hq``.
    """
    a = lowering_operator(dev.levels)
    ad = dagger(a)
    h0 = 0.5 * TWO_PI_GHZ * dev.alpha * (ad @ ad @ a @ a)
    hp = TWO_PI_MHZ * (a + ad)
    hq = TWO_PI_MHZ * 1j * (a - ad)
    return h0, hp, hq


def hamiltonians(dev: DeviceParams, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    h0, hp, hq = drift_and_controls(dev)
    return h0 + np.asarray(p)[:, None, None] * hp + np.asarray(q)[:, None, None] * hq


def hamiltonian_at(dev: DeviceParams, pulse: ControlPulse, k: int) -> np.ndarray:
    """Hamiltonian (rad/ns) during sample ``k``."""
    if not 0 <= k < pulse.n_samples:
        raise IndexError(f"sample index {k} out of range for {pulse.n_samples} samples")
    return hamiltonians(dev, pulse.p[k : k + 1], pulse.q[k : k + 1])[0]


def cumulative_products(mats: np.ndarray) -> np.ndarray:
    """``out[k] = mats[k] @ ... @ mats[0]`` by a log-depth scan."""
    out = np.array(mats, copy=True)
    shift = 1
    n = out.shape[0]
    while shift < n:
        out[shift:] = out[shift:] @ out[:-shift]
        shift *= 2
    return out


def step_propagators(dev: DeviceParams, pulse: ControlPulse) -> np.ndarray:
    return _step_propagators(dev, pulse.p, pulse.q, pulse.dt)


def _step_propagators(dev, p, q, dt):
    h = hamiltonians(dev, p, q)
    e, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * dt * e)[:, None, :]) @ dagger(v)


def propagate_closed(dev: DeviceParams, pulse: ControlPulse) -> np.ndarray:
    """Time-ordered propagator ``U(T) = U_{N-1} ... U_0`` of a pulse."""
    if pulse.n_samples == 0:
        return np.eye(dev.levels, dtype=complex)
    return cumulative_products(step_propagators(dev, pulse))[-1]


def closed_gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Phase-insensitive trace overlap ``|tr(U^dag V)|^2 / d^2``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    d = u.shape[0]
    return float(abs(np.trace(dagger(u) @ v)) ** 2 / d**2)
