"""Frequency-domain views and transforms of control pulses."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .transmon import ControlPulse, DeviceParams

# midpoint of the QuDIT 0-1 and 1-2 tones in the 0-1 rotating frame
QUDIT_OMEGA_C_MHZ = 0.5 * (3.237 - 3.446) * 1e3


def frequencies_mhz(n: int, sample_rate: float) -> np.ndarray:
    """Unshifted FFT bin frequencies in MHz for ``n`` samples."""
    return np.fft.fftfreq(n, 1.0 / sample_rate) * 1e3


def pulse_fft(pulse: ControlPulse) -> tuple[np.ndarray, np.ndarray]:
    """DFT of ``p + i q``, ordered from ``-rate/2`` to ``+rate/2``.

    Returns ``(freqs_mhz, amplitudes)``; amplitudes are the unnormalized
    DFT so ``sum|x|^2 == sum|X|^2 / N``.
    """
    spec = np.fft.fftshift(np.fft.fft(pulse.signal))
    freqs = np.fft.fftshift(frequencies_mhz(pulse.n_samples, pulse.sample_rate))
    return freqs, spec


def band_power_fraction(pulse: ControlPulse, centers_mhz, half_width_mhz: float) -> float:
    """Fraction of spectral power within ``half_width_mhz`` of any center."""
    f, x = pulse_fft(pulse)
    power = np.abs(x) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    inside = np.zeros(f.shape, dtype=bool)
    for c in np.atleast_1d(centers_mhz):
        inside |= np.abs(f - c) <= half_width_mhz
    return float(power[inside].sum() / total)


def band_mask(n: int, sample_rate: float, centers_mhz, half_width_mhz: float) -> np.ndarray:
    """0/1 mask over unshifted FFT bins selecting bands around ``centers_mhz``.

    The bin nearest to each center is always kept, so very short pulses
    still get one degree of freedom per tone.
    """
    f = frequencies_mhz(n, sample_rate)
    mask = np.zeros(n)
    for c in np.atleast_1d(centers_mhz):
        mask[np.abs(f - c) <= half_width_mhz] = 1.0
        mask[np.argmin(np.abs(f - c))] = 1.0
    return mask


@dataclass(frozen=True)
class CalibrationParams:
    """Amplitude scale ``gamma`` and 1-2 band weight ``sigma``.

    ``omega_c`` (MHz, rotating frame) splits the spectrum between the 0-1
    tone near 0 MHz and the 1-2 tone near the anharmonicity.
    """

    gamma: float = 1.0
    sigma: float = 1.0
    omega_c: float = QUDIT_OMEGA_C_MHZ

    def __post_init__(self):
        for name in ("gamma", "sigma"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")

    @classmethod
    def for_device(cls, dev: DeviceParams, gamma: float = 1.0, sigma: float = 1.0) -> CalibrationParams:
        return cls(gamma, sigma, 0.5 * dev.alpha * 1e3)

    def inverse(self) -> CalibrationParams:
        return CalibrationParams(1.0 / self.gamma, 1.0 / self.sigma, self.omega_c)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> CalibrationParams:
        return cls(float(data["gamma"]), float(data["sigma"]), float(data.get("omega_c", QUDIT_OMEGA_C_MHZ)))


def apply_calibration(pulse: ControlPulse, cal: CalibrationParams) -> ControlPulse:
    """Two-scalar spectral transform of a pulse.

    Bins at or below ``omega_c`` (the band holding the 1-2 tone, since the
    anharmonicity is negative) are multiplied by ``sigma``; every bin is
    then scaled by ``gamma``.
    """
    if pulse.n_samples == 0:
        raise ValueError("cannot calibrate an empty pulse")
    spec = np.fft.fft(pulse.signal)
    f = frequencies_mhz(pulse.n_samples, pulse.sample_rate)
    weight = np.where(f <= cal.omega_c, cal.sigma, 1.0)
    z = cal.gamma * np.fft.ifft(weight * spec)
    return ControlPulse.from_signal(z, pulse.sample_rate, pulse.frame)
