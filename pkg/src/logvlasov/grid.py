"""Uniform periodic grids and Fourier pseudo-spectral derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    length: float
    n: int

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("grid length must be > 0")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8 (got {self.n})")

    @property
    def dx(self):
        return self.length / self.n

    @cached_property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n)

    @cached_property
    def k(self):
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def to_dict(self):
        return {"x_min": self.x_min, "length": self.length, "n": self.n}

    @classmethod
    def periodic(cls, length, n, x_min=0.0):
        return cls(float(x_min), float(length), int(n))

    @classmethod
    def centered(cls, half_width, dx_max):
        """Smallest power-of-two grid on [-half_width, half_width) with dx <= dx_max."""
        length = 2.0 * half_width
        n = 8
        while length / n > dx_max:
            n *= 2
        return cls(-half_width, length, n)


def spectral_dx(f, k, order=1):
    """d^order f / dx^order of periodic real samples; Nyquist mode dropped for odd order."""
    fh = np.fft.fft(f)
    mult = (1j * k) ** order
    if order % 2 == 1 and len(k) % 2 == 0:
        mult = mult.copy()
        mult[len(k) // 2] = 0.0
    out = np.fft.ifft(mult * fh, axis=-1)
    return out.real if np.isrealobj(f) else out


def antiderivative(f, length):
    """Return (mean, F) with F periodic and F' = f - mean, F(0) sample = 0."""
    n = f.shape[-1]
    k = 2 * np.pi * np.fft.fftfreq(n, d=length / n)
    fh = np.fft.fft(f)
    mean = fh[0].real / n
    gh = np.zeros_like(fh)
    nz = k != 0
    gh[nz] = fh[nz] / (1j * k[nz])
    if n % 2 == 0:
        gh[n // 2] = 0.0
    g = np.fft.ifft(gh).real
    return mean, g - g[0]


def trig_interpolate(f, length, x_min, xq):
    """Evaluate the trigonometric interpolant of periodic samples at points ``xq``."""
    n = len(f)
    fh = np.fft.fft(f) / n
    m = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        # split the Nyquist term symmetrically so real data stays real
        fh = fh.copy()
        nyq = fh[n // 2]
        fh[n // 2] = 0.5 * nyq
        m = np.append(m, n // 2)
        fh = np.append(fh, 0.5 * nyq)
    phase = 2j * np.pi * np.outer(np.asarray(xq, dtype=float) - x_min, m) / length
    out = np.exp(phase) @ fh
    return out.real if np.isrealobj(f) else out
