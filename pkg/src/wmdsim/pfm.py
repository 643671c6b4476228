"""Pulse-frequency-modulated inverter drive.

A pattern mixes ``n1`` square periods at f/(2n-1) with ``n2`` square periods
at f/(2n+1) (n = ``order``; the drive uses n = 1, i.e. f and f/3).  The
fast periods come first, then the slow ones, and the block repeats.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class NonPeriodicFrequencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PfmPattern:
    n1: int
    n2: int
    base_frequency: float = 85.0e3
    order: int = 1

    def __post_init__(self):
        if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 < 1:
            raise ValueError("need n1, n2 >= 0 and n1 + n2 >= 1")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    @property
    def duty(self) -> float:
        return self.n1 / (self.n1 + self.n2)

    @property
    def fast_period(self) -> float:
        return (2 * self.order - 1) / self.base_frequency

    @property
    def slow_period(self) -> float:
        return (2 * self.order + 1) / self.base_frequency

    @property
    def period(self) -> float:
        return self.n1 * self.fast_period + self.n2 * self.slow_period


def pattern_from_duty(duty: float, max_denominator: int = 16, base_frequency: float = 85.0e3,
                      order: int = 1) -> PfmPattern:
    """Smallest (n1, n2) with n1/(n1+n2) equal to, or best approximating, ``duty``."""
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty ratio must lie in [0, 1]")
    if max_denominator < 1:
        raise ValueError("max_denominator must be >= 1")
    frac = Fraction(duty).limit_denominator(max_denominator)
    return PfmPattern(frac.numerator, frac.denominator - frac.numerator, base_frequency, order)


@dataclass(frozen=True)
class SquareWaveSegmentTrain:
    levels: tuple
    durations: tuple

    @property
    def period(self) -> float:
        return math.fsum(self.durations)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.durations)[:-1]))

    def mean(self) -> float:
        return math.fsum(v * d for v, d in zip(self.levels, self.durations)) / self.period

    def value_at(self, t) -> np.ndarray:
        """Waveform value at times ``t`` (periodic extension)."""
        edges = np.cumsum(self.durations)
        tt = np.mod(np.asarray(t, dtype=float), self.period)
        idx = np.minimum(np.searchsorted(edges, tt, side="right"), len(self.levels) - 1)
        return np.asarray(self.levels)[idx]

    def to_csv(self) -> str:
        lines = ["t_start_s,level_v"]
        lines += [f"{t:.9g},{v:.9g}" for t, v in zip(self.starts, self.levels)]
        return "\n".join(lines) + "\n"


def synthesize(pattern: PfmPattern, amplitude: float) -> SquareWaveSegmentTrain:
    """One pattern period as +E/-E half-period segments."""
    if not amplitude > 0:
        raise ValueError("amplitude must be > 0")
    levels, durations = [], []
    for count, t in ((pattern.n1, pattern.fast_period), (pattern.n2, pattern.slow_period)):
        for _ in range(count):
            levels += [amplitude, -amplitude]
            durations += [t / 2, t / 2]
    return SquareWaveSegmentTrain(tuple(levels), tuple(durations))


def harmonic_rms(amplitude: float, duty: float, order: int = 1, n_f: float = 1.0) -> float:
    """RMS content at the base frequency of a PFM drive mixing f/(2n-1) and f/(2n+1).

        U = 2 sqrt(2) E / ((duty (2n-1) + (1-duty)(2n+1)) n_f pi)

    With ``n_f = 1`` this is exact for the block pattern built by
    :func:`synthesize` (see :func:`spectrum`).
    """
    if not amplitude > 0:
        raise ValueError("amplitude must be > 0")
    if not 0.0 <= duty <= 1.0:
        raise ValueError("duty ratio must lie in [0, 1]")
    if order < 1:
        raise ValueError("order must be >= 1")
    n = order
    return 2 * math.sqrt(2) * amplitude / ((duty * (2 * n - 1) + (1 - duty) * (2 * n + 1)) * n_f * math.pi)


def fourier_coefficient(train: SquareWaveSegmentTrain, frequency: float) -> complex:
    """(1/P) * integral of x(t) exp(-j 2 pi f t) over one pattern period, in closed form."""
    period = train.period
    if frequency == 0:
        return complex(train.mean())
    w = 2 * math.pi * frequency
    acc = 0j
    t = 0.0
    for level, dur in zip(train.levels, train.durations):
        acc += level * (cmath.exp(-1j * w * t) - cmath.exp(-1j * w * (t + dur))) / (1j * w)
        t += dur
    return acc / period


def spectrum(train: SquareWaveSegmentTrain, frequencies) -> list:
    """Exact RMS amplitude of the line at each requested frequency.

    Frequencies that are not integer multiples of 1/period are still
    evaluated but trigger a :class:`NonPeriodicFrequencyWarning`.
    """
    if not train.levels:
        raise ValueError("empty segment train")
    period = train.period
    out = []
    for f in frequencies:
        k = f * period
        if abs(k - round(k)) > 1e-9 * max(1.0, abs(k)):
            warnings.warn(f"{f:.6g} Hz is not a harmonic of the {period:.6g} s pattern",
                          NonPeriodicFrequencyWarning, stacklevel=2)
        c = fourier_coefficient(train, f)
        out.append((f, abs(c) if f == 0 else math.sqrt(2) * abs(c)))
    return out


def pattern_harmonics(train: SquareWaveSegmentTrain, count: int) -> list:
    """RMS lines at the first ``count`` harmonics of the pattern period."""
    f0 = 1.0 / train.period
    return spectrum(train, [k * f0 for k in range(1, count + 1)])


def spectrum_csv(lines) -> str:
    return "freq_hz,rms_v\n" + "".join(f"{f:.9g},{v:.9g}\n" for f, v in lines)
