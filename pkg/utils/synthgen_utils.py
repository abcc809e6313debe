"""Analytic waveform generators.

The generators give closed-form loss oracles for testing and a desk-scale
training corpus that does not depend on external measurements.

Global variables:
    DEFAULT_SAMPLES: Samples per period of a generated record.
    MIN_SAMPLES: Smallest allowed samples per period.

Classes:
    SynthKind: Enumeration of the generator families.
    RingingSpec: Damped sinusoid added to H to emulate setup ringing.
    SynthSpec: Full parameter set of one generated operating point.
"""

from __future__ import annotations

import enum
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from waveform_utils import ShapeTag, TimeSeries, WaveformRecord

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 1024
MIN_SAMPLES = 16


class SynthKind(str, enum.Enum):
    """Enumeration class to differentiate generator families.

    ELLIPSE: B = B0*sin(theta), H = H0*sin(theta + phi). Smooth loop with an
        analytic loss-versus-skew law.
    PARALLELOGRAM: Triangular B with duty D and H = Hc*sign(dB/dt) + s*B.
    TRIANGULAR_DUTY: Triangular B with duty D whose coercive offset scales
        with the slope of B, emulating PWM duty dependence.
    """
    ELLIPSE = 'ellipse'
    PARALLELOGRAM = 'parallelogram'
    TRIANGULAR_DUTY = 'triangular-duty'


class RingingSpec:
    """Exponentially damped sinusoid added to H.

    ring(u) = amplitude * exp(-damping*u) * sin(2*pi*multiple*u + psi) for
    u in [0, 1) over the period, with a seeded random phase psi.

    Attributes:
        amplitude: Peak ringing amplitude in A/m; 0 disables ringing.
        frequency_multiple: Ringing frequency as a multiple of the
            fundamental.
        damping: Decay constant per period.
    """
    amplitude: float
    frequency_multiple: float
    damping: float

    def __init__(self, amplitude: float = 0.0,
                 frequency_multiple: float = 20.0, damping: float = 5.0):
        if amplitude < 0:
            raise ValueError(
                f"Ringing amplitude must be non-negative, got {amplitude}.")
        if frequency_multiple <= 0:
            raise ValueError("Ringing frequency multiple must be positive, "
                             f"got {frequency_multiple}.")
        if damping < 0:
            raise ValueError(f"Damping must be non-negative, got {damping}.")
        self.amplitude = float(amplitude)
        self.frequency_multiple = float(frequency_multiple)
        self.damping = float(damping)


class SynthSpec:
    """Parameters of one generated operating point.

    Attributes:
        kind: Generator family.
        b_amplitude: B0 in tesla for ellipses, peak-to-peak dB otherwise.
        h_amplitude: H0 in A/m for ellipses, coercive offset Hc otherwise.
        slope: Slope s of H against B in (A/m)/T, polygon families only.
        phase: Phase phi of H ahead of B in radians, ellipse only.
        duty: Fraction D of the period during which B rises.
        frequency: Fundamental frequency in hertz.
        samples: Samples per period.
        ringing: Optional ringing added to H.
        seed: Seed of the ringing phase.
        material: Material identifier written to the record.
        temperature: Temperature in celsius written to the record.
        dc_bias: DC bias in A/m written to the record.
        record_id: Origin identifier written to the record.
    """

    def __init__(self, kind: SynthKind, b_amplitude: float,
                 h_amplitude: float, slope: float = 0.0,
                 phase: float = math.radians(30.0), duty: float = 0.5,
                 frequency: float = 100e3, samples: int = DEFAULT_SAMPLES,
                 ringing: Optional[RingingSpec] = None, seed: int = 0,
                 material: str = 'synthetic', temperature: float = 25.0,
                 dc_bias: float = 0.0, record_id: str = ''):
        self.kind = SynthKind(kind)
        if not b_amplitude > 0 or not h_amplitude > 0:
            raise ValueError(
                f"Amplitudes must be positive, got B {b_amplitude} and "
                f"H {h_amplitude}.")
        if slope < 0:
            raise ValueError(f"Slope must be non-negative, got {slope}.")
        if not 0 < duty < 1:
            raise ValueError(f"Duty must lie in (0, 1), got {duty}.")
        if not frequency > 0:
            raise ValueError(f"Frequency must be positive, got {frequency}.")
        if int(samples) != samples or samples < MIN_SAMPLES:
            raise ValueError(
                f"Samples must be an integer >= {MIN_SAMPLES}, got {samples}.")
        self.b_amplitude = float(b_amplitude)
        self.h_amplitude = float(h_amplitude)
        self.slope = float(slope)
        self.phase = float(phase)
        self.duty = float(duty)
        self.frequency = float(frequency)
        self.samples = int(samples)
        self.ringing = ringing
        self.seed = int(seed)
        self.material = material
        self.temperature = temperature
        self.dc_bias = dc_bias
        self.record_id = record_id

    def rising_samples(self) -> int:
        """Return the number of samples on the rising branch of B."""
        return int(min(max(round(self.duty * self.samples), 2),
                       self.samples - 2))


def closed_form_energy(spec: SynthSpec) -> float:
    """Return the analytic loop energy density of clean parameters in J/m^3.

    Ellipse: pi*B0*H0*sin(phi). Parallelogram: 2*Hc*dB.
    Triangular duty: Hc*dB / (2*D*(1-D)).
    """
    if spec.kind == SynthKind.ELLIPSE:
        return math.pi * spec.b_amplitude * spec.h_amplitude \
            * math.sin(spec.phase)
    if spec.kind == SynthKind.PARALLELOGRAM:
        return 2 * spec.h_amplitude * spec.b_amplitude
    return spec.h_amplitude * spec.b_amplitude / (
        2 * spec.duty * (1 - spec.duty))


def __triangular_branches(spec: SynthSpec):
    """Return the rising and falling branches of a triangular B."""
    n_rise = spec.rising_samples()
    half = spec.b_amplitude / 2
    rising = np.linspace(-half, half, n_rise)
    falling = np.linspace(half, -half, spec.samples - n_rise)
    return rising, falling


def _ringing(spec: SynthSpec) -> np.ndarray:
    """Return the ringing waveform of a spec."""
    ringing = spec.ringing
    phase = np.random.default_rng(spec.seed).uniform(0.0, 2 * np.pi)
    u = np.arange(spec.samples) / spec.samples
    return ringing.amplitude * np.exp(-ringing.damping * u) * np.sin(
        2 * np.pi * ringing.frequency_multiple * u + phase)


def generate(spec: SynthSpec) -> WaveformRecord:
    """Generate one synthetic operating point.

    Args:
        spec: Parameters of the operating point.
    Returns:
        record: Raw (interp_factor 1) record, deterministic given spec.
    """
    if spec.kind == SynthKind.ELLIPSE:
        theta = 2 * np.pi * np.arange(spec.samples) / spec.samples
        b = spec.b_amplitude * np.sin(theta)
        h = spec.h_amplitude * np.sin(theta + spec.phase)
        shape_tag = ShapeTag.SINUSOIDAL
    else:
        rising, falling = __triangular_branches(spec)
        if spec.kind == SynthKind.PARALLELOGRAM:
            rising_offset = falling_offset = spec.h_amplitude
        else:
            rising_offset = spec.h_amplitude / (2 * spec.duty)
            falling_offset = spec.h_amplitude / (2 * (1 - spec.duty))
        b = np.concatenate([rising, falling])
        h = np.concatenate([rising_offset + spec.slope * rising,
                            -falling_offset + spec.slope * falling])
        shape_tag = ShapeTag.TRIANGULAR
    if spec.ringing is not None and spec.ringing.amplitude > 0:
        h = h + _ringing(spec)
    return WaveformRecord(
        TimeSeries(b, spec.frequency), TimeSeries(h, spec.frequency),
        material=spec.material, temperature=spec.temperature,
        dc_bias=spec.dc_bias, shape_tag=shape_tag, record_id=spec.record_id)


def generate_corpus(count: int, seed: int,
                    kinds: Sequence[SynthKind] = (SynthKind.ELLIPSE,
                                                  SynthKind.PARALLELOGRAM),
                    samples: int = DEFAULT_SAMPLES,
                    frequency_range: tuple = (50e3, 450e3),
                    ringing: Optional[RingingSpec] = None,
                    material: str = 'synthetic') -> List[WaveformRecord]:
    """Generate a seeded corpus of operating points with jittered parameters.

    Frequencies are log-uniform over frequency_range. Ellipse phases lie in
    [10, 60] degrees, duties in [0.2, 0.8].

    Args:
        count: Number of operating points.
        seed: Seed of the parameter draws.
        kinds: Generator families to draw from uniformly.
        samples: Samples per period of every record.
        frequency_range: (min, max) frequency in hertz.
        ringing: Optional ringing applied to every record.
        material: Material identifier of every record.
    Returns:
        records: Records with ids 'synth-<kind>-<index>'.
    """
    if count < 1:
        raise ValueError(f"Corpus size must be positive, got {count}.")
    kinds = [SynthKind(kind) for kind in kinds]
    if not kinds:
        raise ValueError("At least one generator kind is required.")
    rng = np.random.default_rng(seed)
    low, high = frequency_range
    records = []
    for index in range(count):
        kind = kinds[int(rng.integers(len(kinds)))]
        frequency = float(np.exp(rng.uniform(np.log(low), np.log(high))))
        b_amplitude = float(rng.uniform(0.02, 0.3))
        h_amplitude = float(rng.uniform(10.0, 100.0))
        spec = SynthSpec(
            kind, b_amplitude, h_amplitude,
            slope=float(rng.uniform(0.2, 0.8)) * h_amplitude / b_amplitude,
            phase=math.radians(float(rng.uniform(10.0, 60.0))),
            duty=float(rng.uniform(0.2, 0.8)), frequency=frequency,
            samples=samples, ringing=ringing,
            seed=int(rng.integers(2 ** 31)), material=material,
            record_id=f'synth-{kind.value}-{index:05d}')
        records.append(generate(spec))
    logger.info("Generated %d synthetic records (seed %d)", count, seed)
    return records
