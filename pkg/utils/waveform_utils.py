"""Waveform classes and loop math for BH-loop de-skewing.

All series cover exactly one fundamental period and are treated as
periodic, so index arithmetic wraps modulo the series length. All loop math
is done in double precision.

Classes:
    ShapeTag: Enumeration of the waveform shapes found in measurement data.
    LoopOrientation: Enumeration of the traversal direction of a BH loop.
    TimeSeries: Uniform samples over one period with their frequency.
    WaveformRecord: One operating point: B and H series plus metadata.
    SkewOffset: Signed skew in interpolated-sample units.
    BhLoop: Closed polyline of (H, B) coordinates in time order.
"""

from __future__ import annotations

import enum
import logging
from typing import Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

logger = logging.getLogger(__name__)

MIN_SERIES_LENGTH = 3


class ShapeTag(str, enum.Enum):
    """Enumeration class to differentiate excitation waveform shapes.

    Triangular flux comes from rectangular (PWM) voltage, the main regime of
    the training data. The tag is read from metadata, never inferred.
    """
    TRIANGULAR = 'triangular'
    SINUSOIDAL = 'sinusoidal'
    TRAPEZOIDAL = 'trapezoidal'
    OTHER = 'other'


class LoopOrientation(enum.IntEnum):
    """Enumeration class for the traversal direction of a loop in the H-B
    plane. Counter-clockwise loops have positive area, i.e. dissipate energy.
    """
    CLOCKWISE = -1
    DEGENERATE = 0
    COUNTER_CLOCKWISE = 1


class TimeSeries:
    """Uniform samples over exactly one period of a periodic waveform.

    Attributes:
        values: Samples as a float64 vector of length >= 3.
        frequency: Fundamental frequency in hertz.
    """
    values: np.ndarray
    frequency: float

    def __init__(self, values: np.ndarray, frequency: float):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError(
                f"TimeSeries values must be one-dimensional, got shape "
                f"{values.shape}.")
        if values.size < MIN_SERIES_LENGTH:
            raise ValueError(
                f"TimeSeries needs at least {MIN_SERIES_LENGTH} samples, got "
                f"{values.size}.")
        frequency = float(frequency)
        if not np.isfinite(frequency) or frequency <= 0:
            raise ValueError(
                f"TimeSeries frequency must be positive, got {frequency}.")
        self.values = values
        self.frequency = frequency

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeSeries) \
            and self.frequency == other.frequency \
            and np.array_equal(self.values, other.values)

    def __str__(self) -> str:
        return f"TimeSeries({len(self)} samples, {self.frequency:g} Hz)"

    @property
    def period(self) -> float:
        """Duration of the covered period in seconds."""
        return 1.0 / self.frequency

    @property
    def sample_interval(self) -> float:
        """Time between two consecutive samples in seconds."""
        return 1.0 / (self.frequency * len(self))


class WaveformRecord:
    """One operating point: flux density and field strength over one period.

    Attributes:
        b: Flux density series in tesla.
        h: Field strength series in A/m, same length and frequency as b.
        material: Material identifier, e.g. '3C90'.
        temperature: Core temperature in celsius, None when unknown.
        dc_bias: DC bias in A/m, None when unknown.
        shape_tag: Excitation shape from metadata.
        record_id: Identifier of the operating point. Augmented siblings
            share it, which makes it the origin identifier.
        interp_factor: Interpolation factor K the series were expanded by;
            1 for raw records.
    """
    b: TimeSeries
    h: TimeSeries
    material: str
    temperature: Optional[float]
    dc_bias: Optional[float]
    shape_tag: ShapeTag
    record_id: str
    interp_factor: int

    def __init__(self, b: TimeSeries, h: TimeSeries, material: str = '',
                 temperature: Optional[float] = None,
                 dc_bias: Optional[float] = None,
                 shape_tag: ShapeTag = ShapeTag.OTHER, record_id: str = '',
                 interp_factor: int = 1):
        if not isinstance(b, TimeSeries) or not isinstance(h, TimeSeries):
            raise TypeError("Attributes b and h must be TimeSeries objects.")
        if len(b) != len(h):
            raise ValueError(
                f"B and H lengths differ: {len(b)} and {len(h)}.")
        if b.frequency != h.frequency:
            raise ValueError(
                f"B and H frequencies differ: {b.frequency} and "
                f"{h.frequency}.")
        if int(interp_factor) != interp_factor or interp_factor < 1:
            raise ValueError(
                f"interp_factor must be a positive integer, got "
                f"{interp_factor}.")
        if len(b) % int(interp_factor):
            raise ValueError(
                f"Series length {len(b)} is not a multiple of interp_factor "
                f"{interp_factor}.")
        self.b = b
        self.h = h
        self.material = str(material)
        self.temperature = None if temperature is None else float(temperature)
        self.dc_bias = None if dc_bias is None else float(dc_bias)
        self.shape_tag = ShapeTag(shape_tag)
        self.record_id = str(record_id)
        self.interp_factor = int(interp_factor)

    def __eq__(self, other) -> bool:
        return isinstance(other, WaveformRecord) \
            and self.b == other.b and self.h == other.h \
            and self.material == other.material \
            and self.temperature == other.temperature \
            and self.dc_bias == other.dc_bias \
            and self.shape_tag == other.shape_tag \
            and self.record_id == other.record_id \
            and self.interp_factor == other.interp_factor

    def __str__(self) -> str:
        return (f"WaveformRecord({self.record_id or '?'}, {self.material}, "
                f"{self.frequency:g} Hz, {len(self.b)} samples)")

    @property
    def frequency(self) -> float:
        """Fundamental frequency in hertz."""
        return self.b.frequency

    @property
    def base_length(self) -> int:
        """Number of samples per period before interpolation."""
        return len(self.b) // self.interp_factor

    @property
    def peak_to_peak_b(self) -> float:
        """Peak-to-peak flux density in tesla."""
        return float(np.max(self.b.values) - np.min(self.b.values))

    def with_h(self, h: TimeSeries) -> WaveformRecord:
        """Return a copy of this record with a replaced H series."""
        return WaveformRecord(
            self.b, h, self.material, self.temperature, self.dc_bias,
            self.shape_tag, self.record_id, self.interp_factor)

    def loop(self) -> BhLoop:
        """Return the BH loop of this record."""
        return make_loop(self.b, self.h)

    def interpolated(self, k: int) -> WaveformRecord:
        """Return this raw record with both series expanded k times."""
        if self.interp_factor != 1:
            raise ValueError(
                f"Record {self.record_id} is already interpolated by "
                f"{self.interp_factor}.")
        return WaveformRecord(
            interpolate_periodic(self.b, k), interpolate_periodic(self.h, k),
            self.material, self.temperature, self.dc_bias, self.shape_tag,
            self.record_id, k)


class SkewOffset:
    """Signed skew expressed in interpolated-sample units.

    Attributes:
        delta: Signed offset in interpolated samples.
        interp_factor: Interpolation factor K.
        base_length: Raw samples per period L.
    """
    delta: int
    interp_factor: int
    base_length: int

    def __init__(self, delta: int, interp_factor: int, base_length: int):
        for name, value in (('delta', delta), ('interp_factor', interp_factor),
                            ('base_length', base_length)):
            if int(value) != value:
                raise ValueError(f"SkewOffset {name} must be an integer, got "
                                 f"{value}.")
        if interp_factor < 1 or base_length < 1:
            raise ValueError(
                "SkewOffset interp_factor and base_length must be positive.")
        if abs(delta) >= interp_factor * base_length:
            raise ValueError(
                f"Skew {delta} is not within one period of "
                f"{interp_factor * base_length} samples.")
        self.delta = int(delta)
        self.interp_factor = int(interp_factor)
        self.base_length = int(base_length)

    def __eq__(self, other) -> bool:
        return isinstance(other, SkewOffset) and self.delta == other.delta \
            and self.interp_factor == other.interp_factor \
            and self.base_length == other.base_length

    def __str__(self) -> str:
        return f"SkewOffset({self.delta} of {self.period})"

    @property
    def period(self) -> int:
        """Number of interpolated samples per period, L*K."""
        return self.interp_factor * self.base_length

    def degrees(self) -> float:
        """Return the skew as a phase angle in degrees."""
        return 360.0 * self.delta / self.period

    def seconds(self, frequency: float) -> float:
        """Return the skew as a time shift in seconds at a frequency."""
        if frequency <= 0:
            raise ValueError(f"Frequency must be positive, got {frequency}.")
        return self.delta / (self.period * frequency)

    def nanoseconds(self, frequency: float) -> float:
        """Return the skew as a time shift in nanoseconds at a frequency."""
        return self.seconds(frequency) * 1e9

    def inverse(self) -> SkewOffset:
        """Return the offset undoing this one."""
        return SkewOffset(-self.delta, self.interp_factor, self.base_length)


def resolution_degrees(base_length: int, interp_factor: int) -> float:
    """Return the phase resolution of one interpolated sample in degrees."""
    return 360.0 / (base_length * interp_factor)


def resolution_seconds(base_length: int, interp_factor: int,
                       frequency: float) -> float:
    """Return the time resolution of one interpolated sample in seconds."""
    return 1.0 / (base_length * interp_factor * frequency)


class BhLoop:
    """Closed polyline of (H, B) coordinates; the last point connects back to
    the first.

    Attributes:
        h: Field strength coordinates in A/m.
        b: Flux density coordinates in tesla.
    """
    h: np.ndarray
    b: np.ndarray

    def __init__(self, h: np.ndarray, b: np.ndarray):
        h = np.asarray(h, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if h.ndim != 1 or h.shape != b.shape:
            raise ValueError(
                f"Loop coordinates must be equal-length vectors, got "
                f"{h.shape} and {b.shape}.")
        if h.size < MIN_SERIES_LENGTH:
            raise ValueError(
                f"A loop needs at least {MIN_SERIES_LENGTH} points, got "
                f"{h.size}.")
        self.h = h
        self.b = b

    def __len__(self) -> int:
        return self.h.size

    def __eq__(self, other) -> bool:
        return isinstance(other, BhLoop) and np.array_equal(self.h, other.h) \
            and np.array_equal(self.b, other.b)

    @property
    def is_degenerate(self) -> bool:
        """True when every point coincides, i.e. zero extent on both axes."""
        return bool(np.ptp(self.h) == 0 and np.ptp(self.b) == 0)

    def extrema(self) -> Tuple[float, float, float, float]:
        """Return (h_min, h_max, b_min, b_max)."""
        return (float(np.min(self.h)), float(np.max(self.h)),
                float(np.min(self.b)), float(np.max(self.b)))


def b_from_voltage(v: TimeSeries, n2: int, ae: float) -> TimeSeries:
    """Convert sense-winding voltage into flux density.

    B(t) = 1/(N2*Ae) * integral of v from 0 to t, with B(0) = 0, using the
    cumulative trapezoid rule.

    Args:
        v: Voltage series in volts.
        n2: Turn count of the sense winding.
        ae: Effective core cross-section in square meters.
    Returns:
        b: Flux density series in tesla, same frequency as v.
    """
    if n2 < 1:
        raise ValueError(f"Turn count n2 must be at least 1, got {n2}.")
    if not ae > 0:
        raise ValueError(f"Cross-section ae must be positive, got {ae}.")
    flux_linkage = cumulative_trapezoid(
        v.values, dx=v.sample_interval, initial=0)
    return TimeSeries(flux_linkage / (n2 * ae), v.frequency)


def h_from_current(i: TimeSeries, n1: int, le: float) -> TimeSeries:
    """Convert excitation current into field strength, H = N1*i/le.

    Args:
        i: Current series in amperes.
        n1: Turn count of the excitation winding.
        le: Effective magnetic path length in meters.
    Returns:
        h: Field strength series in A/m, same frequency as i.
    """
    if n1 < 1:
        raise ValueError(f"Turn count n1 must be at least 1, got {n1}.")
    if not le > 0:
        raise ValueError(f"Path length le must be positive, got {le}.")
    return TimeSeries(n1 * i.values / le, i.frequency)


def interpolate_periodic(s: TimeSeries, k: int) -> TimeSeries:
    """Expand a periodic series k times by linear interpolation.

    output[j*k] equals s[j] exactly and the k-1 points after it lie on the
    segment towards s[(j+1) mod L], closing the period.

    Args:
        s: Series to expand, length L.
        k: Expansion factor >= 1.
    Returns:
        expanded: Series of length L*k; s itself when k is 1.
    """
    if int(k) != k or k < 1:
        raise ValueError(f"Interpolation factor must be a positive integer, "
                         f"got {k}.")
    if k == 1:
        return s
    start = s.values
    end = np.roll(start, -1)
    fraction = np.arange(int(k), dtype=np.float64) / k
    expanded = start[:, None] * (1.0 - fraction) + end[:, None] * fraction
    return TimeSeries(expanded.ravel(), s.frequency)


def apply_skew(h: TimeSeries, delta: SkewOffset) -> TimeSeries:
    """Circularly shift H by a skew offset: output[t] = h[(t+delta) mod n].

    Only H is ever shifted; B is the time reference.

    Args:
        h: Interpolated field strength series of length L*K.
        delta: Offset to apply.
    Returns:
        skewed: Shifted series.
    """
    if len(h) != delta.period:
        raise ValueError(
            f"Series length {len(h)} does not match the skew grid period "
            f"{delta.period} (L={delta.base_length}, K={delta.interp_factor}).")
    return TimeSeries(np.roll(h.values, -delta.delta), h.frequency)


def make_loop(b: TimeSeries, h: TimeSeries) -> BhLoop:
    """Build the BH loop whose t-th point is (h[t], b[t])."""
    if len(b) != len(h):
        raise ValueError(f"B and H lengths differ: {len(b)} and {len(h)}.")
    return BhLoop(h.values, b.values)


def loop_energy_density(loop: BhLoop) -> float:
    """Return the signed loop area, i.e. the energy density per cycle.

    The area is the closed integral of H dB computed with the shoelace
    formula in the H-B plane: 0.5*sum(H[i]*B[i+1] - H[i+1]*B[i]). Means are
    removed first, which leaves the area unchanged. A dissipative loop
    traverses counter-clockwise and yields a positive value.

    Args:
        loop: Loop to integrate.
    Returns:
        energy: Energy density in J/m^3; 0 for degenerate loops.
    """
    if loop.is_degenerate:
        return 0.0
    h = loop.h - np.mean(loop.h)
    b = loop.b - np.mean(loop.b)
    h_next = np.roll(h, -1)
    b_next = np.roll(b, -1)
    return float(0.5 * np.sum(h * b_next - h_next * b))


def loop_orientation(loop: BhLoop) -> LoopOrientation:
    """Return the traversal direction of a loop from its signed area."""
    energy = loop_energy_density(loop)
    if energy > 0:
        return LoopOrientation.COUNTER_CLOCKWISE
    if energy < 0:
        return LoopOrientation.CLOCKWISE
    return LoopOrientation.DEGENERATE


def core_loss_density(loop: BhLoop, f: float) -> float:
    """Return the core loss density f * loop energy in W/m^3.

    A negative value means a clockwise loop, which is nonphysical and usually
    caused by a large negative skew. It is reported, not rejected.
    """
    if not f > 0:
        raise ValueError(f"Frequency must be positive, got {f}.")
    energy = loop_energy_density(loop)
    if energy < 0:
        logger.debug("Loop has negative area %g J/m^3", energy)
    return f * energy
