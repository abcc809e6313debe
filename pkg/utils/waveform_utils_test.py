"""Tests for the waveform_utils script.

Tests are grouped in classes by operation. Anything labeled 'test_[name]'
tests the functionality of an operation and anything labeled
'test_fail_[name]' tests that invalid input raises the appropriate error.
"""

import math
import random
import unittest

import numpy as np

import waveform_utils
from waveform_utils import (
    BhLoop,
    LoopOrientation,
    SkewOffset,
    TimeSeries,
    apply_skew,
    b_from_voltage,
    core_loss_density,
    h_from_current,
    interpolate_periodic,
    loop_energy_density,
    loop_orientation,
    make_loop
)

B0 = 0.1
H0 = 50.0
PHI = math.radians(30.0)
ELLIPSE_ENERGY = math.pi * B0 * H0 * math.sin(PHI)


def _ellipse_series(samples: int = 1024, frequency: float = 100e3,
                    b0: float = B0, h0: float = H0, phi: float = PHI):
    """Return B = b0*sin(theta) and H = h0*sin(theta + phi) series.

    H leads B, so the loop runs counter-clockwise in the H-B plane and
    encloses +pi*b0*h0*sin(phi).
    """
    theta = 2 * np.pi * np.arange(samples) / samples
    return (TimeSeries(b0 * np.sin(theta), frequency),
            TimeSeries(h0 * np.sin(theta + phi), frequency))


def _parallelogram_series(delta_b: float, hc: float, slope: float,
                          n_rise: int, n_fall: int, frequency: float = 1e5):
    """Return a triangular B and H = hc*sign(dB/dt) + slope*B."""
    rising = np.linspace(-delta_b / 2, delta_b / 2, n_rise)
    falling = np.linspace(delta_b / 2, -delta_b / 2, n_fall)
    b = np.concatenate([rising, falling])
    h = np.concatenate([hc + slope * rising, -hc + slope * falling])
    return TimeSeries(b, frequency), TimeSeries(h, frequency)


class TestTimeSeries(unittest.TestCase):
    """Test construction of the TimeSeries and SkewOffset classes."""

    def test_object_creation(self):
        """Test that a TimeSeries creates properly and copies its input."""
        values = np.arange(4.0)
        series = TimeSeries(values, 50e3)
        values[0] = 99.0
        self.assertEqual(series.values[0], 0.0)
        self.assertEqual(len(series), 4)
        self.assertEqual(series.sample_interval, 1 / (4 * 50e3))

    def test_fail_short_series(self):
        """Test that fewer than three samples raise a ValueError."""
        with self.assertRaises(ValueError):
            TimeSeries([1.0, 2.0], 1e3)

    def test_fail_non_positive_frequency(self):
        """Test that zero or negative frequency raises a ValueError."""
        with self.assertRaises(ValueError):
            TimeSeries([1.0, 2.0, 3.0], 0.0)
        with self.assertRaises(ValueError):
            TimeSeries([1.0, 2.0, 3.0], -5.0)

    def test_skew_offset_conversions(self):
        """Test the degree and second conversions of a skew offset."""
        offset = SkewOffset(1, 1000, 1024)
        self.assertEqual(offset.degrees(), 3.515625e-4)
        self.assertAlmostEqual(offset.nanoseconds(50e3), 0.01953125,
                               places=15)
        offset = SkewOffset(-2560, 10, 1024)
        self.assertEqual(offset.degrees(), -90.0)
        self.assertEqual(offset.seconds(1e3), -0.00025)

    def test_resolution(self):
        """Test the resolution of one interpolated index at K=1000."""
        self.assertEqual(waveform_utils.resolution_degrees(1024, 1000),
                         3.515625e-4)
        self.assertAlmostEqual(
            waveform_utils.resolution_seconds(1024, 1000, 50e3) * 1e9,
            0.01953125, places=15)

    def test_fail_skew_offset_full_period(self):
        """Test that a skew of one full period or more is rejected."""
        with self.assertRaises(ValueError):
            SkewOffset(1024, 1, 1024)
        with self.assertRaises(ValueError):
            SkewOffset(-2048, 2, 1024)
        SkewOffset(2047, 2, 1024)


class TestConversion(unittest.TestCase):
    """Test b_from_voltage() and h_from_current()."""

    def test_zero_voltage(self):
        """Test that zero voltage integrates to zero flux density."""
        b = b_from_voltage(TimeSeries(np.zeros(64), 1e5), 3, 1e-5)
        self.assertTrue(np.all(b.values == 0))

    def test_square_wave_voltage(self):
        """Test that a square wave voltage integrates into a triangle.

        The slope is exactly +/-V0 on each half and the half peak-to-peak
        value is V0*T/4 up to one sample of the trapezoid transition.
        """
        samples, frequency, v0 = 1000, 1e3, 2.0
        voltage = np.where(np.arange(samples) < samples // 2, v0, -v0)
        b = b_from_voltage(TimeSeries(voltage, frequency), 1, 1.0)
        dt = 1 / (samples * frequency)
        self.assertEqual(b.values[0], 0.0)
        slopes = np.diff(b.values) / dt
        np.testing.assert_allclose(slopes[:samples // 2 - 1], v0, rtol=1e-9)
        np.testing.assert_allclose(slopes[samples // 2:], -v0, rtol=1e-9)
        half_peak_to_peak = np.ptp(b.values) / 2
        self.assertAlmostEqual(half_peak_to_peak, v0 / frequency / 4,
                               delta=v0 * dt)

    def test_cosine_voltage(self):
        """Test the analytic antiderivative of a cosine voltage."""
        samples, frequency, v0, n2, ae = 1024, 1e5, 3.0, 5, 2e-5
        t = np.arange(samples) / (samples * frequency)
        voltage = TimeSeries(v0 * np.cos(2 * np.pi * frequency * t),
                             frequency)
        b = b_from_voltage(voltage, n2, ae)
        expected = v0 * np.sin(2 * np.pi * frequency * t) / (
            2 * np.pi * frequency * n2 * ae)
        np.testing.assert_allclose(b.values, expected,
                                   atol=1e-5 * np.max(np.abs(expected)))
        self.assertEqual(b.frequency, frequency)

    def test_fail_bad_cross_section(self):
        """Test that a non-positive cross-section raises a ValueError."""
        with self.assertRaises(ValueError):
            b_from_voltage(TimeSeries(np.ones(8), 1e3), 1, 0.0)
        with self.assertRaises(ValueError):
            b_from_voltage(TimeSeries(np.ones(8), 1e3), 0, 1.0)

    def test_current_to_field(self):
        """Test H = N1*i/le on zero, identity and hand-computed inputs."""
        zero = h_from_current(TimeSeries(np.zeros(5), 1e3), 4, 0.1)
        self.assertTrue(np.all(zero.values == 0))
        current = TimeSeries([0.3, -1.2, 2.5], 7e4)
        identity = h_from_current(current, 1, 1.0)
        self.assertEqual(identity, current)
        scaled = h_from_current(TimeSeries([0.1, 0.2, 0.3], 1e3), 10, 0.05)
        np.testing.assert_allclose(scaled.values, [20.0, 40.0, 60.0],
                                   rtol=1e-15)

    def test_fail_bad_path_length(self):
        """Test that a non-positive path length raises a ValueError."""
        with self.assertRaises(ValueError):
            h_from_current(TimeSeries(np.ones(8), 1e3), 1, -0.1)


class TestInterpolation(unittest.TestCase):
    """Test interpolate_periodic()."""

    def test_midpoints(self):
        """Test the periodic midpoints of a two-level series."""
        series = TimeSeries([0.0, 2.0, 2.0], 1.0)
        expanded = interpolate_periodic(series, 2)
        np.testing.assert_array_equal(expanded.values,
                                      [0.0, 1.0, 2.0, 2.0, 2.0, 1.0])

    def test_identity(self):
        """Test that k=1 returns the input unchanged."""
        series = TimeSeries(np.random.default_rng(1).normal(size=16), 5.0)
        self.assertIs(interpolate_periodic(series, 1), series)

    def test_samples_kept_exactly(self):
        """Test output[j*k] = s[j] at the full 1000x expansion."""
        series = TimeSeries(np.random.default_rng(2).normal(size=1024), 5e4)
        expanded = interpolate_periodic(series, 1000)
        self.assertEqual(len(expanded), 1024000)
        np.testing.assert_array_equal(expanded.values[::1000], series.values)
        self.assertEqual(expanded.frequency, series.frequency)

    def test_fail_zero_factor(self):
        """Test that k=0 raises a ValueError."""
        with self.assertRaises(ValueError):
            interpolate_periodic(TimeSeries(np.ones(4), 1.0), 0)


class TestSkew(unittest.TestCase):
    """Test apply_skew() and its group properties."""

    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.base_length, self.interp_factor = 8, 3
        self.h = TimeSeries(self.rng.normal(size=24), 1e3)

    def _offset(self, delta: int) -> SkewOffset:
        return SkewOffset(delta, self.interp_factor, self.base_length)

    def test_zero_skew(self):
        """Test that a zero skew leaves H unchanged."""
        self.assertEqual(apply_skew(self.h, self._offset(0)), self.h)

    def test_index_arithmetic(self):
        """Test output[t] = h[(t+delta) mod n] against brute force."""
        n = len(self.h)
        for delta in range(-n + 1, n):
            skewed = apply_skew(self.h, self._offset(delta))
            expected = [self.h.values[(t + delta) % n] for t in range(n)]
            np.testing.assert_array_equal(skewed.values, expected)

    def test_composition(self):
        """Test that composing skews adds offsets modulo the period."""
        n = len(self.h)
        for a in range(-n + 1, n):
            for b in range(-n + 1, n):
                twice = apply_skew(apply_skew(self.h, self._offset(a)),
                                   self._offset(b))
                wrapped = (a + b) % n
                once = apply_skew(self.h, self._offset(wrapped))
                self.assertEqual(twice, once)

    def test_full_period_identity(self):
        """Test that shifting by a full period in two steps is identity."""
        n = len(self.h)
        for a in range(1, n):
            twice = apply_skew(apply_skew(self.h, self._offset(a)),
                               self._offset(n - a))
            self.assertEqual(twice, self.h)

    def test_round_trip(self):
        """Test that skewing by delta then -delta restores H exactly."""
        for delta in (-23, -5, 1, 17):
            offset = self._offset(delta)
            restored = apply_skew(apply_skew(self.h, offset),
                                  offset.inverse())
            self.assertEqual(restored, self.h)

    def test_fail_length_mismatch(self):
        """Test that a series of the wrong length raises a ValueError."""
        with self.assertRaises(ValueError):
            apply_skew(self.h, SkewOffset(1, 1, 8))


class TestLoop(unittest.TestCase):
    """Test make_loop(), loop_energy_density() and core_loss_density()."""

    def test_make_loop_order(self):
        """Test that loop points follow the time order of the series."""
        b, h = _ellipse_series()
        loop = make_loop(b, h)
        self.assertEqual(len(loop), 1024)
        np.testing.assert_array_equal(loop.h, h.values)
        np.testing.assert_array_equal(loop.b, b.values)
        self.assertFalse(loop.is_degenerate)

    def test_constant_loop_is_degenerate(self):
        """Test that constant B and H give a flagged degenerate loop."""
        loop = make_loop(TimeSeries(np.full(16, 0.2), 1e3),
                         TimeSeries(np.full(16, -3.0), 1e3))
        self.assertTrue(loop.is_degenerate)
        self.assertEqual(loop_energy_density(loop), 0.0)
        self.assertEqual(loop_orientation(loop), LoopOrientation.DEGENERATE)

    def test_fail_length_mismatch(self):
        """Test that B and H of different lengths raise a ValueError."""
        with self.assertRaises(ValueError):
            make_loop(TimeSeries(np.ones(4), 1.0), TimeSeries(np.ones(5), 1.0))

    def test_parallelogram_corners(self):
        """Test that the parallelogram loop lies on its four hand-built
        edges and passes through all four corners.
        """
        delta_b, hc, slope = 0.2, 10.0, 200.0
        b, h = _parallelogram_series(delta_b, hc, slope, 40, 24)
        loop = make_loop(b, h)
        corners = [(hc - slope * 0.1, -0.1), (hc + slope * 0.1, 0.1),
                   (-hc + slope * 0.1, 0.1), (-hc - slope * 0.1, -0.1)]
        points = set(zip(np.round(loop.h, 12), np.round(loop.b, 12)))
        for corner_h, corner_b in corners:
            self.assertIn((round(corner_h, 12), round(corner_b, 12)), points)
        on_right = np.isclose(loop.h, hc + slope * loop.b, atol=1e-12)
        on_left = np.isclose(loop.h, -hc + slope * loop.b, atol=1e-12)
        self.assertTrue(np.all(on_right | on_left))

    def test_ellipse_energy(self):
        """Test the ellipse area oracle pi*B0*H0*sin(phi)."""
        b, h = _ellipse_series()
        energy = loop_energy_density(make_loop(b, h))
        self.assertLess(abs(energy - 7.8540) / 7.8540, 1e-4)
        self.assertLess(abs(energy - ELLIPSE_ENERGY) / ELLIPSE_ENERGY, 1e-4)
        self.assertEqual(loop_orientation(make_loop(b, h)),
                         LoopOrientation.COUNTER_CLOCKWISE)

    def test_reversed_loop_is_clockwise(self):
        """Test that reversing time flips the sign and the orientation."""
        b, h = _ellipse_series()
        loop = BhLoop(h.values[::-1], b.values[::-1])
        self.assertLess(loop_energy_density(loop), 0)
        self.assertEqual(loop_orientation(loop), LoopOrientation.CLOCKWISE)

    def test_zero_lag_energy(self):
        """Test that H = c*B encloses no area."""
        b, _ = _ellipse_series()
        for c in (2.0, 0.5, -4.0):
            loop = make_loop(b, TimeSeries(c * b.values, b.frequency))
            self.assertEqual(loop_energy_density(loop), 0.0)
        loop = make_loop(b, TimeSeries(3.7 * b.values, b.frequency))
        self.assertLess(abs(loop_energy_density(loop)),
                        1e-12 * 3.7 * B0 * B0)

    def test_parallelogram_energy(self):
        """Test the polygon oracle 2*Hc*dB for a parallelogram loop."""
        b, h = _parallelogram_series(0.2, 10.0, 200.0, 512, 512)
        energy = loop_energy_density(make_loop(b, h))
        self.assertLess(abs(energy - 4.0) / 4.0, 1e-12)

    def test_rotation_invariance(self):
        """Test that rotating both series leaves the energy unchanged."""
        b, h = _ellipse_series()
        reference = loop_energy_density(make_loop(b, h))
        for shift in random.Random(4).sample(range(1, 1024), 10):
            rotated = BhLoop(np.roll(h.values, shift), np.roll(b.values, shift))
            self.assertLess(
                abs(loop_energy_density(rotated) - reference) / reference,
                1e-12)

    def test_interpolation_consistency(self):
        """Test that interpolation keeps the area of a polygonal loop."""
        b, h = _parallelogram_series(0.3, 12.0, 150.0, 300, 724)
        raw_energy = loop_energy_density(make_loop(b, h))
        fine = make_loop(interpolate_periodic(b, 1000),
                         interpolate_periodic(h, 1000))
        self.assertLess(abs(loop_energy_density(fine) - raw_energy)
                        / raw_energy, 1e-6)

    def test_core_loss(self):
        """Test core loss density as frequency times loop energy."""
        b, h = _ellipse_series()
        loop = make_loop(b, h)
        energy = loop_energy_density(loop)
        self.assertEqual(core_loss_density(loop, 100e3), 100e3 * energy)
        self.assertLess(
            abs(core_loss_density(loop, 100e3) - 785.40e3) / 785.40e3, 1e-4)
        expected = 56330 * ELLIPSE_ENERGY
        self.assertLess(abs(core_loss_density(loop, 56330) - expected)
                        / expected, 1e-4)
        self.assertLess(
            abs(core_loss_density(loop, 56330) - 442.4e3) / 442.4e3, 1e-4)

    def test_core_loss_zero_area(self):
        """Test that a zero-area loop has zero loss at any frequency."""
        b, _ = _ellipse_series()
        loop = make_loop(b, TimeSeries(2.0 * b.values, b.frequency))
        for frequency in (1.0, 5e4, 4.5e5):
            self.assertEqual(core_loss_density(loop, frequency), 0.0)

    def test_fail_core_loss_frequency(self):
        """Test that a non-positive frequency raises a ValueError."""
        b, h = _ellipse_series()
        with self.assertRaises(ValueError):
            core_loss_density(make_loop(b, h), 0.0)


class TestLossVersusSkew(unittest.TestCase):
    """Test the linear and monotone loss response to skew on an ellipse."""

    def setUp(self):
        self.frequency = 100e3
        self.base_length, self.interp_factor, self.step = 1024, 1000, 1000
        b, h = _ellipse_series(self.base_length, self.frequency)
        self.b = interpolate_periodic(b, self.interp_factor)
        self.h = interpolate_periodic(h, self.interp_factor)
        self.grid = np.arange(-20, 21)
        self.losses = np.array([
            core_loss_density(make_loop(self.b, apply_skew(
                self.h, SkewOffset(int(m) * self.step, self.interp_factor,
                                   self.base_length))), self.frequency)
            for m in self.grid])

    def test_skew_law(self):
        """Test loss = f*pi*B0*H0*sin(phi + 2*pi*f*tau) on the grid."""
        polygon_factor = (self.base_length / (2 * np.pi)) * np.sin(
            2 * np.pi / self.base_length)
        tau = self.grid * self.step / (
            self.base_length * self.interp_factor * self.frequency)
        expected = self.frequency * np.pi * B0 * H0 * np.sin(
            PHI + 2 * np.pi * self.frequency * tau) * polygon_factor
        np.testing.assert_allclose(self.losses, expected, rtol=1e-9)

    def test_linear_fit(self):
        """Test R^2 >= 0.999 and the slope within 1% of the derivative."""
        slope, intercept = np.polyfit(self.grid, self.losses, 1)
        residual = self.losses - (slope * self.grid + intercept)
        r_sq = 1 - np.sum(residual ** 2) / np.sum(
            (self.losses - self.losses.mean()) ** 2)
        self.assertGreaterEqual(r_sq, 0.999)
        step_seconds = self.step / (
            self.base_length * self.interp_factor * self.frequency)
        analytic = self.frequency * np.pi * B0 * H0 * np.cos(PHI) \
            * 2 * np.pi * self.frequency * step_seconds
        self.assertLess(abs(slope - analytic) / analytic, 0.01)

    def test_positive_skew_increases_loss(self):
        """Test that loss rises monotonically from negative to positive
        skew, so positive skew increases and negative skew decreases it.
        """
        self.assertTrue(np.all(np.diff(self.losses) > 0))
        zero = self.losses[self.grid == 0][0]
        self.assertTrue(np.all(self.losses[self.grid > 0] > zero))
        self.assertTrue(np.all(self.losses[self.grid < 0] < zero))


if __name__ == '__main__':
    unittest.main()
