"""Tests for the micronet_utils script.

Anything labeled 'test_[name]' tests the functionality of an operation and
anything labeled 'test_fail_[name]' tests that invalid input raises the
appropriate error.
"""

import math
import os
import struct
import sys
import tempfile
import unittest

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal

sys.path.append(os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils')))

from dataset_utils import SkewGrid
from micronet_utils import (
    PARAM_NAMES,
    AdamState,
    ModelParams,
    NormalizationStats,
    adam_step,
    backward,
    conv2d_forward,
    flatten_length,
    forward,
    forward_batch,
    forward_sample,
    init,
    load,
    maxpool_backward,
    maxpool_forward,
    mse_loss,
    param_shapes,
    save
)
from raster_utils import LoopImage
from verification_utils import (
    ArchitectureMismatchError,
    ModelFormatError,
    NonFiniteError
)

STEP = 1e-4


def _leaky(x):
    return np.where(x > 0, x, 0.01 * x)


def _conv_stack(x, w, b):
    """Convolve a stack of inputs (P, C, H, W) with padding 1."""
    count, channels, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(padded, (3, 3), axis=(2, 3)).transpose(
        0, 2, 3, 1, 4, 5).reshape(count * height * width, channels * 9)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.reshape(count, height, width, -1).transpose(0, 3, 1, 2) \
        + b[None, :, None, None]


def _pool_stack(x):
    count, channels, height, width = x.shape
    windows = x.reshape(count, channels, height // 2, 2, width // 2, 2) \
        .transpose(0, 1, 2, 4, 3, 5).reshape(count, channels, height // 2,
                                             width // 2, 4)
    return windows.max(axis=-1), windows.argmax(axis=-1)


def _forward_from(weights, layer, z, scalars):
    """Finish a forward pass from the pre-activations of a layer.

    Layers 1-3 are the convolutions and layer 4 the hidden dense layer. The
    returned pattern holds every activation sign and pooling choice met on
    the way, so a change in it flags a crossed kink.
    """
    count = len(z)
    patterns = []
    pooled = None
    for conv in range(layer, 4):
        if conv > layer:
            z = _conv_stack(pooled, weights[f'conv{conv}_w'],
                            weights[f'conv{conv}_b'])
        patterns.append((z > 0).reshape(count, -1))
        pooled, argmax = _pool_stack(_leaky(z))
        patterns.append(argmax.reshape(count, -1))
    if layer < 4:
        flat = np.concatenate(
            [pooled.reshape(count, -1), np.broadcast_to(scalars, (count, 4))],
            axis=1)
        z = flat @ weights['fc1_w'].T + weights['fc1_b']
    patterns.append(z > 0)
    outputs = _leaky(z) @ weights['fc2_w'][0] + weights['fc2_b'][0]
    return outputs, np.concatenate(
        [pattern.astype(np.int64) for pattern in patterns], axis=1)


def _base_state(weights, image, scalars):
    inputs, pre_activations = [], []
    activation = image[None, None]
    for conv in range(1, 4):
        inputs.append(activation[0])
        z = _conv_stack(activation, weights[f'conv{conv}_w'],
                        weights[f'conv{conv}_b'])
        pre_activations.append(z[0])
        activation, _ = _pool_stack(_leaky(z))
    flat = np.concatenate([activation.ravel(), scalars])
    hidden_z = weights['fc1_w'] @ flat + weights['fc1_b']
    return {'inputs': inputs, 'pre': pre_activations, 'flat': flat,
            'hidden_z': hidden_z,
            'output': _forward_from(weights, 4, hidden_z[None], scalars)[0][0]}


def _sample_deltas(weights, image, scalars):
    """Output changes for +-STEP on every parameter of one sample.

    Returns:
        plus, minus: Output change per parameter, keyed by name.
        crossed: True where a perturbation crossed a kink.
        output: Unperturbed output.
    """
    state = _base_state(weights, image, scalars)
    plus = {name: np.zeros_like(weights[name]) for name in PARAM_NAMES}
    minus = {name: np.zeros_like(weights[name]) for name in PARAM_NAMES}
    crossed = {name: np.zeros(weights[name].shape, dtype=bool)
               for name in PARAM_NAMES}

    for conv in range(1, 4):
        layer_input = state['inputs'][conv - 1]
        z_base = state['pre'][conv - 1]
        channels, height, width = layer_input.shape
        base_output, base_pattern = _forward_from(weights, conv, z_base[None],
                                                  scalars)
        directions = sliding_window_view(
            np.pad(layer_input, ((0, 0), (1, 1), (1, 1))), (3, 3),
            axis=(1, 2)).transpose(0, 3, 4, 1, 2).reshape(
                channels * 9, height, width)
        directions = np.concatenate([directions,
                                     np.ones((1, height, width))])
        count = len(directions)
        for out_channel in range(z_base.shape[0]):
            stack = np.repeat(z_base[None], 2 * count, axis=0)
            stack[:count, out_channel] += STEP * directions
            stack[count:, out_channel] -= STEP * directions
            outputs, patterns = _forward_from(weights, conv, stack, scalars)
            delta = outputs - base_output[0]
            changed = np.any(patterns != base_pattern, axis=1)
            changed = changed[:count] | changed[count:]
            plus[f'conv{conv}_w'][out_channel] = \
                delta[:count - 1].reshape(channels, 3, 3)
            plus[f'conv{conv}_b'][out_channel] = delta[count - 1]
            minus[f'conv{conv}_w'][out_channel] = \
                delta[count:-1].reshape(channels, 3, 3)
            minus[f'conv{conv}_b'][out_channel] = delta[-1]
            crossed[f'conv{conv}_w'][out_channel] = \
                changed[:count - 1].reshape(channels, 3, 3)
            crossed[f'conv{conv}_b'][out_channel] = changed[count - 1]

    # Only hidden unit j moves when fc1 row j is perturbed.
    hidden_z, flat = state['hidden_z'], state['flat']
    out_weights = weights['fc2_w'][0]
    for sign, deltas in ((1.0, plus), (-1.0, minus)):
        moved = hidden_z[:, None] + sign * STEP * flat[None, :]
        deltas['fc1_w'] = out_weights[:, None] \
            * (_leaky(moved) - _leaky(hidden_z)[:, None])
        crossed['fc1_w'] |= (moved > 0) != (hidden_z > 0)[:, None]
        moved_bias = hidden_z + sign * STEP
        deltas['fc1_b'] = out_weights * (_leaky(moved_bias) - _leaky(hidden_z))
        crossed['fc1_b'] |= (moved_bias > 0) != (hidden_z > 0)
        deltas['fc2_w'] = sign * STEP * _leaky(hidden_z)[None, :]
        deltas['fc2_b'] = np.array([sign * STEP])
    return plus, minus, crossed, state['output']


def _finite_difference_check(seed, side):
    """Return analytic gradients, central differences and excluded masks."""
    rng = np.random.default_rng(seed)
    weights = init(seed, side)
    for name in PARAM_NAMES:
        if name.endswith('_b'):
            weights[name] = rng.normal(size=weights[name].shape)
    images = rng.normal(size=(2, side, side))
    scalars = rng.normal(size=(2, 4))
    residuals = rng.choice([-1.0, 1.0], size=2) * 1e-3 * (1 + rng.random(2))

    samples = [_sample_deltas(weights, images[n], scalars[n])
               for n in range(2)]
    oracle_outputs = np.array([sample[3] for sample in samples])
    predictions = forward_batch(weights, images, scalars, thread_cap=0)
    np.testing.assert_allclose(predictions, oracle_outputs, rtol=1e-10,
                               atol=1e-12)
    _, analytic, _ = backward(weights, images, scalars,
                              predictions - residuals, thread_cap=0)

    finite_difference, excluded = {}, {}
    for name in PARAM_NAMES:
        loss_plus = np.mean([(residuals[n] + samples[n][0][name]) ** 2
                             for n in range(2)], axis=0)
        loss_minus = np.mean([(residuals[n] + samples[n][1][name]) ** 2
                              for n in range(2)], axis=0)
        finite_difference[name] = (loss_plus - loss_minus) / (2 * STEP)
        excluded[name] = samples[0][2][name] | samples[1][2][name]
    return analytic, finite_difference, excluded


def _small_model(side=16, seed=0):
    return ModelParams(
        side, init(seed, side),
        NormalizationStats([0.0, 1.0, -0.1, 0.1], [10.0, 10.0, 0.05, 0.05],
                           20.0, 10),
        SkewGrid(20, 1, 2, 16), 0.2, 0.04, ['M:1', 'M:0'])


class TestLayers(unittest.TestCase):

    def test_dimensions(self):
        """Flattened features and dense input width follow S."""
        self.assertEqual(flatten_length(256), 40960)
        self.assertEqual(param_shapes(256)['fc1_w'], (512, 40964))
        self.assertEqual(flatten_length(64), 2560)
        self.assertEqual(param_shapes(64)['fc1_w'], (512, 2564))
        self.assertEqual(param_shapes(64)['conv3_w'], (40, 20, 3, 3))

    def test_conv2d_forward(self):
        """Convolution equals per-channel zero-padded cross-correlation."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 6, 6))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        z, _ = conv2d_forward(x, w, b)
        for out_channel in range(3):
            expected = sum(signal.correlate2d(x[c], w[out_channel, c],
                                              mode='same')
                           for c in range(2)) + b[out_channel]
            np.testing.assert_allclose(z[out_channel], expected, atol=1e-12)

    def test_maxpool_ties(self):
        """Ties pick the lowest index and receive the whole gradient."""
        pooled, argmax = maxpool_forward(np.ones((1, 2, 2)))
        self.assertEqual(pooled[0, 0, 0], 1.0)
        self.assertEqual(argmax[0, 0, 0], 0)
        routed = maxpool_backward(np.full((1, 1, 1), 5.0), argmax)
        np.testing.assert_array_equal(routed[0], [[5.0, 0.0], [0.0, 0.0]])

    def test_zero_image_returns_output_bias(self):
        """Zero weights except the output bias c yield exactly c."""
        weights = {name: np.zeros(shape)
                   for name, shape in param_shapes(64).items()}
        weights['fc2_b'] = np.array([0.37])
        output, _ = forward_sample(weights, np.zeros((64, 64)), np.zeros(4))
        self.assertEqual(output, 0.37)

    def test_fail_forward_sample(self):
        """Non-finite activations and wrong sides are rejected."""
        weights = init(0, 16)
        weights['conv1_b'] = np.full(10, np.nan)
        with self.assertRaisesRegex(NonFiniteError, 'layer 1'):
            forward_sample(weights, np.zeros((16, 16)), np.zeros(4))
        with self.assertRaises(ArchitectureMismatchError):
            forward_sample(init(0, 16), np.zeros((32, 32)), np.zeros(4))


class TestGradients(unittest.TestCase):

    def _check(self, side):
        total, skipped = 0, 0
        for seed in range(5):
            analytic, finite_difference, excluded = \
                _finite_difference_check(seed, side)
            for name in PARAM_NAMES:
                keep = ~excluded[name]
                if name.endswith('_w'):
                    self.assertGreaterEqual(keep.mean(), 0.2,
                                            f"{name} seed {seed}")
                grad = analytic[name][keep]
                estimate = finite_difference[name][keep]
                large = np.abs(grad) > 1e-8
                relative = np.abs(estimate[large] - grad[large]) \
                    / np.abs(grad[large])
                self.assertLess(relative.max(initial=0.0), 1e-5,
                                f"{name} seed {seed}")
                self.assertLess(
                    np.abs(estimate[~large] - grad[~large]).max(initial=0.0),
                    1e-8, f"{name} seed {seed}")
                total += keep.size
                skipped += int(excluded[name].sum())
        self.assertLess(skipped / total, 0.01)

    def test_gradient_matches_finite_differences_side_16(self):
        """Analytic gradients agree with central differences at S=16."""
        self._check(16)

    def test_gradient_matches_finite_differences_side_32(self):
        """Analytic gradients agree with central differences at S=32."""
        self._check(32)

    def test_duplicated_batch(self):
        """Duplicating every sample leaves loss and gradients unchanged."""
        rng = np.random.default_rng(1)
        weights = init(1, 16)
        images = rng.random((2, 16, 16))
        scalars = rng.normal(size=(2, 4))
        targets = rng.uniform(-1, 1, 2)
        loss, grads, _ = backward(weights, images, scalars, targets, 0)
        loss_twice, grads_twice, _ = backward(
            weights, np.concatenate([images, images]),
            np.concatenate([scalars, scalars]),
            np.concatenate([targets, targets]), 0)
        self.assertAlmostEqual(loss, loss_twice, places=12)
        for name in PARAM_NAMES:
            np.testing.assert_allclose(grads_twice[name], grads[name],
                                       rtol=1e-10, atol=1e-14)

    def test_zero_residual(self):
        """Targets equal to the predictions give all-zero gradients."""
        rng = np.random.default_rng(2)
        weights = init(2, 16)
        images = rng.random((3, 16, 16))
        scalars = rng.normal(size=(3, 4))
        predictions = forward_batch(weights, images, scalars, 0)
        loss, grads, _ = backward(weights, images, scalars, predictions, 0)
        self.assertEqual(loss, 0.0)
        for name in PARAM_NAMES:
            self.assertFalse(np.any(grads[name]), name)

    def test_thread_count_does_not_change_results(self):
        """Outputs and gradients are bit-identical for any thread cap."""
        rng = np.random.default_rng(4)
        weights = init(4, 16)
        images = (rng.random((5, 16, 16)) > 0.8).astype(np.uint8) * 255
        scalars = rng.normal(size=(5, 4))
        targets = rng.uniform(-1, 1, 5)
        loss, grads, predictions = backward(weights, images, scalars,
                                            targets, 0)
        for thread_cap in (1, 3):
            threaded_loss, threaded_grads, threaded_predictions = backward(
                weights, images, scalars, targets, thread_cap)
            self.assertEqual(loss, threaded_loss)
            np.testing.assert_array_equal(predictions, threaded_predictions)
            for name in PARAM_NAMES:
                np.testing.assert_array_equal(grads[name],
                                              threaded_grads[name])
            np.testing.assert_array_equal(
                forward_batch(weights, images, scalars, thread_cap),
                predictions)

    def test_scalar_sensitivity(self):
        """Changing any single scalar changes the output."""
        rng = np.random.default_rng(5)
        weights = init(5, 16)
        image = rng.random((16, 16))
        scalars = rng.normal(size=4)
        output, _ = forward_sample(weights, image, scalars)
        for index in range(4):
            moved = scalars.copy()
            moved[index] += 0.5
            self.assertNotEqual(forward_sample(weights, image, moved)[0],
                                output, index)

    def test_memorization(self):
        """200 Adam steps cut the loss on 10 fixed samples 100-fold."""
        rng = np.random.default_rng(6)
        weights = init(6, 16)
        images = rng.random((10, 16, 16))
        scalars = rng.normal(size=(10, 4))
        targets = rng.uniform(-1, 1, 10)
        state = AdamState.zeros_like(weights)
        initial_loss, grads, _ = backward(weights, images, scalars, targets,
                                          0)
        for _ in range(200):
            weights, state = adam_step(weights, grads, state, 1e-3)
            loss, grads, _ = backward(weights, images, scalars, targets, 0)
        self.assertLessEqual(loss, initial_loss / 100)


class TestAdam(unittest.TestCase):

    def test_zero_gradient(self):
        """Zero gradients leave the parameters bit-identical."""
        weights = {'w': np.array([0.5, -2.0])}
        new_weights, state = adam_step(weights, {'w': np.zeros(2)},
                                       AdamState.zeros_like(weights), 0.01)
        np.testing.assert_array_equal(new_weights['w'], weights['w'])
        self.assertFalse(np.any(state.first_moment['w']))
        self.assertFalse(np.any(state.second_moment['w']))
        self.assertEqual(state.step, 1)

    def test_unit_gradient(self):
        """A unit gradient on a fresh state moves the parameter by lr."""
        weights = {'w': np.array([0.5])}
        new_weights, _ = adam_step(weights, {'w': np.array([1.0])},
                                   AdamState.zeros_like(weights), 0.01)
        self.assertAlmostEqual(new_weights['w'][0], 0.5 - 0.01 / (1 + 1e-8),
                               places=15)

    def test_history_dependence(self):
        """The update depends on earlier gradients, not just the current."""
        weights = {'w': np.array([0.0])}
        fresh = AdamState.zeros_like(weights)
        after_first, state = adam_step(weights, {'w': np.array([1.0])}, fresh,
                                       0.01)
        second, _ = adam_step(after_first, {'w': np.array([-0.5])}, state,
                              0.01)
        direct, _ = adam_step(after_first, {'w': np.array([-0.5])}, fresh,
                              0.01)
        self.assertNotAlmostEqual(second['w'][0], direct['w'][0], places=6)
        self.assertEqual(weights['w'][0], 0.0)

    def test_fail_adam_step(self):
        """Non-finite gradients are rejected."""
        weights = {'w': np.array([0.5])}
        with self.assertRaises(NonFiniteError):
            adam_step(weights, {'w': np.array([np.inf])},
                      AdamState.zeros_like(weights), 0.01)


class TestInitAndLoss(unittest.TestCase):

    def test_init(self):
        """Initialization is seeded, bounded and has zero biases."""
        first, again, other = init(7, 16), init(7, 16), init(8, 16)
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(first[name], again[name])
        self.assertFalse(np.array_equal(first['conv1_w'], other['conv1_w']))
        self.assertLessEqual(np.abs(first['conv1_w']).max(),
                             np.sqrt(6 / 9))
        self.assertLessEqual(np.abs(first['fc1_w']).max(),
                             np.sqrt(6 / (flatten_length(16) + 4)))
        self.assertFalse(np.any(first['fc1_b']))

    def test_mse_loss(self):
        """Loss is the mean squared error."""
        self.assertEqual(mse_loss(np.array([1.0, 2.0]), np.zeros(2)), 2.5)
        self.assertEqual(mse_loss(np.array([0.25]), np.array([0.25])), 0.0)
        self.assertEqual(mse_loss(np.array([1.0, 1.0]), np.array([0.0, 2.0])),
                         1.0)
        rng = np.random.default_rng(11)
        predictions, targets = rng.normal(size=50), rng.normal(size=50)
        expected = math.fsum(
            (p - t) ** 2 for p, t in zip(predictions, targets)) / 50
        self.assertAlmostEqual(mse_loss(predictions, targets), expected,
                               delta=1e-12 * expected)

    def test_fail_mse_loss(self):
        """Empty and mismatched batches are rejected."""
        with self.assertRaises(ValueError):
            mse_loss(np.array([]), np.array([]))
        with self.assertRaises(ValueError):
            mse_loss(np.zeros(2), np.zeros(3))


class TestNormalization(unittest.TestCase):

    def test_round_trip(self):
        """Normalizing then denormalizing restores the input."""
        rng = np.random.default_rng(9)
        scalars = rng.normal(size=(20, 4)) * [50, 50, 0.1, 0.1]
        stats = NormalizationStats.from_scalars(scalars, 20.0)
        np.testing.assert_allclose(
            stats.denormalize_scalars(stats.normalize_scalars(scalars)),
            scalars, rtol=1e-12, atol=1e-15)
        targets = np.arange(-20.0, 21.0)
        np.testing.assert_allclose(
            stats.denormalize_targets(stats.normalize_targets(targets)),
            targets, rtol=1e-12)
        self.assertEqual(stats.normalize_targets(np.array([20.0]))[0], 1.0)

    def test_constant_scalar(self):
        """A constant scalar is stored with deviation 1, never 0."""
        scalars = np.column_stack([np.arange(5.0), np.full(5, 2.0),
                                   np.arange(5.0), np.arange(5.0)])
        stats = NormalizationStats.from_scalars(scalars, 1.0)
        self.assertEqual(stats.scalar_scale[1], 1.0)
        self.assertEqual(stats.scalar_std[1], 1.0)
        np.testing.assert_array_equal(
            stats.normalize_scalars(scalars)[:, 1], np.zeros(5))

    def test_union(self):
        """Pooled statistics equal those of the combined set."""
        rng = np.random.default_rng(10)
        first, second = rng.normal(size=(7, 4)), rng.normal(3, 2, (12, 4))
        pooled = NormalizationStats.from_scalars(first, 5.0).union(
            NormalizationStats.from_scalars(second, 5.0))
        combined = NormalizationStats.from_scalars(
            np.concatenate([first, second]), 5.0)
        np.testing.assert_allclose(pooled.scalar_mean, combined.scalar_mean,
                                   rtol=1e-12)
        np.testing.assert_allclose(pooled.scalar_std, combined.scalar_std,
                                   rtol=1e-12)
        self.assertEqual(pooled.count, 19)

    def test_fail_normalization(self):
        """Bad shapes and scales are rejected."""
        with self.assertRaises(ValueError):
            NormalizationStats([0.0] * 3, [1.0] * 3, 1.0, 1)
        with self.assertRaises(ValueError):
            NormalizationStats([0.0] * 4, [1.0] * 4, 0.0, 1)
        with self.assertRaises(NonFiniteError):
            NormalizationStats([np.nan] * 4, [1.0] * 4, 1.0, 1)
        with self.assertRaises(ValueError):
            NormalizationStats([0.0] * 4, [1.0, 0.0, 1.0, 1.0], 1.0, 1)


class TestModelFile(unittest.TestCase):

    def test_forward_model(self):
        """forward() matches forward_sample on normalized inputs."""
        model = _small_model()
        pixels = np.zeros((16, 16), dtype=np.uint8)
        pixels[3:12, 5] = 255
        image = LoopImage(pixels, [-40.0, 40.0, -0.1, 0.1])
        expected, _ = forward_sample(
            model.weights, pixels / 255.0,
            model.normalization.normalize_scalars(image.scalars))
        self.assertEqual(forward(model, image), expected)

    def test_save_load(self):
        """A saved model loads bit-identically and re-saves identically."""
        model = _small_model()
        with tempfile.TemporaryDirectory() as tmpdir:
            filepath = os.path.join(tmpdir, 'model.bhd')
            save(model, filepath)
            loaded = load(filepath, expected_side=16)
            self.assertEqual(loaded, model)
            self.assertEqual(loaded.training_origins, ['M:0', 'M:1'])
            second_path = os.path.join(tmpdir, 'again.bhd')
            save(loaded, second_path)
            with open(filepath, 'rb') as first, open(second_path, 'rb') as again:
                self.assertEqual(first.read(), again.read())

    def test_fail_load(self):
        """Corrupt, truncated and mismatched files are rejected."""
        model = _small_model()
        with tempfile.TemporaryDirectory() as tmpdir:
            filepath = os.path.join(tmpdir, 'model.bhd')
            save(model, filepath)
            with open(filepath, 'rb') as file:
                data = file.read()

            def write(name, content):
                path = os.path.join(tmpdir, name)
                with open(path, 'wb') as file:
                    file.write(content)
                return path

            zero_scale = data.replace(b'0.05, 0.05]', b'0.05, 0.00]')
            self.assertNotEqual(zero_scale, data)
            cases = {
                'magic.bhd': b'X' + data[1:],
                'version.bhd': data[:8] + struct.pack('<I', 2) + data[12:],
                'truncated.bhd': data[:-8],
                'header.bhd': data[:40],
                'trailing.bhd': data + b'\x00' * 8,
                'zero_scale.bhd': zero_scale,
                'nan_weight.bhd': data[:-8] + struct.pack('<d', math.nan),
            }
            for name, content in cases.items():
                with self.subTest(name=name):
                    with self.assertRaises(ModelFormatError):
                        load(write(name, content))
            with self.assertRaisesRegex(ArchitectureMismatchError,
                                        'side 16.*side 32'):
                load(filepath, expected_side=32)
            with self.assertRaises(ValueError):
                load(os.path.join(tmpdir, 'model.pkl'))


if __name__ == '__main__':
    unittest.main()
