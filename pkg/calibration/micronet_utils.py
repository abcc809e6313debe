"""Convolutional regression network for skew prediction, written against
numpy with hand-derived gradients.

Topology: three blocks of [3x3 convolution, stride 1, padding 1 ->
LeakyReLU -> 2x2 max pooling, stride 2] with 10, 20 and 40 filters, then
flatten, concatenation of four normalized scalars, a dense layer of 512
units with LeakyReLU and a dense output unit.

Everything is computed in double precision. Batches are processed one
sample at a time, optionally on worker threads, and reduced in sample order
so results do not depend on the thread count.

Global variables:
    PARAM_NAMES: Parameter names in storage order.
    CONV_WIDTHS: Filters of the three convolution blocks.
    HIDDEN_UNITS: Width of the dense hidden layer.
    NEGATIVE_SLOPE: LeakyReLU slope for negative inputs.
    ARCHITECTURE_VERSION: Tag stored in model files.

Classes:
    NormalizationStats: Scalar z-scores and target scale.
    ModelParams: Weights plus everything needed to use them.
    AdamState: Adam moment accumulators and step counter.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import os
import struct
import sys
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import deskew_attribute_utils
import deskew_folder_utils
import metadata_settings
from dataset_utils import SkewGrid
from raster_utils import SCALAR_COUNT, LoopImage, check_side
from verification_utils import (
    ArchitectureMismatchError,
    ModelFormatError,
    NonFiniteError,
    verify_attributes,
    verify_filepath,
    verify_finite
)

logger = logging.getLogger(__name__)

PARAM_NAMES = ('conv1_w', 'conv1_b', 'conv2_w', 'conv2_b', 'conv3_w',
               'conv3_b', 'fc1_w', 'fc1_b', 'fc2_w', 'fc2_b')
CONV_WIDTHS = (10, 20, 40)
HIDDEN_UNITS = 512
KERNEL = 3
NEGATIVE_SLOPE = 0.01
ARCHITECTURE_VERSION = 'micronet-conv10-20-40-fc512-v1'

MAGIC = b'BHDSKEW\x00'
FORMAT_VERSION = 1
PIXEL_SCALE = 255.0

Weights = Dict[str, np.ndarray]


def flatten_length(side: int) -> int:
    """Return the length of the flattened feature map for side S."""
    check_side(side)
    return CONV_WIDTHS[-1] * (side // 8) ** 2


def param_shapes(side: int) -> Dict[str, Tuple[int, ...]]:
    """Return the shape of every parameter for input side S."""
    shapes = {}
    in_channels = 1
    for layer, width in enumerate(CONV_WIDTHS, start=1):
        shapes[f'conv{layer}_w'] = (width, in_channels, KERNEL, KERNEL)
        shapes[f'conv{layer}_b'] = (width,)
        in_channels = width
    shapes['fc1_w'] = (HIDDEN_UNITS, flatten_length(side) + SCALAR_COUNT)
    shapes['fc1_b'] = (HIDDEN_UNITS,)
    shapes['fc2_w'] = (1, HIDDEN_UNITS)
    shapes['fc2_b'] = (1,)
    return shapes


class NormalizationStats:
    """Normalization of the scalar inputs and of the regression target.

    Scalars are z-scored with training-set statistics. Targets in
    interpolated samples are divided by target_scale, the half-range of the
    skew grid.

    Attributes:
        scalar_mean: Mean of each of the four scalars.
        scalar_std: Population standard deviation of each scalar, 1 for a
            scalar that was constant over the training set. Always > 0.
        target_scale: Divisor of the regression target.
        count: Number of samples the statistics were computed from.
    """
    scalar_mean: np.ndarray
    scalar_std: np.ndarray
    target_scale: float
    count: int

    def __init__(self, scalar_mean: Sequence[float],
                 scalar_std: Sequence[float], target_scale: float,
                 count: int):
        self.scalar_mean = np.asarray(scalar_mean, dtype=np.float64)
        self.scalar_std = np.asarray(scalar_std, dtype=np.float64)
        if self.scalar_mean.shape != (SCALAR_COUNT,) \
                or self.scalar_std.shape != (SCALAR_COUNT,):
            raise ValueError("Normalization needs one mean and one standard "
                             f"deviation per scalar ({SCALAR_COUNT}).")
        verify_finite(self.scalar_mean, "normalization means")
        verify_finite(self.scalar_std, "normalization deviations")
        if not np.all(self.scalar_std > 0):
            raise ValueError(
                "Normalization deviations must be positive, got "
                f"{self.scalar_std.tolist()}.")
        if not (math.isfinite(target_scale) and target_scale > 0):
            raise ValueError(
                f"Target scale must be positive, got {target_scale}.")
        self.target_scale = float(target_scale)
        self.count = int(count)

    @classmethod
    def from_scalars(cls, scalars: np.ndarray, target_scale: float
                     ) -> NormalizationStats:
        """Compute statistics from an (N, 4) array of raw scalars.

        A constant scalar gets deviation 1.
        """
        scalars = np.asarray(scalars, dtype=np.float64)
        if scalars.ndim != 2 or scalars.shape[1] != SCALAR_COUNT \
                or scalars.shape[0] == 0:
            raise ValueError(f"Expected an (N, {SCALAR_COUNT}) array of "
                             f"scalars, got {scalars.shape}.")
        std = scalars.std(axis=0)
        return cls(scalars.mean(axis=0), np.where(std > 0, std, 1.0),
                   target_scale, scalars.shape[0])

    def __eq__(self, other) -> bool:
        return isinstance(other, NormalizationStats) \
            and np.array_equal(self.scalar_mean, other.scalar_mean) \
            and np.array_equal(self.scalar_std, other.scalar_std) \
            and self.target_scale == other.target_scale \
            and self.count == other.count

    @property
    def scalar_scale(self) -> np.ndarray:
        """Divisors of the scalars."""
        return self.scalar_std

    def union(self, other: NormalizationStats) -> NormalizationStats:
        """Return pooled statistics of two sample sets."""
        if self.target_scale != other.target_scale:
            raise ValueError(
                f"Cannot pool statistics with target scales "
                f"{self.target_scale} and {other.target_scale}.")
        total = self.count + other.count
        mean = (self.count * self.scalar_mean
                + other.count * other.scalar_mean) / total
        variance = (self.count * (self.scalar_std ** 2
                                  + (self.scalar_mean - mean) ** 2)
                    + other.count * (other.scalar_std ** 2
                                     + (other.scalar_mean - mean) ** 2)) \
            / total
        return NormalizationStats(mean, np.sqrt(variance), self.target_scale,
                                  total)

    def normalize_scalars(self, scalars: np.ndarray) -> np.ndarray:
        return (np.asarray(scalars, dtype=np.float64) - self.scalar_mean) \
            / self.scalar_scale

    def denormalize_scalars(self, normalized: np.ndarray) -> np.ndarray:
        return np.asarray(normalized) * self.scalar_scale + self.scalar_mean

    def normalize_targets(self, targets: np.ndarray) -> np.ndarray:
        return np.asarray(targets, dtype=np.float64) / self.target_scale

    def denormalize_targets(self, normalized: np.ndarray) -> np.ndarray:
        return np.asarray(normalized) * self.target_scale

    def to_dict(self) -> dict:
        """Return the statistics as JSON-compatible values."""
        return {'scalar_mean': self.scalar_mean.tolist(),
                'scalar_std': self.scalar_std.tolist(),
                'target_scale': self.target_scale, 'count': self.count}


class ModelParams:
    """Trained network and the settings its inputs were prepared with.

    Attributes:
        side: Input image side S.
        weights: Parameter arrays keyed by PARAM_NAMES.
        normalization: Scalar and target normalization.
        skew_grid: Skew grid of the training data; fixes the interpolation
            factor and base length of accepted records.
        zoom_width: Zoom window side used when rendering.
        margin: Normalization margin used when rendering.
        training_origins: Origin identifiers of every training sample.
        version: Architecture version tag.
    """
    side: int
    weights: Weights
    normalization: NormalizationStats
    skew_grid: SkewGrid
    zoom_width: float
    margin: float
    training_origins: List[str]
    version: str

    def __init__(self, side: int, weights: Weights,
                 normalization: NormalizationStats, skew_grid: SkewGrid,
                 zoom_width: float = metadata_settings.get_zoom_width(),
                 margin: float = metadata_settings.get_normalization_margin(),
                 training_origins: Iterable[str] = (),
                 version: str = ARCHITECTURE_VERSION):
        check_side(side)
        shapes = param_shapes(side)
        if set(weights) != set(PARAM_NAMES):
            raise ValueError(f"Weights must hold exactly {PARAM_NAMES}.")
        for name in PARAM_NAMES:
            if weights[name].shape != shapes[name]:
                raise ArchitectureMismatchError(
                    f"Parameter {name} has shape {weights[name].shape}, "
                    f"expected {shapes[name]} for side {side}.")
        self.side = int(side)
        self.weights = {name: np.asarray(weights[name], dtype=np.float64)
                        for name in PARAM_NAMES}
        self.normalization = normalization
        self.skew_grid = skew_grid
        self.zoom_width = float(zoom_width)
        self.margin = float(margin)
        self.training_origins = sorted(set(training_origins))
        self.version = version

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelParams) and self.side == other.side \
            and all(np.array_equal(self.weights[name], other.weights[name])
                    for name in PARAM_NAMES) \
            and self.normalization == other.normalization \
            and self.skew_grid == other.skew_grid \
            and self.zoom_width == other.zoom_width \
            and self.margin == other.margin \
            and self.training_origins == other.training_origins \
            and self.version == other.version

    def with_weights(self, weights: Weights) -> ModelParams:
        """Return a copy of this model with replaced weights."""
        return ModelParams(self.side, weights, self.normalization,
                           self.skew_grid, self.zoom_width, self.margin,
                           self.training_origins, self.version)


class AdamState:
    """Adam optimizer state.

    Attributes:
        first_moment: Running mean of gradients per parameter.
        second_moment: Running mean of squared gradients per parameter.
        step: Number of updates applied so far.
    """

    def __init__(self, first_moment: Weights, second_moment: Weights,
                 step: int = 0):
        if step < 0:
            raise ValueError(f"Adam step must be non-negative, got {step}.")
        self.first_moment = first_moment
        self.second_moment = second_moment
        self.step = int(step)

    @classmethod
    def zeros_like(cls, weights: Weights) -> AdamState:
        """Return a fresh state with zero moments."""
        return cls({name: np.zeros_like(value)
                    for name, value in weights.items()},
                   {name: np.zeros_like(value)
                    for name, value in weights.items()}, 0)


def init(seed: int, side: int = metadata_settings.get_image_side()
         ) -> Weights:
    """Return freshly initialized weights.

    Weights are drawn uniformly from +-sqrt(6 / fan_in); biases are zero.
    The draw is deterministic per seed.

    Args:
        seed: Seed of the draw.
        side: Input image side S.
    Returns:
        weights: Parameter arrays keyed by PARAM_NAMES.
    """
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(side).items():
        if name.endswith('_b'):
            weights[name] = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / int(np.prod(shape[1:])))
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return weights


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, NEGATIVE_SLOPE * x)


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of LeakyReLU; the value at exactly 0 is the slope."""
    return np.where(x > 0, 1.0, NEGATIVE_SLOPE)


def _im2col(x: np.ndarray) -> np.ndarray:
    """Return (H*W, C*9) patches of a zero-padded (C, H, W) input."""
    channels, height, width = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (KERNEL, KERNEL), axis=(1, 2))
    return windows.transpose(1, 2, 0, 3, 4).reshape(
        height * width, channels * KERNEL * KERNEL)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """3x3 cross-correlation, stride 1, zero padding 1.

    Args:
        x: Input of shape (C, H, W).
        w: Filters of shape (O, C, 3, 3).
        b: Biases of shape (O,).
    Returns:
        z: Output of shape (O, H, W).
        cols: Patch matrix reused by the backward pass.
    """
    _, height, width = x.shape
    cols = _im2col(x)
    z = (cols @ w.reshape(w.shape[0], -1).T).T.reshape(
        w.shape[0], height, width) + b[:, None, None]
    return z, cols


def conv2d_backward(dz: np.ndarray, cols: np.ndarray, w: np.ndarray,
                    input_shape: Tuple[int, int, int]
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d_forward.

    Returns:
        dx: Gradient with respect to the input, shape (C, H, W).
        dw: Gradient with respect to the filters.
        db: Gradient with respect to the biases.
    """
    channels, height, width = input_shape
    dz_flat = dz.reshape(dz.shape[0], -1)
    dw = (dz_flat @ cols).reshape(w.shape)
    db = dz_flat.sum(axis=1)
    dcols = (w.reshape(w.shape[0], -1).T @ dz_flat).reshape(
        channels, KERNEL, KERNEL, height, width)
    dpadded = np.zeros((channels, height + 2, width + 2))
    for i in range(KERNEL):
        for j in range(KERNEL):
            dpadded[:, i:i + height, j:j + width] += dcols[:, i, j]
    return dpadded[:, 1:-1, 1:-1], dw, db


def maxpool_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2 over a (C, H, W) input.

    Returns:
        pooled: Output of shape (C, H/2, W/2).
        argmax: Winning position inside each window, ties to the lowest
            row-major index.
    """
    channels, height, width = x.shape
    windows = x.reshape(channels, height // 2, 2, width // 2, 2).transpose(
        0, 1, 3, 2, 4).reshape(channels, height // 2, width // 2, 4)
    argmax = np.argmax(windows, axis=-1)
    pooled = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return pooled, argmax


def maxpool_backward(dpooled: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Route pooled gradients back to the winning positions."""
    channels, half_height, half_width = dpooled.shape
    dwindows = np.zeros((channels, half_height, half_width, 4))
    np.put_along_axis(dwindows, argmax[..., None], dpooled[..., None],
                      axis=-1)
    return dwindows.reshape(channels, half_height, half_width, 2, 2) \
        .transpose(0, 1, 3, 2, 4).reshape(channels, 2 * half_height,
                                          2 * half_width)


def _check_finite(values: np.ndarray, layer: int):
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"Non-finite activation in layer {layer}.")


def forward_sample(weights: Weights, image: np.ndarray, scalars: np.ndarray
                   ) -> Tuple[float, dict]:
    """Run the network on one sample.

    Args:
        weights: Parameter arrays.
        image: (S, S) input, already scaled to network units.
        scalars: Four normalized scalars.
    Returns:
        output: Predicted normalized skew.
        cache: Intermediate values for backward_sample.
    """
    features = weights['fc1_w'].shape[1] - SCALAR_COUNT
    if image.ndim != 2 or image.shape[0] != image.shape[1] \
            or image.shape[0] % 8 \
            or CONV_WIDTHS[-1] * (image.shape[0] // 8) ** 2 != features:
        raise ArchitectureMismatchError(
            f"Input of shape {image.shape} does not fit weights expecting "
            f"{features} flattened features.")
    activation = image[None, :, :].astype(np.float64)
    conv_cache = []
    for layer in range(1, len(CONV_WIDTHS) + 1):
        z, cols = conv2d_forward(activation, weights[f'conv{layer}_w'],
                                 weights[f'conv{layer}_b'])
        _check_finite(z, layer)
        pooled, argmax = maxpool_forward(leaky_relu(z))
        conv_cache.append((activation.shape, cols, z, argmax))
        activation = pooled
    flat = np.concatenate([activation.ravel(),
                           np.asarray(scalars, dtype=np.float64)])
    hidden_z = weights['fc1_w'] @ flat + weights['fc1_b']
    _check_finite(hidden_z, len(CONV_WIDTHS) + 1)
    hidden = leaky_relu(hidden_z)
    output = float(weights['fc2_w'][0] @ hidden + weights['fc2_b'][0])
    if not math.isfinite(output):
        raise NonFiniteError(
            f"Non-finite activation in layer {len(CONV_WIDTHS) + 2}.")
    cache = {'conv': conv_cache, 'pooled_shape': activation.shape,
             'flat': flat, 'hidden_z': hidden_z, 'hidden': hidden}
    return output, cache


def backward_sample(weights: Weights, cache: dict, doutput: float
                    ) -> Tuple[Weights, np.ndarray]:
    """Back-propagate one sample's output gradient through the network.

    The dense-layer weight gradients are left to the caller, which forms
    them for the whole batch with one matrix product.

    Returns:
        grads: Convolution gradients keyed by parameter name.
        dhidden_z: Gradient with respect to the hidden pre-activation.
    """
    dhidden_z = weights['fc2_w'][0] * doutput \
        * leaky_relu_grad(cache['hidden_z'])
    dflat = weights['fc1_w'].T @ dhidden_z
    features = int(np.prod(cache['pooled_shape']))
    dactivation = dflat[:features].reshape(cache['pooled_shape'])
    grads = {}
    for layer in range(len(CONV_WIDTHS), 0, -1):
        input_shape, cols, z, argmax = cache['conv'][layer - 1]
        dz = maxpool_backward(dactivation, argmax) * leaky_relu_grad(z)
        dactivation, grads[f'conv{layer}_w'], grads[f'conv{layer}_b'] = \
            conv2d_backward(dz, cols, weights[f'conv{layer}_w'], input_shape)
    return grads, dhidden_z


def _map_samples(function, count: int, thread_cap: int) -> list:
    """Apply function to 0..count-1, returning results in index order."""
    if thread_cap > 0 and count > 1:
        with concurrent.futures.ThreadPoolExecutor(thread_cap) as executor:
            return list(executor.map(function, range(count)))
    return [function(index) for index in range(count)]


def to_network_images(images: np.ndarray) -> np.ndarray:
    """Scale uint8 pixels to [0, 1]; float input is passed through."""
    images = np.asarray(images)
    if images.dtype == np.uint8:
        return images.astype(np.float64) / PIXEL_SCALE
    return images.astype(np.float64)


def forward_batch(weights: Weights, images: np.ndarray, scalars: np.ndarray,
                  thread_cap: Optional[int] = None) -> np.ndarray:
    """Return the network output of every sample.

    Args:
        weights: Parameter arrays.
        images: (N, S, S) inputs, uint8 pixels or network units.
        scalars: (N, 4) normalized scalars.
        thread_cap: Worker threads, defaulting to the environment setting.
    Returns:
        outputs: (N,) normalized predictions.
    """
    if thread_cap is None:
        thread_cap = metadata_settings.get_thread_cap()
    images = to_network_images(images)

    def run(index: int) -> float:
        return forward_sample(weights, images[index], scalars[index])[0]

    return np.array(_map_samples(run, len(images), thread_cap),
                    dtype=np.float64)


def forward(model: ModelParams, image: LoopImage) -> float:
    """Return the normalized skew predicted for one rendered loop."""
    if image.side != model.side:
        raise ArchitectureMismatchError(
            f"Image side {image.side} does not match model side "
            f"{model.side}.")
    return forward_sample(
        model.weights, to_network_images(image.pixels),
        model.normalization.normalize_scalars(image.scalars))[0]


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Return (1/N) * sum of squared errors."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.ndim != 1:
        raise ValueError(
            f"Predictions {predictions.shape} and targets {targets.shape} "
            "must be vectors of equal length.")
    if predictions.size == 0:
        raise ValueError("Cannot compute the loss of an empty batch.")
    return float(np.mean((predictions - targets) ** 2))


def backward(weights: Weights, images: np.ndarray, scalars: np.ndarray,
             targets: np.ndarray, thread_cap: Optional[int] = None
             ) -> Tuple[float, Weights, np.ndarray]:
    """Return the loss of a batch and its exact gradients.

    Args:
        weights: Parameter arrays.
        images: (N, S, S) inputs, uint8 pixels or network units.
        scalars: (N, 4) normalized scalars.
        targets: (N,) normalized targets.
        thread_cap: Worker threads, defaulting to the environment setting.
    Returns:
        loss: Mean squared error of the batch.
        grads: Gradients keyed by parameter name.
        predictions: (N,) outputs.
    """
    if thread_cap is None:
        thread_cap = metadata_settings.get_thread_cap()
    images = to_network_images(images)
    targets = np.asarray(targets, dtype=np.float64)
    count = len(images)
    if count == 0:
        raise ValueError("Cannot back-propagate an empty batch.")
    if len(scalars) != count or len(targets) != count:
        raise ValueError(
            f"Batch has {count} images, {len(scalars)} scalar rows and "
            f"{len(targets)} targets.")

    def run(index: int):
        output, cache = forward_sample(weights, images[index], scalars[index])
        doutput = 2.0 * (output - targets[index]) / count
        grads, dhidden_z = backward_sample(weights, cache, doutput)
        return output, doutput, grads, dhidden_z, cache['flat'], \
            cache['hidden']

    results = _map_samples(run, count, thread_cap)
    predictions = np.array([result[0] for result in results])
    doutputs = np.array([result[1] for result in results])
    grads = {name: np.zeros_like(weights[name]) for name in PARAM_NAMES}
    for result in results:
        for name, value in result[2].items():
            grads[name] += value
    dhidden_z = np.stack([result[3] for result in results])
    flats = np.stack([result[4] for result in results])
    hiddens = np.stack([result[5] for result in results])
    grads['fc1_w'] = dhidden_z.T @ flats
    grads['fc1_b'] = dhidden_z.sum(axis=0)
    grads['fc2_w'] = (doutputs @ hiddens)[None, :]
    grads['fc2_b'] = np.array([doutputs.sum()])
    return mse_loss(predictions, targets), grads, predictions


def adam_step(weights: Weights, grads: Weights, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> Tuple[Weights, AdamState]:
    """Apply one bias-corrected Adam update.

    The inputs are left untouched; new weights and state are returned.

    Raises:
        NonFiniteError: A gradient holds NaN or infinity.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Non-finite gradient for {name}.")
    step = state.step + 1
    first_correction = 1.0 - beta1 ** step
    second_correction = 1.0 - beta2 ** step
    new_weights, first_moment, second_moment = {}, {}, {}
    for name, value in weights.items():
        grad = grads[name]
        first_moment[name] = beta1 * state.first_moment[name] \
            + (1.0 - beta1) * grad
        second_moment[name] = beta2 * state.second_moment[name] \
            + (1.0 - beta2) * grad * grad
        new_weights[name] = value - lr * (first_moment[name]
                                          / first_correction) \
            / (np.sqrt(second_moment[name] / second_correction) + eps)
    return new_weights, AdamState(first_moment, second_moment, step)


def save(model: ModelParams, filepath: str):
    """Write a model file.

    Layout: 8 magic bytes, little-endian uint32 format version, uint64
    header length, a UTF-8 JSON header with sorted keys, then every
    parameter as little-endian float64 in PARAM_NAMES order.

    Args:
        model: Model to write.
        filepath: Destination; must end in '.bhd'.
    """
    verify_filepath(filepath, 'bhd')
    verify_attributes(model, deskew_attribute_utils.model_params_attributes(),
                      "Model is missing ModelParams attributes.")
    header = {
        'architecture': {'version': model.version, 'side': model.side,
                         'conv_widths': list(CONV_WIDTHS),
                         'hidden_units': HIDDEN_UNITS},
        'parameters': [{'name': name,
                        'shape': list(model.weights[name].shape)}
                       for name in PARAM_NAMES],
        'normalization': model.normalization.to_dict(),
        'skew_grid': model.skew_grid.to_dict(),
        'zoom_width': model.zoom_width,
        'margin': model.margin,
        'training_origins': model.training_origins,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    blobs = b''.join(model.weights[name].astype('<f8').tobytes()
                     for name in PARAM_NAMES)
    deskew_folder_utils.atomic_write_bytes(
        filepath, MAGIC + struct.pack('<I', FORMAT_VERSION)
        + struct.pack('<Q', len(header_bytes)) + header_bytes + blobs)
    logger.info("Saved model (side %d, %d training origins) to %s",
                model.side, len(model.training_origins), filepath)


def load(filepath: str, expected_side: Optional[int] = None) -> ModelParams:
    """Read a model file written by save().

    Args:
        filepath: Model file; must end in '.bhd'.
        expected_side: Image side the caller works at, if fixed.
    Returns:
        model: The stored model, bit-identical to the saved one.
    Raises:
        ModelFormatError: Bad magic, version, header or blob sizes.
        ArchitectureMismatchError: Stored side differs from expected_side.
    """
    verify_filepath(filepath, 'bhd')
    with open(filepath, 'rb') as file:
        data = file.read()
    prefix_length = len(MAGIC) + 4 + 8
    if len(data) < prefix_length or data[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{filepath} is not a model file (bad magic).")
    (version,) = struct.unpack('<I', data[len(MAGIC):len(MAGIC) + 4])
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"{filepath} has format version {version}, expected "
            f"{FORMAT_VERSION}.")
    (header_length,) = struct.unpack('<Q', data[len(MAGIC) + 4:prefix_length])
    if prefix_length + header_length > len(data):
        raise ModelFormatError(f"{filepath} is truncated inside the header.")
    try:
        header = json.loads(
            data[prefix_length:prefix_length + header_length].decode('utf-8'))
        architecture = header['architecture']
        side = int(architecture['side'])
        parameters = header['parameters']
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError,
            TypeError, ValueError) as err:
        raise ModelFormatError(f"{filepath} has a corrupt header: {err}") \
            from err
    if architecture.get('version') != ARCHITECTURE_VERSION:
        raise ModelFormatError(
            f"{filepath} holds architecture {architecture.get('version')!r}, "
            f"expected {ARCHITECTURE_VERSION!r}.")
    if expected_side is not None and side != expected_side:
        raise ArchitectureMismatchError(
            f"{filepath} holds a model for side {side}, but the pipeline "
            f"works at side {expected_side}.")
    try:
        expected_shapes = param_shapes(side)
    except ValueError as err:
        raise ModelFormatError(f"{filepath}: {err}") from err
    if [entry.get('name') for entry in parameters] != list(PARAM_NAMES) \
            or any(tuple(entry.get('shape', ())) != expected_shapes[
                entry['name']] for entry in parameters):
        raise ModelFormatError(
            f"{filepath}: parameter descriptors disagree with the "
            f"architecture for side {side}.")
    blob = data[prefix_length + header_length:]
    expected_bytes = 8 * sum(int(np.prod(shape))
                             for shape in expected_shapes.values())
    if len(blob) < expected_bytes:
        raise ModelFormatError(
            f"{filepath} is truncated: {len(blob)} parameter bytes, "
            f"expected {expected_bytes}.")
    if len(blob) > expected_bytes:
        raise ModelFormatError(
            f"{filepath} has {len(blob) - expected_bytes} bytes beyond the "
            "parameters its header describes.")
    weights = {}
    offset = 0
    for name in PARAM_NAMES:
        size = int(np.prod(expected_shapes[name]))
        weights[name] = np.frombuffer(
            blob, dtype='<f8', count=size, offset=offset).astype(
                np.float64).reshape(expected_shapes[name])
        offset += 8 * size
        try:
            verify_finite(weights[name], f"parameter {name}")
        except NonFiniteError as err:
            raise ModelFormatError(f"{filepath}: {err}") from err
    try:
        normalization = NormalizationStats(**header['normalization'])
        skew_grid = SkewGrid(**header['skew_grid'])
        return ModelParams(side, weights, normalization, skew_grid,
                           header['zoom_width'], header['margin'],
                           header['training_origins'],
                           architecture['version'])
    except (KeyError, TypeError, ValueError, NonFiniteError) as err:
        raise ModelFormatError(f"{filepath} has a corrupt header: {err}") \
            from err
