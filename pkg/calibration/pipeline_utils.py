"""Training, fine-tuning, skew prediction, correction and evaluation.

Records at the full interpolation factor are large (about 16 MB per
operating point at K=1000), so every entry point that takes records streams
them: each record is interpolated, augmented and rendered on its own and
only the small images are kept.

Classes:
    RenderedSamples: Network inputs and labels of a set of samples.
    SkewPrediction: Continuous and rounded skew of one record.
"""

from __future__ import annotations

import concurrent.futures
import logging
import math
import os
import sys
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import metadata_settings
import micronet_utils
from dataset_utils import LabeledSample, SkewGrid, augment_record
from micronet_utils import (
    AdamState,
    ModelParams,
    NormalizationStats,
    Weights
)
from raster_utils import loop_scalars, render_composite, render_loops
from report_utils import EvalColumns, EvalReport, SweepResult, sweep_rows
from training_config_utils import NormalizationPolicy, TrainConfig
from verification_utils import (
    ArchitectureMismatchError,
    ConfigurationError,
    LeakageError,
    NonFiniteError,
    ResolutionMismatchError
)
from waveform_utils import (
    SkewOffset,
    WaveformRecord,
    apply_skew,
    core_loss_density,
    make_loop
)

logger = logging.getLogger(__name__)

RENDER_CHUNK = 64


def _thread_cap(thread_cap: Optional[int]) -> int:
    return metadata_settings.get_thread_cap() if thread_cap is None \
        else thread_cap


def _map_ordered(function: Callable, items: Sequence, thread_cap: int
                 ) -> list:
    if thread_cap > 0 and len(items) > 1:
        with concurrent.futures.ThreadPoolExecutor(thread_cap) as executor:
            return list(executor.map(function, items))
    return [function(item) for item in items]


class RenderedSamples:
    """Rendered network inputs with their labels.

    Attributes:
        images: (N, S, S) uint8 composite images.
        scalars: (N, 4) raw loop extrema.
        targets: (N,) applied skews in interpolated samples.
        origins: Origin identifier of every sample.
    """
    images: np.ndarray
    scalars: np.ndarray
    targets: np.ndarray
    origins: List[str]

    def __init__(self, images: np.ndarray, scalars: np.ndarray,
                 targets: np.ndarray, origins: Sequence[str]):
        if not len(images) == len(scalars) == len(targets) == len(origins):
            raise ValueError("Rendered sample arrays differ in length.")
        self.images = images
        self.scalars = scalars
        self.targets = np.asarray(targets, dtype=np.int64)
        self.origins = list(origins)

    def __len__(self) -> int:
        return len(self.targets)

    @classmethod
    def concatenate(cls, parts: Sequence[RenderedSamples]
                    ) -> RenderedSamples:
        return cls(np.concatenate([part.images for part in parts]),
                   np.concatenate([part.scalars for part in parts]),
                   np.concatenate([part.targets for part in parts]),
                   [origin for part in parts for origin in part.origins])


def prepare_record(record: WaveformRecord, grid: SkewGrid) -> WaveformRecord:
    """Bring a record to the interpolation factor of a skew grid.

    Raw records are interpolated; records already at the grid factor pass
    through unchanged.

    Raises:
        ResolutionMismatchError: The record has another base length or was
            interpolated by another factor.
    """
    if record.base_length != grid.base_length:
        raise ResolutionMismatchError(
            f"Record {record.record_id} has {record.base_length} samples per "
            f"period; the model expects {grid.base_length}.")
    if record.interp_factor == grid.interp_factor:
        return record
    if record.interp_factor != 1:
        raise ResolutionMismatchError(
            f"Record {record.record_id} is interpolated by "
            f"{record.interp_factor}; the model expects "
            f"{grid.interp_factor}.")
    return record.interpolated(grid.interp_factor)


def render_samples(samples: Sequence[LabeledSample], side: int,
                   zoom_width: float, margin: float,
                   thread_cap: Optional[int] = None) -> RenderedSamples:
    """Render labeled samples in chunks, keeping their order."""
    parts = []
    for start in range(0, len(samples), RENDER_CHUNK):
        chunk = samples[start:start + RENDER_CHUNK]
        images, scalars = render_loops([sample.loop() for sample in chunk],
                                       side, zoom_width, margin, thread_cap)
        parts.append(RenderedSamples(
            images, scalars, [sample.target.delta for sample in chunk],
            [sample.origin_id for sample in chunk]))
    return RenderedSamples.concatenate(parts)


def render_records(records: Iterable[WaveformRecord], grid: SkewGrid,
                   side: int, zoom_width: float, margin: float,
                   thread_cap: Optional[int] = None) -> RenderedSamples:
    """Augment and render records one at a time.

    Args:
        records: Raw or grid-interpolated records.
        grid: Skew grid to augment with.
        side: Image side S.
        zoom_width: Zoom window side.
        margin: Normalization margin.
        thread_cap: Worker threads for rendering.
    Returns:
        rendered: 2n+1 samples per record, grouped by record in order.
    """
    parts = [render_samples(augment_record(prepare_record(record, grid),
                                           grid),
                            side, zoom_width, margin, thread_cap)
             for record in records]
    if not parts:
        raise ValueError("No records to render.")
    return RenderedSamples.concatenate(parts)


def _fit(weights: Weights,
         batch_source: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
         targets: np.ndarray, normalization: NormalizationStats,
         config: TrainConfig, log_filepath: Optional[str],
         show_progress: bool, thread_cap: int) -> Tuple[Weights, List[float]]:
    """Run mini-batch Adam over the samples.

    Args:
        weights: Starting weights.
        batch_source: Returns (uint8 images, raw scalars) for sample indices.
        targets: Normalized targets of all samples.
        normalization: Scalar normalization.
        config: Epochs, batch size, learning rate, seed and patience.
        log_filepath: Training log receiving 'epoch,mean_loss' lines.
        show_progress: Show a per-epoch progress bar.
        thread_cap: Worker threads per batch.
    Returns:
        weights: Weights after the last epoch run.
        epoch_losses: Sample-weighted mean batch loss of every epoch.
    """
    count = len(targets)
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState.zeros_like(weights)
    epoch_losses = []
    best_loss, stale_epochs = math.inf, 0
    log_file = open(log_filepath, 'w', encoding='utf-8') \
        if log_filepath else None
    try:
        for epoch in tqdm(range(1, config.epochs + 1), desc='epochs',
                          disable=not show_progress):
            order = rng.permutation(count)
            loss_sum = 0.0
            for batch, start in enumerate(range(0, count, config.batch_size),
                                          start=1):
                indices = order[start:start + config.batch_size]
                images, scalars = batch_source(indices)
                try:
                    loss, grads, _ = micronet_utils.backward(
                        weights, images,
                        normalization.normalize_scalars(scalars),
                        targets[indices], thread_cap)
                    if not math.isfinite(loss):
                        raise NonFiniteError(f"Loss is {loss}.")
                    weights, state = micronet_utils.adam_step(
                        weights, grads, state, config.learning_rate)
                except NonFiniteError as err:
                    raise NonFiniteError(
                        f"Training diverged at epoch {epoch}, batch {batch}: "
                        f"{err}") from err
                logger.debug("Epoch %d batch %d loss %.6g", epoch, batch,
                             loss)
                loss_sum += loss * len(indices)
            mean_loss = float(loss_sum / count)
            epoch_losses.append(mean_loss)
            logger.info("Epoch %d/%d mean loss %.6g", epoch, config.epochs,
                        mean_loss)
            if log_file:
                log_file.write(f'{epoch},{mean_loss!r}\n')
                log_file.flush()
            if mean_loss < best_loss:
                best_loss, stale_epochs = mean_loss, 0
            else:
                stale_epochs += 1
            if config.patience and stale_epochs >= config.patience:
                logger.info("Stopping after epoch %d: no improvement for %d "
                            "epochs", epoch, stale_epochs)
                break
    finally:
        if log_file:
            log_file.close()
    if len(epoch_losses) > 1 and epoch_losses[-1] > epoch_losses[0]:
        logger.warning("Final epoch loss %.6g exceeds the first epoch loss "
                       "%.6g", epoch_losses[-1], epoch_losses[0])
    return weights, epoch_losses


def _sample_grid(samples: Sequence[LabeledSample], config: TrainConfig
                 ) -> SkewGrid:
    if not samples:
        raise ValueError("Cannot train on an empty set of samples.")
    interp_factor = samples[0].target.interp_factor
    base_length = samples[0].target.base_length
    for sample in samples:
        if sample.target.interp_factor != config.interp_factor \
                or sample.target.interp_factor != interp_factor \
                or sample.target.base_length != base_length:
            raise ResolutionMismatchError(
                f"Sample of {sample.origin_id} has K="
                f"{sample.target.interp_factor}, L="
                f"{sample.target.base_length}; training uses K="
                f"{config.interp_factor}, L={base_length}.")
    return config.skew_grid(base_length)


def _train_source(samples: Sequence[LabeledSample], config: TrainConfig,
                  thread_cap: int):
    """Return raw scalars, targets, origins and a batch source."""
    if config.cache_images:
        rendered = render_samples(samples, config.side, config.zoom_width,
                                  config.margin, thread_cap)
        return rendered.scalars, rendered.targets, rendered.origins, \
            lambda indices: (rendered.images[indices],
                             rendered.scalars[indices])
    scalars = np.array([loop_scalars(sample.loop()) for sample in samples])
    targets = np.array([sample.target.delta for sample in samples])

    def batch_source(indices):
        return render_loops([samples[i].loop() for i in indices],
                            config.side, config.zoom_width, config.margin,
                            thread_cap)

    return scalars, targets, [sample.origin_id for sample in samples], \
        batch_source


def _rendered_source(rendered: RenderedSamples):
    return rendered.scalars, rendered.targets, rendered.origins, \
        lambda indices: (rendered.images[indices], rendered.scalars[indices])


def _check_epochs(config: TrainConfig):
    if config.epochs < 1:
        raise ConfigurationError("Training needs at least one epoch.")


def _train(source, grid: SkewGrid, config: TrainConfig,
           log_filepath: Optional[str], show_progress: bool,
           thread_cap: int) -> ModelParams:
    scalars, targets, origins, batch_source = source
    normalization = NormalizationStats.from_scalars(scalars,
                                                    grid.target_scale())
    logger.info("Training on %d samples from %d operating points",
                len(targets), len(set(origins)))
    weights, _ = _fit(micronet_utils.init(config.seed, config.side),
                      batch_source, normalization.normalize_targets(targets),
                      normalization, config, log_filepath, show_progress,
                      thread_cap)
    return ModelParams(config.side, weights, normalization, grid,
                       config.zoom_width, config.margin, origins)


def train(samples: Sequence[LabeledSample], config: TrainConfig,
          log_filepath: Optional[str] = None, show_progress: bool = True,
          thread_cap: Optional[int] = None) -> ModelParams:
    """Train a model from scratch on labeled samples.

    Args:
        samples: Non-empty training samples on one skew grid.
        config: Training configuration; epochs must be at least 1.
        log_filepath: Optional training log.
        show_progress: Show a per-epoch progress bar.
        thread_cap: Worker threads, defaulting to the environment setting.
    Returns:
        model: Trained model with its normalization and training origins.
    Raises:
        NonFiniteError: The loss diverged; the message names epoch and batch.
    """
    thread_cap = _thread_cap(thread_cap)
    grid = _sample_grid(samples, config)
    _check_epochs(config)
    return _train(_train_source(samples, config, thread_cap), grid, config,
                  log_filepath, show_progress, thread_cap)


def train_records(records: Sequence[WaveformRecord], config: TrainConfig,
                  log_filepath: Optional[str] = None,
                  show_progress: bool = True,
                  thread_cap: Optional[int] = None) -> ModelParams:
    """Augment, render and train on records, one record in memory at a time.

    Produces the same model as train() on the augmented samples.
    """
    if not records:
        raise ValueError("Cannot train on an empty set of records.")
    _check_epochs(config)
    thread_cap = _thread_cap(thread_cap)
    grid = config.skew_grid(records[0].base_length)
    rendered = render_records(records, grid, config.side, config.zoom_width,
                              config.margin, thread_cap)
    return _train(_rendered_source(rendered), grid, config, log_filepath,
                  show_progress, thread_cap)


def _finetune(base: ModelParams, source, config: TrainConfig,
              log_filepath: Optional[str], show_progress: bool,
              thread_cap: int) -> ModelParams:
    if config.side != base.side:
        raise ArchitectureMismatchError(
            f"Base model has side {base.side}, the configuration side "
            f"{config.side}.")
    if config.epochs == 0:
        return base
    scalars, targets, origins, batch_source = source
    new_stats = NormalizationStats.from_scalars(
        scalars, base.normalization.target_scale)
    normalization = new_stats \
        if config.normalization_policy == NormalizationPolicy.NEW \
        else base.normalization.union(new_stats)
    logger.info("Fine-tuning on %d samples from %d operating points "
                "(%s normalization)", len(targets), len(set(origins)),
                config.normalization_policy.value)
    weights, _ = _fit(dict(base.weights), batch_source,
                      normalization.normalize_targets(targets), normalization,
                      config, log_filepath, show_progress, thread_cap)
    return ModelParams(base.side, weights, normalization, base.skew_grid,
                       base.zoom_width, base.margin,
                       set(base.training_origins) | set(origins),
                       base.version)


def _check_grid(base: ModelParams, interp_factor: int, base_length: int):
    if interp_factor != base.skew_grid.interp_factor \
            or base_length != base.skew_grid.base_length:
        raise ResolutionMismatchError(
            f"Fine-tuning data has K={interp_factor}, L={base_length}; the "
            f"base model expects K={base.skew_grid.interp_factor}, "
            f"L={base.skew_grid.base_length}.")


def finetune(base: ModelParams, samples: Sequence[LabeledSample],
             config: TrainConfig, log_filepath: Optional[str] = None,
             show_progress: bool = True,
             thread_cap: Optional[int] = None) -> ModelParams:
    """Continue training a model on new samples with fresh Adam moments.

    All layers stay trainable. Rendering uses the base model's zoom width
    and margin. Zero epochs return the base model unchanged.

    Raises:
        ArchitectureMismatchError: config.side differs from the base side.
    """
    thread_cap = _thread_cap(thread_cap)
    if config.side != base.side or config.epochs == 0:
        return _finetune(base, None, config, log_filepath, show_progress,
                         thread_cap)
    if not samples:
        raise ValueError("Cannot fine-tune on an empty set of samples.")
    for sample in samples:
        _check_grid(base, sample.target.interp_factor,
                    sample.target.base_length)
    render_config = TrainConfig(**dict(config.to_dict(),
                                       zoom_width=base.zoom_width,
                                       margin=base.margin))
    return _finetune(base, _train_source(samples, render_config, thread_cap),
                     config, log_filepath, show_progress, thread_cap)


def finetune_records(base: ModelParams, records: Sequence[WaveformRecord],
                     config: TrainConfig, log_filepath: Optional[str] = None,
                     show_progress: bool = True,
                     thread_cap: Optional[int] = None) -> ModelParams:
    """Fine-tune on records, augmenting with the configured half-width and
    step at the base model's resolution."""
    thread_cap = _thread_cap(thread_cap)
    if config.side != base.side or config.epochs == 0:
        return _finetune(base, None, config, log_filepath, show_progress,
                         thread_cap)
    if not records:
        raise ValueError("Cannot fine-tune on an empty set of records.")
    grid = SkewGrid(config.skew_half_width, config.skew_step,
                    base.skew_grid.interp_factor, base.skew_grid.base_length)
    rendered = render_records(records, grid, base.side, base.zoom_width,
                              base.margin, thread_cap)
    return _finetune(base, _rendered_source(rendered), config, log_filepath,
                     show_progress, thread_cap)


class SkewPrediction:
    """Predicted skew of one record.

    Attributes:
        continuous: Network estimate in interpolated samples.
        offset: Estimate rounded to the nearest interpolated sample; used for
            correction.
        frequency: Frequency of the record in hertz.
    """
    continuous: float
    offset: SkewOffset
    frequency: float

    def __init__(self, continuous: float, offset: SkewOffset,
                 frequency: float):
        self.continuous = float(continuous)
        self.offset = offset
        self.frequency = float(frequency)

    def degrees(self) -> float:
        return 360.0 * self.continuous / self.offset.period

    def seconds(self) -> float:
        return self.continuous / (self.offset.period * self.frequency)

    def nanoseconds(self) -> float:
        return self.seconds() * 1e9

    def to_dict(self) -> dict:
        """Return every reported unit of the prediction."""
        return {
            'index': self.continuous,
            'degrees': self.degrees(),
            'nanoseconds': self.nanoseconds(),
            'rounded_index': self.offset.delta,
            'rounded_degrees': self.offset.degrees(),
            'rounded_nanoseconds': self.offset.nanoseconds(self.frequency),
        }


def round_skew(continuous: float, interp_factor: int, base_length: int
               ) -> SkewOffset:
    """Round a continuous skew to the nearest sample, ties upward, clamped
    to within one period."""
    limit = interp_factor * base_length - 1
    delta = min(max(math.floor(continuous + 0.5), -limit), limit)
    return SkewOffset(delta, interp_factor, base_length)


def predict_rendered(model: ModelParams, images: np.ndarray,
                     scalars: np.ndarray,
                     thread_cap: Optional[int] = None) -> np.ndarray:
    """Return continuous skews in interpolated samples for rendered inputs."""
    outputs = micronet_utils.forward_batch(
        model.weights, images, model.normalization.normalize_scalars(scalars),
        _thread_cap(thread_cap))
    return model.normalization.denormalize_targets(outputs)


def predict_skew(model: ModelParams, record: WaveformRecord
                 ) -> SkewPrediction:
    """Predict the skew of one record.

    Args:
        model: Trained model.
        record: Record interpolated to the model's factor.
    Returns:
        prediction: Continuous and rounded skew.
    Raises:
        ResolutionMismatchError: The record's K or L differ from the model's.
        DegenerateLoopError: The loop has no extent.
    """
    grid = model.skew_grid
    if record.interp_factor != grid.interp_factor \
            or record.base_length != grid.base_length:
        raise ResolutionMismatchError(
            f"Record {record.record_id} has K={record.interp_factor}, "
            f"L={record.base_length}; the model expects "
            f"K={grid.interp_factor}, L={grid.base_length}.")
    image = render_composite(record.loop(), model.side, model.zoom_width,
                             model.margin)
    continuous = float(model.normalization.denormalize_targets(
        micronet_utils.forward(model, image)))
    return SkewPrediction(
        continuous, round_skew(continuous, grid.interp_factor,
                               grid.base_length), record.frequency)


def correct(record: WaveformRecord, offset: SkewOffset
            ) -> Tuple[WaveformRecord, float]:
    """Undo a skew: shift H by -offset and recompute the core loss.

    Args:
        record: Interpolated record.
        offset: Skew to remove, on the record's resolution.
    Returns:
        corrected: Record with the shifted H series.
        loss: Core loss density of the corrected loop in W/m^3.
    """
    if offset.period != len(record.h):
        raise ResolutionMismatchError(
            f"Skew on a period of {offset.period} samples cannot correct "
            f"record {record.record_id} of {len(record.h)} samples.")
    corrected = record.with_h(apply_skew(record.h, offset.inverse()))
    return corrected, core_loss_density(corrected.loop(), record.frequency)


def relative_skew_error(predicted: float, true_skew: int, step: int) -> float:
    """|predicted - true| / max(|true|, step)."""
    return abs(predicted - true_skew) / max(abs(true_skew), step)


def check_leakage(model: ModelParams, origins: Iterable[str]):
    """Raise LeakageError if any origin was used to train the model."""
    leaked = sorted(set(origins) & set(model.training_origins))
    if leaked:
        raise LeakageError(
            f"{len(leaked)} test operating points were used for training, "
            f"e.g. {leaked[:5]}.")


def _evaluation_rows(model: ModelParams, samples: Sequence[LabeledSample],
                     thread_cap: int) -> List[dict]:
    rendered = render_samples(samples, model.side, model.zoom_width,
                              model.margin, thread_cap)
    predictions = predict_rendered(model, rendered.images, rendered.scalars,
                                   thread_cap)
    grid = model.skew_grid
    true_losses = {}
    for sample in samples:
        if sample.origin_id not in true_losses:
            true_losses[sample.origin_id] = core_loss_density(
                sample.source.loop(), sample.source.frequency)

    def row(index: int) -> dict:
        sample = samples[index]
        continuous = float(predictions[index])
        rounded = round_skew(continuous, grid.interp_factor, grid.base_length)
        skewed = sample.record
        skewed_loss = core_loss_density(skewed.loop(), skewed.frequency)
        _, corrected_loss = correct(skewed, rounded)
        true_loss = true_losses[sample.origin_id]
        if true_loss == 0:
            before = after = math.nan
        else:
            before = (skewed_loss - true_loss) / abs(true_loss)
            after = (corrected_loss - true_loss) / abs(true_loss)
        return {
            EvalColumns.ORIGIN_ID.value: sample.origin_id,
            EvalColumns.TRUE_SKEW.value: sample.target.delta,
            EvalColumns.PREDICTED_SKEW.value: continuous,
            EvalColumns.ROUNDED_SKEW.value: rounded.delta,
            EvalColumns.SKEW_RELATIVE_ERROR.value: relative_skew_error(
                continuous, sample.target.delta, grid.step),
            EvalColumns.TRUE_LOSS.value: true_loss,
            EvalColumns.SKEWED_LOSS.value: skewed_loss,
            EvalColumns.CORRECTED_LOSS.value: corrected_loss,
            EvalColumns.DEVIATION_BEFORE.value: before,
            EvalColumns.DEVIATION_AFTER.value: after,
            EvalColumns.FREQUENCY.value: skewed.frequency,
        }

    zero_loss = [origin for origin, loss in true_losses.items() if loss == 0]
    if zero_loss:
        logger.warning("%d operating points have zero loss; their loss "
                       "deviations are undefined", len(zero_loss))
    return _map_ordered(row, range(len(samples)), thread_cap)


def evaluate(model: ModelParams, samples: Sequence[LabeledSample],
             thread_cap: Optional[int] = None) -> EvalReport:
    """Evaluate a model on held-out labeled samples.

    Losses of the skewed and corrected loops are compared with the loss of
    the sample's zero-skew source loop.

    Raises:
        ValueError: No samples.
        LeakageError: A sample comes from a training operating point.
        ResolutionMismatchError: Samples are on another resolution.
    """
    if not samples:
        raise ValueError("Cannot evaluate on an empty test set.")
    check_leakage(model, (sample.origin_id for sample in samples))
    grid = model.skew_grid
    for sample in samples:
        if sample.target.interp_factor != grid.interp_factor \
                or sample.target.base_length != grid.base_length:
            raise ResolutionMismatchError(
                f"Sample of {sample.origin_id} has K="
                f"{sample.target.interp_factor}, L="
                f"{sample.target.base_length}; the model expects "
                f"K={grid.interp_factor}, L={grid.base_length}.")
    return EvalReport(row_list=_evaluation_rows(model, samples,
                                                _thread_cap(thread_cap)))


def evaluate_records(model: ModelParams, records: Sequence[WaveformRecord],
                     thread_cap: Optional[int] = None) -> EvalReport:
    """Augment each record on the model's grid and evaluate, one record in
    memory at a time."""
    if not records:
        raise ValueError("Cannot evaluate on an empty test set.")
    check_leakage(model, (record.record_id for record in records))
    thread_cap = _thread_cap(thread_cap)
    rows = []
    for record in records:
        samples = augment_record(prepare_record(record, model.skew_grid),
                                 model.skew_grid)
        rows.extend(_evaluation_rows(model, samples, thread_cap))
    report = EvalReport(row_list=rows)
    logger.info("Evaluated %d samples: mean skew relative error %.4g",
                len(rows), report.aggregates['mean_skew_relative_error'])
    return report


def loss_skew_sweep(record: WaveformRecord, half_width: int, step: int
                    ) -> SweepResult:
    """Core loss of a record for every skew m*step, m in -n..n.

    Args:
        record: Interpolated record.
        half_width: n.
        step: Grid step in interpolated samples.
    Returns:
        sweep: Rows in ascending skew and the least-squares line through
            them.
    """
    grid = SkewGrid(half_width, step, record.interp_factor,
                    record.base_length)
    indices, degrees, seconds, losses = [], [], [], []
    for offset in grid.offsets():
        indices.append(offset.delta)
        degrees.append(offset.degrees())
        seconds.append(offset.seconds(record.frequency))
        losses.append(core_loss_density(
            make_loop(record.b, apply_skew(record.h, offset)),
            record.frequency))
    return SweepResult(sweep_rows(indices, degrees, seconds, losses))
