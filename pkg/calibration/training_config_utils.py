"""Training configuration for the skew network.

Global variables:
    CONFIG_DEFAULT_VALUES: Default value of every TrainConfig field.
    PARAMETERS_RANGE: Inclusive (low, high) bounds of the numeric fields.
    MATERIAL_PRESETS: Published per-material training settings plus a
        desk-scale preset. The material presets keep triangular excitations
        only; a corpus ingested without shape.csv is tagged 'other' and must
        be selected explicitly with a shape override.

Classes:
    NormalizationPolicy: Statistics used when fine-tuning.
    TrainConfig: Validated training configuration.
"""

from __future__ import annotations

import enum
import os
import sys
from typing import Any, Dict, Optional, Tuple, Union

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import metadata_settings
from dataset_utils import DatasetFilter, SkewGrid, SplitSpec
from raster_utils import check_side
from verification_utils import ConfigurationError


class NormalizationPolicy(str, enum.Enum):
    """Statistics a fine-tuned model normalizes its scalars with.

    NEW: Statistics of the fine-tuning samples only.
    UNION: Pooled statistics of the base and fine-tuning samples.
    """
    NEW = 'new'
    UNION = 'union'


CONFIG_DEFAULT_VALUES: Dict[str, Union[float, int, bool, str]] = {
    'epochs': 50,
    'batch_size': 500,
    'learning_rate': 2.5e-3,
    'seed': 0,
    'skew_half_width': metadata_settings.get_skew_half_width(),
    'skew_step': metadata_settings.get_skew_step(),
    'interp_factor': metadata_settings.get_interp_factor(),
    'side': metadata_settings.get_image_side(),
    'zoom_width': metadata_settings.get_zoom_width(),
    'margin': metadata_settings.get_normalization_margin(),
    'patience': 0,
    'normalization_policy': NormalizationPolicy.NEW.value,
    'cache_images': True,
}


PARAMETERS_RANGE: Dict[str, Union[Tuple[float, float], Tuple[int, int]]] = {
    'epochs': (0, 100000),
    'batch_size': (1, 1000000),
    'learning_rate': (1e-12, 1.0),
    'seed': (0, 2 ** 32 - 1),
    'skew_half_width': (0, 100000),
    'skew_step': (1, 10 ** 9),
    'interp_factor': (1, 100000),
    'side': (8, 4096),
    'zoom_width': (1e-6, 1.0),
    'margin': (0.0, 0.49),
    'patience': (0, 100000),
}


MATERIAL_PRESETS: Dict[str, Dict[str, Any]] = {
    '3C90': {
        'batch_size': 500,
        'split': '1000:197',
        'delta_b_range': (0.0215, 0.5524),
        'frequency_range': (56330.0, 446430.0),
        'temperature': 25.0,
        'shape_tags': ['triangular'],
    },
    'N87': {
        'batch_size': 400,
        'split': '1600:279',
        'delta_b_range': (0.0213, 0.5498),
        'frequency_range': (49970.0, 446430.0),
        'temperature': 25.0,
        'shape_tags': ['triangular'],
    },
    'desk': {
        'side': 64,
        'split': '160:40',
    },
}


class TrainConfig:
    """Validated training configuration.

    Attributes:
        epochs: Passes over the training samples; 0 only makes sense for
            fine-tuning, where it returns the base model.
        batch_size: Samples per Adam update.
        learning_rate: Adam step size.
        seed: Seed of initialization and per-epoch shuffles.
        skew_half_width: Grid half-width n; offsets run from -n to n steps.
        skew_step: Grid step in interpolated samples.
        interp_factor: Interpolation factor K of training records.
        side: Image side S.
        zoom_width: Zoom window side in normalized units.
        margin: Normalization margin of the rendered loop.
        patience: Epochs without improvement of the mean loss before
            training stops; 0 disables early stopping.
        normalization_policy: Statistics used when fine-tuning.
        cache_images: Render every sample once up front instead of per batch.
    """
    epochs: int
    batch_size: int
    learning_rate: float
    seed: int
    skew_half_width: int
    skew_step: int
    interp_factor: int
    side: int
    zoom_width: float
    margin: float
    patience: int
    normalization_policy: NormalizationPolicy
    cache_images: bool

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(CONFIG_DEFAULT_VALUES)
        if unknown:
            raise ConfigurationError(
                f"Unknown configuration fields: {sorted(unknown)}.")
        values = dict(CONFIG_DEFAULT_VALUES)
        values.update({key: value for key, value in kwargs.items()
                       if value is not None})
        for field, (low, high) in PARAMETERS_RANGE.items():
            value = values[field]
            if isinstance(CONFIG_DEFAULT_VALUES[field], int) \
                    and int(value) != value:
                raise ConfigurationError(
                    f"{field} must be an integer, got {value}.")
            if not low <= value <= high:
                raise ConfigurationError(
                    f"{field}={value} is outside the range [{low}, {high}].")
        try:
            check_side(values['side'])
        except ValueError as err:
            raise ConfigurationError(f"side: {err}") from err
        try:
            policy = NormalizationPolicy(values['normalization_policy'])
        except ValueError as err:
            raise ConfigurationError(
                f"normalization_policy must be one of "
                f"{[p.value for p in NormalizationPolicy]}, got "
                f"{values['normalization_policy']!r}.") from err
        self.epochs = int(values['epochs'])
        self.batch_size = int(values['batch_size'])
        self.learning_rate = float(values['learning_rate'])
        self.seed = int(values['seed'])
        self.skew_half_width = int(values['skew_half_width'])
        self.skew_step = int(values['skew_step'])
        self.interp_factor = int(values['interp_factor'])
        self.side = int(values['side'])
        self.zoom_width = float(values['zoom_width'])
        self.margin = float(values['margin'])
        self.patience = int(values['patience'])
        self.normalization_policy = policy
        self.cache_images = bool(values['cache_images'])

    @classmethod
    def from_preset(cls, preset: Optional[str], **overrides) -> TrainConfig:
        """Build a configuration from a material preset.

        Preset values fill fields the caller left unset (None); explicit
        values win.
        """
        values = {key: value for key, value in preset_values(preset).items()
                  if key in CONFIG_DEFAULT_VALUES}
        values.update({key: value for key, value in overrides.items()
                       if value is not None})
        return cls(**values)

    def __eq__(self, other) -> bool:
        return isinstance(other, TrainConfig) \
            and self.to_dict() == other.to_dict()

    def to_dict(self) -> Dict[str, Union[float, int, bool, str]]:
        """Return the resolved configuration."""
        return {
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'learning_rate': self.learning_rate,
            'seed': self.seed,
            'skew_half_width': self.skew_half_width,
            'skew_step': self.skew_step,
            'interp_factor': self.interp_factor,
            'side': self.side,
            'zoom_width': self.zoom_width,
            'margin': self.margin,
            'patience': self.patience,
            'normalization_policy': self.normalization_policy.value,
            'cache_images': self.cache_images,
        }

    def skew_grid(self, base_length: int) -> SkewGrid:
        """Return the skew grid for records of base_length raw samples."""
        try:
            return SkewGrid(self.skew_half_width, self.skew_step,
                            self.interp_factor, base_length)
        except ValueError as err:
            raise ConfigurationError(str(err)) from err


def preset_values(preset: Optional[str]) -> Dict[str, Any]:
    """Return the settings of a material preset; {} for None."""
    if preset is None:
        return {}
    if preset not in MATERIAL_PRESETS:
        raise ConfigurationError(
            f"Unknown preset {preset!r}; choose from "
            f"{sorted(MATERIAL_PRESETS)}.")
    return dict(MATERIAL_PRESETS[preset])


def preset_filter(preset: Optional[str], **overrides) -> DatasetFilter:
    """Return the dataset filter of a preset, explicit values winning."""
    values = {key: value for key, value in preset_values(preset).items()
              if key in ('delta_b_range', 'frequency_range', 'temperature',
                         'shape_tags')}
    values.update({key: value for key, value in overrides.items()
                   if value is not None})
    return DatasetFilter(**values)


def preset_split(preset: Optional[str], split: Optional[str] = None,
                 seed: int = 0) -> SplitSpec:
    """Return the split of a preset, an explicit split string winning."""
    text = split or preset_values(preset).get('split', '0.8')
    try:
        return SplitSpec.parse(text, seed)
    except ValueError as err:
        raise ConfigurationError(f"split: {err}") from err
