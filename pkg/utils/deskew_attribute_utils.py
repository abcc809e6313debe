"""Attributes for de-skew objects.

This file serves to reduce redundancies between attribute-checking statements
by defining the attributes each exported object must carry.
"""

from typing import List


def time_series_attributes() -> List[str]:
    """Get the required attributes for a TimeSeries.

    Returns:
        attributes: Attributes for TimeSeries.
    """
    return ['values', 'frequency']


def waveform_record_attributes() -> List[str]:
    """Get the required attributes for a WaveformRecord.

    Returns:
        attributes: Attributes for WaveformRecord.
    """
    return ['b', 'h', 'material', 'temperature', 'dc_bias', 'shape_tag',
            'record_id', 'interp_factor']


def model_params_attributes() -> List[str]:
    """Get the required attributes for ModelParams.

    Returns:
        attributes: Attributes for ModelParams.
    """
    return ['side', 'weights', 'normalization', 'skew_grid', 'zoom_width',
            'margin', 'training_origins', 'version']


def eval_report_attributes() -> List[str]:
    """Get the required attributes for an EvalReport.

    Returns:
        attributes: Attributes for EvalReport.
    """
    return ['rows', 'aggregates']
