"""Initializes global variables throughout the de-skew process."""

import os
import warnings

# Number of samples per period in dataset records. MagNet stores 1024.
__RAW_SERIES_LENGTH = 1024

# Linear interpolation factor applied before skewing.
__INTERP_FACTOR = 1000

# Skew grid: offsets -n..+n times the step, step in interpolated indices.
__SKEW_HALF_WIDTH = 20
__SKEW_STEP = 1000

# Rasterization settings.
__IMAGE_SIDE = 256
__ZOOM_WIDTH = 0.2
__NORMALIZATION_MARGIN = 0.04

# Environment variables.
__THREADS_ENV_VAR = 'BH_DESKEW_THREADS'
__SLOW_TESTS_ENV_VAR = 'BH_DESKEW_SLOW_TESTS'


def get_raw_series_length() -> int:
    """Return the number of samples per period of a raw dataset record."""
    return __RAW_SERIES_LENGTH


def get_interp_factor() -> int:
    """Return the default periodic interpolation factor."""
    return __INTERP_FACTOR


def get_skew_half_width() -> int:
    """Return the default half-width n of the skew grid."""
    return __SKEW_HALF_WIDTH


def get_skew_step() -> int:
    """Return the default skew grid step in interpolated indices."""
    return __SKEW_STEP


def get_image_side() -> int:
    """Return the default side of the composite loop image in pixels."""
    return __IMAGE_SIDE


def get_zoom_width() -> float:
    """Return the default side of the zoom window in normalized units."""
    return __ZOOM_WIDTH


def get_normalization_margin() -> float:
    """Return the margin kept on each side of the normalized unit square."""
    return __NORMALIZATION_MARGIN


def get_threads_env_var() -> str:
    """Return the name of the environment variable capping parallelism."""
    return __THREADS_ENV_VAR


def get_thread_cap() -> int:
    """Return the worker thread cap read from the environment.

    0 means single-threaded reference mode, which is also the default.
    Invalid values fall back to 0 with a warning.
    """
    raw_value = os.environ.get(__THREADS_ENV_VAR, '').strip()
    if not raw_value:
        return 0
    try:
        thread_cap = int(raw_value)
    except ValueError:
        warnings.warn(f"{__THREADS_ENV_VAR}={raw_value!r} is not an integer; "
                      "running single-threaded.")
        return 0
    if thread_cap < 0:
        warnings.warn(f"{__THREADS_ENV_VAR}={thread_cap} is negative; "
                      "running single-threaded.")
        return 0
    return thread_cap


def slow_tests_enabled() -> bool:
    """Return whether the long-running desk-scale tests should run."""
    return os.environ.get(__SLOW_TESTS_ENV_VAR, '').strip() not in (
        '', '0', 'false', 'False')
