"""The deskew_folder_utils file simplifies file location throughout the
project. Corpus directories, model files, reports and plots are all reached
through the functions below instead of rebuilding paths in every script.

A canonical corpus directory holds one material:

    <material>/
        b.csv       N rows x 1024 flux density samples [T]
        h.csv       N rows x 1024 field strength samples [A/m]
        freq.csv    N rows x 1 frequency [Hz]
        temp.csv    optional, N rows x 1 temperature [C]
        bias.csv    optional, N rows x 1 DC bias [A/m]
        shape.csv   optional, N rows x 1 waveform shape tag

Published MagNet folders use other file names; MAGNET_FILENAME_ALIASES maps
them onto the canonical keys so they can be ingested in place.
"""

import contextlib
import os
import tempfile
from os import path
from typing import Dict, Iterator, List, Optional


CANONICAL_FILENAMES: Dict[str, str] = {
    'b': 'b.csv',
    'h': 'h.csv',
    'freq': 'freq.csv',
    'temp': 'temp.csv',
    'bias': 'bias.csv',
    'shape': 'shape.csv',
}

MAGNET_FILENAME_ALIASES: Dict[str, List[str]] = {
    'b': ['B_waveform[T].csv', 'B_Field.csv', 'B_waveform.csv'],
    'h': ['H_waveform[Am-1].csv', 'H_Field.csv', 'H_Waveform.csv'],
    'freq': ['Frequency[Hz].csv', 'Frequency.csv'],
    'temp': ['Temperature[C].csv', 'Temperature.csv'],
    'bias': [],
    'shape': [],
}

__SKEW_ERROR_HISTOGRAM_FILENAME = 'skew_relative_error_histogram.svg'
__LOSS_DEVIATION_SCATTER_FILENAME = 'loss_deviation_by_frequency.svg'
__LOOP_OVERLAY_FILENAME = 'skewed_vs_corrected_loop.svg'


def corpus_file(directory: str, key: str) -> Optional[str]:
    """Return the path of one corpus file, or None when it does not exist.

    The canonical name is tried first, then the MagNet aliases in order.

    Args:
        directory: Corpus directory of one material.
        key: One of the keys of CANONICAL_FILENAMES.
    Returns:
        filepath: Existing file for the key, or None.
    """
    if key not in CANONICAL_FILENAMES:
        raise KeyError(f"Unknown corpus file key {key!r}.")
    for filename in [CANONICAL_FILENAMES[key]] + MAGNET_FILENAME_ALIASES[key]:
        filepath = path.join(directory, filename)
        if path.isfile(filepath):
            return filepath
    return None


def canonical_corpus_file(directory: str, key: str) -> str:
    """Return the canonical path of one corpus file inside directory."""
    return path.join(directory, CANONICAL_FILENAMES[key])


def training_log_file(model_filepath: str) -> str:
    """Return the default training log path next to a model file."""
    return f'{model_filepath}.log'


def skew_error_histogram_file(plots_directory: str) -> str:
    """Return the path of the skew relative-error histogram."""
    return path.join(plots_directory, __SKEW_ERROR_HISTOGRAM_FILENAME)


def loss_deviation_scatter_file(plots_directory: str) -> str:
    """Return the path of the before/after loss deviation scatter plot."""
    return path.join(plots_directory, __LOSS_DEVIATION_SCATTER_FILENAME)


def loop_overlay_file(plots_directory: str) -> str:
    """Return the path of the skewed versus corrected loop overlay."""
    return path.join(plots_directory, __LOOP_OVERLAY_FILENAME)


@contextlib.contextmanager
def atomic_output(filepath: str, mode: str = 'wb') -> Iterator:
    """Open a temporary file next to filepath and move it into place on
    success. On failure the temporary file is removed and filepath is left
    untouched.

    Args:
        filepath: Final destination of the file.
        mode: File mode, 'wb' or 'w'.
    Yields:
        file: Open file object to write to.
    """
    directory = path.dirname(path.abspath(filepath))
    handle, temp_filepath = tempfile.mkstemp(
        dir=directory, prefix='.', suffix='.tmp')
    try:
        newline = '' if 'b' not in mode else None
        with os.fdopen(handle, mode, newline=newline) as file:
            yield file
        os.replace(temp_filepath, filepath)
    except BaseException:
        if path.exists(temp_filepath):
            os.remove(temp_filepath)
        raise


def atomic_write_bytes(filepath: str, data: bytes):
    """Write bytes to filepath atomically."""
    with atomic_output(filepath, 'wb') as file:
        file.write(data)


def atomic_write_text(filepath: str, text: str):
    """Write text to filepath atomically."""
    with atomic_output(filepath, 'w') as file:
        file.write(text)
