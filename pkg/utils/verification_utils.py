"""Verification functions to test the correctness of filepaths and objects
before export and import methods in all other util files.

This file serves to reduce redundancies between path-checking and
attribute-checking statements by defining common verification methods. It
also defines the exceptions shared by the whole repository, each derived
from the builtin a caller would expect to catch.

Classes:
    DataFormatError: Input file or array does not follow the expected layout.
    DegenerateLoopError: Loop has no extent to normalize or render.
    ResolutionMismatchError: Record resolution differs from the model's.
    ArchitectureMismatchError: Model architecture differs from the pipeline's.
    ModelFormatError: Model file is corrupt, truncated or of another version.
    LeakageError: Evaluation samples overlap the model's training origins.
    ConfigurationError: A configuration value is outside its allowed range.
    NonFiniteError: A computation produced NaN or infinity.
"""

from os import path
from typing import Any, List

import numpy as np


class DataFormatError(ValueError):
    """Raised when input data does not follow the expected layout."""


class DegenerateLoopError(ValueError):
    """Raised when a loop has zero extent on both axes."""


class ResolutionMismatchError(ValueError):
    """Raised when a record is not at the resolution a model expects."""


class ArchitectureMismatchError(ValueError):
    """Raised when a model's architecture differs from the requested one."""


class ModelFormatError(ValueError):
    """Raised when a model file cannot be decoded."""


class LeakageError(ValueError):
    """Raised when evaluation data shares origins with training data."""


class ConfigurationError(ValueError):
    """Raised when a configuration value is invalid."""


class NonFiniteError(ArithmeticError):
    """Raised when a computation produces NaN or infinity."""


def verify_filepath(filepath: str, filetype_extension: str):
    """Determine that the given filepath is a valid and working path with the
    specified filetype extension.

    Args:
        filepath: Filepath to check.
        filetype_extension: Filetype extension to check.
    """
    if not path.exists(path.dirname(path.abspath(filepath))):
        raise FileNotFoundError(
            f"The given filepath {filepath} is not a valid filepath.")
    if not filepath.endswith(f'.{filetype_extension}'):
        raise ValueError(
            f"Filepath {filepath} does not point to a .{filetype_extension} "
            "file.")


def verify_attributes(obj: Any, attribute_list: List[Any], message: str = ''):
    """Determine that the given object contains all attributes in the manually
    defined list of attributes.

    Args:
        obj: Object to check if it contains the defined attributes.
        attribute_list: List of attributes to check if it exists in obj.
        message: Message to display when the given object does not contain all
            attributes in attribute_list.
    """
    if not all((hasattr(obj, x) for x in attribute_list)):
        if message:
            raise AttributeError(message)
        raise AttributeError


def verify_finite(values: np.ndarray, what: str):
    """Raise NonFiniteError if any entry of values is NaN or infinite.

    Args:
        values: Array to check.
        what: Description of the array used in the error message.
    """
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"Non-finite value in {what}.")
