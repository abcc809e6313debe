"""Evaluation and sweep reports.

Classes:
    EvalColumns: Column names of evaluation rows.
    EvalReport: Per-sample evaluation rows plus aggregates, exported as a
        structured text file.
    SweepResult: Core loss over a grid of skews with its linear fit.
"""

from __future__ import annotations

import enum
import io
import logging
import math
import os
import sys
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import deskew_attribute_utils
import deskew_folder_utils
from verification_utils import DataFormatError, verify_attributes, \
    verify_filepath

logger = logging.getLogger(__name__)

AGGREGATES_HEADER = '[aggregates]'
ROWS_HEADER = '[rows]'
FLOAT_FORMAT = '%.17g'


class EvalColumns(str, enum.Enum):
    """Columns of an evaluation row. Skews are in interpolated samples,
    losses in W/m^3 and deviations relative to the true loss."""
    ORIGIN_ID = 'origin_id'
    TRUE_SKEW = 'true_skew'
    PREDICTED_SKEW = 'predicted_skew'
    ROUNDED_SKEW = 'rounded_skew'
    SKEW_RELATIVE_ERROR = 'skew_relative_error'
    TRUE_LOSS = 'true_loss'
    SKEWED_LOSS = 'skewed_loss'
    CORRECTED_LOSS = 'corrected_loss'
    DEVIATION_BEFORE = 'deviation_before'
    DEVIATION_AFTER = 'deviation_after'
    FREQUENCY = 'frequency'


def compute_aggregates(rows: pd.DataFrame) -> Dict[str, float]:
    """Summarize evaluation rows.

    Rows whose true loss is zero carry NaN deviations and are left out of
    the deviation means.
    """
    errors = rows[EvalColumns.SKEW_RELATIVE_ERROR.value].to_numpy(
        dtype=np.float64)
    before = np.abs(rows[EvalColumns.DEVIATION_BEFORE.value].to_numpy(
        dtype=np.float64))
    after = np.abs(rows[EvalColumns.DEVIATION_AFTER.value].to_numpy(
        dtype=np.float64))
    has_deviation = np.isfinite(before) & np.isfinite(after)
    return {
        'count': float(len(rows)),
        'mean_skew_relative_error': float(np.mean(errors)),
        'median_skew_relative_error': float(np.median(errors)),
        'p95_skew_relative_error': float(np.percentile(errors, 95)),
        'mean_abs_deviation_before': float(np.mean(before[has_deviation]))
        if has_deviation.any() else math.nan,
        'mean_abs_deviation_after': float(np.mean(after[has_deviation]))
        if has_deviation.any() else math.nan,
    }


class EvalReport:
    """Aggregate class holding the rows of one evaluation run.

    Attributes:
        rows: One row per test sample, columns in EvalColumns order.
        aggregates: Summary values recomputable from the rows.
    """
    rows: pd.DataFrame
    aggregates: Dict[str, float]

    def __init__(self, filepath: str = '',
                 row_list: Optional[Sequence[dict]] = None):
        if filepath:
            self.__import_from_file(filepath)
        else:
            if not row_list:
                raise ValueError("An evaluation report needs at least one row.")
            self.rows = pd.DataFrame(
                list(row_list), columns=[column.value
                                         for column in EvalColumns])
            self.aggregates = compute_aggregates(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def export_to_file(self, filepath: str):
        """Write the report as an [aggregates] block then a [rows] CSV block.

        Args:
            filepath: Destination; must end in '.txt'.
        """
        verify_filepath(filepath, 'txt')
        verify_attributes(self, deskew_attribute_utils.eval_report_attributes(),
                          "EvalReport is missing attributes.")
        lines = [AGGREGATES_HEADER]
        lines.extend(f'{name} = {FLOAT_FORMAT % value}'
                     for name, value in self.aggregates.items())
        lines.append(ROWS_HEADER)
        csv_text = self.rows.to_csv(index=False, float_format=FLOAT_FORMAT,
                                    lineterminator='\n')
        deskew_folder_utils.atomic_write_text(
            filepath, '\n'.join(lines) + '\n' + csv_text)
        logger.info("Wrote evaluation report of %d rows to %s",
                    len(self.rows), filepath)

    def __import_from_file(self, filepath: str):
        verify_filepath(filepath, 'txt')
        with open(filepath, 'r', encoding='utf-8') as file:
            text = file.read()
        head, separator, csv_text = text.partition(ROWS_HEADER + '\n')
        head_lines = head.splitlines()
        if not separator or not head_lines \
                or head_lines[0] != AGGREGATES_HEADER:
            raise DataFormatError(
                f"{filepath} lacks the {AGGREGATES_HEADER} and {ROWS_HEADER} "
                "blocks of an evaluation report.")
        aggregates = {}
        for number, line in enumerate(head_lines[1:], start=2):
            name, equals, value = line.partition(' = ')
            try:
                if not equals:
                    raise ValueError(line)
                aggregates[name] = float(value)
            except ValueError as err:
                raise DataFormatError(
                    f"{filepath}, line {number}: expected 'name = value', "
                    f"got {line!r}.") from err
        try:
            rows = pd.read_csv(io.StringIO(csv_text),
                               dtype={EvalColumns.ORIGIN_ID.value: str},
                               float_precision='round_trip')
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as err:
            raise DataFormatError(f"{filepath}: bad rows block: {err}") \
                from err
        expected = [column.value for column in EvalColumns]
        if list(rows.columns) != expected:
            raise DataFormatError(
                f"{filepath}: row columns {list(rows.columns)} differ from "
                f"{expected}.")
        if rows.empty:
            raise DataFormatError(f"{filepath} holds no evaluation rows.")
        self.rows = rows
        self.aggregates = aggregates

    def column(self, column: EvalColumns) -> np.ndarray:
        """Return one column as an array."""
        return self.rows[column.value].to_numpy()


def get_linear_regression(x: np.ndarray, y: np.ndarray
                          ) -> Tuple[float, float, float]:
    """Fit y = slope * x + intercept by least squares.

    Args:
        x: Abscissae.
        y: Ordinates, same length as x.
    Returns:
        slope: Slope of the line of best fit.
        intercept: Intercept of the line of best fit.
        r_sq: R-squared value of the line of best fit.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("A linear fit needs at least two paired points.")
    lin_reg_object = LinearRegression()
    lin_reg_object.fit(x, y)
    return float(lin_reg_object.coef_[0]), float(lin_reg_object.intercept_), \
        float(lin_reg_object.score(x, y))


class SweepResult:
    """Core loss of one record over a grid of applied skews.

    Attributes:
        rows: Columns index, degrees, seconds and core_loss, one row per
            offset in ascending order.
        slope: Loss change per interpolated sample of skew.
        intercept: Fitted loss at zero skew.
        r_sq: Coefficient of determination of the linear fit.
    """
    rows: pd.DataFrame
    slope: float
    intercept: float
    r_sq: float

    def __init__(self, rows: pd.DataFrame):
        self.rows = rows
        self.slope, self.intercept, self.r_sq = get_linear_regression(
            rows['index'].to_numpy(), rows['core_loss'].to_numpy())

    def export_to_file(self, filepath: str):
        """Write the sweep rows and fit as CSV; the fit goes in a
        trailing comment line."""
        verify_filepath(filepath, 'csv')
        csv_text = self.rows.to_csv(index=False, float_format=FLOAT_FORMAT,
                                    lineterminator='\n')
        deskew_folder_utils.atomic_write_text(
            filepath, csv_text + f'# slope={FLOAT_FORMAT % self.slope} '
            f'intercept={FLOAT_FORMAT % self.intercept} '
            f'r_sq={FLOAT_FORMAT % self.r_sq}\n')


def sweep_rows(indices: Sequence[int], degrees: Sequence[float],
               seconds: Sequence[float], losses: Sequence[float]
               ) -> pd.DataFrame:
    """Assemble sweep rows from parallel columns."""
    return pd.DataFrame({'index': np.asarray(indices, dtype=np.int64),
                         'degrees': np.asarray(degrees, dtype=np.float64),
                         'seconds': np.asarray(seconds, dtype=np.float64),
                         'core_loss': np.asarray(losses, dtype=np.float64)})

