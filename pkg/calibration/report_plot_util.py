"""SVG plots of evaluation reports, loop corrections and loss sweeps.

Plots are written with a fixed hash salt and no date so that the same input
gives the same bytes.
"""

from __future__ import annotations

import logging
import os
import sys
from typing import List, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import deskew_folder_utils
from report_utils import EvalColumns, EvalReport, SweepResult
from verification_utils import verify_filepath
from waveform_utils import WaveformRecord

logger = logging.getLogger(__name__)

plt.rcParams.update({
    'svg.hashsalt': 'bh-deskew',
    'font.size': 9,
    'axes.grid': True,
    'grid.alpha': 0.3,
})

BEFORE_COLOR = 'tab:red'
AFTER_COLOR = 'tab:blue'
TRUE_COLOR = 'black'


def _save(fig, filepath: str):
    try:
        verify_filepath(filepath, 'svg')
        with deskew_folder_utils.atomic_output(filepath, 'wb') as file:
            fig.savefig(file, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.info("Wrote plot %s", filepath)


def plot_skew_error_histogram(report: EvalReport, filepath: str):
    """Histogram of the per-sample skew relative errors in percent."""
    errors = 100 * report.column(EvalColumns.SKEW_RELATIVE_ERROR) \
        .astype(np.float64)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    ax.hist(errors, bins=min(50, max(len(errors) // 5, 5)),
            color=AFTER_COLOR)
    ax.axvline(float(np.mean(errors)), color=TRUE_COLOR, linestyle='--',
               label=f'mean {np.mean(errors):.2f}%')
    ax.set_xlabel('skew relative error [%]')
    ax.set_ylabel('samples')
    ax.legend()
    _save(fig, filepath)


def plot_loss_deviation_scatter(report: EvalReport, filepath: str):
    """Loss deviation before and after correction against frequency."""
    frequency = report.column(EvalColumns.FREQUENCY).astype(np.float64) / 1e3
    before = 100 * report.column(EvalColumns.DEVIATION_BEFORE) \
        .astype(np.float64)
    after = 100 * report.column(EvalColumns.DEVIATION_AFTER) \
        .astype(np.float64)
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    ax.scatter(frequency, before, s=6, color=BEFORE_COLOR,
               label='skewed')
    ax.scatter(frequency, after, s=6, color=AFTER_COLOR, label='corrected')
    ax.axhline(0.0, color=TRUE_COLOR, linewidth=0.8)
    ax.set_xscale('log')
    ax.set_xlabel('frequency [kHz]')
    ax.set_ylabel('core loss deviation [%]')
    ax.legend()
    _save(fig, filepath)


def plot_loop_overlay(true_record: WaveformRecord, skewed: WaveformRecord,
                      corrected: WaveformRecord, filepath: str):
    """Overlay the true, skewed and corrected BH loops of one sample."""
    fig, ax = plt.subplots(figsize=(4.5, 4), constrained_layout=True)
    for record, color, label in ((true_record, TRUE_COLOR, 'true'),
                                 (skewed, BEFORE_COLOR, 'skewed'),
                                 (corrected, AFTER_COLOR, 'corrected')):
        ax.plot(np.append(record.h.values, record.h.values[0]),
                np.append(record.b.values, record.b.values[0]),
                color=color, linewidth=0.9, label=label)
    ax.set_xlabel('H [A/m]')
    ax.set_ylabel('B [T]')
    ax.set_title(true_record.record_id)
    ax.legend()
    _save(fig, filepath)


def plot_sweep(sweep: SweepResult, filepath: str):
    """Core loss against applied skew with its linear fit."""
    degrees = sweep.rows['degrees'].to_numpy()
    index = sweep.rows['index'].to_numpy()
    fig, ax = plt.subplots(figsize=(5, 3.5), constrained_layout=True)
    ax.plot(degrees, sweep.rows['core_loss'].to_numpy() / 1e3, 'o',
            markersize=3, color=AFTER_COLOR, label='measured')
    ax.plot(degrees, (sweep.slope * index + sweep.intercept) / 1e3,
            color=TRUE_COLOR, linewidth=0.8,
            label=f'linear fit, R$^2$={sweep.r_sq:.5f}')
    ax.set_xlabel('skew [deg]')
    ax.set_ylabel('core loss [kW/m$^3$]')
    ax.legend()
    _save(fig, filepath)


def worst_row(report: EvalReport) -> int:
    """Return the row position with the largest loss deviation before
    correction; NaN deviations are skipped."""
    before = np.abs(report.column(EvalColumns.DEVIATION_BEFORE)
                    .astype(np.float64))
    if not np.isfinite(before).any():
        return 0
    return int(np.nanargmax(before))


def export_evaluation_plots(report: EvalReport, plots_directory: str,
                            overlay: Optional[tuple] = None) -> List[str]:
    """Write the evaluation plots into a directory.

    Args:
        report: Evaluation report.
        plots_directory: Existing or new output directory.
        overlay: Optional (true, skewed, corrected) records of one sample.
    Returns:
        filepaths: Written plot files.
    """
    os.makedirs(plots_directory, exist_ok=True)
    filepaths = [
        deskew_folder_utils.skew_error_histogram_file(plots_directory),
        deskew_folder_utils.loss_deviation_scatter_file(plots_directory),
    ]
    plot_skew_error_histogram(report, filepaths[0])
    plot_loss_deviation_scatter(report, filepaths[1])
    if overlay is not None:
        filepaths.append(deskew_folder_utils.loop_overlay_file(
            plots_directory))
        plot_loop_overlay(*overlay, filepaths[-1])
    return filepaths
