"""Rendering of BH loops into the network input.

A loop becomes a composite S x S grayscale image: the left half holds the
whole loop, the right half a magnified window around the vertex of minimal
H. Four raw-scale scalars (h_min, h_max, b_min, b_max) travel alongside the
image because normalization removes the loop's physical scale.

Lines are drawn with an integer Bresenham rule evaluated in closed form over
all segments at once, so loops interpolated to a million vertices render
without a Python loop per segment.

Global variables:
    BACKGROUND: Pixel value of empty space.
    CURVE: Pixel value of the drawn loop.

Classes:
    LoopImage: Composite pixels, scalars and the empty-zoom flag.
"""

from __future__ import annotations

import concurrent.futures
import logging
import os
import re
import sys
from typing import Optional, Sequence, Tuple

import numpy as np

module_path = os.path.abspath(os.path.join(
    os.path.dirname(__file__), '..', 'utils'))
if module_path not in sys.path:
    sys.path.append(module_path)

import deskew_folder_utils
import metadata_settings
from verification_utils import (
    DataFormatError,
    DegenerateLoopError,
    verify_filepath
)
from waveform_utils import BhLoop

logger = logging.getLogger(__name__)

BACKGROUND = 0
CURVE = 255
SIDE_DIVISOR = 8
SCALAR_COUNT = 4
PGM_HEADER = re.compile(rb'P5\s+(\d+)\s+(\d+)\s+(\d+)\s')


class LoopImage:
    """Network input for one loop.

    Attributes:
        pixels: S x S uint8 grid, row 0 at the top. Columns [0, S/2) hold the
            global view, columns [S/2, S) the zoom view.
        scalars: (h_min, h_max, b_min, b_max) of the source loop.
        zoom_empty: True when no part of the loop fell inside the zoom
            window.
    """
    pixels: np.ndarray
    scalars: np.ndarray
    zoom_empty: bool

    def __init__(self, pixels: np.ndarray, scalars: Sequence[float],
                 zoom_empty: bool = False):
        pixels = np.asarray(pixels)
        if pixels.ndim != 2 or pixels.shape[0] != pixels.shape[1] \
                or pixels.dtype != np.uint8:
            raise ValueError(
                f"Pixels must be a square uint8 grid, got {pixels.shape} "
                f"{pixels.dtype}.")
        check_side(pixels.shape[0])
        self.pixels = pixels
        self.scalars = np.asarray(scalars, dtype=np.float64)
        if self.scalars.shape != (SCALAR_COUNT,):
            raise ValueError(f"Expected {SCALAR_COUNT} scalars, got "
                             f"{self.scalars.shape}.")
        self.zoom_empty = bool(zoom_empty)

    def __eq__(self, other) -> bool:
        return isinstance(other, LoopImage) \
            and np.array_equal(self.pixels, other.pixels) \
            and np.array_equal(self.scalars, other.scalars) \
            and self.zoom_empty == other.zoom_empty

    @property
    def side(self) -> int:
        """Image side S in pixels."""
        return self.pixels.shape[0]

    def global_panel(self) -> np.ndarray:
        """Return the left half holding the whole loop."""
        return self.pixels[:, :self.side // 2]

    def zoom_panel(self) -> np.ndarray:
        """Return the right half holding the zoom window."""
        return self.pixels[:, self.side // 2:]

    def export_to_pgm(self, filepath: str):
        """Write the pixels as a binary PGM (P5, maxval 255) file.

        Args:
            filepath: Location of the image. The path must point to a '.pgm'
                file, otherwise the code will throw an error.
        """
        verify_filepath(filepath, 'pgm')
        header = f'P5\n{self.side} {self.side}\n255\n'.encode('ascii')
        deskew_folder_utils.atomic_write_bytes(
            filepath, header + self.pixels.tobytes())


def check_side(side: int):
    """Raise ValueError unless side is a positive multiple of 8."""
    if int(side) != side or side < SIDE_DIVISOR or side % SIDE_DIVISOR:
        raise ValueError(
            f"Image side must be a positive multiple of {SIDE_DIVISOR}, got "
            f"{side}.")


def read_pgm(filepath: str) -> np.ndarray:
    """Read a binary PGM file written by LoopImage.export_to_pgm.

    Returns:
        pixels: uint8 grid of shape (height, width).
    """
    verify_filepath(filepath, 'pgm')
    with open(filepath, 'rb') as file:
        data = file.read()
    match = PGM_HEADER.match(data)
    if match is None:
        raise DataFormatError(f"{filepath} is not a binary PGM file.")
    width, height, maxval = (int(group) for group in match.groups())
    if maxval != 255:
        raise DataFormatError(f"{filepath} has maxval {maxval}, expected "
                              "255.")
    raster = data[match.end():]
    if len(raster) != width * height:
        raise DataFormatError(
            f"{filepath} holds {len(raster)} pixel bytes, expected "
            f"{width * height}.")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def loop_scalars(loop: BhLoop) -> np.ndarray:
    """Return the four raw-scale extrema (h_min, h_max, b_min, b_max)."""
    return np.array(loop.extrema(), dtype=np.float64)


def normalize_loop(loop: BhLoop,
                   margin: float = metadata_settings.get_normalization_margin()
                   ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map the loop onto the unit square, each axis scaled independently.

    [h_min, h_max] maps onto [margin, 1 - margin] and likewise for B. An axis
    with zero extent is placed at 0.5.

    Args:
        loop: Loop to normalize.
        margin: Margin kept on each side of the unit square.
    Returns:
        u: Normalized H coordinates.
        v: Normalized B coordinates.
        scalars: (h_min, h_max, b_min, b_max).
    """
    if not 0 <= margin < 0.5:
        raise ValueError(f"Margin must lie in [0, 0.5), got {margin}.")
    if loop.is_degenerate:
        raise DegenerateLoopError(
            "Loop has zero extent on both axes and cannot be normalized.")
    scalars = loop_scalars(loop)
    axes = []
    for values, low, high in ((loop.h, scalars[0], scalars[1]),
                              (loop.b, scalars[2], scalars[3])):
        if high == low:
            axes.append(np.full(values.shape, 0.5))
        else:
            axes.append(margin + (1 - 2 * margin) * (values - low)
                        / (high - low))
    return axes[0], axes[1], scalars


def zoom_origin(u: np.ndarray, v: np.ndarray,
                width: float = metadata_settings.get_zoom_width()
                ) -> Tuple[float, float]:
    """Return the lower-left corner of the zoom window.

    The window is centered on the vertex of minimal H, ties broken by minimal
    B and then by lowest index, and clamped inside the unit square.

    Args:
        u: Normalized H coordinates.
        v: Normalized B coordinates.
        width: Window side in normalized units.
    Returns:
        x0, y0: Corner of the window.
    """
    if not 0 < width <= 1:
        raise ValueError(f"Zoom width must lie in (0, 1], got {width}.")
    center = np.lexsort((np.arange(u.size), v, u))[0]
    x0 = float(np.clip(u[center] - width / 2, 0.0, 1.0 - width))
    y0 = float(np.clip(v[center] - width / 2, 0.0, 1.0 - width))
    return x0, y0


def clip_segments(x0: np.ndarray, y0: np.ndarray, x1: np.ndarray,
                  y1: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Clip segments to the unit square (Liang-Barsky).

    Endpoints already inside the square are returned unchanged, bit for bit.

    Returns:
        keep: Mask of segments that intersect the square.
        x0, y0, x1, y1: Clipped endpoints of the kept segments.
    """
    dx = x1 - x0
    dy = y1 - y0
    t_enter = np.zeros(x0.shape)
    t_exit = np.ones(x0.shape)
    keep = np.ones(x0.shape, dtype=bool)
    with np.errstate(divide='ignore', invalid='ignore'):
        for p, q in ((-dx, x0), (dx, 1.0 - x0), (-dy, y0), (dy, 1.0 - y0)):
            parallel = p == 0
            keep &= ~(parallel & (q < 0))
            ratio = q / p
            entering = ~parallel & (p < 0)
            leaving = ~parallel & (p > 0)
            t_enter = np.where(entering, np.maximum(t_enter, ratio), t_enter)
            t_exit = np.where(leaving, np.minimum(t_exit, ratio), t_exit)
    keep &= t_enter <= t_exit
    t_enter, t_exit = t_enter[keep], t_exit[keep]
    x0, y0, dx, dy = x0[keep], y0[keep], dx[keep], dy[keep]
    start_x = np.where(t_enter == 0, x0, x0 + t_enter * dx)
    start_y = np.where(t_enter == 0, y0, y0 + t_enter * dy)
    end_x = np.where(t_exit == 1, x1[keep], x0 + t_exit * dx)
    end_y = np.where(t_exit == 1, y1[keep], y0 + t_exit * dy)
    return keep, start_x, start_y, end_x, end_y


def to_pixels(u: np.ndarray, v: np.ndarray, width: int, height: int
              ) -> Tuple[np.ndarray, np.ndarray]:
    """Map unit-square coordinates onto (column, row) pixel indices.

    Row 0 is the top of the panel, so B grows upwards.
    """
    columns = np.clip(np.floor(u * width), 0, width - 1).astype(np.int64)
    rows = height - 1 - np.clip(np.floor(v * height), 0,
                                height - 1).astype(np.int64)
    return columns, rows


def bresenham_segments(c0: np.ndarray, r0: np.ndarray, c1: np.ndarray,
                       r1: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return every pixel of the Bresenham lines from (c0, r0) to (c1, r1).

    The pixel at major-axis step t lies at minor offset
    floor((2*t*d_minor + d_major - 1) / (2*d_major)) from the start, which is
    exactly what the incremental error loop produces; ties round toward the
    start point.

    Returns:
        columns, rows: Concatenated pixel coordinates, endpoints included.
    """
    dc = c1 - c0
    dr = r1 - r0
    d_major = np.maximum(np.abs(dc), np.abs(dr))
    d_minor = np.minimum(np.abs(dc), np.abs(dr))
    column_major = np.abs(dc) >= np.abs(dr)
    counts = d_major + 1
    starts = np.cumsum(counts) - counts
    segment = np.repeat(np.arange(dc.size), counts)
    t = np.arange(int(counts.sum())) - starts[segment]
    major = d_major[segment]
    minor = (2 * t * d_minor[segment] + major - 1) \
        // (2 * np.maximum(major, 1))
    minor = np.where(major == 0, 0, minor)
    columns = c0[segment] + np.sign(dc)[segment] * np.where(
        column_major[segment], t, minor)
    rows = r0[segment] + np.sign(dr)[segment] * np.where(
        column_major[segment], minor, t)
    return columns, rows


def _draw_closed_polyline(panel: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Draw the closed polyline through (u, v) onto panel."""
    height, width = panel.shape
    columns, rows = to_pixels(u, v, width, height)
    changed = np.ones(columns.size, dtype=bool)
    changed[1:] = (np.diff(columns) != 0) | (np.diff(rows) != 0)
    columns, rows = columns[changed], rows[changed]
    pixel_columns, pixel_rows = bresenham_segments(
        columns, rows, np.roll(columns, -1), np.roll(rows, -1))
    panel[pixel_rows, pixel_columns] = CURVE


def _draw_zoom(panel: np.ndarray, u: np.ndarray, v: np.ndarray,
               x0: float, y0: float, width: float) -> bool:
    """Draw the part of the closed polyline inside the zoom window.

    Returns:
        drawn: False when the window holds no part of the loop.
    """
    height, panel_width = panel.shape
    zoom_u = (u - x0) / width
    zoom_v = (v - y0) / width
    keep, start_u, start_v, end_u, end_v = clip_segments(
        zoom_u, zoom_v, np.roll(zoom_u, -1), np.roll(zoom_v, -1))
    if not keep.any():
        return False
    start_columns, start_rows = to_pixels(start_u, start_v, panel_width,
                                          height)
    end_columns, end_rows = to_pixels(end_u, end_v, panel_width, height)
    pixel_columns, pixel_rows = bresenham_segments(
        start_columns, start_rows, end_columns, end_rows)
    panel[pixel_rows, pixel_columns] = CURVE
    return True


def render_composite(loop: BhLoop, side: int = metadata_settings.get_image_side(),
                     zoom_width: float = metadata_settings.get_zoom_width(),
                     margin: float = metadata_settings.get_normalization_margin()
                     ) -> LoopImage:
    """Render a loop into its composite image and scalars.

    Args:
        loop: Loop to render.
        side: Image side S, a multiple of 8.
        zoom_width: Side of the zoom window in normalized units.
        margin: Normalization margin.
    Returns:
        image: Composite image; byte-identical for identical inputs.
    """
    check_side(side)
    u, v, scalars = normalize_loop(loop, margin)
    x0, y0 = zoom_origin(u, v, zoom_width)
    pixels = np.full((side, side), BACKGROUND, dtype=np.uint8)
    half = side // 2
    _draw_closed_polyline(pixels[:, :half], u, v)
    drawn = _draw_zoom(pixels[:, half:], u, v, x0, y0, zoom_width)
    if not drawn:
        logger.warning("Zoom window at (%.3f, %.3f) holds no part of the "
                       "loop; zoom panel left blank", x0, y0)
    return LoopImage(pixels, scalars, zoom_empty=not drawn)


def render_loops(loops: Sequence[BhLoop],
                 side: int = metadata_settings.get_image_side(),
                 zoom_width: float = metadata_settings.get_zoom_width(),
                 margin: float = metadata_settings.get_normalization_margin(),
                 thread_cap: Optional[int] = None
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """Render many loops into stacked arrays.

    Output order follows input order whatever the thread count.

    Args:
        loops: Loops to render.
        side: Image side S.
        zoom_width: Zoom window side.
        margin: Normalization margin.
        thread_cap: Worker threads; 0 renders on the calling thread. Defaults
            to the environment setting.
    Returns:
        images: uint8 array of shape (N, S, S).
        scalars: float64 array of shape (N, 4).
    """
    check_side(side)
    if thread_cap is None:
        thread_cap = metadata_settings.get_thread_cap()
    images = np.empty((len(loops), side, side), dtype=np.uint8)
    scalars = np.empty((len(loops), SCALAR_COUNT), dtype=np.float64)

    def render_one(index: int):
        image = render_composite(loops[index], side, zoom_width, margin)
        images[index] = image.pixels
        scalars[index] = image.scalars

    if thread_cap > 0 and len(loops) > 1:
        with concurrent.futures.ThreadPoolExecutor(thread_cap) as executor:
            list(executor.map(render_one, range(len(loops))))
    else:
        for index in range(len(loops)):
            render_one(index)
    return images, scalars
