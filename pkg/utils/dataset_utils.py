"""Dataset handling: ingest measurement files, filter by operating
condition, split at the operating-point level and augment records into a
labeled skew grid.

Splitting always happens before augmentation, so no augmented sibling of a
test loop can appear in training.

Classes:
    DatasetFilter: Predicates on operating conditions.
    SplitSpec: Train/test split by ratio or by explicit counts.
    SkewGrid: Grid of artificial skew offsets -n..+n times a step.
    LabeledSample: One augmented loop with its known skew.
    WaveformCorpus: Aggregate class containing a list of WaveformRecord
        objects, exported and imported with pickle.
"""

from __future__ import annotations

import logging
import os
import pickle
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import deskew_attribute_utils
import deskew_folder_utils
import metadata_settings
from verification_utils import (
    DataFormatError,
    verify_attributes,
    verify_filepath
)
from waveform_utils import (
    BhLoop,
    ShapeTag,
    SkewOffset,
    TimeSeries,
    WaveformRecord,
    apply_skew,
    make_loop
)

logger = logging.getLogger(__name__)


class DatasetFilter:
    """Predicates on operating conditions. None means 'any'.

    Attributes:
        shape_tags: Allowed waveform shapes.
        temperature: Exact temperature in celsius.
        dc_bias: Exact DC bias in A/m.
        frequency_range: Inclusive (min, max) frequency in hertz.
        delta_b_range: Inclusive (min, max) peak-to-peak flux density in
            tesla.
        materials: Allowed material identifiers.
    """

    def __init__(self, shape_tags: Optional[Iterable[ShapeTag]] = None,
                 temperature: Optional[float] = None,
                 dc_bias: Optional[float] = None,
                 frequency_range: Optional[Tuple[float, float]] = None,
                 delta_b_range: Optional[Tuple[float, float]] = None,
                 materials: Optional[Iterable[str]] = None):
        self.shape_tags = None if shape_tags is None else frozenset(
            ShapeTag(tag) for tag in shape_tags)
        self.temperature = temperature
        self.dc_bias = dc_bias
        for name, bounds in (('frequency_range', frequency_range),
                             ('delta_b_range', delta_b_range)):
            if bounds is not None and bounds[0] > bounds[1]:
                raise ValueError(
                    f"{name} minimum {bounds[0]} exceeds maximum {bounds[1]}.")
        self.frequency_range = frequency_range
        self.delta_b_range = delta_b_range
        self.materials = None if materials is None else frozenset(materials)

    def matches(self, record: WaveformRecord) -> bool:
        """Return whether a record satisfies every predicate."""
        if self.shape_tags is not None \
                and record.shape_tag not in self.shape_tags:
            return False
        if self.materials is not None and record.material not in self.materials:
            return False
        if self.temperature is not None \
                and record.temperature != self.temperature:
            return False
        if self.dc_bias is not None and record.dc_bias != self.dc_bias:
            return False
        if self.frequency_range is not None and not (
                self.frequency_range[0] <= record.frequency
                <= self.frequency_range[1]):
            return False
        if self.delta_b_range is not None and not (
                self.delta_b_range[0] <= record.peak_to_peak_b
                <= self.delta_b_range[1]):
            return False
        return True


class SplitSpec:
    """Train/test split of operating points.

    Explicit counts take precedence over the ratio when both are given.

    Attributes:
        ratio: Training fraction in (0, 1).
        train_count: Explicit number of training operating points.
        test_count: Explicit number of testing operating points.
        seed: Seed of the shuffle.
    """

    def __init__(self, ratio: float = 0.8, train_count: Optional[int] = None,
                 test_count: Optional[int] = None, seed: int = 0):
        if (train_count is None) != (test_count is None):
            raise ValueError("train_count and test_count must be given "
                             "together.")
        if train_count is not None and (train_count < 0 or test_count < 0):
            raise ValueError("Split counts must be non-negative.")
        if not 0 < ratio < 1:
            raise ValueError(f"Split ratio must lie in (0, 1), got {ratio}.")
        self.ratio = float(ratio)
        self.train_count = train_count
        self.test_count = test_count
        self.seed = int(seed)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> SplitSpec:
        """Parse '1000:197' as counts or '0.8' as a ratio."""
        try:
            if ':' in text:
                train_text, test_text = text.split(':')
                return cls(train_count=int(train_text),
                           test_count=int(test_text), seed=seed)
            return cls(ratio=float(text), seed=seed)
        except ValueError as err:
            raise ValueError(
                f"Split {text!r} is neither 'train:test' counts nor a ratio: "
                f"{err}") from err


class SkewGrid:
    """Grid of artificial skews m*step for m in -n..+n, in interpolated
    sample units of records with base_length L and interp_factor K.

    Attributes:
        half_width: n.
        step: Grid step in interpolated samples.
        interp_factor: K.
        base_length: L.
    """

    def __init__(self, half_width: int = metadata_settings.get_skew_half_width(),
                 step: int = metadata_settings.get_skew_step(),
                 interp_factor: int = metadata_settings.get_interp_factor(),
                 base_length: int = metadata_settings.get_raw_series_length()):
        if half_width < 0 or step < 1 or interp_factor < 1 or base_length < 1:
            raise ValueError(
                f"Invalid skew grid: half_width {half_width}, step {step}, "
                f"interp_factor {interp_factor}, base_length {base_length}.")
        if half_width * step >= interp_factor * base_length:
            raise ValueError(
                f"Skew grid span {half_width}*{step} reaches a full period of "
                f"{interp_factor * base_length} samples.")
        self.half_width = int(half_width)
        self.step = int(step)
        self.interp_factor = int(interp_factor)
        self.base_length = int(base_length)

    def __eq__(self, other) -> bool:
        return isinstance(other, SkewGrid) and self.to_dict() == other.to_dict()

    def __len__(self) -> int:
        return 2 * self.half_width + 1

    def offsets(self) -> List[SkewOffset]:
        """Return the offsets of the grid in ascending order."""
        return [SkewOffset(m * self.step, self.interp_factor,
                           self.base_length)
                for m in range(-self.half_width, self.half_width + 1)]

    def target_scale(self) -> float:
        """Return the half-range n*step used to scale network targets."""
        return float(max(self.half_width * self.step, 1))

    def to_dict(self) -> dict:
        """Return the grid as a plain dictionary."""
        return {'half_width': self.half_width, 'step': self.step,
                'interp_factor': self.interp_factor,
                'base_length': self.base_length}


class LabeledSample:
    """One augmented loop with a known skew.

    The skewed record is built on access from the interpolated source
    record, so a corpus of samples holds each source series only once.

    Attributes:
        source: Interpolated, unskewed record.
        target: Skew applied to the source H series.
        origin_id: Identifier of the source operating point.
    """
    source: WaveformRecord
    target: SkewOffset
    origin_id: str

    def __init__(self, source: WaveformRecord, target: SkewOffset):
        if target.period != len(source.h):
            raise ValueError(
                f"Target grid period {target.period} does not match record "
                f"{source.record_id} of length {len(source.h)}.")
        self.source = source
        self.target = target
        self.origin_id = source.record_id

    @property
    def record(self) -> WaveformRecord:
        """Record with the skewed H series."""
        return self.source.with_h(apply_skew(self.source.h, self.target))

    def loop(self) -> BhLoop:
        """Return the skewed BH loop."""
        return make_loop(self.source.b, apply_skew(self.source.h, self.target))


def __read_table(filepath: str, expected_columns: Optional[int]) -> np.ndarray:
    """Read a headerless numeric CSV into a float64 matrix.

    Cells are first read as text so ragged rows and non-numeric cells can be
    reported with their row index. The numeric conversion of the text is
    exact, so files written with '%.17g' round-trip bit-exactly.
    """
    try:
        frame = pd.read_csv(filepath, header=None, dtype=str)
    except pd.errors.EmptyDataError as err:
        raise DataFormatError(f"{filepath}: file is empty.") from err
    except pd.errors.ParserError as err:
        raise DataFormatError(
            f"{filepath}: row length mismatch ({err}).") from err
    if expected_columns is not None and frame.shape[1] != expected_columns:
        raise DataFormatError(
            f"{filepath}: rows have {frame.shape[1]} values, expected "
            f"{expected_columns}; resample the waveforms to "
            f"{expected_columns} samples per period before ingest.")
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        raise DataFormatError(
            f"{filepath}: row {int(np.argmax(missing))} is shorter than the "
            "others or has an empty cell.")
    numeric = frame.apply(pd.to_numeric, errors='coerce')
    non_numeric = numeric.isna().any(axis=1).to_numpy()
    if non_numeric.any():
        row = int(np.argmax(non_numeric))
        column = int(np.argmax(numeric.iloc[row].isna().to_numpy()))
        raise DataFormatError(
            f"{filepath}: row {row} has a non-numeric cell "
            f"{frame.iat[row, column]!r} in column {column}.")
    values = frame.astype(np.float64).to_numpy()
    non_finite = ~np.isfinite(values).all(axis=1)
    if non_finite.any():
        raise DataFormatError(
            f"{filepath}: row {int(np.argmax(non_finite))} has a non-finite "
            "value.")
    return values


def __read_shape_tags(filepath: str) -> List[ShapeTag]:
    """Read one shape tag per row."""
    try:
        frame = pd.read_csv(filepath, header=None, dtype=str)
    except pd.errors.EmptyDataError as err:
        raise DataFormatError(f"{filepath}: file is empty.") from err
    tags = []
    for row, value in enumerate(frame.iloc[:, 0]):
        try:
            tags.append(ShapeTag(str(value).strip().lower()))
        except ValueError as err:
            raise DataFormatError(
                f"{filepath}: row {row} has unknown shape tag {value!r}; "
                f"expected one of {[tag.value for tag in ShapeTag]}.") from err
    return tags


def ingest(directory: str, material: str = '',
           expected_length: int = metadata_settings.get_raw_series_length()
           ) -> List[WaveformRecord]:
    """Read one material directory into records, one per CSV row.

    The canonical layout is described in deskew_folder_utils; published
    MagNet file names are resolved in place.

    Args:
        directory: Material directory.
        material: Material identifier; defaults to the directory name.
        expected_length: Required samples per B/H row.
    Returns:
        records: Raw records with ids '<material>:<row>'.
    """
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"Corpus directory {directory} does not "
                                "exist.")
    material = material or os.path.basename(os.path.normpath(directory))
    filepaths = {key: deskew_folder_utils.corpus_file(directory, key)
                 for key in deskew_folder_utils.CANONICAL_FILENAMES}
    for key in ('b', 'h', 'freq'):
        if filepaths[key] is None:
            raise DataFormatError(
                f"{directory}: missing required file "
                f"{deskew_folder_utils.CANONICAL_FILENAMES[key]} (or a MagNet "
                "equivalent).")
    b_rows = __read_table(filepaths['b'], expected_length)
    h_rows = __read_table(filepaths['h'], expected_length)
    frequencies = __read_table(filepaths['freq'], 1)[:, 0]
    columns = {'h': h_rows, 'freq': frequencies}
    temperatures = biases = shape_tags = None
    if filepaths['temp'] is not None:
        temperatures = columns['temp'] = __read_table(filepaths['temp'], 1)[:, 0]
    if filepaths['bias'] is not None:
        biases = columns['bias'] = __read_table(filepaths['bias'], 1)[:, 0]
    if filepaths['shape'] is not None:
        shape_tags = columns['shape'] = __read_shape_tags(filepaths['shape'])
    for key, column in columns.items():
        if len(column) != len(b_rows):
            raise DataFormatError(
                f"{filepaths[key]}: {len(column)} rows, but "
                f"{filepaths['b']} has {len(b_rows)}.")
    records = []
    for row in range(len(b_rows)):
        try:
            b = TimeSeries(b_rows[row], frequencies[row])
            h = TimeSeries(h_rows[row], frequencies[row])
        except ValueError as err:
            raise DataFormatError(f"{filepaths['freq']}: row {row}: {err}") \
                from err
        records.append(WaveformRecord(
            b, h, material,
            None if temperatures is None else temperatures[row],
            None if biases is None else biases[row],
            ShapeTag.OTHER if shape_tags is None else shape_tags[row],
            record_id=f'{material}:{row}'))
    logger.info("Ingested %d records of %s from %s", len(records), material,
                directory)
    return records


def write_canonical(records: Sequence[WaveformRecord], directory: str):
    """Write raw records in the canonical corpus layout.

    Floats are written with 17 significant digits so ingest reproduces them
    bit-exactly. temp.csv and bias.csv are written only when every record
    has the value.

    Args:
        records: Raw records of equal length.
        directory: Target directory, created when missing.
    """
    if not records:
        raise ValueError("Cannot write an empty corpus.")
    os.makedirs(directory, exist_ok=True)
    tables = {
        'b': pd.DataFrame([record.b.values for record in records]),
        'h': pd.DataFrame([record.h.values for record in records]),
        'freq': pd.DataFrame([record.frequency for record in records]),
        'shape': pd.DataFrame([record.shape_tag.value for record in records]),
    }
    if all(record.temperature is not None for record in records):
        tables['temp'] = pd.DataFrame(
            [record.temperature for record in records])
    if all(record.dc_bias is not None for record in records):
        tables['bias'] = pd.DataFrame([record.dc_bias for record in records])
    for key, table in tables.items():
        filepath = deskew_folder_utils.canonical_corpus_file(directory, key)
        with deskew_folder_utils.atomic_output(filepath, 'w') as file:
            table.to_csv(file, header=False, index=False, float_format='%.17g',
                         lineterminator='\n')


def read_series(filepath: str, frequency: float) -> TimeSeries:
    """Read one waveform period from a single-row or single-column CSV.

    Args:
        filepath: Headerless numeric CSV.
        frequency: Fundamental frequency in hertz.
    Returns:
        series: The samples in file order.
    """
    if not os.path.isfile(filepath):
        raise FileNotFoundError(f"Waveform file {filepath} does not exist.")
    values = __read_table(filepath, None)
    if values.shape[0] == 1:
        values = values[0]
    elif values.shape[1] == 1:
        values = values[:, 0]
    else:
        raise DataFormatError(
            f"{filepath}: expected one row or one column of samples, got "
            f"{values.shape[0]} rows of {values.shape[1]}.")
    try:
        return TimeSeries(values, frequency)
    except ValueError as err:
        raise DataFormatError(f"{filepath}: {err}") from err


def write_series(series: TimeSeries, filepath: str):
    """Write a series as one CSV row with 17 significant digits."""
    verify_filepath(filepath, 'csv')
    with deskew_folder_utils.atomic_output(filepath, 'w') as file:
        pd.DataFrame([series.values]).to_csv(
            file, header=False, index=False, float_format='%.17g',
            lineterminator='\n')


def filter_records(records: Sequence[WaveformRecord],
                   dataset_filter: DatasetFilter) -> List[WaveformRecord]:
    """Return the records matching every predicate, in their order."""
    return [record for record in records if dataset_filter.matches(record)]


def split_records(records: Sequence[WaveformRecord], split_spec: SplitSpec
                  ) -> Tuple[List[WaveformRecord], List[WaveformRecord]]:
    """Split records into train and test sets by operating point.

    Records sharing a record_id stay on the same side. The shuffle is seeded
    and each side keeps the original record order.

    Args:
        records: Non-empty corpus.
        split_spec: Ratio or explicit counts of operating points.
    Returns:
        train: Training records.
        test: Testing records.
    """
    if not records:
        raise ValueError("Cannot split an empty corpus.")
    origins = list(dict.fromkeys(record.record_id for record in records))
    if split_spec.train_count is not None:
        if split_spec.train_count + split_spec.test_count != len(origins):
            raise ValueError(
                f"Split counts {split_spec.train_count}:"
                f"{split_spec.test_count} do not sum to the {len(origins)} "
                "operating points of the corpus.")
        train_size = split_spec.train_count
    else:
        if len(origins) < 2:
            raise ValueError("A ratio split needs at least two operating "
                             "points.")
        train_size = min(max(int(round(split_spec.ratio * len(origins))), 1),
                         len(origins) - 1)
    order = np.random.default_rng(split_spec.seed).permutation(len(origins))
    train_origins = {origins[i] for i in order[:train_size]}
    train = [record for record in records if record.record_id in train_origins]
    test = [record for record in records
            if record.record_id not in train_origins]
    logger.info("Split %d operating points into %d train / %d test",
                len(origins), train_size, len(origins) - train_size)
    return train, test


def interpolate_records(records: Sequence[WaveformRecord], k: int
                        ) -> List[WaveformRecord]:
    """Return the records expanded k times."""
    return [record.interpolated(k) for record in records]


def augment_record(record: WaveformRecord, grid: SkewGrid
                   ) -> List[LabeledSample]:
    """Expand one interpolated record into 2n+1 samples with known skew.

    The sample with zero skew is the original loop.

    Args:
        record: Record interpolated by grid.interp_factor.
        grid: Skew grid.
    Returns:
        samples: One sample per grid offset in ascending order.
    """
    if record.interp_factor != grid.interp_factor \
            or record.base_length != grid.base_length:
        raise ValueError(
            f"Record {record.record_id} has L={record.base_length}, "
            f"K={record.interp_factor} but the grid expects "
            f"L={grid.base_length}, K={grid.interp_factor}.")
    return [LabeledSample(record, offset) for offset in grid.offsets()]


def augment_records(records: Sequence[WaveformRecord], grid: SkewGrid
                    ) -> List[LabeledSample]:
    """Augment every record; samples stay grouped by record in order."""
    samples = []
    for record in records:
        samples.extend(augment_record(record, grid))
    return samples


class WaveformCorpus:
    """Aggregate class containing a list of WaveformRecord objects.

    The WaveformCorpus class stores a list of records so a whole corpus can
    be saved as one object using the pickle module.

    Attributes:
        name: Name of the corpus, usually the material.
        record_list: A list of WaveformRecord objects.
    """
    name: str
    record_list: List[WaveformRecord]

    def __init__(self, filepath: str = '', name: str = '',
                 record_list: Optional[List[WaveformRecord]] = None):
        if filepath:
            self.__import_from_file(filepath)
        else:
            self.name = name
            self.record_list = list(record_list or [])

    def __eq__(self, other) -> bool:
        return isinstance(other, WaveformCorpus) and self.name == other.name \
            and self.record_list == other.record_list

    def __len__(self) -> int:
        return len(self.record_list)

    def __check_records(self, record_list, source: str):
        if not isinstance(record_list, list):
            raise TypeError(f"{source} record_list is not type List.")
        for i, record in enumerate(record_list):
            if not isinstance(record, WaveformRecord):
                raise TypeError(
                    f"Object at index {i} in list record_list is not a "
                    "WaveformRecord object.")
            verify_attributes(
                record, deskew_attribute_utils.waveform_record_attributes(),
                f"Object at index {i} in list record_list is missing "
                "WaveformRecord attributes.")
            if not isinstance(record.b, TimeSeries) \
                    or not isinstance(record.h, TimeSeries):
                raise TypeError(
                    f"Object at index {i} in list record_list; attributes b "
                    "and h are not type TimeSeries.")
            for name in ('b', 'h'):
                verify_attributes(
                    getattr(record, name),
                    deskew_attribute_utils.time_series_attributes(),
                    f"Object at index {i} in list record_list; attribute "
                    f"{name} is missing TimeSeries attributes.")
            if not record.record_id:
                raise ValueError(
                    f"Object at index {i} in list record_list has an empty "
                    "record_id.")

    def export_to_file(self, filepath: str):
        """Function to export WaveformCorpus object using pickle.

        Every record is checked first so the exported file is a complete
        corpus. The file is written atomically.

        Args:
            filepath: Location where this object should be exported to. The
                path must point to a '.pkl' file, otherwise the code will
                throw an error.
        """
        verify_filepath(filepath, 'pkl')
        if not isinstance(self.name, str):
            raise TypeError("Attribute name is not type str.")
        if not self.record_list:
            raise ValueError("Cannot export an empty corpus.")
        self.__check_records(self.record_list, 'Exported')
        payload = pickle.dumps((self.name, self.record_list),
                               protocol=pickle.HIGHEST_PROTOCOL)
        deskew_folder_utils.atomic_write_bytes(filepath, payload)

    def __import_from_file(self, filepath: str):
        """Function to import WaveformCorpus object using pickle.

        Args:
            filepath: Location where this object should be imported from. The
                path must point to a '.pkl' file, otherwise the code will
                throw an error.
        """
        verify_filepath(filepath, 'pkl')
        with open(filepath, 'rb') as file:
            try:
                imported = pickle.load(file)
            except (pickle.UnpicklingError, EOFError) as err:
                raise DataFormatError(
                    f"{filepath} is not a corpus file.") from err
        if not isinstance(imported, tuple) or len(imported) != 2:
            raise TypeError(f"{filepath} does not hold a (name, records) "
                            "pair.")
        imported_name, imported_record_list = imported
        if not isinstance(imported_name, str):
            raise TypeError("imported_name is not type str.")
        self.__check_records(imported_record_list, 'Imported')
        self.name = imported_name
        self.record_list = imported_record_list
