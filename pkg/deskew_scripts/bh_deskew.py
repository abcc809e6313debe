"""Command-line entry point for BH-loop skew detection and correction.

Subcommands:
    ingest: Read a measurement directory into a corpus file.
    synth: Generate a synthetic corpus.
    render: Write the composite network input of one record as PGM.
    train: Filter, split, augment and train a model.
    finetune: Continue training a model on another corpus.
    predict: Print the skew of one measured loop.
    correct: Remove the skew of one measured loop and report the losses.
    evaluate: Evaluate a model on held-out records and plot the results.
    sweep: Core loss of one record over a grid of applied skews.

Exit codes: 0 success, 1 usage or configuration error, 2 data or file format
error, 3 numeric failure. The environment variable BH_DESKEW_THREADS caps
the worker threads (0, the default, runs single-threaded).
"""

import argparse
import logging
import math
import os
import sys
from typing import Dict, List, Optional, Sequence

for folder in ('utils', 'calibration'):
    module_path = os.path.abspath(os.path.join(
        os.path.dirname(__file__), '..', folder))
    if module_path not in sys.path:
        sys.path.append(module_path)

import deskew_folder_utils
import metadata_settings
import micronet_utils
import pipeline_utils
import report_plot_util
from dataset_utils import (
    SkewGrid,
    WaveformCorpus,
    filter_records,
    ingest,
    read_series,
    split_records,
    write_canonical,
    write_series
)
from raster_utils import render_composite
from report_utils import EvalColumns
from synthgen_utils import (
    RingingSpec,
    SynthKind,
    SynthSpec,
    generate,
    generate_corpus
)
from training_config_utils import (
    CONFIG_DEFAULT_VALUES,
    MATERIAL_PRESETS,
    NormalizationPolicy,
    TrainConfig,
    preset_filter,
    preset_split
)
from verification_utils import ConfigurationError, DataFormatError
from waveform_utils import (
    ShapeTag,
    SkewOffset,
    WaveformRecord,
    apply_skew,
    b_from_voltage,
    core_loss_density,
    h_from_current
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SYNTH_PARAMS = ('b_amplitude', 'h_amplitude', 'slope', 'phase_deg', 'duty',
                'frequency')


class UsageError(Exception):
    """Raised by the parser instead of exiting."""


class _ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Shows defaults except for flags whose default comes from a preset or
    the configuration; their help text names it."""

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def _config_default(field: str) -> str:
    return f"default {CONFIG_DEFAULT_VALUES[field]} or the preset's value"


def _add_corpus_argument(parser, required=True):
    parser.add_argument(
        '--corpus', required=required,
        help="corpus file (.pkl) or measurement directory")
    parser.add_argument(
        '--material', default='',
        help="material name of an ingested directory (default: directory "
             "name)")


def _add_filter_arguments(parser):
    group = parser.add_argument_group('dataset filter')
    group.add_argument(
        '--preset', choices=sorted(MATERIAL_PRESETS),
        help="published training settings; explicit flags win")
    group.add_argument(
        '--shape', nargs='+', choices=[tag.value for tag in ShapeTag],
        help="allowed waveform shapes (default: any)")
    group.add_argument('--temperature', type=float,
                       help="required temperature in C (default: any)")
    group.add_argument('--dc-bias', type=float,
                       help="required DC bias in A/m (default: any)")
    group.add_argument('--freq-range', type=float, nargs=2,
                       metavar=('FMIN', 'FMAX'),
                       help="frequency range in Hz (default: any)")
    group.add_argument('--delta-b-range', type=float, nargs=2,
                       metavar=('DBMIN', 'DBMAX'),
                       help="peak-to-peak flux density range in T "
                            "(default: any)")
    group.add_argument('--materials', nargs='+',
                       help="allowed material names (default: any)")
    group.add_argument(
        '--split',
        help="train:test operating-point counts or a train ratio "
             "(default: the preset's split, else 0.8)")
    group.add_argument(
        '--test-out',
        help="write the held-out records to this corpus file (.pkl)")


def _add_training_arguments(parser):
    group = parser.add_argument_group('training')
    group.add_argument('--skew-n', type=int,
                       help="skew grid half-width n, in steps "
                            f"({_config_default('skew_half_width')})")
    group.add_argument('--skew-step', type=int,
                       help="skew grid step in interpolated samples "
                            f"({_config_default('skew_step')})")
    group.add_argument('--interp-factor', type=int,
                       help="interpolation factor K "
                            f"({_config_default('interp_factor')})")
    group.add_argument('--epochs', type=int,
                       help=f"training epochs ({_config_default('epochs')})")
    group.add_argument('--batch', type=int,
                       help="samples per Adam step "
                            f"({_config_default('batch_size')})")
    group.add_argument('--lr', type=float,
                       help="Adam learning rate "
                            f"({_config_default('learning_rate')})")
    group.add_argument('--side', type=int,
                       help="image side in pixels, a multiple of 8 "
                            f"({_config_default('side')})")
    group.add_argument('--zoom-width', type=float,
                       help="zoom window side in normalized units "
                            f"({_config_default('zoom_width')})")
    group.add_argument('--margin', type=float,
                       help="normalization margin in normalized units "
                            f"({_config_default('margin')})")
    group.add_argument('--seed', type=int,
                       help=f"seed of initialization, shuffles and split "
                            f"({_config_default('seed')})")
    group.add_argument('--patience', type=int,
                       help="epochs without improvement before stopping, 0 "
                            f"disables ({_config_default('patience')})")
    group.add_argument('--no-cache', action='store_true',
                       help="render images per batch instead of once")
    group.add_argument('--log',
                       help="training log file (default: <out>.log)")
    group.add_argument('--quiet', action='store_true',
                       help="hide the epoch progress bar")
    parser.add_argument('--out', required=True, help="model file (.bhd)")


def _add_waveform_arguments(parser):
    group = parser.add_argument_group(
        'waveform input', "either --b and --h, or --v and --i with --n1, "
                          "--n2, --ae and --le")
    group.add_argument('--b', help="flux density CSV, one period in T")
    group.add_argument('--h', help="field strength CSV, one period in A/m")
    group.add_argument('--v', help="sense-winding voltage CSV in V")
    group.add_argument('--i', help="excitation current CSV in A")
    group.add_argument('--n1', type=int, help="excitation turns")
    group.add_argument('--n2', type=int, help="sense turns")
    group.add_argument('--ae', type=float,
                       help="effective cross-section in m^2")
    group.add_argument('--le', type=float, help="effective path length in m")
    group.add_argument('--freq', type=float, required=True,
                       help="fundamental frequency in Hz")


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of every subcommand."""
    parser = _ArgumentParser(
        prog='bh_deskew', description=__doc__.split('\n')[0],
        epilog=f"Set {metadata_settings.get_threads_env_var()} to cap the "
               "worker threads (default 0, single-threaded).",
        formatter_class=_HelpFormatter)
    parser.add_argument('--verbose', action='store_true',
                        help="log progress at INFO level")
    subparsers = parser.add_subparsers(dest='command', required=True,
                                       parser_class=_ArgumentParser)

    def subparser(name, help_text):
        return subparsers.add_parser(name, help=help_text,
                                     description=help_text,
                                     formatter_class=_HelpFormatter)

    ingest_parser = subparser('ingest', "read a measurement directory")
    ingest_parser.add_argument('--dir', required=True,
                               help="material directory (canonical or "
                                    "MagNet file names)")
    ingest_parser.add_argument('--material', default='',
                               help="material name (default: directory "
                                    "name)")
    ingest_parser.add_argument(
        '--length', type=int, default=metadata_settings.get_raw_series_length(),
        help="samples per period in the B/H files")
    ingest_parser.add_argument('--out', required=True,
                               help="corpus file (.pkl)")

    synth_parser = subparser('synth', "generate a synthetic corpus")
    synth_parser.add_argument(
        '--kind', nargs='+', default=[SynthKind.ELLIPSE.value],
        choices=[kind.value for kind in SynthKind],
        help="generator families, drawn uniformly")
    synth_parser.add_argument(
        '--params', nargs='+', metavar='KEY=VALUE',
        help="fixed parameters of a single record: b_amplitude [T], "
             "h_amplitude [A/m], slope [(A/m)/T], phase_deg [deg], duty, "
             "frequency [Hz]; requires --count 1 and one --kind")
    synth_parser.add_argument('--count', type=int, default=200,
                              help="number of operating points")
    synth_parser.add_argument('--seed', type=int, default=0,
                              help="seed of the parameter draws")
    synth_parser.add_argument(
        '--samples', type=int, default=metadata_settings.get_raw_series_length(),
        help="samples per period")
    synth_parser.add_argument('--freq-range', type=float, nargs=2,
                              default=[50e3, 450e3], metavar=('FMIN', 'FMAX'),
                              help="log-uniform frequency range in Hz")
    synth_parser.add_argument('--ringing-amplitude', type=float, default=0.0,
                              help="ringing amplitude in A/m")
    synth_parser.add_argument('--ringing-multiple', type=float, default=20.0,
                              help="ringing frequency / fundamental")
    synth_parser.add_argument('--ringing-damping', type=float, default=5.0,
                              help="ringing decay per period")
    synth_parser.add_argument('--name', default='synthetic',
                              help="material name of the records")
    synth_parser.add_argument('--canonical-dir',
                              help="also write the canonical CSV layout here")
    synth_parser.add_argument('--out', required=True,
                              help="corpus file (.pkl)")

    render_parser = subparser('render', "write one network input as PGM")
    _add_corpus_argument(render_parser)
    render_parser.add_argument('--index', type=int, default=0,
                               help="record position in the corpus")
    render_parser.add_argument('--skew', type=int, default=0,
                               help="skew applied before rendering, in "
                                    "interpolated samples")
    render_parser.add_argument(
        '--interp-factor', type=int, default=metadata_settings.get_interp_factor(),
        help="interpolation factor K")
    render_parser.add_argument('--side', type=int,
                               default=metadata_settings.get_image_side(),
                               help="image side in pixels")
    render_parser.add_argument('--zoom-width', type=float,
                               default=metadata_settings.get_zoom_width(),
                               help="zoom window side in normalized units")
    render_parser.add_argument(
        '--margin', type=float,
        default=metadata_settings.get_normalization_margin(),
        help="normalization margin in normalized units")
    render_parser.add_argument('--out', required=True, help="image (.pgm)")

    train_parser = subparser('train', "train a model from scratch")
    _add_corpus_argument(train_parser)
    _add_filter_arguments(train_parser)
    _add_training_arguments(train_parser)

    finetune_parser = subparser('finetune',
                                "continue training a model on a corpus")
    finetune_parser.add_argument('--base', required=True,
                                 help="base model file (.bhd)")
    _add_corpus_argument(finetune_parser)
    _add_filter_arguments(finetune_parser)
    _add_training_arguments(finetune_parser)
    finetune_parser.add_argument(
        '--normalization', choices=[policy.value
                                    for policy in NormalizationPolicy],
        help="scalar statistics of the tuned model "
             f"({_config_default('normalization_policy')})")

    predict_parser = subparser('predict', "print the skew of one loop")
    predict_parser.add_argument('--model', required=True,
                                help="model file (.bhd)")
    _add_waveform_arguments(predict_parser)
    predict_parser.add_argument('--report',
                                help="also write the prediction here (.txt)")

    correct_parser = subparser('correct', "remove the skew of one loop")
    correct_parser.add_argument('--model', help="model file (.bhd)")
    correct_parser.add_argument(
        '--skew-file',
        help="text file holding the skew in interpolated samples, or a "
             "predict/correct report; replaces the model prediction")
    correct_parser.add_argument(
        '--interp-factor', type=int,
        help="interpolation factor K when no model is given (default "
             f"{metadata_settings.get_interp_factor()})")
    _add_waveform_arguments(correct_parser)
    correct_parser.add_argument('--out', required=True,
                                help="corrected H CSV, interpolated samples")
    correct_parser.add_argument('--report', help="correction report (.txt)")

    evaluate_parser = subparser('evaluate',
                                "evaluate a model on held-out records")
    evaluate_parser.add_argument('--model', required=True,
                                 help="model file (.bhd)")
    _add_corpus_argument(evaluate_parser)
    evaluate_parser.add_argument('--out', required=True,
                                 help="evaluation report (.txt)")
    evaluate_parser.add_argument('--plots', help="directory for SVG plots")

    sweep_parser = subparser('sweep', "core loss over a grid of skews")
    _add_corpus_argument(sweep_parser)
    sweep_parser.add_argument('--index', type=int, default=0,
                              help="record position in the corpus")
    sweep_parser.add_argument(
        '--interp-factor', type=int, default=metadata_settings.get_interp_factor(),
        help="interpolation factor K")
    sweep_parser.add_argument(
        '--skew-n', type=int, default=metadata_settings.get_skew_half_width(),
        help="grid half-width n, in steps")
    sweep_parser.add_argument(
        '--skew-step', type=int, default=metadata_settings.get_skew_step(),
        help="grid step in interpolated samples")
    sweep_parser.add_argument('--out', required=True,
                              help="sweep table (.csv)")
    sweep_parser.add_argument('--plot', help="sweep plot (.svg)")
    return parser


def _print_config(command: str, values: Dict):
    print(f'[{command}]')
    for key in sorted(values):
        print(f'{key} = {values[key]}')
    sys.stdout.flush()


def _arguments(args: argparse.Namespace) -> Dict:
    return {key: value for key, value in vars(args).items()
            if key not in ('command', 'handler')}


def _load_records(corpus: str, material: str = '') -> List[WaveformRecord]:
    if os.path.isdir(corpus):
        return ingest(corpus, material)
    if not os.path.isfile(corpus):
        raise FileNotFoundError(f"--corpus {corpus} does not exist.")
    return WaveformCorpus(corpus).record_list


def _select_record(records: Sequence[WaveformRecord], index: int
                   ) -> WaveformRecord:
    if not 0 <= index < len(records):
        raise ConfigurationError(
            f"--index {index} is outside the corpus of {len(records)} "
            "records.")
    return records[index]


def _interpolate(record: WaveformRecord, interp_factor: int
                 ) -> WaveformRecord:
    if record.interp_factor == interp_factor:
        return record
    return record.interpolated(interp_factor)


def _input_record(args: argparse.Namespace) -> WaveformRecord:
    """Build the raw record of predict/correct from B/H or V/I files."""
    if args.b and args.h:
        b = read_series(args.b, args.freq)
        h = read_series(args.h, args.freq)
    elif args.v and args.i:
        missing = [f'--{name}' for name in ('n1', 'n2', 'ae', 'le')
                   if getattr(args, name) is None]
        if missing:
            raise ConfigurationError(
                f"Voltage/current input needs {', '.join(missing)}.")
        b = b_from_voltage(read_series(args.v, args.freq), args.n2, args.ae)
        h = h_from_current(read_series(args.i, args.freq), args.n1, args.le)
    else:
        raise ConfigurationError("Give --b and --h, or --v and --i.")
    if len(b) != len(h):
        raise DataFormatError(
            f"B has {len(b)} samples but H has {len(h)}.")
    return WaveformRecord(b, h, record_id='input')


def _select_training_records(args: argparse.Namespace,
                             always_split: bool) -> List[WaveformRecord]:
    """Filter the corpus and split it when asked; returns training records."""
    records = _load_records(args.corpus, args.material)
    dataset_filter = preset_filter(
        args.preset, shape_tags=args.shape, temperature=args.temperature,
        dc_bias=args.dc_bias,
        frequency_range=tuple(args.freq_range) if args.freq_range else None,
        delta_b_range=tuple(args.delta_b_range)
        if args.delta_b_range else None,
        materials=args.materials)
    selected = filter_records(records, dataset_filter)
    if not selected and dataset_filter.shape_tags is not None \
            and ShapeTag.OTHER not in dataset_filter.shape_tags \
            and all(record.shape_tag == ShapeTag.OTHER
                    for record in records):
        raise ConfigurationError(
            f"{args.corpus} carries no shape tags and the filter keeps "
            f"{sorted(tag.value for tag in dataset_filter.shape_tags)} "
            f"only; pass --shape other or ingest a shape.csv.")
    if not selected:
        raise DataFormatError(
            f"No record of {args.corpus} matches the dataset filter.")
    logger.info("%d of %d records match the filter", len(selected),
                len(records))
    if not always_split and args.split is None:
        if args.test_out:
            raise ConfigurationError("--test-out needs --split.")
        return selected
    split_spec = preset_split(args.preset, args.split,
                              args.seed if args.seed is not None else 0)
    train_set, test_set = split_records(selected, split_spec)
    if args.test_out:
        WaveformCorpus(name=os.path.basename(args.test_out),
                       record_list=test_set).export_to_file(args.test_out)
        print(f'held-out records = {len(test_set)} -> {args.test_out}')
    return train_set


def _train_config(args: argparse.Namespace, **defaults) -> TrainConfig:
    values = {
        'epochs': args.epochs, 'batch_size': args.batch,
        'learning_rate': args.lr, 'seed': args.seed,
        'skew_half_width': args.skew_n, 'skew_step': args.skew_step,
        'interp_factor': args.interp_factor, 'side': args.side,
        'zoom_width': args.zoom_width, 'margin': args.margin,
        'patience': args.patience,
        'normalization_policy': getattr(args, 'normalization', None),
        'cache_images': False if args.no_cache else None,
    }
    for key, value in defaults.items():
        if values[key] is None:
            values[key] = value
    return TrainConfig.from_preset(args.preset, **values)


def _run_ingest(args: argparse.Namespace) -> int:
    _print_config('ingest', _arguments(args))
    records = ingest(args.dir, args.material, args.length)
    material = args.material or os.path.basename(os.path.normpath(args.dir))
    WaveformCorpus(name=material, record_list=records) \
        .export_to_file(args.out)
    print(f'records = {len(records)}')
    return EXIT_OK


def _parse_synth_params(params: Sequence[str]) -> Dict[str, float]:
    values = {}
    for item in params:
        key, equals, value = item.partition('=')
        if not equals or key not in SYNTH_PARAMS:
            raise ConfigurationError(
                f"--params entry {item!r} is not KEY=VALUE with KEY in "
                f"{list(SYNTH_PARAMS)}.")
        try:
            values[key] = float(value)
        except ValueError as err:
            raise ConfigurationError(
                f"--params {key} value {value!r} is not a number.") from err
    for key in ('b_amplitude', 'h_amplitude'):
        if key not in values:
            raise ConfigurationError(f"--params needs {key}.")
    if 'phase_deg' in values:
        values['phase'] = math.radians(values.pop('phase_deg'))
    return values


def _run_synth(args: argparse.Namespace) -> int:
    _print_config('synth', _arguments(args))
    ringing = RingingSpec(args.ringing_amplitude, args.ringing_multiple,
                          args.ringing_damping) \
        if args.ringing_amplitude > 0 else None
    if args.params:
        if args.count != 1 or len(args.kind) != 1:
            raise ConfigurationError(
                "--params describes one record: use --count 1 and one "
                "--kind.")
        kind = SynthKind(args.kind[0])
        spec = SynthSpec(kind, samples=args.samples, ringing=ringing,
                         seed=args.seed, material=args.name,
                         record_id=f'synth-{kind.value}-00000',
                         **_parse_synth_params(args.params))
        records = [generate(spec)]
    else:
        records = generate_corpus(
            args.count, args.seed, args.kind, args.samples,
            tuple(args.freq_range), ringing, args.name)
    WaveformCorpus(name=args.name, record_list=records) \
        .export_to_file(args.out)
    if args.canonical_dir:
        write_canonical(records, args.canonical_dir)
    print(f'records = {len(records)}')
    return EXIT_OK


def _run_render(args: argparse.Namespace) -> int:
    _print_config('render', _arguments(args))
    record = _interpolate(
        _select_record(_load_records(args.corpus, args.material), args.index),
        args.interp_factor)
    if args.skew:
        record = record.with_h(apply_skew(record.h, SkewOffset(
            args.skew, record.interp_factor, record.base_length)))
    image = render_composite(record.loop(), args.side, args.zoom_width,
                             args.margin)
    image.export_to_pgm(args.out)
    print('scalars = ' + ' '.join(f'{value:.17g}'
                                  for value in image.scalars))
    return EXIT_OK


def _run_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    _print_config('train', dict(config.to_dict(), corpus=args.corpus,
                                preset=args.preset, split=args.split,
                                out=args.out))
    records = _select_training_records(args, always_split=True)
    model = pipeline_utils.train_records(
        records, config,
        log_filepath=args.log or deskew_folder_utils.training_log_file(
            args.out),
        show_progress=not args.quiet)
    micronet_utils.save(model, args.out)
    print(f'model = {args.out}')
    return EXIT_OK


def _run_finetune(args: argparse.Namespace) -> int:
    base = micronet_utils.load(args.base)
    config = _train_config(
        args, side=base.side, interp_factor=base.skew_grid.interp_factor,
        zoom_width=base.zoom_width, margin=base.margin)
    _print_config('finetune', dict(config.to_dict(), base=args.base,
                                   corpus=args.corpus, preset=args.preset,
                                   split=args.split, out=args.out))
    records = _select_training_records(args, always_split=False)
    model = pipeline_utils.finetune_records(
        base, records, config,
        log_filepath=args.log or deskew_folder_utils.training_log_file(
            args.out),
        show_progress=not args.quiet)
    micronet_utils.save(model, args.out)
    print(f'model = {args.out}')
    return EXIT_OK


def _format_values(values: Dict) -> str:
    lines = []
    for key, value in values.items():
        text = f'{value:.17g}' if isinstance(value, float) else str(value)
        lines.append(f'{key} = {text}')
    return '\n'.join(lines) + '\n'


def _write_report(filepath: Optional[str], text: str):
    if filepath:
        if not filepath.endswith('.txt'):
            raise ConfigurationError(f"--report {filepath} must end in .txt.")
        deskew_folder_utils.atomic_write_text(filepath, text)


def _run_predict(args: argparse.Namespace) -> int:
    _print_config('predict', _arguments(args))
    model = micronet_utils.load(args.model)
    record = pipeline_utils.prepare_record(_input_record(args),
                                           model.skew_grid)
    prediction = pipeline_utils.predict_skew(model, record)
    text = _format_values(prediction.to_dict())
    sys.stdout.write(text)
    _write_report(args.report, text)
    return EXIT_OK


def _read_skew_file(filepath: str) -> int:
    if not os.path.isfile(filepath):
        raise FileNotFoundError(f"--skew-file {filepath} does not exist.")
    with open(filepath, 'r', encoding='utf-8') as file:
        text = file.read()
    for line in text.splitlines():
        key, equals, value = line.partition('=')
        if equals and key.strip() == 'rounded_index':
            text = value
            break
    try:
        return int(text.strip())
    except ValueError as err:
        raise DataFormatError(
            f"{filepath} holds neither an integer skew nor a "
            "'rounded_index = N' line.") from err


def _run_correct(args: argparse.Namespace) -> int:
    _print_config('correct', _arguments(args))
    raw = _input_record(args)
    if args.skew_file:
        model = micronet_utils.load(args.model) if args.model else None
        interp_factor = model.skew_grid.interp_factor if model else (
            args.interp_factor or metadata_settings.get_interp_factor())
        record = pipeline_utils.prepare_record(
            raw, SkewGrid(0, 1, interp_factor, raw.base_length))
        offset = SkewOffset(_read_skew_file(args.skew_file), interp_factor,
                            raw.base_length)
        prediction = pipeline_utils.SkewPrediction(offset.delta, offset,
                                                   record.frequency)
    elif args.model:
        model = micronet_utils.load(args.model)
        record = pipeline_utils.prepare_record(raw, model.skew_grid)
        prediction = pipeline_utils.predict_skew(model, record)
    else:
        raise ConfigurationError("correct needs --model or --skew-file.")
    loss_before = core_loss_density(record.loop(), record.frequency)
    corrected, loss_after = pipeline_utils.correct(record, prediction.offset)
    write_series(corrected.h, args.out)
    text = _format_values(dict(prediction.to_dict(),
                               loss_before=loss_before,
                               loss_after=loss_after,
                               frequency=record.frequency))
    sys.stdout.write(text)
    _write_report(args.report, text)
    return EXIT_OK


def _overlay(model, records: Sequence[WaveformRecord], report):
    """Return the true, skewed and corrected records of the worst row."""
    row = report.rows.iloc[report_plot_util.worst_row(report)]
    origin = row[EvalColumns.ORIGIN_ID.value]
    record = next(record for record in records if record.record_id == origin)
    grid = model.skew_grid
    true_record = pipeline_utils.prepare_record(record, grid)
    skewed = true_record.with_h(apply_skew(true_record.h, SkewOffset(
        int(row[EvalColumns.TRUE_SKEW.value]), grid.interp_factor,
        grid.base_length)))
    corrected, _ = pipeline_utils.correct(skewed, SkewOffset(
        int(row[EvalColumns.ROUNDED_SKEW.value]), grid.interp_factor,
        grid.base_length))
    return true_record, skewed, corrected


def _run_evaluate(args: argparse.Namespace) -> int:
    _print_config('evaluate', _arguments(args))
    model = micronet_utils.load(args.model)
    records = _load_records(args.corpus, args.material)
    report = pipeline_utils.evaluate_records(model, records)
    report.export_to_file(args.out)
    if args.plots:
        report_plot_util.export_evaluation_plots(
            report, args.plots, overlay=_overlay(model, records, report))
    sys.stdout.write(_format_values(report.aggregates))
    return EXIT_OK


def _run_sweep(args: argparse.Namespace) -> int:
    _print_config('sweep', _arguments(args))
    record = _interpolate(
        _select_record(_load_records(args.corpus, args.material), args.index),
        args.interp_factor)
    sweep = pipeline_utils.loss_skew_sweep(record, args.skew_n,
                                           args.skew_step)
    sweep.export_to_file(args.out)
    if args.plot:
        report_plot_util.plot_sweep(sweep, args.plot)
    sys.stdout.write(_format_values({'slope': sweep.slope,
                                     'intercept': sweep.intercept,
                                     'r_sq': sweep.r_sq}))
    return EXIT_OK


HANDLERS = {
    'ingest': _run_ingest,
    'synth': _run_synth,
    'render': _run_render,
    'train': _run_train,
    'finetune': _run_finetune,
    'predict': _run_predict,
    'correct': _run_correct,
    'evaluate': _run_evaluate,
    'sweep': _run_sweep,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:
        return EXIT_OK if not err.code else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s')
    try:
        return HANDLERS[args.command](args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, OSError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == '__main__':
    main()
