#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import os
import sys
from argparse import ArgumentParser

from shallowdiffusion import wrap_input_constants, Logger, __version__
from shallowdiffusion.dsm_train import train_all_timesteps
from shallowdiffusion.exceptions import ShallowDiffusionError
from shallowdiffusion.harness import prepare_cell, sample_metrics, sweep, report, SAMPLE_STREAM, EVAL_STREAM
from shallowdiffusion.metrics import score_risk, weighted_score_error
from shallowdiffusion.sampler import ScoreProvider, run_reverse
from shallowdiffusion.selftest import run_selftest
from shallowdiffusion.storage import write_training_set, write_training_set_csv, write_samples, write_samples_csv, \
    read_samples, read_samples_csv, save_model_set, load_model_set, write_metric_csv
from shallowdiffusion.targets import forward_corrupt, stream_rng

USAGE_ERROR = 2


def add_common_args(parser, command, help_text, needs_config=True):
    parser.add_argument(dest='command', choices={command}, metavar=command, help=help_text)
    if needs_config:
        parser.add_argument('--config', type=str, required=True,
                            help='Experiment configfile (see configs folder for examples!)')
    parser.add_argument('--out', type=str, default=None, help='Output directory (default: output_dir of the config)')
    parser.add_argument('--workers', type=int, default=None, help='Number of worker processes')
    parser.add_argument('--seed', type=int, default=None, help='Use this single seed (overrides SEED_OVERRIDE too)')
    parser.add_argument('--n-mc', type=int, default=None, help='Monte Carlo sample count for risk estimates')
    parser.add_argument('--log-file', type=str, default=None, help='Also log into this file')
    parser.add_argument('--verbose', action='store_true', help='DEBUG level logging (per-epoch traces)')


def add_cell_args(parser):
    parser.add_argument('--D', type=int, default=None, help='Ambient dimension (default: first of sweep.D)')
    parser.add_argument('--n', type=int, default=None, help='Training sample count (default: first of sweep.n)')


def parse_args_generate(parser, argv):
    add_common_args(parser, 'generate', 'Write the per-timestep DSM training sets of one (seed, n, D) cell')
    add_cell_args(parser)
    parser.add_argument('--csv', action='store_true', help='Write CSV instead of the binary layout')
    return parser.parse_args(argv)


def parse_args_train(parser, argv):
    add_common_args(parser, 'train', 'Train one score net per forward timestep and write the model set')
    add_cell_args(parser)
    return parser.parse_args(argv)


def parse_args_sample(parser, argv):
    add_common_args(parser, 'sample', 'Run the reverse sampler with a trained model set')
    add_cell_args(parser)
    parser.add_argument('--models', type=str, default=None, help='Model set directory (default: <out>/models)')
    parser.add_argument('--n-samples', type=int, default=None, help='Number of samples (default: sweep.n_samples)')
    parser.add_argument('--binary', action='store_true', help='Write the binary layout instead of CSV')
    return parser.parse_args(argv)


def parse_args_evaluate(parser, argv):
    add_common_args(parser, 'evaluate', 'Score risk per timestep (and sample metrics) into a metric CSV')
    add_cell_args(parser)
    parser.add_argument('--models', type=str, default=None, help='Model set directory (default: <out>/models)')
    parser.add_argument('--samples', type=str, default=None, help='Samples file to evaluate (CSV or .bin)')
    return parser.parse_args(argv)


def parse_args_sweep(parser, argv):
    add_common_args(parser, 'sweep', 'Run every (seed, n, D) cell of the configuration')
    return parser.parse_args(argv)


def parse_args_report(parser, argv):
    add_common_args(parser, 'report', 'Summarise records.jsonl into CSV tables and SVG plots', needs_config=False)
    parser.add_argument('--config', type=str, default=None, help='Take the output directory from this config')
    args = parser.parse_args(argv)
    if args.out is None and args.config is None:
        parser.error('report needs --out or --config')
    return args


def parse_args_selftest(parser, argv):
    add_common_args(parser, 'selftest', 'Run the built-in schedule/oracle/gradient checks', needs_config=False)
    return parser.parse_args(argv)


def _settings(args):
    return wrap_input_constants(args.config, seed=args.seed, n_mc=args.n_mc, workers=args.workers, out_dir=args.out)


def _cell(settings, args):
    D = args.D if args.D is not None else settings['SWEEP']['D'][0]
    n = args.n if args.n is not None else settings['SWEEP']['n'][0]
    return prepare_cell(settings, settings['SEEDS'][0], n, D)


def main_generate(args, logger):
    settings = _settings(args)
    cell = _cell(settings, args)
    data_dir = os.path.join(settings['OUTPUT_DIR'], 'data')
    os.makedirs(data_dir, exist_ok=True)
    for k, t in enumerate(cell.grid.forward_times):
        # Same stream per timestep as train_all_timesteps uses
        dataset = forward_corrupt(cell.x0, t, stream_rng(cell.cfg.seed, k), stream=k)
        if args.csv:
            write_training_set_csv(os.path.join(data_dir, 'train_{0:04d}.csv'.format(k)), dataset,
                                   settings['FINGERPRINT'])
        else:
            write_training_set(os.path.join(data_dir, 'train_{0:04d}.bin'.format(k)), dataset, settings['FINGERPRINT'])
    logger.log_fields('INFO', 'generated', files=cell.grid.N, n=cell.n, D=cell.D, out=data_dir)


def main_train(args, logger):
    settings = _settings(args)
    cell = _cell(settings, args)
    models = train_all_timesteps(cell.grid, cell.x0, cell.cfg, cell.radius_schedule, logger, cell.embedding,
                                 workers=settings['WORKERS'])
    out = os.path.join(settings['OUTPUT_DIR'], 'models')
    save_model_set(out, models, settings['FINGERPRINT'])
    logger.log_fields('INFO', 'saved', models=len(models), out=out)


def _models(settings, args):
    models, fingerprint = load_model_set(args.models or os.path.join(settings['OUTPUT_DIR'], 'models'))
    if fingerprint != settings['FINGERPRINT']:
        raise ShallowDiffusionError('Model set fingerprint {0} differs from the config fingerprint {1}'.
                                    format(fingerprint, settings['FINGERPRINT']))
    return models


def main_sample(args, logger):
    settings = _settings(args)
    cell = _cell(settings, args)
    models = _models(settings, args)
    n_samples = args.n_samples or settings['SWEEP']['n_samples']
    samples = run_reverse(ScoreProvider.from_models(models), cell.grid, n_samples, cell.D,
                          stream_rng(cell.seed, cell.n, cell.D, SAMPLE_STREAM), logger)
    if args.binary:
        fname = os.path.join(settings['OUTPUT_DIR'], 'samples.bin')
        write_samples(fname, samples, cell.grid.zeta, settings['FINGERPRINT'])
    else:
        fname = os.path.join(settings['OUTPUT_DIR'], 'samples.csv')
        write_samples_csv(fname, samples, settings['FINGERPRINT'])
    logger.log_fields('INFO', 'sampled', n=n_samples, out=fname)


def main_evaluate(args, logger):
    settings = _settings(args)
    cell = _cell(settings, args)
    models = _models(settings, args)
    n_mc = settings['METRICS']['n_mc']
    rng = stream_rng(cell.seed, cell.n, cell.D, EVAL_STREAM)
    rows = []
    for entry in models:
        risk = score_risk(entry.net, cell.oracle, entry.t, n_mc, rng)
        rows.append(('score_risk', entry.t, risk.estimate, risk.se, n_mc))
    wse = weighted_score_error(models, cell.oracle, cell.grid, n_mc, rng)
    rows.append(('weighted_score_error', None, wse.total, wse.se, n_mc))
    if args.samples is not None:
        if args.samples.endswith('.bin'):
            samples = read_samples(args.samples)[0]
        else:
            samples = read_samples_csv(args.samples)
        for key, value in sorted(sample_metrics(cell, samples, settings['METRICS'], rng).items()):
            if key.endswith('_se') or key == 'n_samples':
                continue
            rows.append((key, cell.grid.zeta, value, 0.0, samples.shape[0]))
    fname = os.path.join(settings['OUTPUT_DIR'], 'metrics.csv')
    write_metric_csv(fname, rows, settings['FINGERPRINT'])
    logger.log_fields('INFO', 'evaluated', rows=len(rows), weighted_score_error=wse.total, out=fname)


def main_sweep(args, logger):
    settings = _settings(args)
    records = sweep(settings, logger)
    logger.log_fields('INFO', 'sweep_done', records=len(records), out=settings['OUTPUT_DIR'])


def main_report(args, logger):
    out_dir = args.out if args.out is not None else _settings(args)['OUTPUT_DIR']
    result = report(out_dir, logger)
    for row in result.rates:
        print(*row, sep='\t')


def main_selftest(args, logger):
    passed, failed = run_selftest(logger, seed=args.seed if args.seed is not None else 0)
    print('{0} passed, {1} failed'.format(passed, len(failed)))
    if len(failed) > 0:
        raise ShallowDiffusionError('Selftest failed: {0}'.format(', '.join(name for name, _ in failed)))


def cli(argv):
    """Route, run and map errors to exit codes: usage 2, configuration 3, other failures 1"""
    commands = {'generate': (parse_args_generate, main_generate), 'train': (parse_args_train, main_train),
                'sample': (parse_args_sample, main_sample), 'evaluate': (parse_args_evaluate, main_evaluate),
                'sweep': (parse_args_sweep, main_sweep), 'report': (parse_args_report, main_report),
                'selftest': (parse_args_selftest, main_selftest)}
    parser = ArgumentParser(prog='shallowdiffusion')
    parser.add_argument('command', choices=commands.keys(), metavar='COMMAND',
                        help='Please choose from the available commands ({0}) to set mode and see detailed help!'.
                        format(set(commands.keys())))
    parser.add_argument('--version', action='version', version='%(prog)s {0}'.format(__version__))
    try:
        command = parser.parse_args(argv[0:1]).command  # Route ArgumentParser before reparsing the whole CLI
        argparse_fun, main_fun = commands[command]
        args = argparse_fun(ArgumentParser(prog='shallowdiffusion {0}'.format(command)), argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0

    level = 'DEBUG' if args.verbose else 'INFO'
    logger = Logger(log_filename=args.log_file, console_level=level, logfile_level=level)
    try:
        main_fun(args, logger)
    except ShallowDiffusionError as e:
        logger.log('ERROR', type(e).__name__, e)
        return e.exit_code
    except (OSError, ValueError, ArithmeticError, KeyError, RuntimeError) as e:
        logger.log('ERROR', 'Runtime failure:', type(e).__name__, e)
        return 1
    finally:
        logger.close()
    return 0


def main():
    sys.exit(cli(sys.argv[1:]))


if __name__ == '__main__':
    main()
