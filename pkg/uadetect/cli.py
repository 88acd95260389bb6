"""
cli.py

Command line entry point, `uadetect <command> ...`.

    train      fit an inverse generator to nominal data, save a model
    detect     run a saved model over batches from a CSV
    pmf        exact null distribution of K1, as CSV on standard output
    threshold  the rejection threshold T for (M, N, alpha)
    scenario   generate synthetic datasets
    reproduce  run a full ROC experiment

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure during training.
"""
from __future__ import print_function

import argparse
from contextlib import contextmanager
import logging
import os
import sys

import numpy as np

from . import __version__
from . import detector
from . import evaluate
from . import readparam
from . import tabletool
from . import uniformity
from . import wigan
from .powergrid import RankDeficientError, inject_attack
from .tensornn import ShapeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

MODEL_DEFAULT_PARS = {
    'alphabet_M': 200,
    'sample_N': 50,
    'fp_level_alpha': 0.05,
    'epsilon': 0.,
}

TRAIN_DEFAULT_PARS = dict(wigan.TrainConfig.DEFAULT_PARS)
TRAIN_DEFAULT_PARS.update(MODEL_DEFAULT_PARS)

REPRODUCE_DEFAULT_PARS = dict(evaluate.DEFAULT_PLAN_PARS)
REPRODUCE_DEFAULT_PARS.update(wigan.TrainConfig.DEFAULT_PARS)

REPRODUCE_CASES = {'1': 'case1', '2': 'case2', 'mixture': 'mixture',
                   'grid': 'grid'}

PAR_LOG = 'run_pars.log'


def _subset(pars, keys):
    return dict((k, pars[k]) for k in keys if k in pars)


@contextmanager
def config_errors():
    """Re-raise invalid values coming from flags or files as ConfigError"""
    try:
        yield
    except readparam.ConfigError:
        raise
    except ValueError as err:
        raise readparam.ConfigError(str(err))


def setup_logging(outdir=None):
    if outdir is None:
        logging.basicConfig(level=logging.WARNING)
    else:
        logging.basicConfig(filename=os.path.join(outdir, 'log.log'),
                            level=logging.INFO)


def _make_outdir(outdir):
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as err:
        raise readparam.ConfigError('Cannot create output directory {}: {}'
                                    .format(outdir, err))
    return outdir


def cmd_train(args):
    outdir = _make_outdir(args.out)
    setup_logging(outdir)
    wigan.log_message('uadetect train', symbol='=', surround=True)
    overrides = {
        'seed': args.seed,
        'total_generator_iters': args.iters,
        'learning_rate': args.learning_rate,
        'clip_c': args.clip_c,
        'batch_size_m': args.batch_size,
        'critic_iters_n': args.critic_iters,
        'validation_fraction': args.val_fraction,
        'val_every': args.val_every,
        'alphabet_M': args.levels_M,
        'sample_N': args.sample_N,
        'fp_level_alpha': args.alpha,
        'epsilon': args.epsilon,
    }
    with config_errors():
        pars = readparam.resolve_pars(TRAIN_DEFAULT_PARS, args.config,
                                      overrides)
        config = wigan.TrainConfig(_subset(pars, wigan.TrainConfig.DEFAULT_PARS))
        test_pars = _subset(pars, MODEL_DEFAULT_PARS)
        uniformity.TestSpec.build(test_pars['alphabet_M'],
                                  test_pars['sample_N'],
                                  test_pars['fp_level_alpha'],
                                  test_pars['epsilon'])
    pars['seed'] = config.seed

    data = tabletool.read_rows(args.data)
    logging.info('Read {} rows of dimension {} from {}'.format(
            data.shape[0], data.shape[1], args.data))
    generator, trace = wigan.train(data, config)
    model = detector.DetectorModel(generator, seed=config.seed,
                                   config_hash=config.fingerprint(),
                                   **test_pars)

    detector.save_model(model, os.path.join(outdir, 'model' +
                                            detector.MODEL_EXTENSION))
    wigan.write_trace_csv(trace, os.path.join(outdir, 'trace.csv'))
    readparam.log_used_pars(pars, default_pars=TRAIN_DEFAULT_PARS,
                            par_log_file=os.path.join(outdir, PAR_LOG))


def cmd_detect(args):
    outdir = _make_outdir(os.path.dirname(os.path.abspath(args.out)))
    setup_logging(outdir)
    with config_errors():
        if args.nthreads < 1:
            raise ValueError('--nthreads must be positive')
    model = detector.load_model(args.model)
    batches = tabletool.read_batches(args.batches, model.sample_N,
                                     ncols=model.input_dim)
    verdicts = detector.detect_many(model, batches, nthreads=args.nthreads)
    logging.info('{} of {} batches flagged as anomalous'.format(
            sum(v.is_anomaly for v in verdicts), len(verdicts)))

    table = tabletool.build_table(
            [np.arange(len(verdicts)),
             np.array([v.k1_value for v in verdicts]),
             np.array([v.threshold_used for v in verdicts]),
             np.array([v.decision for v in verdicts])],
            ['batch_id', 'k1', 'threshold', 'decision'])
    tabletool.write_table(table, args.out)
    readparam.log_used_pars({'model': args.model, 'batches': args.batches,
                             'out': args.out, 'nthreads': args.nthreads},
                            par_log_file=os.path.join(outdir, PAR_LOG))


def cmd_pmf(args):
    setup_logging()
    with config_errors():
        pmf = uniformity.coincidence_pmf(args.M, args.N)
    table = tabletool.build_table([np.arange(len(pmf)), pmf.as_floats()],
                                  ['k', 'probability'])
    table.write(sys.stdout, format='ascii.csv',
                formats={'probability': tabletool.FLOAT_FORMAT})


def cmd_threshold(args):
    setup_logging()
    with config_errors():
        print(uniformity.threshold(args.M, args.N, args.alpha))


def _plan_overrides(args, scenario):
    return {
        'scenario': scenario,
        'seed': args.seed,
        'batches_per_class': args.batches,
        'batch_N': args.batch_N,
        'train_samples': getattr(args, 'train_samples', None),
    }


def cmd_scenario(args):
    outdir = _make_outdir(args.out)
    setup_logging(outdir)
    with config_errors():
        pars = readparam.resolve_pars(evaluate.DEFAULT_PLAN_PARS, args.config,
                                      _plan_overrides(args, args.kind))
        plan = evaluate.ExperimentPlan(pars, detectors=[])
    pars['seed'] = plan.seed
    evaluate.log_message('Generating {} scenario'.format(plan.scenario),
                         symbol='=', surround=True)

    colnames = ['z{}'.format(i) for i in range(plan.input_dim)]
    tabletool.write_rows(plan.training_data(),
                         os.path.join(outdir, 'train.csv'), colnames=colnames)
    nb = plan.batches_per_class
    if plan.scenario == 'grid':
        clean = [plan.draw_batch(evaluate.H0_CLASS, i)[0] for i in range(nb)]
        attacked = [inject_attack(z, plan.grid, plan.attack) for z in clean]
        tabletool.write_batches(clean, os.path.join(outdir,
                                                    'clean_batches.csv'),
                                colnames=colnames)
        tabletool.write_batches(attacked, os.path.join(outdir,
                                                       'attacked_batches.csv'),
                                colnames=colnames)
    else:
        h0 = [plan.draw_batch(evaluate.H0_CLASS, i)[0] for i in range(nb)]
        h1, nuisance = zip(*[plan.draw_batch(evaluate.H1_CLASS, i)
                             for i in range(nb)])
        tabletool.write_batches(h0, os.path.join(outdir, 'h0_batches.csv'),
                                colnames=colnames)
        tabletool.write_batches(h1, os.path.join(outdir, 'h1_batches.csv'),
                                colnames=colnames)
        tabletool.write_table(
                tabletool.build_table([np.arange(nb), np.array(nuisance)],
                                      ['batch_id', 'nuisance']),
                os.path.join(outdir, 'h1_nuisance.csv'))
    readparam.log_used_pars(pars, default_pars=evaluate.DEFAULT_PLAN_PARS,
                            par_log_file=os.path.join(outdir, PAR_LOG))


def cmd_reproduce(args):
    outdir = _make_outdir(args.out)
    setup_logging(outdir)
    overrides = _plan_overrides(args, REPRODUCE_CASES[args.case])
    overrides.update({
        'total_generator_iters': args.train_iters,
        'nthreads': args.nthreads,
        'detectors': None if args.detectors is None
                     else '[{}]'.format(args.detectors),
    })
    with config_errors():
        pars = readparam.resolve_pars(REPRODUCE_DEFAULT_PARS, args.config,
                                      overrides)
        plan = evaluate.ExperimentPlan(
                _subset(pars, evaluate.DEFAULT_PLAN_PARS))
        pars['seed'] = plan.seed
        train_config = wigan.TrainConfig(
                _subset(pars, wigan.TrainConfig.DEFAULT_PARS))

    models = {}
    if 'uad' in plan.detectors:
        models['uad'], trace = evaluate.train_detector(plan, train_config)
        detector.save_model(models['uad'], os.path.join(
                outdir, 'model_uad' + detector.MODEL_EXTENSION))
        wigan.write_trace_csv(trace, os.path.join(outdir, 'trace.csv'))

    scores, curves = evaluate.run_experiment(plan, models)
    rows = []
    for name in plan.detectors:
        evaluate.write_roc_csv(curves[name], os.path.join(
                outdir, 'roc_{}.csv'.format(name)))
        rows.append((name, plan.scenario, curves[name].auc,
                     plan.batches_per_class))
    evaluate.write_summary_csv(rows, os.path.join(outdir, 'summary.csv'))
    readparam.log_used_pars(pars, default_pars=REPRODUCE_DEFAULT_PARS,
                            par_log_file=os.path.join(outdir, PAR_LOG))


def _add_plan_flags(parser):
    parser.add_argument('--out', default='.', help='output directory')
    parser.add_argument('--config', default=None,
                        help='parameter file of key = value lines')
    parser.add_argument('--seed', type=int, default=None,
                        help='random seed (default: $UAD_SEED or 1)')
    parser.add_argument('--batches', type=int, default=None,
                        help='batches per class')
    parser.add_argument('--batch-N', dest='batch_N', type=int, default=None,
                        help='samples per batch')


def build_parser():
    parser = argparse.ArgumentParser(
            prog='uadetect',
            description='Universal anomaly detection with a learned '
                        'inverse generator and a coincidence test.')
    parser.add_argument('--version', action='version',
                        version='%(prog)s {}'.format(__version__))
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    train = subparsers.add_parser('train', help='train a detector model')
    train.add_argument('data', help='CSV of nominal observations')
    train.add_argument('--out', default='.', help='output directory')
    train.add_argument('--config', default=None,
                       help='parameter file of key = value lines')
    train.add_argument('--seed', type=int, default=None,
                       help='random seed (default: $UAD_SEED or 1)')
    train.add_argument('--iters', type=int, default=None,
                       help='generator iterations')
    train.add_argument('--learning-rate', type=float, default=None,
                       help='RMSProp learning rate')
    train.add_argument('--clip-c', type=float, default=None,
                       help='critic weight clipping bound')
    train.add_argument('--batch-size', type=int, default=None,
                       help='minibatch size m')
    train.add_argument('--critic-iters', type=int, default=None,
                       help='critic updates per generator update')
    train.add_argument('--val-fraction', type=float, default=None,
                       help='fraction of rows held out for model selection')
    train.add_argument('--val-every', type=int, default=None,
                       help='generator iterations between validations')
    train.add_argument('--levels-M', dest='levels_M', type=int, default=None,
                       help='quantisation levels M')
    train.add_argument('--sample-N', dest='sample_N', type=int, default=None,
                       help='batch size N of the test')
    train.add_argument('--alpha', type=float, default=None,
                       help='false positive level')
    train.add_argument('--epsilon', type=float, default=None,
                       help='declared detection resolution (recorded only)')
    train.set_defaults(func=cmd_train)

    detect = subparsers.add_parser('detect', help='apply a saved model')
    detect.add_argument('model', help='model file (.uadm)')
    detect.add_argument('batches', help='CSV of consecutive N-row batches')
    detect.add_argument('--out', default='verdicts.csv',
                        help='verdict CSV to write')
    detect.add_argument('--nthreads', type=int, default=1,
                        help='worker threads')
    detect.set_defaults(func=cmd_detect)

    pmf = subparsers.add_parser('pmf', help='exact null distribution of K1')
    pmf.add_argument('M', type=int, help='alphabet size')
    pmf.add_argument('N', type=int, help='samples per batch')
    pmf.set_defaults(func=cmd_pmf)

    thresh = subparsers.add_parser('threshold', help='rejection threshold T')
    thresh.add_argument('M', type=int, help='alphabet size')
    thresh.add_argument('N', type=int, help='samples per batch')
    thresh.add_argument('alpha', type=float, help='false positive level')
    thresh.set_defaults(func=cmd_threshold)

    scenario = subparsers.add_parser('scenario',
                                     help='generate synthetic datasets')
    scenario.add_argument('kind', choices=evaluate.SCENARIOS,
                          help='scenario family')
    _add_plan_flags(scenario)
    scenario.add_argument('--train-samples', type=int, default=None,
                          help='rows of nominal training data')
    scenario.set_defaults(func=cmd_scenario)

    reproduce = subparsers.add_parser('reproduce',
                                      help='run a full ROC experiment')
    reproduce.add_argument('case', choices=sorted(REPRODUCE_CASES),
                           help='experiment to run')
    _add_plan_flags(reproduce)
    reproduce.add_argument('--train-samples', type=int, default=None,
                           help='rows of nominal training data')
    reproduce.add_argument('--train-iters', type=int, default=None,
                           help='generator iterations')
    reproduce.add_argument('--nthreads', type=int, default=None,
                           help='worker processes for batch scoring')
    reproduce.add_argument('--detectors', default=None,
                           help='comma separated subset of {}'.format(
                                   ', '.join(evaluate.DETECTORS)))
    reproduce.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (readparam.ConfigError, RankDeficientError) as err:
        return _fail(err, EXIT_CONFIG)
    except (tabletool.DataError, ShapeError,
            uniformity.QuantizationDomainError, wigan.DegenerateInputError,
            wigan.InsufficientDataError, detector.ModelParseError,
            detector.UnsupportedVersionError) as err:
        return _fail(err, EXIT_DATA)
    except wigan.TrainingDivergedError as err:
        return _fail(err, EXIT_NUMERIC)
    return EXIT_OK


def _fail(err, code):
    logging.error('{}: {}'.format(type(err).__name__, err))
    print('uadetect: error: {}'.format(err), file=sys.stderr)
    return code


if __name__ == '__main__':
    sys.exit(main())
