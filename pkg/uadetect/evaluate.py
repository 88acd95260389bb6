"""
evaluate.py

Batch experiments: draw nominal (H0) and anomalous (H1) batches for a
scenario, score each batch with every detector of the plan, and
summarise the detectors by their empirical ROC curves.

Scores are K1 values for the universal detectors (low means anomalous)
and batch J values for the chi-square baseline (high means anomalous).
Every batch has its own seed, [plan seed, class, batch index], so
results do not depend on the order or the process in which batches are
scored.
"""
from __future__ import division

import logging
from multiprocessing import Pool

import numpy as np
from sklearn.metrics import auc as trapezoid_auc
from sklearn.metrics import roc_curve

from . import readparam
from . import powergrid
from . import synthdata
from . import tabletool
from . import wigan
from .detector import DetectorModel, AnalyticCdf, detect

SCENARIOS = ('case1', 'case2', 'mixture', 'grid')
DETECTORS = ('uad', 'uad_oracle', 'jtest')
ORIENTATIONS = {'uad': 'low', 'uad_oracle': 'low', 'jtest': 'high'}

# Seed stream labels
H0_CLASS = 0
H1_CLASS = 1
TRAIN_STREAM = 2

DEFAULT_PLAN_PARS = {
    'scenario': 'case1',
    # 'auto' picks the detectors that make sense for the scenario
    'detectors': 'auto',
    'batches_per_class': 2000,
    'batch_N': 50,
    'alphabet_M': 200,
    'fp_level_alpha': 0.05,
    'epsilon': 0.,
    'seed': None,
    'h1_mu_range': [-1., 1.],
    'h1_sigma_range': [0.5, 0.8],
    'h1_weight_range': [0.2, 0.4],
    'attack_scale': powergrid.DEFAULT_ATTACK_PARS['attack_scale'],
    'attack_state': powergrid.DEFAULT_ATTACK_PARS['attack_state'],
    'grid_file': 'none',
    'train_samples': 10000,
    'nthreads': 1,
}


def log_message(msg, symbol='.', surround=False):
    """Little formatting helper"""
    res = '{}{:^40}{}'.format(5 * symbol, msg, 5 * symbol)
    if surround:
        res = '\n{}\n{}\n{}'.format(50 * symbol, res, 50 * symbol)
    logging.info(res)


def _pair(pars, key):
    value = pars[key]
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise readparam.ConfigError('{} must be a [low, high] pair, got {}'
                                    .format(key, value))
    low, high = float(value[0]), float(value[1])
    if low > high:
        raise readparam.ConfigError('{} must have low <= high, got {}'.format(
                key, value))
    return low, high


class ExperimentPlan(object):
    """
    What to run: a scenario, the detectors to compare, and how many
    seeded batches of each class to score.
    """

    def __init__(self, pars=None, **overrides):
        combined = dict(DEFAULT_PLAN_PARS)
        combined.update(pars or {})
        combined.update(overrides)
        unknown = sorted(set(combined) - set(DEFAULT_PLAN_PARS))
        if unknown:
            raise readparam.ConfigError('Unknown plan parameter(s): {}'
                                        .format(', '.join(unknown)))
        if combined['seed'] is None:
            combined['seed'] = readparam.default_seed()
        self.pars = combined

        self.scenario = str(combined['scenario'])
        if self.scenario not in SCENARIOS:
            raise readparam.ConfigError('scenario must be one of {}, got {}'
                                        .format(SCENARIOS, self.scenario))
        detectors = combined['detectors']
        if detectors == 'auto':
            detectors = ['uad', 'uad_oracle']
            if self.scenario == 'grid':
                detectors.append('jtest')
        if isinstance(detectors, str):
            detectors = [detectors]
        bad = [name for name in detectors if name not in DETECTORS]
        if bad:
            raise readparam.ConfigError('Unknown detector(s): {}'.format(
                    ', '.join(bad)))
        if 'jtest' in detectors and self.scenario != 'grid':
            raise readparam.ConfigError('The J test only applies to the grid '
                                        'scenario')
        self.detectors = list(detectors)

        try:
            self.batches_per_class = int(combined['batches_per_class'])
            self.batch_N = int(combined['batch_N'])
            self.alphabet_M = int(combined['alphabet_M'])
            self.fp_level_alpha = float(combined['fp_level_alpha'])
            self.epsilon = float(combined['epsilon'])
            self.seed = int(combined['seed'])
            self.train_samples = int(combined['train_samples'])
            self.nthreads = int(combined['nthreads'])
            self.attack_scale = float(combined['attack_scale'])
            self.attack_state = int(combined['attack_state'])
        except (TypeError, ValueError) as err:
            raise readparam.ConfigError('Bad plan parameter: {}'.format(err))
        if self.seed < 0:
            raise readparam.ConfigError('seed must be nonnegative, got {}'
                                        .format(self.seed))
        if min(self.batches_per_class, self.batch_N, self.train_samples) < 1:
            raise readparam.ConfigError('batches_per_class, batch_N and '
                                        'train_samples must be positive')
        if self.batches_per_class < 100:
            logging.warning('Only {} batches per class, too few for any '
                            'statistical claim'.format(self.batches_per_class))
        if not 0. < self.fp_level_alpha < 1.:
            raise readparam.ConfigError('fp_level_alpha must lie in (0,1)')
        self.h1_mu_range = _pair(combined, 'h1_mu_range')
        self.h1_sigma_range = _pair(combined, 'h1_sigma_range')
        self.h1_weight_range = _pair(combined, 'h1_weight_range')
        if self.h1_sigma_range[0] <= 0:
            raise readparam.ConfigError('h1_sigma_range must be positive')
        if not 0 <= self.h1_weight_range[0] <= self.h1_weight_range[1] <= 1:
            raise readparam.ConfigError('h1_weight_range must lie in [0,1]')

        self.grid = None
        self.attack = None
        if self.scenario == 'grid':
            grid_file = combined['grid_file']
            if grid_file in (None, '', 'none'):
                self.grid = powergrid.default_grid()
            else:
                self.grid = powergrid.load_grid(grid_file)[0]
            self.attack = powergrid.default_attack(
                    self.grid, scale=self.attack_scale,
                    state_ix=self.attack_state)

    @property
    def input_dim(self):
        if self.grid is not None:
            return self.grid.m_meas
        return 1

    def test_pars(self):
        return {'alphabet_M': self.alphabet_M, 'sample_N': self.batch_N,
                'fp_level_alpha': self.fp_level_alpha,
                'epsilon': self.epsilon}

    def null_cdf(self):
        """Exact CDF of the nominal distribution of this scenario"""
        if self.scenario in ('case1', 'case2'):
            return AnalyticCdf.normal(0., 1.)
        elif self.scenario == 'mixture':
            null = synthdata.MixtureScenario()
            return AnalyticCdf.mixture(null.weights, null.means, null.sigmas)
        return AnalyticCdf.mvnormal(self.grid.measurement_mean(),
                                    self.grid.measurement_cov())

    def oracle_model(self):
        return DetectorModel(self.null_cdf(), seed=self.seed,
                             **self.test_pars())

    def draw_batch(self, class_ix, batch_ix):
        """
        Batch `batch_ix` of class `class_ix` (0 nominal, 1 anomalous).

        Returns
        -------
        batch : [batch_N, d] float array
        nuisance : float
            The anomaly parameter of an H1 batch (mu, sigma, mixture
            weight or ||H c||); nan for H0 batches
        """
        rng = np.random.default_rng([self.seed, class_ix, batch_ix])
        N = self.batch_N
        nuisance = np.nan
        if self.scenario in ('case1', 'case2'):
            case_id = 1 if self.scenario == 'case1' else 2
            if class_ix == H0_CLASS:
                source = synthdata.null_scenario(case_id)
            else:
                source = synthdata.draw_alternative(
                        case_id, rng, mu_range=self.h1_mu_range,
                        sigma_range=self.h1_sigma_range)
                nuisance = source.nuisance
            batch = synthdata.gaussian_batch(source, N, rng=rng)
        elif self.scenario == 'mixture':
            if class_ix == H0_CLASS:
                source = synthdata.MixtureScenario()
            else:
                source = synthdata.draw_mixture_alternative(
                        rng, weight_range=self.h1_weight_range)
                nuisance = source.nuisance
            batch = synthdata.mixture_batch(source, N, rng=rng)
        else:
            attack = None
            if class_ix == H1_CLASS:
                attack = self.attack
                nuisance = np.linalg.norm(attack.attack_vector(self.grid))
            batch = powergrid.measurement_batch(self.grid, N, rng=rng,
                                                attack=attack)
        return batch.reshape(N, -1), nuisance

    def training_data(self, nsamples=None):
        """Nominal samples for training the learned detector"""
        if nsamples is None:
            nsamples = self.train_samples
        rng = np.random.default_rng([self.seed, TRAIN_STREAM])
        if self.scenario in ('case1', 'case2'):
            data = synthdata.gaussian_batch(synthdata.null_scenario(),
                                            nsamples, rng=rng)
        elif self.scenario == 'mixture':
            data = synthdata.mixture_batch(synthdata.MixtureScenario(),
                                           nsamples, rng=rng)
        else:
            data = powergrid.measurement_batch(self.grid, nsamples, rng=rng)
        return data.reshape(nsamples, -1)


def train_detector(plan, train_config=None):
    """
    Train an inverse generator on the plan's nominal data and wrap it
    with the plan's test settings.

    Returns
    -------
    model : DetectorModel
    trace : wigan.TrainingTrace
    """
    if train_config is None:
        train_config = wigan.TrainConfig(seed=plan.seed)
    generator, trace = wigan.train(plan.training_data(), train_config)
    model = DetectorModel(generator, seed=train_config.seed,
                          config_hash=train_config.fingerprint(),
                          **plan.test_pars())
    return model, trace


class BatchScores(object):
    """
    Per-batch scores of every detector, in batch order.

    Attributes
    ----------
    h0, h1 : dict
        detector name -> [batches_per_class] float array
    nuisance : [batches_per_class] float array
        Nuisance parameter of each H1 batch
    """

    def __init__(self, h0, h1, nuisance):
        self.h0 = h0
        self.h1 = h1
        self.nuisance = nuisance

    @property
    def detectors(self):
        return list(self.h0.keys())


def _score(name, model, batch, grid):
    if name == 'jtest':
        return powergrid.batch_jx_statistic(batch, grid)
    return detect(model, batch).k1_value


def _score_chunk(args):
    """Score one run of consecutive batches of one class"""
    plan, models, class_ix, batch_indices = args
    scores = dict((name, []) for name in plan.detectors)
    nuisance = []
    for batch_ix in batch_indices:
        batch, nuis = plan.draw_batch(class_ix, batch_ix)
        nuisance.append(nuis)
        for name in plan.detectors:
            scores[name].append(_score(name, models.get(name), batch,
                                       plan.grid))
    return scores, nuisance


def _resolve_models(plan, models):
    models = dict(models or {})
    if 'uad_oracle' in plan.detectors and 'uad_oracle' not in models:
        models['uad_oracle'] = plan.oracle_model()
    for name in plan.detectors:
        if name == 'jtest':
            continue
        if name not in models:
            raise ValueError('Missing model for detector {}'.format(name))
        model = models[name]
        if model.sample_N != plan.batch_N or model.input_dim != plan.input_dim:
            raise ValueError('Model for {} expects batches of {} x {}, plan '
                             'draws {} x {}'.format(
                    name, model.sample_N, model.input_dim, plan.batch_N,
                    plan.input_dim))
    return models


def score_batches(plan, models=None):
    """
    Score `plan.batches_per_class` batches of each class with every
    detector of the plan.

    Parameters
    ----------
    plan : ExperimentPlan
    models : dict {None}
        detector name -> DetectorModel. 'uad' must be supplied if
        requested; 'uad_oracle' is built from the plan if absent.

    Returns
    -------
    scores : BatchScores
    """
    models = _resolve_models(plan, models)
    chunks = np.array_split(np.arange(plan.batches_per_class),
                            max(1, 4 * plan.nthreads))
    tasks = [(plan, models, class_ix, chunk)
             for class_ix in (H0_CLASS, H1_CLASS)
             for chunk in chunks if len(chunk)]
    if plan.nthreads > 1:
        pool = Pool(plan.nthreads)
        try:
            results = pool.map(_score_chunk, tasks)
        finally:
            pool.close()
            pool.join()
    else:
        results = [_score_chunk(task) for task in tasks]

    merged = {H0_CLASS: dict((name, []) for name in plan.detectors),
              H1_CLASS: dict((name, []) for name in plan.detectors)}
    nuisance = []
    for (_, _, class_ix, _), (scores, nuis) in zip(tasks, results):
        for name in plan.detectors:
            merged[class_ix][name].extend(scores[name])
        if class_ix == H1_CLASS:
            nuisance.extend(nuis)
    as_arrays = lambda d: dict((k, np.array(v, dtype=np.float64))
                               for k, v in d.items())
    return BatchScores(as_arrays(merged[H0_CLASS]),
                       as_arrays(merged[H1_CLASS]),
                       np.array(nuisance, dtype=np.float64))


class RocCurve(object):
    """
    Empirical ROC curve. Points run from (0,0) to (1,1), one per
    distinct score, with equal scores grouped into a single step.
    """

    def __init__(self, fpr, tpr, auc, thresholds=None):
        self.fpr = np.asarray(fpr, dtype=np.float64)
        self.tpr = np.asarray(tpr, dtype=np.float64)
        self.auc = float(auc)
        self.thresholds = thresholds

    def __len__(self):
        return len(self.fpr)

    def points(self):
        return list(zip(self.fpr, self.tpr))


def roc(h0_scores, h1_scores, orientation='low'):
    """
    ROC curve of a detector that ranks batches by score.

    Parameters
    ----------
    h0_scores, h1_scores : float array_like
        Scores of nominal and anomalous batches
    orientation : str {'low'}
        'low' if low scores indicate an anomaly (K1), 'high' if high
        scores do (J)

    Returns
    -------
    curve : RocCurve
        Its area is computed by the trapezoid rule, which with grouped
        ties equals P(anomalous outranks nominal) + 0.5 P(tie)
    """
    h0_scores = np.asarray(h0_scores, dtype=np.float64).ravel()
    h1_scores = np.asarray(h1_scores, dtype=np.float64).ravel()
    if len(h0_scores) == 0 or len(h1_scores) == 0:
        raise ValueError('ROC needs at least one score of each class')
    if orientation not in ('low', 'high'):
        raise ValueError("orientation must be 'low' or 'high', got {}".format(
                orientation))
    labels = np.concatenate([np.zeros(len(h0_scores)),
                             np.ones(len(h1_scores))])
    scores = np.concatenate([h0_scores, h1_scores])
    if orientation == 'low':
        scores = -scores
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    return RocCurve(fpr, tpr, trapezoid_auc(fpr, tpr), thresholds=thresholds)


def rejection_rate(k1_scores, threshold_T):
    """Fraction of batches the coincidence test rejects, K1 <= T"""
    k1_scores = np.asarray(k1_scores)
    if k1_scores.size == 0:
        raise ValueError('No scores given')
    return float(np.mean(k1_scores <= threshold_T))


def run_experiment(plan, models=None):
    """
    Score every batch and compute one ROC curve per detector.

    Returns
    -------
    scores : BatchScores
    curves : dict
        detector name -> RocCurve
    """
    log_message('Scoring {} batches per class, scenario {}'.format(
            plan.batches_per_class, plan.scenario), surround=True)
    scores = score_batches(plan, models)
    curves = {}
    for name in plan.detectors:
        curves[name] = roc(scores.h0[name], scores.h1[name],
                           orientation=ORIENTATIONS[name])
        logging.info('{:>12}: AUC = {:.4f}'.format(name, curves[name].auc))
    return scores, curves


def write_roc_csv(curve, filename):
    """`fpr,tpr` rows followed by an `auc=<value>` line"""
    table = tabletool.build_table([curve.fpr, curve.tpr], ['fpr', 'tpr'])
    tabletool.write_table(table, filename,
                          footer='auc={:.17g}'.format(curve.auc))


def write_summary_csv(rows, filename):
    """
    Parameters
    ----------
    rows : [(detector, scenario, auc, batches)]
    """
    detectors, scenarios, aucs, batches = zip(*rows)
    table = tabletool.build_table(
            [np.array(detectors), np.array(scenarios),
             np.array(aucs, dtype=np.float64),
             np.array(batches, dtype=np.int64)],
            ['detector', 'scenario', 'auc', 'batches'])
    tabletool.write_table(table, filename)
