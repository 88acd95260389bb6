"""
wigan.py

Training of the inverse generator: a network g that maps nominal data
to the uniform distribution on (0,1), learned by Wasserstein adversarial
training with weight clipping.

Each generator iteration runs `critic_iters_n` critic updates, each of
which descends on

    L_f = mean f(U) - mean f(g(Z)),     U ~ Uniform(0,1)

followed by clipping of every critic parameter into [-clip_c, clip_c],
and then a single generator update descending on

    L_g = mean f(g(Z)).

Every `val_every` iterations the current generator is scored by the
mean K1 statistic over fixed validation batches, and the best scoring
snapshot is what `train` returns.
"""
from __future__ import division

import hashlib
import logging

import numpy as np

from . import readparam
from . import tabletool
from .tensornn import (Mlp, RmsPropState, ShapeError, backward, clip_weights,
                       forward_layers, params_finite, rmsprop_step)
from .uniformity import k1_statistic, quantize

# Shared with detector.OUTPUT_CLAMP
EPS_OUT = 1e-12


class DegenerateInputError(ValueError):
    """Training data carries no information, e.g. a constant column"""
    pass


class InsufficientDataError(ValueError):
    """Too few rows to fill a minibatch or the validation batches"""
    pass


class TrainingDivergedError(ArithmeticError):
    """A loss or parameter became non-finite"""
    pass


def log_message(msg, symbol='.', surround=False):
    """Little formatting helper"""
    res = '{}{:^40}{}'.format(5 * symbol, msg, 5 * symbol)
    if surround:
        res = '\n{}\n{}\n{}'.format(50 * symbol, res, 50 * symbol)
    logging.info(res)


def _to_int(key, value):
    try:
        if isinstance(value, bool) or int(value) != float(value):
            raise ValueError
        return int(value)
    except (TypeError, ValueError):
        raise readparam.ConfigError('{} must be an integer, got {!r}'.format(
                key, value))


def _to_float(key, value):
    try:
        if isinstance(value, bool):
            raise ValueError
        return float(value)
    except (TypeError, ValueError):
        raise readparam.ConfigError('{} must be a number, got {!r}'.format(
                key, value))


class TrainConfig(object):
    """
    Hyper-parameters of a training run.

    Architectures are given by their hidden layer widths: the generator
    is [d] + generator_hidden + [1] and the critic
    [1] + critic_hidden + [1].
    """
    DEFAULT_PARS = {
        'learning_rate': 0.001,
        'clip_c': 0.01,
        'batch_size_m': 100,
        'critic_iters_n': 10,
        'total_generator_iters': 2000,
        'seed': None,
        'generator_hidden': [32, 32],
        'critic_hidden': [32, 32],
        'validation_fraction': 0.1,
        'val_every': 50,
        'val_batches': 100,
        'val_sample_N': 50,
        'val_levels_M': 200,
        'standardise_input': True,
    }

    POSITIVE_INTS = ('batch_size_m', 'critic_iters_n', 'total_generator_iters',
                     'val_every', 'val_batches', 'val_sample_N',
                     'val_levels_M')

    def __init__(self, pars=None, **overrides):
        combined = dict(self.DEFAULT_PARS)
        combined.update(pars or {})
        combined.update(overrides)
        unknown = sorted(set(combined) - set(self.DEFAULT_PARS))
        if unknown:
            raise readparam.ConfigError('Unknown training parameter(s): {}'
                                        .format(', '.join(unknown)))
        if combined['seed'] is None:
            combined['seed'] = readparam.default_seed()
        self.pars = combined
        self._check()

    def _check(self):
        pars = self.pars
        for key in self.POSITIVE_INTS + ('seed',):
            pars[key] = _to_int(key, pars[key])
            if pars[key] < (0 if key == 'seed' else 1):
                raise readparam.ConfigError('{} must be {}, got {}'.format(
                        key, 'nonnegative' if key == 'seed' else 'positive',
                        pars[key]))
        for key in ('learning_rate', 'clip_c', 'validation_fraction'):
            pars[key] = _to_float(key, pars[key])
        for key in ('learning_rate', 'clip_c'):
            if not pars[key] > 0:
                raise readparam.ConfigError('{} must be positive, got {}'
                                            .format(key, pars[key]))
        if not 0. <= pars['validation_fraction'] < 1.:
            raise readparam.ConfigError('validation_fraction must lie in '
                                        '[0,1), got {}'.format(
                    pars['validation_fraction']))
        for key in ('generator_hidden', 'critic_hidden'):
            widths = pars[key]
            if not isinstance(widths, (list, tuple)):
                widths = [widths]
            pars[key] = [_to_int(key, w) for w in widths]
            if not pars[key] or min(pars[key]) < 1:
                raise readparam.ConfigError('{} must list positive widths, '
                                            'got {}'.format(key, widths))
        if not isinstance(pars['standardise_input'], bool):
            raise readparam.ConfigError('standardise_input must be True or '
                                        'False')

    def __getattr__(self, name):
        try:
            return self.__dict__['pars'][name]
        except KeyError:
            raise AttributeError(name)

    def generator_arch(self, input_dim):
        return [int(input_dim)] + self.generator_hidden + [1]

    def critic_arch(self):
        return [1] + self.critic_hidden + [1]

    def as_dict(self):
        return dict(self.pars)

    def fingerprint(self):
        """Stable SHA-1 hash of the resolved parameters"""
        lines = ['{}={}'.format(k, readparam.format_value(self.pars[k]))
                 for k in sorted(self.pars)]
        return hashlib.sha1('\n'.join(lines).encode('utf-8')).hexdigest()


class TrainingTrace(object):
    """Per-iteration losses and, at checkpoints, the validation score"""

    COLNAMES = ('iter', 'critic_loss', 'gen_loss', 'val_k1_mean')

    def __init__(self):
        self.iteration = []
        self.critic_loss = []
        self.gen_loss = []
        self.val_k1_mean = []

    def append(self, iteration, critic_loss, gen_loss, val_k1_mean=np.nan):
        self.iteration.append(int(iteration))
        self.critic_loss.append(float(critic_loss))
        self.gen_loss.append(float(gen_loss))
        self.val_k1_mean.append(float(val_k1_mean))

    def __len__(self):
        return len(self.iteration)

    def to_table(self):
        return tabletool.build_table(
                [np.array(self.iteration, dtype=np.int64),
                 np.array(self.critic_loss), np.array(self.gen_loss),
                 np.array(self.val_k1_mean)],
                self.COLNAMES)


def write_trace_csv(trace, filename):
    tabletool.write_table(trace.to_table(), filename)


def _as_column(values, name):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    if values.ndim != 2 or values.shape[1] != 1:
        raise ShapeError('{} must be a column of scalars, got shape {}'
                         .format(name, values.shape))
    return values


def critic_step(critic, generator, data_batch, uniform_batch, learning_rate,
                state, clip_c):
    """
    One critic update.

    Parameters
    ----------
    critic : Mlp
        Identity output, input dimension 1
    generator : Mlp
    data_batch : [m, d] float array
    uniform_batch : [m] float array
        Reference draws from Uniform(0,1)
    learning_rate : float
    state : RmsPropState
        Critic optimiser state
    clip_c : float

    Returns
    -------
    critic : Mlp
        Updated and clipped
    state : RmsPropState
    loss : float
        mean f(U) - mean f(g(Z)) before the update
    """
    generated = _as_column(generator.evaluate(data_batch), 'generator output')
    uniform = _as_column(uniform_batch, 'uniform batch')
    if len(uniform) != len(generated):
        raise ShapeError('Uniform batch has {} rows, data batch {}'.format(
                len(uniform), len(generated)))
    if len(uniform) == 0:
        raise ShapeError('Cannot train on an empty batch')
    m = len(uniform)

    inputs = np.vstack([uniform, generated])
    weights = np.concatenate([np.full(m, 1. / m), np.full(m, -1. / m)])
    scores = forward_layers(critic, inputs)[1][-1][:, 0]
    loss = float(np.dot(weights, scores))

    grads = backward(critic, inputs, weights.reshape(-1, 1))
    params, state = rmsprop_step(critic.get_params(), grads, state,
                                 learning_rate)
    return critic.with_params(clip_weights(params, clip_c)), state, loss


def generator_step(generator, critic, data_batch, learning_rate, state):
    """
    One generator update, descending on mean f(g(Z)). The generator is
    not clipped.

    Returns
    -------
    generator : Mlp
    state : RmsPropState
        Generator optimiser state
    loss : float
        mean f(g(Z)) before the update
    """
    data_batch = np.asarray(data_batch, dtype=np.float64)
    if data_batch.ndim == 1:
        data_batch = data_batch.reshape(-1, generator.input_dim)
    m = len(data_batch)
    if m == 0:
        raise ShapeError('Cannot train on an empty batch')
    generated = forward_layers(generator, data_batch)[1][-1]
    upstream = np.full((m, 1), 1. / m)
    scores = forward_layers(critic, generated)[1][-1]
    loss = float(np.mean(scores))

    _, dloss_dy = backward(critic, generated, upstream,
                           return_input_grad=True)
    grads = backward(generator, data_batch, dloss_dy)
    params, state = rmsprop_step(generator.get_params(), grads, state,
                                 learning_rate)
    return generator.with_params(params), state, loss


def validation_k1_mean(generator, val_data, batch_ix, levels_M):
    """
    Mean K1 of the generator's quantised outputs over validation batches.

    Parameters
    ----------
    generator : Mlp
    val_data : [n_val, d] float array
    batch_ix : [nbatches, N] int array
        Row indices of val_data forming each batch
    levels_M : int

    Returns
    -------
    score : float
        Higher is better; the ideal is uniformity.expected_k1(M, N)
    """
    y = np.clip(generator.evaluate(val_data), EPS_OUT, 1. - EPS_OUT)
    symbols = quantize(y, levels_M)
    return float(np.mean([k1_statistic(symbols[ix]) for ix in batch_ix]))


def _check_data(data, config):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InsufficientDataError('Training data has no rows')
    bad_rows = np.flatnonzero(~np.all(np.isfinite(data), axis=1))
    if len(bad_rows):
        raise DegenerateInputError('Training data row {} is not finite'
                                   .format(bad_rows[0] + 1))
    spread = np.std(data, axis=0)
    if np.any(spread == 0):
        raise DegenerateInputError('Training data column {} is constant'
                                   .format(int(np.argmin(spread))))

    nval = int(round(config.validation_fraction * len(data)))
    ntrain = len(data) - nval
    if ntrain < config.batch_size_m:
        raise InsufficientDataError('{} training rows cannot fill a '
                                    'minibatch of {}'.format(
                ntrain, config.batch_size_m))
    if nval and nval < config.val_sample_N:
        raise InsufficientDataError('{} validation rows cannot fill a '
                                    'validation batch of {}'.format(
                nval, config.val_sample_N))
    return data, ntrain


def train(data, config=None):
    """
    Fit an inverse generator to nominal data.

    Parameters
    ----------
    data : [T, d] float array_like ([T] is read as d = 1)
        Anomaly-free training samples
    config : TrainConfig {None}
        Defaults to TrainConfig()

    Returns
    -------
    generator : Mlp
        The best validation snapshot (the final one if
        validation_fraction is 0)
    trace : TrainingTrace

    Raises
    ------
    DegenerateInputError
    InsufficientDataError
    TrainingDivergedError
    """
    if config is None:
        config = TrainConfig()
    data, ntrain = _check_data(data, config)

    init_gen, init_critic, split, minibatch, uniform = \
        [np.random.default_rng(s) for s
         in np.random.SeedSequence(config.seed).spawn(5)]

    order = split.permutation(len(data))
    train_data = data[order[:ntrain]]
    val_data = data[order[ntrain:]]
    if len(val_data):
        batch_ix = np.array([split.choice(len(val_data),
                                          size=config.val_sample_N,
                                          replace=False)
                             for _ in range(config.val_batches)])

    generator = Mlp.build(config.generator_arch(data.shape[1]),
                          output_activation='sigmoid', rng=init_gen)
    if config.standardise_input:
        generator = generator.with_input_standardisation(
                np.mean(train_data, axis=0), np.std(train_data, axis=0))
    critic = Mlp.build(config.critic_arch(), output_activation='identity',
                       rng=init_critic)
    gen_state = RmsPropState.zeros_like(generator.get_params())
    critic_state = RmsPropState.zeros_like(critic.get_params())

    log_message('Training inverse generator', surround=True)
    logging.info('{} training rows, {} validation rows, config hash {}'
                 .format(len(train_data), len(val_data),
                         config.fingerprint()))

    trace = TrainingTrace()
    best_generator = generator
    best_score = -np.inf
    m = config.batch_size_m
    for iteration in range(1, config.total_generator_iters + 1):
        try:
            with np.errstate(over='ignore', invalid='ignore'):
                for _ in range(config.critic_iters_n):
                    u = uniform.random(m)
                    z = train_data[minibatch.integers(0, ntrain, size=m)]
                    critic, critic_state, critic_loss = critic_step(
                            critic, generator, z, u, config.learning_rate,
                            critic_state, config.clip_c)
                z = train_data[minibatch.integers(0, ntrain, size=m)]
                generator, gen_state, gen_loss = generator_step(
                        generator, critic, z, config.learning_rate, gen_state)
        except ShapeError:
            raise
        except ValueError as err:
            # non-finite values rejected by the network engine
            raise TrainingDivergedError('Training diverged at generator '
                                        'iteration {}: {}'.format(iteration,
                                                                  err))

        if not (np.isfinite(critic_loss) and np.isfinite(gen_loss)
                and params_finite(critic.get_params())
                and params_finite(generator.get_params())):
            raise TrainingDivergedError('Training diverged at generator '
                                        'iteration {}'.format(iteration))

        score = np.nan
        checkpoint = (iteration % config.val_every == 0
                      or iteration == config.total_generator_iters)
        if len(val_data) and checkpoint:
            score = validation_k1_mean(generator, val_data, batch_ix,
                                       config.val_levels_M)
            if score > best_score:
                best_score = score
                best_generator = generator
            logging.info('iter {:5d}: critic loss {:.5f}, generator loss '
                         '{:.5f}, validation K1 {:.3f}'.format(
                    iteration, critic_loss, gen_loss, score))
        trace.append(iteration, critic_loss, gen_loss, score)

    if not len(val_data):
        best_generator = generator
    else:
        logging.info('Best validation K1: {:.3f}'.format(best_score))
    return best_generator, trace
