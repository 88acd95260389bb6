"""
detector.py

The detection pipeline: an inverse generator maps each raw observation
to (0,1), the outputs are quantised to M levels, and the coincidence
test decides whether the batch of N symbols looks uniform.

The generator is either a trained network (see wigan.py) or an analytic
CDF of a known null distribution. The analytic variant is an exact
probability integral transform, and so is the ideal the trained network
approximates.

Models are persisted in a plain text `.uadm` format: a `[header]`
section of `key = value` lines, a `[generator]` section, `[array ...]`
sections holding parameters with 17 significant digits, and a closing
`[end]` marker.
"""
from __future__ import division

from collections import namedtuple
import logging
from multiprocessing.pool import ThreadPool

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from . import readparam
from . import tabletool
from .tensornn import Mlp, ShapeError
from .uniformity import TestSpec, coincidence_test, quantize

FORMAT_VERSION = 1
MODEL_EXTENSION = '.uadm'

# Generator outputs are kept this far from 0 and 1
OUTPUT_CLAMP = 1e-12

ANALYTIC_KINDS = ('normal', 'mixture', 'mvnormal')
HEADER_KEYS = ('format_version', 'generator_kind', 'input_dim', 'alphabet_M',
               'sample_N', 'fp_level_alpha', 'epsilon', 'threshold_T', 'seed',
               'config_hash')


class ModelParseError(IOError):
    """A model file is truncated or malformed"""
    pass


class UnsupportedVersionError(IOError):
    """A model file was written by an unknown format version"""
    pass


class AnalyticCdf(object):
    """
    The CDF of a known null distribution, used as an inverse generator.

    kinds
    -----
    normal   : Phi((z - mu) / sigma), pars mu, sigma
    mixture  : sum_k w_k Phi((z - mu_k) / sigma_k), pars weights, means,
               sigmas
    mvnormal : chi-square CDF (dof d) of the Mahalanobis distance of z,
               pars mean [d], cov [d, d]
    """

    def __init__(self, kind, **pars):
        if kind not in ANALYTIC_KINDS:
            raise ValueError('Unknown analytic CDF kind: {}'.format(kind))
        self.kind = kind
        if kind == 'normal':
            self.mu = float(pars['mu'])
            self.sigma = float(pars['sigma'])
            if not self.sigma > 0:
                raise ValueError('sigma must be positive, got {}'.format(
                        self.sigma))
        elif kind == 'mixture':
            self.weights = np.array(pars['weights'], dtype=np.float64)
            self.means = np.array(pars['means'], dtype=np.float64)
            self.sigmas = np.array(pars['sigmas'], dtype=np.float64)
            if not (self.weights.shape == self.means.shape
                    == self.sigmas.shape) or self.weights.ndim != 1:
                raise ValueError('Mixture weights, means and sigmas must be '
                                 'matching 1D arrays')
            if np.any(self.weights < 0) \
                    or not np.isclose(np.sum(self.weights), 1.):
                raise ValueError('Mixture weights must be nonnegative and '
                                 'sum to 1')
            if np.any(self.sigmas <= 0):
                raise ValueError('Mixture sigmas must be positive')
        else:
            self.mean = np.array(pars['mean'], dtype=np.float64).reshape(-1)
            self.cov = np.array(pars['cov'], dtype=np.float64)
            d = len(self.mean)
            if self.cov.shape != (d, d):
                raise ValueError('cov must be {0}x{0}'.format(d))
            try:
                self._chol = np.linalg.cholesky(self.cov)
            except np.linalg.LinAlgError:
                raise ValueError('cov must be positive definite')

    @classmethod
    def normal(cls, mu=0., sigma=1.):
        return cls('normal', mu=mu, sigma=sigma)

    @classmethod
    def mixture(cls, weights, means, sigmas):
        return cls('mixture', weights=weights, means=means, sigmas=sigmas)

    @classmethod
    def mvnormal(cls, mean, cov):
        return cls('mvnormal', mean=mean, cov=cov)

    @property
    def input_dim(self):
        if self.kind == 'mvnormal':
            return len(self.mean)
        return 1

    def evaluate(self, batch):
        """Map an [n, d] batch to [n] CDF values"""
        batch = np.asarray(batch, dtype=np.float64)
        if self.kind == 'normal':
            return ndtr((batch[:, 0] - self.mu) / self.sigma)
        elif self.kind == 'mixture':
            z = batch[:, :1]
            return np.sum(self.weights * ndtr((z - self.means) / self.sigmas),
                          axis=1)
        whitened = np.linalg.solve(self._chol, (batch - self.mean).T)
        return chi2.cdf(np.sum(whitened**2, axis=0), self.input_dim)

    def scalars(self):
        if self.kind == 'normal':
            return {'mu': self.mu, 'sigma': self.sigma}
        return {}

    def arrays(self):
        if self.kind == 'mixture':
            return [('weights', self.weights), ('means', self.means),
                    ('sigmas', self.sigmas)]
        elif self.kind == 'mvnormal':
            return [('mean', self.mean), ('cov', self.cov)]
        return []

    def __repr__(self):
        return 'AnalyticCdf({})'.format(self.kind)


class Verdict(namedtuple('Verdict', ['decision', 'k1_value',
                                     'threshold_used'])):
    """Outcome of the test on one batch; decision is 'anomaly' or 'normal'"""
    __slots__ = ()

    @property
    def is_anomaly(self):
        return self.decision == 'anomaly'


class DetectorModel(object):
    """
    An inverse generator bundled with the coincidence test it feeds.

    Parameters
    ----------
    generator : tensornn.Mlp -or- AnalyticCdf
    alphabet_M : int {200}
    sample_N : int {50}
    fp_level_alpha : float {0.05}
    epsilon : float {0.}
        Declared resolution, stored but not used by the test
    seed : int {None}
        Seed the generator was trained with, if any
    config_hash : str {''}
        Fingerprint of the training configuration
    threshold_T : int {None}
        If given, must agree with the threshold derived from M, N, alpha
    """

    def __init__(self, generator, alphabet_M=200, sample_N=50,
                 fp_level_alpha=0.05, epsilon=0., seed=None, config_hash='',
                 threshold_T=None):
        if isinstance(generator, Mlp):
            if generator.output_dim != 1 \
                    or generator.output_activation != 'sigmoid':
                raise ValueError('A network generator needs a single sigmoid '
                                 'output')
        elif not isinstance(generator, AnalyticCdf):
            raise TypeError('generator must be an Mlp or AnalyticCdf, got {}'
                            .format(type(generator)))
        self.generator = generator
        self.test_spec = TestSpec(alphabet_M, sample_N, fp_level_alpha,
                                  epsilon=epsilon, threshold_T=threshold_T)
        self.seed = seed
        self.config_hash = config_hash
        self.format_version = FORMAT_VERSION

    @property
    def generator_kind(self):
        if isinstance(self.generator, Mlp):
            return 'mlp'
        return self.generator.kind

    @property
    def input_dim(self):
        return self.generator.input_dim

    @property
    def alphabet_M(self):
        return self.test_spec.alphabet_M

    @property
    def sample_N(self):
        return self.test_spec.sample_N

    @property
    def fp_level_alpha(self):
        return self.test_spec.fp_level_alpha

    @property
    def epsilon(self):
        return self.test_spec.epsilon

    @property
    def threshold_T(self):
        return self.test_spec.threshold_T

    def __repr__(self):
        return 'DetectorModel({}, M={}, N={}, alpha={}, T={})'.format(
                self.generator_kind, self.alphabet_M, self.sample_N,
                self.fp_level_alpha, self.threshold_T)


def _as_batch(model, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1 and model.input_dim == 1:
        batch = batch.reshape(-1, 1)
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise ShapeError('Batch has shape {}, model expects observations of '
                         'dimension {}'.format(np.shape(batch),
                                               model.input_dim))
    if batch.shape[0] == 0:
        raise ShapeError('Batch is empty')
    return batch


def transform(model, batch):
    """
    Generator outputs, clamped to [1e-12, 1 - 1e-12], quantised to
    `model.alphabet_M` symbols.

    Parameters
    ----------
    model : DetectorModel
    batch : [n, d] float array_like ([n] is accepted when d is 1)

    Returns
    -------
    symbols : [n] int array
    """
    batch = _as_batch(model, batch)
    y = model.generator.evaluate(batch)
    if np.any(np.isnan(y)):
        raise tabletool.DataError('Generator produced NaN, is the batch '
                                  'finite?')
    y = np.clip(y, OUTPUT_CLAMP, 1. - OUTPUT_CLAMP)
    return quantize(y, model.alphabet_M)


def detect(model, batch):
    """
    Run the full pipeline on one batch of exactly `model.sample_N`
    observations.

    Returns
    -------
    verdict : Verdict
    """
    batch = _as_batch(model, batch)
    if batch.shape[0] != model.sample_N:
        raise ShapeError('Batch holds {} observations, model expects {}'
                         .format(batch.shape[0], model.sample_N))
    reject, k1 = coincidence_test(transform(model, batch), model.test_spec)
    decision = 'anomaly' if reject else 'normal'
    return Verdict(decision, k1, model.threshold_T)


def detect_many(model, batches, nthreads=1):
    """
    Apply `detect` to each batch. With nthreads > 1 batches are spread
    over a thread pool; verdicts are returned in input order.
    """
    batches = list(batches)
    if nthreads is None or nthreads <= 1 or len(batches) < 2:
        return [detect(model, batch) for batch in batches]
    pool = ThreadPool(nthreads)
    try:
        return pool.map(lambda batch: detect(model, batch), batches)
    finally:
        pool.close()
        pool.join()


def normal_model(mu=0., sigma=1., **test_pars):
    """Oracle detector for a N(mu, sigma^2) null"""
    return DetectorModel(AnalyticCdf.normal(mu, sigma), **test_pars)


def mixture_model(weights, means, sigmas, **test_pars):
    return DetectorModel(AnalyticCdf.mixture(weights, means, sigmas),
                         **test_pars)


def mvnormal_model(mean, cov, **test_pars):
    return DetectorModel(AnalyticCdf.mvnormal(mean, cov), **test_pars)


# ---------------------------------------------------------------------
#  Persistence
# ---------------------------------------------------------------------

def _format_float(value):
    return '{:.17g}'.format(float(value))


def _array_lines(name, array):
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 1:
        yield '[array {} {}]'.format(name, array.shape[0])
        yield ','.join(_format_float(v) for v in array)
    elif array.ndim == 2:
        yield '[array {} {} {}]'.format(name, *array.shape)
        for row in array:
            yield ','.join(_format_float(v) for v in row)
    else:
        raise ValueError('Only 1D and 2D arrays can be stored')


def dumps_model(model):
    """The `.uadm` text of a DetectorModel"""
    lines = ['# uadetect detector model', '[header]']
    header = {
        'format_version': model.format_version,
        'generator_kind': model.generator_kind,
        'input_dim': model.input_dim,
        'alphabet_M': model.alphabet_M,
        'sample_N': model.sample_N,
        'fp_level_alpha': _format_float(model.fp_level_alpha),
        'epsilon': _format_float(model.epsilon),
        'threshold_T': model.threshold_T,
        'seed': 'none' if model.seed is None else model.seed,
        'config_hash': model.config_hash or 'none',
    }
    for key in HEADER_KEYS:
        lines.append('{} = {}'.format(key, header[key]))

    gen = model.generator
    lines.append('[generator]')
    if isinstance(gen, Mlp):
        lines.append('layer_dims = {}'.format(readparam.format_value(
                list(gen.layer_dims))))
        lines.append('hidden_activation = {}'.format(gen.hidden_activation))
        lines.append('output_activation = {}'.format(gen.output_activation))
        arrays = [('input_mean', gen.input_mean),
                  ('input_scale', gen.input_scale)]
        for l, (W, b) in enumerate(zip(gen.weights, gen.biases)):
            arrays.append(('W{}'.format(l), W))
            arrays.append(('b{}'.format(l), b))
    else:
        for key, value in sorted(gen.scalars().items()):
            lines.append('{} = {}'.format(key, _format_float(value)))
        arrays = gen.arrays()
    for name, array in arrays:
        lines.extend(_array_lines(name, array))
    lines.append('[end]')
    return '\n'.join(lines) + '\n'


def save_model(model, filename):
    """
    Write `model` to `filename` atomically.

    Returns
    -------
    payload : bytes
        Exactly what was written
    """
    text = dumps_model(model)
    with tabletool.atomic_open(filename) as fp:
        fp.write(text)
    logging.info('Saved {} to {}'.format(model, filename))
    return text.encode('utf-8')


def _split_sections(text):
    """[(section_title, [lines])], checking for the closing marker"""
    sections = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped == '' or stripped.startswith('#'):
            continue
        if stripped.startswith('[') and stripped.endswith(']'):
            sections.append((stripped[1:-1].strip(), []))
        elif not sections:
            raise ModelParseError('Line {} lies outside any section'.format(
                    lineno))
        else:
            sections[-1][1].append(stripped)
    if not sections or sections[-1][0] != 'end':
        raise ModelParseError('[end] marker missing, file is truncated')
    if sections[-1][1]:
        raise ModelParseError('[end]: unexpected content after end marker')
    return sections[:-1]


def _parse_pairs(section, lines):
    pairs = {}
    for line in lines:
        try:
            pair = readparam.parse_line(line)
        except readparam.ConfigError as err:
            raise ModelParseError('[{}]: {}'.format(section, err))
        pairs[pair[0]] = pair[1]
    return pairs


def _parse_array(title, lines):
    fields = title.split()
    try:
        name = fields[1]
        shape = tuple(int(dim) for dim in fields[2:])
    except (IndexError, ValueError):
        raise ModelParseError('[{}]: bad array header'.format(title))
    if len(shape) not in (1, 2):
        raise ModelParseError('[{}]: arrays must be 1D or 2D'.format(title))
    nrows = 1 if len(shape) == 1 else shape[0]
    ncols = shape[-1]
    if len(lines) != nrows:
        raise ModelParseError('[{}]: expected {} row(s), found {}'.format(
                title, nrows, len(lines)))
    try:
        rows = [[float(v) for v in line.split(',')] for line in lines]
    except ValueError:
        raise ModelParseError('[{}]: non-numeric entry'.format(title))
    if any(len(row) != ncols for row in rows):
        raise ModelParseError('[{}]: expected {} value(s) per row'.format(
                title, ncols))
    return name, np.array(rows, dtype=np.float64).reshape(shape)


def _header_value(pairs, key, convert):
    if key not in pairs:
        raise ModelParseError('[header]: missing {}'.format(key))
    try:
        return convert(pairs[key])
    except ValueError:
        raise ModelParseError('[header]: bad value for {}: {}'.format(
                key, pairs[key]))


def loads_model(text):
    """Parse `.uadm` text back into a DetectorModel"""
    sections = _split_sections(text)
    if not sections or sections[0][0] != 'header':
        raise ModelParseError('[header] must be the first section')
    header = _parse_pairs('header', sections[0][1])
    version = _header_value(header, 'format_version', int)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError('Model format_version {} is not '
                                      'supported (expected {})'.format(
                version, FORMAT_VERSION))
    kind = _header_value(header, 'generator_kind', str)
    input_dim = _header_value(header, 'input_dim', int)
    test_pars = {
        'alphabet_M': _header_value(header, 'alphabet_M', int),
        'sample_N': _header_value(header, 'sample_N', int),
        'fp_level_alpha': _header_value(header, 'fp_level_alpha', float),
        'epsilon': _header_value(header, 'epsilon', float),
    }
    threshold_T = _header_value(header, 'threshold_T', int)
    seed = _header_value(header, 'seed', str)
    config_hash = _header_value(header, 'config_hash', str)

    if len(sections) < 2 or sections[1][0] != 'generator':
        raise ModelParseError('[generator] section missing')
    gen_pars = _parse_pairs('generator', sections[1][1])
    arrays = {}
    for title, lines in sections[2:]:
        if not title.startswith('array '):
            raise ModelParseError('[{}]: unknown section'.format(title))
        name, array = _parse_array(title, lines)
        arrays[name] = array

    try:
        if kind == 'mlp':
            layer_dims = [int(dim) for dim
                          in readparam.convert_value(gen_pars['layer_dims'])]
            nlayers = len(layer_dims) - 1
            generator = Mlp(
                    layer_dims,
                    [arrays['W{}'.format(l)] for l in range(nlayers)],
                    [arrays['b{}'.format(l)] for l in range(nlayers)],
                    hidden_activation=gen_pars['hidden_activation'],
                    output_activation=gen_pars['output_activation'],
                    input_mean=arrays['input_mean'],
                    input_scale=arrays['input_scale'])
        elif kind == 'normal':
            generator = AnalyticCdf.normal(float(gen_pars['mu']),
                                           float(gen_pars['sigma']))
        elif kind in ANALYTIC_KINDS:
            generator = AnalyticCdf(kind, **arrays)
        else:
            raise ModelParseError('[header]: unknown generator_kind {}'
                                  .format(kind))
    except KeyError as err:
        raise ModelParseError('[generator]: missing {}'.format(err))
    except (ValueError, TypeError) as err:
        raise ModelParseError('[generator]: {}'.format(err))
    if generator.input_dim != input_dim:
        raise ModelParseError('[header]: input_dim {} does not match the '
                              'generator ({})'.format(input_dim,
                                                      generator.input_dim))

    try:
        return DetectorModel(
                generator, threshold_T=threshold_T,
                seed=None if seed == 'none' else int(seed),
                config_hash='' if config_hash == 'none' else config_hash,
                **test_pars)
    except ValueError as err:
        raise ModelParseError('[header]: {}'.format(err))


def load_model(filename):
    """
    Read a `.uadm` file.

    Raises
    ------
    ModelParseError
        On a truncated or malformed file, naming the offending section
    UnsupportedVersionError
        If the file declares a format version this code does not know
    """
    try:
        with open(filename, 'r') as fp:
            text = fp.read()
    except (IOError, OSError) as err:
        raise ModelParseError('Could not read model {}: {}'.format(filename,
                                                                    err))
    model = loads_model(text)
    logging.info('Loaded {} from {}'.format(model, filename))
    return model
