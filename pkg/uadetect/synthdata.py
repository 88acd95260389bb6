"""
synthdata.py

Synthetic Gaussian scenarios for exercising the detector: a nominal
(H0) source and families of anomalous (H1) sources whose parameters are
nuisance variables, drawn afresh for every batch.

Case 1 moves the mean:   H0 = N(0, 1),  H1 = N(mu, 1),    mu    in (-1, 1)
Case 2 moves the spread: H0 = N(0, 1),  H1 = N(0, sigma), sigma in (0.5, 0.8)
Mixture:                 H0 = 0.5 N(-2, 1) + 0.5 N(2, 1),
                         H1 = w N(-2, 1) + (1 - w) N(2, 1), w in (0.2, 0.4)

Every sampler takes an explicit `numpy.random.Generator`; identical
generators give identical batches.
"""
from __future__ import division

import logging

import numpy as np

CASE_IDS = (1, 2)
DEFAULT_MU_RANGE = (-1., 1.)
DEFAULT_SIGMA_RANGE = (0.5, 0.8)

MIXTURE_MEANS = (-2., 2.)
MIXTURE_SIGMAS = (1., 1.)
MIXTURE_H0_WEIGHT = 0.5
DEFAULT_WEIGHT_RANGE = (0.2, 0.4)


def _rng(rng=None, seed=None):
    if rng is None:
        rng = np.random.default_rng(seed)
    return rng


def _check_range(bounds, name, positive=False):
    low, high = (float(b) for b in bounds)
    if not low <= high:
        raise ValueError('{} must satisfy low <= high, got {}'.format(
                name, bounds))
    if positive and low <= 0:
        raise ValueError('{} must be positive, got {}'.format(name, bounds))
    return low, high


def draw_uniform(bounds, rng):
    """A uniform draw from [low, high]; a pinned range returns low"""
    low, high = bounds
    if low == high:
        return low
    return rng.uniform(low, high)


class GaussianScenario(object):
    """
    A one-dimensional Gaussian source N(mu, sigma^2).

    Case 1 scenarios have unit spread, case 2 scenarios have zero mean.
    The null N(0, 1) belongs to both.
    """

    def __init__(self, case_id=1, mu=0., sigma=1., seed=None):
        if case_id not in CASE_IDS:
            raise ValueError('case_id must be one of {}, got {}'.format(
                    CASE_IDS, case_id))
        if not sigma > 0:
            raise ValueError('sigma must be positive, got {}'.format(sigma))
        if case_id == 1 and sigma != 1.:
            raise ValueError('Case 1 scenarios have sigma = 1, got {}'.format(
                    sigma))
        if case_id == 2 and mu != 0.:
            raise ValueError('Case 2 scenarios have mu = 0, got {}'.format(mu))
        self.case_id = case_id
        self.mu = float(mu)
        self.sigma = float(sigma)
        self.seed = seed

    @property
    def nuisance(self):
        """The parameter that varies between anomalous batches"""
        return self.mu if self.case_id == 1 else self.sigma

    def sample(self, N, rng=None):
        return gaussian_batch(self, N, rng=rng)

    def __repr__(self):
        return 'GaussianScenario(case_id={}, mu={}, sigma={})'.format(
                self.case_id, self.mu, self.sigma)


def null_scenario(case_id=1, seed=None):
    return GaussianScenario(case_id=case_id, mu=0., sigma=1., seed=seed)


def gaussian_batch(scenario, N, rng=None):
    """
    Draw N i.i.d. samples from `scenario`.

    Samples are built as mu + sigma * z from standard normal z, so two
    scenarios differing only in sigma give proportional batches from the
    same generator state.

    Parameters
    ----------
    scenario : GaussianScenario
    N : int
        Must be positive
    rng : numpy.random.Generator {None}
        Defaults to a generator seeded with `scenario.seed`

    Returns
    -------
    batch : [N] float array
    """
    if N < 1:
        raise ValueError('Batch size must be positive, got {}'.format(N))
    rng = _rng(rng, scenario.seed)
    return scenario.mu + scenario.sigma * rng.standard_normal(N)


def draw_alternative(case_id, rng, mu_range=DEFAULT_MU_RANGE,
                     sigma_range=DEFAULT_SIGMA_RANGE):
    """
    Draw the nuisance parameter of one anomalous batch.

    Parameters
    ----------
    case_id : int
        1 draws mu from `mu_range`, 2 draws sigma from `sigma_range`
    rng : numpy.random.Generator
    mu_range, sigma_range : (float, float)
        Equal bounds pin the nuisance to a single value

    Returns
    -------
    scenario : GaussianScenario
    """
    if case_id == 1:
        mu = draw_uniform(_check_range(mu_range, 'mu_range'), rng)
        return GaussianScenario(case_id=1, mu=mu, sigma=1.)
    elif case_id == 2:
        sigma = draw_uniform(_check_range(sigma_range, 'sigma_range',
                                          positive=True), rng)
        return GaussianScenario(case_id=2, mu=0., sigma=sigma)
    raise ValueError('case_id must be one of {}, got {}'.format(CASE_IDS,
                                                                 case_id))


class MixtureScenario(object):
    """
    Two component Gaussian mixture, w N(m0, s0^2) + (1-w) N(m1, s1^2).
    The weight w of the first component is the nuisance parameter.
    """

    def __init__(self, weight=MIXTURE_H0_WEIGHT, means=MIXTURE_MEANS,
                 sigmas=MIXTURE_SIGMAS, seed=None):
        if not 0. <= weight <= 1.:
            raise ValueError('Mixture weight must lie in [0,1], got {}'
                             .format(weight))
        if len(means) != 2 or len(sigmas) != 2:
            raise ValueError('Mixture needs exactly two components')
        if min(sigmas) <= 0:
            raise ValueError('Component sigmas must be positive')
        self.weight = float(weight)
        self.means = tuple(float(m) for m in means)
        self.sigmas = tuple(float(s) for s in sigmas)
        self.seed = seed

    @property
    def nuisance(self):
        return self.weight

    @property
    def weights(self):
        return (self.weight, 1. - self.weight)

    def sample(self, N, rng=None):
        return mixture_batch(self, N, rng=rng)

    def __repr__(self):
        return 'MixtureScenario(weight={}, means={}, sigmas={})'.format(
                self.weight, self.means, self.sigmas)


def mixture_batch(scenario, N, rng=None):
    """N i.i.d. draws from a MixtureScenario, as an [N] float array"""
    if N < 1:
        raise ValueError('Batch size must be positive, got {}'.format(N))
    rng = _rng(rng, scenario.seed)
    first = rng.random(N) < scenario.weight
    z = rng.standard_normal(N)
    means = np.where(first, scenario.means[0], scenario.means[1])
    sigmas = np.where(first, scenario.sigmas[0], scenario.sigmas[1])
    return means + sigmas * z


def draw_mixture_alternative(rng, weight_range=DEFAULT_WEIGHT_RANGE):
    weight = draw_uniform(_check_range(weight_range, 'weight_range'), rng)
    if not 0. <= weight <= 1.:
        raise ValueError('weight_range must lie inside [0,1]')
    return MixtureScenario(weight=weight)


def training_samples(scenario, nsamples, seed=None):
    """
    Nominal training data for the generator, as an [nsamples, 1] array.
    """
    rng = _rng(seed=seed)
    samples = scenario.sample(nsamples, rng=rng).reshape(-1, 1)
    logging.info('Drew {} training samples from {}'.format(nsamples,
                                                             scenario))
    return samples
