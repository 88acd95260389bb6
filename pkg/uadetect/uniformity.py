"""
uniformity.py

Quantisation of transformed samples and the coincidence test for
uniformity on a finite alphabet.

Under the null hypothesis the quantised samples X_1..X_N are i.i.d.
uniform over an M-letter alphabet. The test statistic K1 is the number
of samples whose value occurs exactly once in the batch. K1 is largest,
in expectation, under the uniform distribution, so small values of K1
are evidence against uniformity.

The exact null distribution of K1 is given by an alternating sum
(the classical occupancy result):

    P0(K1 = k) = sum_{j=k}^{min(M,N)} (-1)^(j+k) C(j,k) C(M,j)
                 N!/(N-j)! (M-j)^(N-j) / M^N

The terms cancel catastrophically in floating point for realistic
(M, N) such as (200, 50), so all terms are python integers and the only
division is the final one, done with `fractions.Fraction`.
"""
from __future__ import division

from fractions import Fraction
from functools import lru_cache
from math import comb, perm
import logging

import numpy as np


class QuantizationDomainError(ValueError):
    """A value handed to the quantiser lies outside [0, 1]"""
    pass


class QuantizerSpec(object):
    """M-level uniform quantiser of [0, 1]"""

    def __init__(self, levels_M):
        levels_M = int(levels_M)
        if levels_M < 2:
            raise ValueError('Quantiser needs at least 2 levels, got {}'
                             .format(levels_M))
        self.levels_M = levels_M

    def __call__(self, y):
        return quantize(y, self.levels_M)


def quantize(y, M):
    """
    Map y in [0, 1] to the symbol floor(M*y), with y = 1 sent to M-1.

    Parameters
    ----------
    y : float -or- float array_like
    M : int
        Number of levels

    Returns
    -------
    symbols : int -or- int array
    """
    if M < 1:
        raise ValueError('Number of levels must be positive, got {}'.format(M))
    y_arr = np.asarray(y, dtype=np.float64)
    if not np.all((y_arr >= 0.) & (y_arr <= 1.)):
        raise QuantizationDomainError('Values to quantise must lie in [0,1]')
    symbols = np.minimum(np.floor(M * y_arr), M - 1).astype(np.int64)
    if symbols.ndim == 0:
        return int(symbols)
    return symbols


def k1_statistic(x):
    """
    Number of positions whose value occurs exactly once in `x`.

    Examples
    --------
    >>> k1_statistic([1, 2, 2, 3])
    2
    """
    x = np.asarray(x).ravel()
    if x.size == 0:
        raise ValueError('K1 is undefined for an empty sequence')
    _, counts = np.unique(x, return_counts=True)
    return int(np.sum(counts == 1))


class CoincidencePmf(object):
    """
    Exact distribution of K1 under uniformity for alphabet size M and
    sample size N. `probs[k]` is a Fraction, k = 0..N.
    """

    def __init__(self, alphabet_M, sample_N, probs):
        self.alphabet_M = alphabet_M
        self.sample_N = sample_N
        self.probs = tuple(probs)

    def __getitem__(self, k):
        return self.probs[k]

    def __len__(self):
        return len(self.probs)

    def cdf(self):
        """Running sums P0(K1 <= t), t = 0..N, as Fractions"""
        total = Fraction(0)
        result = []
        for p in self.probs:
            total += p
            result.append(total)
        return result

    def mean(self):
        return sum(k * p for k, p in enumerate(self.probs))

    def as_floats(self):
        return np.array([float(p) for p in self.probs])


def _check_mn(M, N):
    if int(M) != M or M < 1:
        raise ValueError('Alphabet size M must be a positive integer, got {}'
                         .format(M))
    if int(N) != N or N < 1:
        raise ValueError('Sample size N must be a positive integer, got {}'
                         .format(N))
    return int(M), int(N)


@lru_cache(maxsize=64)
def coincidence_pmf(M, N):
    """
    Exact null distribution of K1 for N uniform draws on M letters.

    Parameters
    ----------
    M : int
        Alphabet size
    N : int
        Number of samples

    Returns
    -------
    pmf : CoincidencePmf
        Immutable; cached per (M, N) and safe to share between threads
    """
    M, N = _check_mn(M, N)
    jmax = min(M, N)
    # perm(N, j) is N!/(N-j)!, and is 0 past N
    occupancy = [comb(M, j) * perm(N, j) * (M - j)**(N - j)
                 for j in range(jmax + 1)]
    denom = M**N

    probs = []
    for k in range(N + 1):
        numer = 0
        for j in range(k, jmax + 1):
            term = comb(j, k) * occupancy[j]
            numer += term if (j + k) % 2 == 0 else -term
        probs.append(Fraction(numer, denom))
    logging.debug('Built K1 distribution for M={}, N={}'.format(M, N))
    return CoincidencePmf(M, N, probs)


def coincidence_cdf(M, N):
    return coincidence_pmf(M, N).cdf()


def threshold(M, N, fp_level_alpha):
    """
    Largest t with P0(K1 <= t) <= alpha, or -1 if even t = 0 breaks the
    bound (the test then never rejects at this level).

    The comparison is exact: alpha is converted to the rational number
    its float represents.
    """
    if not 0. < fp_level_alpha < 1.:
        raise ValueError('fp_level_alpha must lie in (0,1), got {}'.format(
                fp_level_alpha))
    alpha = Fraction(fp_level_alpha)
    best = -1
    for t, cum in enumerate(coincidence_cdf(M, N)):
        if cum <= alpha:
            best = t
        else:
            break
    return best


def threshold_table(M, N, alphas):
    """{alpha: threshold} for each level in `alphas`"""
    return dict((alpha, threshold(M, N, alpha)) for alpha in alphas)


def expected_k1(M, N):
    """Closed form E[K1] = N (1 - 1/M)^(N-1) under uniformity"""
    M, N = _check_mn(M, N)
    return N * (1. - 1. / M)**(N - 1)


class TestSpec(object):
    """
    A fully specified coincidence test.

    Attributes
    ----------
    alphabet_M, sample_N : int
    fp_level_alpha : float
        False-positive level
    epsilon : float
        Declared detection resolution. Recorded only, the threshold
        does not depend on it.
    threshold_T : int
        -1 encodes 'never reject'
    """
    # stop pytest trying to collect this as a test class
    __test__ = False

    def __init__(self, alphabet_M, sample_N, fp_level_alpha, epsilon=0.,
                 threshold_T=None):
        self.alphabet_M, self.sample_N = _check_mn(alphabet_M, sample_N)
        if not 0. < fp_level_alpha < 1.:
            raise ValueError('fp_level_alpha must lie in (0,1), got {}'
                             .format(fp_level_alpha))
        if epsilon < 0:
            raise ValueError('epsilon must be nonnegative')
        self.fp_level_alpha = float(fp_level_alpha)
        self.epsilon = float(epsilon)
        expected = threshold(self.alphabet_M, self.sample_N,
                             self.fp_level_alpha)
        if threshold_T is not None and int(threshold_T) != expected:
            raise ValueError('threshold_T={} inconsistent with (M={}, N={}, '
                             'alpha={}), expected {}'.format(
                    threshold_T, self.alphabet_M, self.sample_N,
                    self.fp_level_alpha, expected))
        self.threshold_T = expected

    @classmethod
    def build(cls, alphabet_M, sample_N, fp_level_alpha, epsilon=0.):
        return cls(alphabet_M, sample_N, fp_level_alpha, epsilon=epsilon)


def coincidence_test(x, spec):
    """
    Apply the K1 test to a sequence of symbols.

    Parameters
    ----------
    x : [N] int array_like
        Quantised samples, each in {0, ..., M-1}
    spec : TestSpec

    Returns
    -------
    reject : bool
        True declares an anomaly (K1 <= threshold)
    k1 : int
    """
    x = np.asarray(x)
    if x.ndim != 1 or len(x) != spec.sample_N:
        raise ValueError('Expected a sequence of {} symbols, got shape {}'
                         .format(spec.sample_N, x.shape))
    if np.any(x < 0) or np.any(x >= spec.alphabet_M):
        raise ValueError('Symbols must lie in [0, {})'.format(
                spec.alphabet_M))
    k1 = k1_statistic(x)
    return k1 <= spec.threshold_T, k1

