"""
tensornn.py

A small dense feed-forward network engine: forward evaluation, reverse
mode gradients, RMSProp updates and weight clipping. This is all the
numerical machinery the WIGAN training loop (see wigan.py) needs, and
nothing more.

Parameters are handled as a flat list `[W0, b0, W1, b1, ...]` with
W_l of shape [fan_in, fan_out], so a batch `x` of shape [n, d] maps to
`x.dot(W0) + b0`. Networks are treated as values: every update returns
a new Mlp and the arrays held by an Mlp are read-only.
"""
from __future__ import division

import numpy as np
from scipy.special import expit

LEAKY_SLOPE = 0.01
HIDDEN_ACTIVATIONS = ('leaky_relu',)
OUTPUT_ACTIVATIONS = ('sigmoid', 'identity')

# RMSProp constants. Conventional values, kept explicit so that runs are
# reproducible.
RMS_DECAY = 0.9
RMS_EPS = 1e-8


class ShapeError(ValueError):
    """Array shapes do not chain with a network's layer dimensions"""
    pass


def _frozen(array):
    array = np.array(array, dtype=np.float64)
    array.flags.writeable = False
    return array


def leaky_relu(a):
    return np.where(a > 0, a, LEAKY_SLOPE * a)


def leaky_relu_deriv(a):
    return np.where(a > 0, 1., LEAKY_SLOPE)


class Mlp(object):
    """
    A multilayer perceptron with leaky-rectifier hidden units and either
    a logistic sigmoid or identity output.

    Used as the inverse generator (sigmoid output, so that outputs lie
    in (0,1) ready for quantisation) and as the Wasserstein critic
    (identity output, the critic must be unbounded).

    Besides the trainable weights and biases, an Mlp carries a fixed
    input standardisation, `(x - input_mean) / input_scale`, applied
    before the first layer. By default this is the identity.
    """

    def __init__(self, layer_dims, weights, biases,
                 hidden_activation='leaky_relu', output_activation='sigmoid',
                 input_mean=None, input_scale=None):
        """
        Parameters
        ----------
        layer_dims : [nlayers+1] int array_like
            Input dimension first, output dimension last
        weights : [nlayers] list of [fan_in, fan_out] float arrays
        biases : [nlayers] list of [fan_out] float arrays
        hidden_activation : str {'leaky_relu'}
        output_activation : str {'sigmoid'}
            'sigmoid' or 'identity'
        input_mean : [d] float array_like {None}
            Defaults to zeros
        input_scale : [d] float array_like {None}
            Defaults to ones, must be strictly positive
        """
        self.layer_dims = tuple(int(dim) for dim in layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ShapeError('layer_dims must list at least two positive '
                             'integers, got {}'.format(layer_dims))
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError('Unknown hidden activation: {}'.format(
                    hidden_activation))
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError('Unknown output activation: {}'.format(
                    output_activation))
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation

        nlayers = len(self.layer_dims) - 1
        if len(weights) != nlayers or len(biases) != nlayers:
            raise ShapeError('Expected {} weight matrices and bias vectors, '
                             'got {} and {}'.format(nlayers, len(weights),
                                                    len(biases)))
        self.weights = []
        self.biases = []
        for l, (W, b) in enumerate(zip(weights, biases)):
            W = _frozen(W)
            b = _frozen(b)
            expected = (self.layer_dims[l], self.layer_dims[l+1])
            if W.shape != expected:
                raise ShapeError('Layer {} weights have shape {}, expected {}'
                                 .format(l, W.shape, expected))
            if b.shape != (expected[1],):
                raise ShapeError('Layer {} biases have shape {}, expected {}'
                                 .format(l, b.shape, (expected[1],)))
            self.weights.append(W)
            self.biases.append(b)
        if not params_finite(self.get_params()):
            raise ValueError('Network parameters must be finite')

        d = self.layer_dims[0]
        if input_mean is None:
            input_mean = np.zeros(d)
        if input_scale is None:
            input_scale = np.ones(d)
        self.input_mean = _frozen(np.reshape(input_mean, -1))
        self.input_scale = _frozen(np.reshape(input_scale, -1))
        if self.input_mean.shape != (d,) or self.input_scale.shape != (d,):
            raise ShapeError('Input standardisation must have dimension {}'
                             .format(d))
        if not (np.all(np.isfinite(self.input_mean))
                and np.all(np.isfinite(self.input_scale))
                and np.all(self.input_scale > 0)):
            raise ValueError('Input standardisation must be finite with '
                             'positive scale')

    @classmethod
    def build(cls, layer_dims, output_activation='sigmoid', rng=None,
              seed=None):
        """
        Build a freshly initialised network. Weights are drawn uniformly
        in +- sqrt(6 / (fan_in + fan_out)), biases start at zero.

        Parameters
        ----------
        layer_dims : int array_like
        output_activation : str {'sigmoid'}
        rng : numpy.random.Generator {None}
            Source of randomness. If None, one is built from `seed`.
        seed : int {None}
        """
        if rng is None:
            rng = np.random.default_rng(seed)
        layer_dims = [int(dim) for dim in layer_dims]
        weights = []
        biases = []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = np.sqrt(6. / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(layer_dims, weights, biases,
                   output_activation=output_activation)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    @property
    def nlayers(self):
        return len(self.layer_dims) - 1

    def get_params(self):
        """Flat parameter list [W0, b0, W1, b1, ...]"""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.append(W)
            params.append(b)
        return params

    def with_params(self, params):
        """A copy of this network holding `params` instead"""
        return Mlp(self.layer_dims, params[0::2], params[1::2],
                   hidden_activation=self.hidden_activation,
                   output_activation=self.output_activation,
                   input_mean=self.input_mean, input_scale=self.input_scale)

    def with_input_standardisation(self, input_mean, input_scale):
        return Mlp(self.layer_dims, self.weights, self.biases,
                   hidden_activation=self.hidden_activation,
                   output_activation=self.output_activation,
                   input_mean=input_mean, input_scale=input_scale)

    def evaluate(self, batch):
        """
        Map a batch of observations [n, d] (or [n] when d is 1) to the
        network outputs. A single-output network gives an [n] array.
        """
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch.reshape(-1, 1) if self.input_dim == 1 \
                    else batch.reshape(1, -1)
        out = forward(self, batch)
        if self.output_dim == 1:
            return out[:, 0]
        return out

    def __repr__(self):
        return 'Mlp({}, output={})'.format(list(self.layer_dims),
                                           self.output_activation)


def params_finite(params):
    return all(np.all(np.isfinite(p)) for p in params)


def _check_input(net, batch):
    batch = np.asarray(batch, dtype=np.float64)
    single = batch.ndim == 1
    if single:
        batch = batch.reshape(1, -1)
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ShapeError('Input has shape {}, network expects dimension {}'
                         .format(np.shape(batch), net.input_dim))
    return batch, single


def forward_layers(net, batch):
    """
    Evaluate `net` on a [n, d] batch, keeping every intermediate value.

    Returns
    -------
    pre_acts : [nlayers] list of [n, fan_out] arrays
        Values entering each activation function
    acts : [nlayers+1] list of arrays
        acts[0] is the standardised input, acts[-1] the network output
    """
    batch, _ = _check_input(net, batch)
    x = (batch - net.input_mean) / net.input_scale
    pre_acts = []
    acts = [x]
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = acts[-1].dot(W) + b
        pre_acts.append(a)
        if l < net.nlayers - 1:
            acts.append(leaky_relu(a))
        elif net.output_activation == 'sigmoid':
            acts.append(expit(a))
        else:
            acts.append(a)
    return pre_acts, acts


def forward(net, x):
    """
    Evaluate the network.

    Parameters
    ----------
    net : Mlp
    x : [d] -or- [n, d] float array_like

    Returns
    -------
    out : [output_dim] -or- [n, output_dim] float array
    """
    _, single = _check_input(net, x)
    out = forward_layers(net, x)[1][-1]
    if single:
        return out[0]
    return out


def backward(net, input_batch, output_grad, return_input_grad=False):
    """
    Reverse mode gradient of sum_i <net(x_i), output_grad_i> with respect
    to every weight and bias of `net`.

    Parameters
    ----------
    net : Mlp
    input_batch : [n, d] float array_like
    output_grad : [n, output_dim] float array_like
        Per-sample weighting of the outputs (the upstream gradient)
    return_input_grad : bool {False}
        If True, also return the gradient with respect to `input_batch`

    Returns
    -------
    grads : list of arrays
        Same layout as `net.get_params()`
    input_grad : [n, d] float array
        Only if `return_input_grad`
    """
    input_batch, _ = _check_input(net, input_batch)
    if input_batch.shape[0] == 0:
        raise ShapeError('Cannot back-propagate an empty batch')
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.ndim == 1 and net.output_dim == 1:
        output_grad = output_grad.reshape(-1, 1)
    if output_grad.shape != (input_batch.shape[0], net.output_dim):
        raise ShapeError('Output gradient has shape {}, expected {}'.format(
                output_grad.shape, (input_batch.shape[0], net.output_dim)))
    if not (np.all(np.isfinite(input_batch))
            and np.all(np.isfinite(output_grad))):
        raise ValueError('Non-finite values passed to backward')

    pre_acts, acts = forward_layers(net, input_batch)

    if net.output_activation == 'sigmoid':
        out = acts[-1]
        delta = output_grad * out * (1. - out)
    else:
        delta = output_grad

    grads = [None] * (2 * net.nlayers)
    for l in reversed(range(net.nlayers)):
        grads[2*l] = acts[l].T.dot(delta)
        grads[2*l + 1] = delta.sum(axis=0)
        if l > 0:
            delta = delta.dot(net.weights[l].T) \
                    * leaky_relu_deriv(pre_acts[l-1])
        elif return_input_grad:
            delta = delta.dot(net.weights[0].T)

    if return_input_grad:
        return grads, delta / net.input_scale
    return grads


class RmsPropState(object):
    """
    Running mean of squared gradients, one accumulator per parameter
    array.
    """

    def __init__(self, v, decay=RMS_DECAY, eps=RMS_EPS):
        if not 0. < decay < 1.:
            raise ValueError('RMSProp decay must lie in (0,1), got {}'.format(
                    decay))
        if not eps > 0.:
            raise ValueError('RMSProp stabiliser must be positive')
        self.v = [_frozen(acc) for acc in v]
        if any(np.any(acc < 0) for acc in self.v):
            raise ValueError('RMSProp accumulators must be nonnegative')
        self.decay = decay
        self.eps = eps

    @classmethod
    def zeros_like(cls, params, decay=RMS_DECAY, eps=RMS_EPS):
        return cls([np.zeros_like(p) for p in params], decay=decay, eps=eps)


def _check_matching(params, others, name):
    if len(params) != len(others):
        raise ShapeError('Got {} parameter arrays but {} {}'.format(
                len(params), len(others), name))
    for p, o in zip(params, others):
        if np.shape(p) != np.shape(o):
            raise ShapeError('Parameter of shape {} paired with {} of '
                             'shape {}'.format(np.shape(p), name, np.shape(o)))


def rmsprop_step(params, grads, state, learning_rate):
    """
    One RMSProp update:
        v'     = decay * v + (1 - decay) * g**2
        theta' = theta - learning_rate * g / (sqrt(v') + eps)

    Returns
    -------
    new_params : list of arrays
    new_state : RmsPropState
    """
    if not learning_rate > 0:
        raise ValueError('learning_rate must be positive, got {}'.format(
                learning_rate))
    _check_matching(params, grads, 'gradients')
    _check_matching(params, state.v, 'accumulators')

    new_params = []
    new_v = []
    for theta, g, v in zip(params, grads, state.v):
        g = np.asarray(g, dtype=np.float64)
        v_new = state.decay * v + (1. - state.decay) * g**2
        new_params.append(theta - learning_rate * g / (np.sqrt(v_new)
                                                       + state.eps))
        new_v.append(v_new)
    return new_params, RmsPropState(new_v, decay=state.decay, eps=state.eps)


def clip_weights(params, c):
    """Clamp every parameter entry into [-c, c]"""
    if not c > 0:
        raise ValueError('Clipping parameter must be positive, got {}'.format(
                c))
    return [np.clip(p, -c, c) for p in params]
