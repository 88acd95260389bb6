"""Test the dense network engine: forward, backward, RMSProp and clipping"""
import os.path
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))
from uadetect import tensornn
from uadetect.tensornn import Mlp, RmsPropState, ShapeError

GENERATOR_ARCH = [1, 32, 32, 1]
CRITIC_ARCH = [1, 32, 32, 1]


def hand_set_net():
    """2 -> 2 -> 1 net with identity output"""
    W0 = [[1., -1.], [2., 0.5]]
    b0 = [0., -1.]
    W1 = [[1.], [3.]]
    b1 = [0.5]
    return Mlp([2, 2, 1], [W0, W1], [b0, b1], output_activation='identity')


def test_affine_forward():
    """A single identity layer computes W x + b"""
    net = Mlp([1, 1], [[[2.]]], [[1.]], output_activation='identity')
    assert np.allclose(tensornn.forward(net, [3.]), [7.])


def test_zero_sigmoid_net():
    """Zero parameters with a sigmoid output give 0.5 for any input"""
    net = Mlp([3, 4, 1], [np.zeros((3, 4)), np.zeros((4, 1))],
              [np.zeros(4), np.zeros(1)], output_activation='sigmoid')
    for x in ([0., 0., 0.], [100., -3., 2.]):
        assert tensornn.forward(net, x)[0] == 0.5


def test_hand_evaluated_two_layer():
    """Compare against manual arithmetic, with one leaky hidden unit"""
    # hidden pre-activations: [1 + 4, -1 + 1 - 1] = [5, -1]
    # hidden activations: [5, -0.01]
    # output: 5 * 1 + (-0.01) * 3 + 0.5 = 5.47
    out = tensornn.forward(hand_set_net(), [1., 2.])
    assert out[0] == pytest.approx(5.47, abs=1e-12)


def test_batched_forward_matches_single():
    net = Mlp.build(GENERATOR_ARCH, seed=4)
    batch = np.random.default_rng(0).normal(size=(7, 1))
    batched = tensornn.forward(net, batch)
    assert batched.shape == (7, 1)
    for x, out in zip(batch, batched):
        assert np.allclose(tensornn.forward(net, x), out)


def test_forward_shape_error():
    with pytest.raises(ShapeError):
        tensornn.forward(hand_set_net(), [1., 2., 3.])


def test_bad_layer_shapes():
    with pytest.raises(ShapeError):
        Mlp([2, 1], [np.zeros((1, 2))], [np.zeros(1)])


def test_non_finite_parameters_rejected():
    with pytest.raises(ValueError):
        Mlp([1, 1], [[[np.nan]]], [[0.]])


def test_sigmoid_outputs_in_open_interval():
    net = Mlp.build(GENERATOR_ARCH, seed=2)
    out = net.evaluate(np.linspace(-5, 5, 101))
    assert np.all(out > 0) and np.all(out < 1)


def test_parameters_read_only():
    net = Mlp.build(CRITIC_ARCH, output_activation='identity', seed=1)
    with pytest.raises(ValueError):
        net.weights[0][0, 0] = 1.


def test_build_is_seeded():
    """Same seed, same initial weights; weights respect the Glorot limit"""
    net1 = Mlp.build(GENERATOR_ARCH, seed=11)
    net2 = Mlp.build(GENERATOR_ARCH, seed=11)
    for p1, p2 in zip(net1.get_params(), net2.get_params()):
        assert np.array_equal(p1, p2)
    limit = np.sqrt(6. / (32 + 32))
    assert np.max(np.abs(net1.weights[1])) <= limit
    assert np.all(net1.biases[0] == 0.)


def test_input_standardisation():
    """A standardised net equals the plain net applied to (x - mean)/scale"""
    net = Mlp.build([1, 8, 1], seed=3)
    scaled = net.with_input_standardisation([2.], [4.])
    x = np.linspace(-10, 10, 21)
    assert np.allclose(scaled.evaluate(x), net.evaluate((x - 2.) / 4.))


def test_single_neuron_gradient():
    """d(wx+b)/dw = x and d(wx+b)/db = 1"""
    net = Mlp([1, 1], [[[0.7]]], [[-0.2]], output_activation='identity')
    grads = tensornn.backward(net, [[3.]], [[1.]])
    assert np.allclose(grads[0], [[3.]])
    assert np.allclose(grads[1], [1.])


def test_zero_input_linear_layer():
    """Zero inputs give zero weight gradients, bias gradients sum output_grad"""
    net = Mlp([3, 2], [np.ones((3, 2))], [np.zeros(2)],
              output_activation='identity')
    output_grad = np.array([[1., 2.], [3., -1.], [0.5, 0.5]])
    grads = tensornn.backward(net, np.zeros((3, 3)), output_grad)
    assert np.all(grads[0] == 0.)
    assert np.allclose(grads[1], output_grad.sum(axis=0))


def test_backward_errors():
    net = hand_set_net()
    with pytest.raises(ShapeError):
        tensornn.backward(net, np.zeros((0, 2)), np.zeros((0, 1)))
    with pytest.raises(ShapeError):
        tensornn.backward(net, np.zeros((3, 2)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        tensornn.backward(net, [[np.nan, 0.]], [[1.]])


def _well_conditioned_batch(net, rng, n=5, margin=1e-3):
    """Inputs whose hidden pre-activations all keep clear of the kink at 0"""
    while True:
        batch = rng.normal(size=(n, net.input_dim))
        pre_acts, _ = tensornn.forward_layers(net, batch)
        if all(np.all(np.abs(a) > margin) for a in pre_acts[:-1]):
            return batch


def _loss(net, batch, output_grad):
    return np.sum(tensornn.forward(net, batch) * output_grad)


@pytest.mark.parametrize('seed', [1, 2, 3])
@pytest.mark.parametrize('arch,output_activation', [
    (GENERATOR_ARCH, 'sigmoid'), (CRITIC_ARCH, 'identity')])
def test_gradient_check(seed, arch, output_activation):
    """backward agrees with central finite differences over every parameter"""
    rng = np.random.default_rng(seed)
    net = Mlp.build(arch, output_activation=output_activation, rng=rng)
    batch = _well_conditioned_batch(net, rng)
    output_grad = rng.normal(size=(len(batch), 1))
    grads = tensornn.backward(net, batch, output_grad)

    step = 1e-5
    params = [np.array(p) for p in net.get_params()]
    max_rel_err = 0.
    for p_ix, p in enumerate(params):
        for ix in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[p_ix][ix] += step
            minus[p_ix][ix] -= step
            numeric = (_loss(net.with_params(plus), batch, output_grad)
                       - _loss(net.with_params(minus), batch, output_grad)) \
                      / (2 * step)
            analytic = grads[p_ix][ix]
            denom = max(abs(numeric), abs(analytic), 1e-3)
            max_rel_err = max(max_rel_err, abs(numeric - analytic) / denom)
    assert max_rel_err < 1e-4


def test_input_gradient():
    """The returned input gradient matches finite differences"""
    rng = np.random.default_rng(5)
    net = Mlp.build([3, 6, 1], output_activation='identity', rng=rng)
    net = net.with_input_standardisation([0.5, -1., 2.], [2., 0.5, 3.])
    batch = _well_conditioned_batch(net, rng, n=4)
    output_grad = rng.normal(size=(4, 1))
    _, input_grad = tensornn.backward(net, batch, output_grad,
                                      return_input_grad=True)
    step = 1e-5
    for ix in np.ndindex(batch.shape):
        plus = batch.copy()
        minus = batch.copy()
        plus[ix] += step
        minus[ix] -= step
        numeric = (_loss(net, plus, output_grad)
                   - _loss(net, minus, output_grad)) / (2 * step)
        assert numeric == pytest.approx(input_grad[ix], rel=1e-5, abs=1e-8)


def test_rmsprop_zero_gradient():
    """g = 0 leaves parameters alone and decays the accumulator"""
    params = [np.array([1., -2.]), np.array([[0.5]])]
    state = RmsPropState([np.array([4., 1.]), np.array([[2.]])])
    grads = [np.zeros(2), np.zeros((1, 1))]
    new_params, new_state = tensornn.rmsprop_step(params, grads, state, 0.001)
    for p, q in zip(params, new_params):
        assert np.array_equal(p, q)
    assert np.allclose(new_state.v[0], [3.6, 0.9])
    assert np.allclose(new_state.v[1], [[1.8]])


def test_rmsprop_first_step():
    """From v = 0 a unit gradient moves the parameter 0.001 / sqrt(0.1)"""
    params = [np.array([0.])]
    state = RmsPropState.zeros_like(params)
    new_params, _ = tensornn.rmsprop_step(params, [np.array([1.])], state,
                                          0.001)
    assert new_params[0][0] == pytest.approx(-0.0031623, abs=1e-7)


def test_rmsprop_sign_symmetry():
    """Flipping the gradient flips the step, the accumulator is unchanged"""
    rng = np.random.default_rng(9)
    params = [rng.normal(size=(3, 2))]
    g = [rng.normal(size=(3, 2))]
    state = RmsPropState([rng.uniform(size=(3, 2))])
    p_pos, s_pos = tensornn.rmsprop_step(params, g, state, 0.01)
    p_neg, s_neg = tensornn.rmsprop_step(params, [-g[0]], state, 0.01)
    assert np.allclose(p_pos[0] - params[0], -(p_neg[0] - params[0]))
    assert np.array_equal(s_pos.v[0], s_neg.v[0])


def test_rmsprop_bad_inputs():
    params = [np.zeros(2)]
    state = RmsPropState.zeros_like(params)
    with pytest.raises(ValueError):
        tensornn.rmsprop_step(params, [np.zeros(2)], state, 0.)
    with pytest.raises(ShapeError):
        tensornn.rmsprop_step(params, [np.zeros(3)], state, 0.1)
    with pytest.raises(ValueError):
        RmsPropState([np.array([-1.])])


def test_clip_weights():
    assert np.allclose(tensornn.clip_weights([np.array([0.02, -0.05])], 0.01)[0],
                       [0.01, -0.01])
    inside = [np.array([0.01, -0.003, 0.])]
    assert np.array_equal(tensornn.clip_weights(inside, 0.01)[0], inside[0])


def test_clip_idempotent():
    rng = np.random.default_rng(1)
    params = [rng.normal(size=(4, 4)), rng.normal(size=4)]
    once = tensornn.clip_weights(params, 0.1)
    twice = tensornn.clip_weights(once, 0.1)
    for p, q in zip(once, twice):
        assert np.array_equal(p, q)
    with pytest.raises(ValueError):
        tensornn.clip_weights(params, 0.)
