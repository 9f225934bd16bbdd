import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import finite_difference_errors, rmsprop_reference
from protoml import autograd as ag


def test_softmax_uniform():
    assert np.allclose(ag.softmax(ag.const(np.zeros((1, 2)))).data, [[0.5, 0.5]])


def test_cross_entropy_of_uniform_is_ln2():
    loss = ag.cross_entropy(ag.softmax(ag.const(np.zeros((1, 2)))), [1])
    assert math.isclose(float(loss.data), math.log(2), rel_tol=1e-12)


def test_fused_cross_entropy_grad():
    z = ag.param(np.zeros((1, 2)))
    loss = ag.softmax_cross_entropy(z, [1])
    loss.backward()
    assert math.isclose(float(loss.data), math.log(2), rel_tol=1e-12)
    assert np.allclose(z.grad, [[0.5, -0.5]])


def test_tanh_derivative_at_zero():
    x = ag.param(np.zeros(3))
    ag.total(ag.tanh(x)).backward()
    assert np.allclose(x.grad, 1.0)


def test_shape_errors():
    with pytest.raises(ag.ShapeError):
        ag.add(ag.const(np.zeros((2, 3))), ag.const(np.zeros((3, 2))))
    with pytest.raises(ag.ShapeError):
        ag.matmul(ag.const(np.zeros((2, 3))), ag.const(np.zeros((2, 3))))
    with pytest.raises(ag.ShapeError):
        ag.cross_entropy(ag.const(np.full((2, 2), 0.5)), [0])
    with pytest.raises(ag.ShapeError):
        ag.rmsprop_step(np.zeros(2), np.zeros(3), np.zeros(2))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_is_rejected():
    with pytest.raises(FloatingPointError):
        ag.mul(ag.const(np.array([np.inf])), ag.const(np.array([0.0])))


def test_op_counter():
    with ag.count_ops() as c:
        ag.matmul(ag.const(np.ones((2, 3))), ag.const(np.ones((3, 4))))
    assert c.total > 0 and "matmul" in c.by_op
    with ag.count_ops() as c2:
        pass
    assert c2.total == 0


# -- finite differences per op ---------------------------------------------------

def _fd_check(build, shapes, seed):
    rng = np.random.default_rng(seed)
    ps = {f"x{i}": ag.param(rng.uniform(-1, 1, s)) for i, s in enumerate(shapes)}
    w = rng.uniform(-1, 1, build(*ps.values()).shape)   # random projection of the output
    loss = lambda: float((build(*ps.values()).data * w).sum())
    out = build(*ps.values())
    ag.total(ag.mul(out, ag.const(w))).backward()
    errs = finite_difference_errors(loss, ps, floor=1e-6)
    assert max(errs.values()) < 1e-6, errs


OPS = {
    "add": (lambda a, b: ag.add(a, b), [(3, 4), (4,)]),
    "sub": (lambda a, b: ag.sub(a, b), [(3, 4), (3, 4)]),
    "mul": (lambda a, b: ag.mul(a, b), [(3, 4), (1, 4)]),
    "scale": (lambda a: ag.scale(a, -2.5), [(5,)]),
    "tanh": (lambda a: ag.tanh(a), [(3, 3)]),
    "sigmoid": (lambda a: ag.sigmoid(a), [(3, 3)]),
    "matmul": (lambda a, b: ag.matmul(a, b), [(2, 3), (3, 4)]),
    "matvec": (lambda w, x: ag.matvec(w, x), [(4, 3), (3,)]),
    "transpose": (lambda a: ag.transpose(a), [(2, 5)]),
    "gather_rows": (lambda a: ag.gather_rows(a, np.array([2, 0, 2, 1])), [(3, 4)]),
    "segment_sum": (lambda a: ag.segment_sum(a, np.array([0, 2, 0, 1, 2]), 3), [(5, 2)]),
    "concat": (lambda a, b: ag.concat([a, b]), [(2, 3), (4, 3)]),
    "slice_cols": (lambda a: ag.slice_cols(a, 1, 3), [(3, 5)]),
    "sum_list": (lambda a, b: ag.sum_list([a, b, a]), [(2, 2), (2, 2)]),
    "mean": (lambda a: ag.mean(a), [(3, 2)]),
    "softmax": (lambda a: ag.softmax(a), [(3, 4)]),
    "cross_entropy": (lambda a: ag.cross_entropy(ag.softmax(a), [1, 0, 3]), [(3, 4)]),
    "softmax_cross_entropy": (lambda a: ag.softmax_cross_entropy(a, [1, 0, 3]), [(3, 4)]),
}


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(sorted(OPS)), st.integers(0, 2**31))
def test_op_gradients(name, seed):
    build, shapes = OPS[name]
    _fd_check(build, shapes, seed)


def test_relu_gradient_away_from_kink():
    x = ag.param(np.array([-1.5, -0.2, 0.3, 2.0]))
    ag.total(ag.relu(x)).backward()
    assert np.array_equal(x.grad, [0, 0, 1, 1])


def test_shared_subexpression_accumulates():
    x = ag.param(np.array([3.0]))
    y = ag.mul(x, x)
    ag.total(ag.add(y, y)).backward()
    assert np.allclose(x.grad, [12.0])


# -- RMSprop ------------------------------------------------------------------------

def test_rmsprop_first_step_by_hand():
    theta, v = np.array([1.0]), np.zeros(1)
    ag.rmsprop_step(theta, np.array([1.0]), v, lr=0.001, decay=0.9, eps=1e-8)
    assert math.isclose(theta[0], 1 - 0.001 / (math.sqrt(0.1) + 1e-8), rel_tol=0, abs_tol=1e-15)
    assert math.isclose(v[0], 0.1)


def test_rmsprop_zero_gradient_is_noop():
    theta, v = np.array([0.7, -2.0]), np.array([0.3, 0.0])
    ag.rmsprop_step(theta, np.zeros(2), v)
    assert np.array_equal(theta, [0.7, -2.0])


def test_rmsprop_constant_gradient_step_tends_to_lr():
    theta, v = np.zeros(1), np.zeros(1)
    prev = 0.0
    for _ in range(300):
        ag.rmsprop_step(theta, np.array([4.0]), v, lr=0.01)
        step, prev = prev - theta[0], theta[0]
    assert math.isclose(step, 0.01, rel_tol=1e-6)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-3, 3)),
       st.lists(arrays(np.float64, 6, elements=st.floats(-5, 5)), min_size=1, max_size=5))
def test_rmsprop_matches_reference(theta0, grads):
    theta, v = theta0.copy(), np.zeros(6)
    opt_p = ag.param(theta0.copy())
    opt = ag.RMSprop([opt_p], lr=0.01, decay=0.9, eps=1e-8)
    for g in grads:
        ag.rmsprop_step(theta, g, v, 0.01, 0.9, 1e-8)
        opt.step([g])
    want = rmsprop_reference(theta0, grads, 0.01, 0.9, 1e-8)
    assert np.allclose(theta, want, rtol=0, atol=1e-12)
    assert np.allclose(opt_p.data, want, rtol=0, atol=1e-12)
