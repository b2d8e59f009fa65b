import numpy as np
import pytest

from thinseg import autodiff as ad
from thinseg.grid import ShapeMismatchError


def fd_grad(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (fn(xp) - fn(xm)) / (2 * h)
    return g


def test_sigmoid_at_zero():
    tape = ad.Tape()
    x = tape.leaf(0.0)
    y = ad.sigmoid(x)
    ad.backward(y)
    assert y.value == 0.5
    assert x.grad == 0.25


def test_sum_of_ones():
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)))
    s = ad.vsum(x)
    ad.backward(s)
    assert s.value == 4.0
    np.testing.assert_array_equal(x.grad, 1.0)


def test_grad_of_sum_of_squares():
    rng = np.random.default_rng(0)
    p = rng.random((3, 4))
    tape = ad.Tape()
    x = tape.leaf(p)
    s = ad.vsum(x * x)
    ad.backward(s)
    np.testing.assert_allclose(x.grad, 2 * p, rtol=1e-12)


def test_constants_carry_no_grad():
    tape = ad.Tape()
    x = tape.leaf(np.ones((2, 2)))
    c = tape.constant(np.full((2, 2), 3.0))
    s = ad.vsum(x * c)
    ad.backward(s)
    np.testing.assert_array_equal(x.grad, 3.0)
    assert c.grad is None


def test_shape_mismatch_raises():
    tape = ad.Tape()
    a = tape.leaf(np.ones((2, 2)))
    b = tape.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeMismatchError):
        ad.add(a, b)


def test_nan_fails_fast():
    tape = ad.Tape()
    a = tape.leaf(np.zeros((2, 2)))
    with pytest.raises(ad.NumericalError):
        ad.div(a, a)


def test_backward_requires_scalar_root():
    tape = ad.Tape()
    a = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ad.backward(a + 1.0)


@pytest.mark.parametrize(
    "name,build",
    [
        ("add", lambda x, c: x + c),
        ("sub", lambda x, c: x - c),
        ("rsub", lambda x, c: c - x),
        ("mul", lambda x, c: x * c),
        ("div", lambda x, c: x / (c + 2.0)),
        ("rdiv", lambda x, c: c / (x + 2.0)),
        ("scalar_mul", lambda x, c: 3.5 * x),
        ("exp", lambda x, c: ad.exp(x)),
        ("sqrt", lambda x, c: ad.sqrt(x + 1.5)),
        ("sigmoid", lambda x, c: ad.sigmoid(x)),
        ("relu", lambda x, c: ad.relu(x - 0.5)),
        ("clamp01", lambda x, c: ad.clamp01(2.0 * x - 0.5)),
        ("maxpool", lambda x, c: ad.maxpool(x, 1)),
        ("maxpool2", lambda x, c: ad.maxpool(x, 2)),
        ("minpool", lambda x, c: ad.minpool(x, 1)),
    ],
)
@pytest.mark.parametrize("seed", range(10))
def test_op_gradients_match_central_differences(name, build, seed):
    rng = np.random.default_rng(seed)
    # values spaced well apart so pools and kinks sit away from the probes
    values = rng.permutation(np.linspace(0.021, 0.979, 36)).reshape(6, 6)
    const = rng.random((6, 6))

    def forward(arr):
        tape = ad.Tape()
        x = tape.leaf(arr)
        c = tape.constant(const)
        return float(ad.vsum(build(x, c) * c).value)

    tape = ad.Tape()
    x = tape.leaf(values)
    c = tape.constant(const)
    out = ad.vsum(build(x, c) * c)
    ad.backward(out)
    numeric = fd_grad(forward, values)
    np.testing.assert_allclose(x.grad, numeric, rtol=1e-3, atol=1e-6)


def test_maxpool_forward_and_routing():
    field = np.array([[0.1, 0.9, 0.2], [0.3, 0.4, 0.8], [0.5, 0.6, 0.7]])
    tape = ad.Tape()
    x = tape.leaf(field)
    out = ad.maxpool(x, 1)
    expected = [[0.9, 0.9, 0.9], [0.5, 0.9, 0.8], [0.6, 0.7, 0.8]]
    np.testing.assert_allclose(out.value, expected)
    ad.backward(ad.vsum(out))
    # each input receives one unit of gradient per window that selected it
    assert x.grad.sum() == 9.0
    assert x.grad[0, 1] == 4.0  # 0.9 wins all four windows containing it


def test_maxpool_tie_breaks_first_in_scan_order():
    field = np.array([[0.5, 0.0, 0.5]])
    tape = ad.Tape()
    x = tape.leaf(field)
    out = ad.maxpool(x, 1)
    ad.backward(ad.vsum(out))
    # center window sees both 0.5s; the earlier (left) one wins the tie
    np.testing.assert_array_equal(x.grad, [[2.0, 0.0, 1.0]])


def test_maxpool_non_selected_has_zero_gradient():
    rng = np.random.default_rng(3)
    field = rng.permutation(np.linspace(0.0, 1.0, 25)).reshape(5, 5)
    tape = ad.Tape()
    x = tape.leaf(field)
    ad.backward(ad.vsum(ad.maxpool(x, 1)))
    grad = x.grad
    # perturbing a zero-gradient element by less than the win margin
    # leaves the forward output unchanged
    zeros = np.argwhere(grad == 0.0)
    assert len(zeros) > 0
    y, x_ = zeros[0]
    base = ad.maxpool(ad.Tape().leaf(field), 1).value
    bumped = field.copy()
    bumped[y, x_] += 1e-3
    np.testing.assert_array_equal(ad.maxpool(ad.Tape().leaf(bumped), 1).value, base)


def test_minpool_is_dual_of_maxpool():
    rng = np.random.default_rng(11)
    field = rng.random((7, 5))
    a = ad.maxpool(ad.Tape().leaf(-field), 2).value
    b = ad.minpool(ad.Tape().leaf(field), 2).value
    np.testing.assert_allclose(-a, b)


def test_backward_is_deterministic():
    rng = np.random.default_rng(21)
    field = rng.random((16, 16))
    grads = []
    for _ in range(2):
        tape = ad.Tape()
        x = tape.leaf(field)
        loss = ad.vsum(ad.maxpool(ad.sigmoid(x * 2.0 - 1.0), 1) * x)
        ad.backward(loss)
        grads.append(x.grad.copy())
    np.testing.assert_array_equal(grads[0], grads[1])


def test_pool_radius_validation():
    tape = ad.Tape()
    x = tape.leaf(np.ones((3, 3)))
    with pytest.raises(ValueError):
        ad.maxpool(x, 0)
    with pytest.raises(ValueError):
        ad.minpool(x, -1)
