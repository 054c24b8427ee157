import math

import numpy as np
import pytest

from gradcheck import fd_gradcheck
from zett import nanograd as ng
from zett.errors import NotScalar, ShapeMismatch, StaleTape


def test_sum_grad_is_ones():
    x = ng.param(np.arange(6.0).reshape(2, 3))
    loss = ng.tsum(x)
    ng.backward(loss)
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_square_grad():
    x = ng.param([3.0])
    loss = ng.tsum(x * x)
    ng.backward(loss)
    assert x.grad[0] == pytest.approx(6.0)


def test_softmax_of_zeros_is_uniform():
    x = ng.tensor(np.zeros((2, 5)))
    y = ng.softmax(x)
    assert np.allclose(y.data, 0.2)


def test_cross_entropy_uniform_logits():
    logits = ng.tensor(np.zeros((4, 7)))
    loss = ng.cross_entropy(logits, np.array([0, 3, 6, 2]))
    assert float(loss.data) == pytest.approx(math.log(7))


def test_layer_norm_statistics():
    rng = np.random.default_rng(0)
    x = ng.tensor(rng.normal(2.0, 3.0, size=(4, 6)))
    gain = ng.tensor(np.ones(6))
    bias = ng.tensor(np.zeros(6))
    y = ng.layer_norm(x, gain, bias).data
    assert np.all(np.abs(y.mean(axis=-1)) < 1e-10)
    assert np.all(np.abs(y.var(axis=-1) - 1.0) < 1e-5)  # eps shifts variance slightly


def test_backward_requires_scalar():
    x = ng.param(np.ones((2, 2)))
    with pytest.raises(NotScalar):
        ng.backward(x * x)


def test_stale_tape():
    x = ng.param([1.0])
    loss = ng.tsum(x * x)
    ng.backward(loss)
    with pytest.raises(StaleTape):
        ng.backward(loss)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ng.matmul(ng.tensor(np.ones((2, 3))), ng.tensor(np.ones((2, 3))))


def test_no_grad_blocks_recording():
    x = ng.param([2.0])
    with ng.no_grad():
        y = x * x
    assert y._backward is None and not y.requires_grad


class TestGradChecks:
    def test_matmul_2d(self, rng):
        a = ng.param(rng.normal(size=(3, 4)))
        b = ng.param(rng.normal(size=(4, 2)))
        fd_gradcheck(lambda: ng.tsum(a @ b), [a, b])

    def test_matmul_batched(self, rng):
        a = ng.param(rng.normal(size=(2, 3, 4)))
        b = ng.param(rng.normal(size=(2, 4, 5)))
        fd_gradcheck(lambda: ng.tsum(a @ b), [a, b])

    def test_matmul_batched_times_2d(self, rng):
        a = ng.param(rng.normal(size=(2, 3, 4)))
        b = ng.param(rng.normal(size=(4, 5)))
        w = rng.normal(size=(2, 3, 5))
        fd_gradcheck(lambda: ng.tsum(ng.mul(a @ b, w)), [a, b])

    def test_add_mul_broadcast(self, rng):
        a = ng.param(rng.normal(size=(3, 4)))
        b = ng.param(rng.normal(size=(4,)))
        fd_gradcheck(lambda: ng.tsum(ng.mul(ng.add(a, b), b)), [a, b])

    def test_gather(self, rng):
        table = ng.param(rng.normal(size=(6, 3)))
        ids = np.array([[0, 5, 0], [2, 2, 1]])
        fd_gradcheck(lambda: ng.tsum(ng.mul(ng.gather(table, ids), 2.0)), [table])

    def test_take_slice(self, rng):
        x = ng.param(rng.normal(size=(3, 5)))
        fd_gradcheck(lambda: ng.tsum(x[:, 1:4]), [x])

    def test_softmax(self, rng):
        x = ng.param(rng.normal(size=(3, 5)))
        w = rng.normal(size=(3, 5))
        fd_gradcheck(lambda: ng.tsum(ng.mul(ng.softmax(x), w)), [x])

    def test_gelu(self, rng):
        x = ng.param(rng.normal(size=(4, 4)))
        fd_gradcheck(lambda: ng.tsum(ng.gelu(x)), [x])

    def test_layer_norm(self, rng):
        x = ng.param(rng.normal(size=(3, 6)))
        gain = ng.param(rng.normal(size=(6,)))
        bias = ng.param(rng.normal(size=(6,)))
        w = rng.normal(size=(3, 6))
        fd_gradcheck(lambda: ng.tsum(ng.mul(ng.layer_norm(x, gain, bias), w)), [x, gain, bias])

    def test_cross_entropy(self, rng):
        logits = ng.param(rng.normal(size=(5, 8)))
        labels = rng.integers(8, size=5)
        mask = np.array([1, 1, 0, 1, 1.0])
        fd_gradcheck(lambda: ng.cross_entropy(logits, labels, mask), [logits])

    def test_l2_rows(self, rng):
        a = ng.param(rng.normal(size=(4, 3)))
        b = ng.param(rng.normal(size=(4, 3)))
        fd_gradcheck(lambda: ng.l2_rows(a, b), [a, b])

    def test_reshape_transpose_concat(self, rng):
        a = ng.param(rng.normal(size=(2, 6)))
        b = ng.param(rng.normal(size=(3, 4)))

        def build():
            x = ng.reshape(a, (3, 4))
            y = ng.transpose(ng.concat([x, b], axis=0), (1, 0))
            return ng.tsum(ng.mul(y, y))

        fd_gradcheck(build, [a, b])


class TestOptim:
    def test_zero_grad_zero_decay_leaves_params(self):
        p = ng.param(np.array([1.0, -2.0]))
        opt = ng.AdamW({"p": p}, lr=0.1, weight_decay=0.0)
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_clip_rescales_above_max(self):
        p1 = ng.param(np.zeros(2))
        p2 = ng.param(np.zeros(1))
        p1.grad = np.array([0.12, 0.0])
        p2.grad = np.array([0.16])
        norm = ng.clip_global_norm([p1, p2], 0.1)
        assert norm == pytest.approx(0.2)
        assert np.allclose(p1.grad, [0.06, 0.0])
        assert np.allclose(p2.grad, [0.08])

    def test_clip_noop_below_max(self):
        p = ng.param(np.zeros(1))
        p.grad = np.array([0.05])
        ng.clip_global_norm([p], 0.1)
        assert p.grad[0] == 0.05

    def test_schedule_matches_defaults(self):
        sched = lambda s: ng.lr_schedule(s, peak=6e-5, total_steps=200_000,
                                         warmup_steps=10_000, floor=6e-6)
        assert sched(10_000) == pytest.approx(6e-5)
        assert sched(200_000) == pytest.approx(6e-6)
        assert sched(5_000) == pytest.approx(3e-5)
        assert sched(0) == 0.0
        mid = sched(105_000)
        assert 6e-6 < mid < 6e-5

    def test_adamw_descends_quadratic(self):
        p = ng.param(np.array([5.0]))
        opt = ng.AdamW({"p": p}, lr=0.05, weight_decay=0.0)
        for _ in range(400):
            opt.zero_grad()
            loss = ng.tsum(p * p)
            ng.backward(loss)
            opt.step()
        assert abs(p.data[0]) < 0.05

    def test_adamw_deterministic(self):
        def run():
            p = ng.param(np.array([1.0, 2.0, 3.0]))
            opt = ng.AdamW({"p": p}, lr=0.01)
            for i in range(50):
                opt.zero_grad()
                ng.backward(ng.tsum(ng.mul(p, p)))
                opt.step()
            return p.data.tobytes()

        assert run() == run()
