import math

import numpy as np
import pytest

from hindilm import autograd as ag
from hindilm.autograd import Tensor, backward, grad_check
from hindilm.errors import NumericError

# frozen from an extended-precision evaluation of the tanh approximation
GELU_AT_ONE = 0.841191990608


def t64(data, requires_grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def rand64(rng, *shape):
    return Tensor(rng.normal(0, 1, shape), requires_grad=True)


class TestForwardOps:
    def test_matmul_hand_example(self):
        out = ag.matmul(t64([[1, 2], [3, 4]]), t64([[5, 6], [7, 8]]))
        assert np.array_equal(out.data, [[19, 22], [43, 50]])

    def test_matmul_identity(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0, 1, (3, 3))
        out = ag.matmul(Tensor(a), Tensor(np.eye(3)))
        assert np.allclose(out.data, a)

    def test_matmul_shape_error_names_both(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            ag.matmul(t64(np.zeros((2, 3))), t64(np.zeros((2, 3))))

    def test_embedding_repeated_rows(self):
        table = t64([[1.0, 2.0], [3.0, 4.0]])
        out = ag.embedding_lookup(table, [0, 0])
        assert np.array_equal(out.data, [[1, 2], [1, 2]])

    def test_softmax_symmetry(self):
        out = ag.softmax_rows(t64([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(0, 1, (4, 6))
        a = ag.softmax_rows(Tensor(x)).data
        b = ag.softmax_rows(Tensor(x + 100.0)).data
        assert np.allclose(a, b, atol=1e-12)

    def test_softmax_large_logit_no_overflow(self):
        out = ag.softmax_rows(t64([1000.0, 0.0]))
        assert np.allclose(out.data, [1.0, 0.0])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            y = ag.softmax_rows(Tensor(rng.normal(0, 5, (3, 7)))).data
            assert (y >= 0).all()
            assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-6)

    def test_layer_norm_constant_vector_is_zero(self):
        x = t64([[3.0, 3.0, 3.0, 3.0]])
        out = ag.layer_norm(x, t64(np.ones(4)), t64(np.zeros(4)))
        assert np.allclose(out.data, 0.0)

    def test_layer_norm_mean_tracks_bias(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = Tensor(rng.normal(0, 2, (5, 8)))
            bias = rng.normal(0, 1, 8)
            out = ag.layer_norm(x, Tensor(np.ones(8)), Tensor(bias))
            assert out.data.mean() == pytest.approx(bias.mean(), abs=1e-5)

    def test_gelu_values(self):
        assert float(ag.gelu(t64(0.0)).data) == 0.0
        assert float(ag.gelu(t64(10.0)).data) == pytest.approx(10.0, abs=1e-4)
        assert float(ag.gelu(t64(1.0)).data) == pytest.approx(GELU_AT_ONE, abs=1e-9)

    def test_cross_entropy_uniform_logits_is_log_vocab(self):
        logits = t64(np.zeros((3, 50008)))
        loss = ag.cross_entropy_logits(logits, [5, 17, 50_007])
        assert float(loss.data) == pytest.approx(math.log(50008), rel=1e-9)

    def test_cross_entropy_confident_margin(self):
        logits = np.zeros((2, 10))
        logits[0, 3] = 20.0
        logits[1, 7] = 20.0
        loss = ag.cross_entropy_logits(t64(logits), [3, 7])
        assert float(loss.data) < 1e-3

    def test_cross_entropy_all_ignored_rejected(self):
        with pytest.raises(ValueError, match="ignored"):
            ag.cross_entropy_logits(t64(np.zeros((2, 4))), [9, 9], ignore_id=9)

    def test_cross_entropy_target_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            ag.cross_entropy_logits(t64(np.zeros((1, 4))), [4])

    def test_forward_bit_identical_across_runs(self):
        rng = np.random.default_rng(4)
        a_np, b_np = rng.normal(0, 1, (16, 16)), rng.normal(0, 1, (16, 16))
        runs = []
        for _ in range(2):
            x = ag.softmax_rows(ag.matmul(Tensor(a_np.copy()), Tensor(b_np.copy())))
            runs.append(ag.gelu(x).data.copy())
        assert np.array_equal(runs[0], runs[1])

    def test_non_finite_input_raises(self):
        with pytest.raises(NumericError):
            Tensor(np.array([1.0, np.nan]))
        big = Tensor(np.array([[1e38]], dtype=np.float32))
        with np.errstate(over="ignore"), pytest.raises(NumericError):
            ag.matmul(big, ag.mul(big, 1e5))


class TestBackward:
    def test_matmul_sum_closed_form(self):
        rng = np.random.default_rng(5)
        a = rand64(rng, 3, 4)
        b = rand64(rng, 4, 5)
        backward(ag.sum_all(ag.matmul(a, b)))
        assert np.allclose(a.grad, np.ones((3, 5)) @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ np.ones((3, 5)))

    def test_unused_leaf_gets_zero(self):
        rng = np.random.default_rng(6)
        used, unused = rand64(rng, 2, 2), rand64(rng, 2, 2)
        backward(ag.sum_all(used))
        assert np.array_equal(unused.grad, np.zeros((2, 2)))

    def test_two_matmul_chain_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        a, b, c = rand64(rng, 2, 3), rand64(rng, 3, 4), rand64(rng, 4, 2)
        err = grad_check(lambda a, b, c: ag.sum_all(ag.matmul(ag.matmul(a, b), c)), [a, b, c], eps=1e-3)
        assert err < 1e-7

    def test_repeated_backward_rejected(self):
        loss = ag.sum_all(rand64(np.random.default_rng(8), 2))
        backward(loss)
        with pytest.raises(RuntimeError, match="already ran"):
            backward(loss)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            backward(rand64(np.random.default_rng(9), 3))

    def test_gradient_accumulates_across_losses(self):
        x = t64([2.0])
        backward(ag.sum_all(ag.mul(x, 3.0)))
        backward(ag.sum_all(ag.mul(x, 4.0)))
        assert np.allclose(x.grad, [7.0])
        x.zero_grad()
        assert np.allclose(x.grad, [0.0])


class TestGradCheck:
    def test_linear_function_is_exact(self):
        x = t64(np.arange(1.0, 7.0))
        err = grad_check(lambda x: ag.sum_all(ag.mul(x, 2.5)), [x], eps=1e-4)
        assert err < 1e-7

    def test_every_primitive(self):
        rng = np.random.default_rng(10)
        w35 = Tensor(rng.normal(0, 1, (3, 5)))
        w36 = Tensor(rng.normal(0, 1, (3, 6)))
        w44 = Tensor(rng.normal(0, 1, (4, 4)))
        targets = np.array([1, 6, 2])
        cases = {
            "add": (lambda a, b: ag.sum_all(ag.mul(ag.add(a, b), ag.add(a, b))),
                    [rand64(rng, 3, 4), rand64(rng, 4)]),
            "mul": (lambda a, b: ag.sum_all(ag.mul(ag.mul(a, b), ag.mul(a, b))),
                    [rand64(rng, 3, 4), rand64(rng, 4)]),
            "matmul": (lambda a, b: ag.sum_all(ag.matmul(a, b)),
                       [rand64(rng, 3, 4), rand64(rng, 4, 5)]),
            "matmul_batched": (lambda a, b: ag.sum_all(ag.matmul(a, b)),
                               [rand64(rng, 2, 3, 4), rand64(rng, 2, 4, 5)]),
            "transpose": (lambda x: ag.sum_all(ag.mul(ag.transpose(x), ag.transpose(x))),
                          [rand64(rng, 3, 4)]),
            "reshape": (lambda x: ag.sum_all(ag.mul(ag.reshape(x, (12,)), ag.reshape(x, (12,)))),
                        [rand64(rng, 3, 4)]),
            "slice_last": (lambda x: ag.sum_all(ag.mul(ag.slice_last(x, 1, 4), ag.slice_last(x, 2, 5))),
                           [rand64(rng, 2, 6)]),
            "concat_rows": (lambda a, b: ag.sum_all(ag.mul(ag.concat_rows([a, b]), 1.5)),
                            [rand64(rng, 2, 3), rand64(rng, 4, 3)]),
            "embedding_lookup": (lambda t: ag.sum_all(ag.mul(ag.embedding_lookup(t, [0, 2, 0, 4]), 1.7)),
                                 [rand64(rng, 5, 3)]),
            "softmax_rows": (lambda x: ag.sum_all(ag.mul(ag.softmax_rows(x), w35)),
                             [rand64(rng, 3, 5)]),
            "layer_norm": (lambda x, g, b: ag.sum_all(ag.mul(ag.layer_norm(x, g, b), w36)),
                           [rand64(rng, 3, 6), rand64(rng, 6), rand64(rng, 6)]),
            "gelu": (lambda x: ag.sum_all(ag.mul(ag.gelu(x), w44)), [rand64(rng, 4, 4)]),
            "cross_entropy": (lambda x: ag.cross_entropy_logits(x, targets), [rand64(rng, 3, 7)]),
            "cross_entropy_ignore": (lambda x: ag.cross_entropy_logits(x, np.array([1, -1, 2]), ignore_id=-1),
                                     [rand64(rng, 3, 7)]),
        }
        for name, (f, inputs) in cases.items():
            err = grad_check(f, inputs, eps=1e-5)
            assert err < 1e-4, f"{name}: rel error {err:.3e}"

    def test_deliberately_wrong_gradient_detected(self):
        # hand-build a node whose backward is off by 10%
        def broken_double(x):
            out = Tensor(x.data * 2.0)
            out.requires_grad = True
            out._parents = (x,)

            def bad_backward():
                x.grad += 2.2 * out.grad

            out._backward = bad_backward
            return out

        x = t64([1.0, -2.0, 0.5])
        err = grad_check(lambda x: ag.sum_all(broken_double(x)), [x], eps=1e-5)
        assert err > 1e-2
