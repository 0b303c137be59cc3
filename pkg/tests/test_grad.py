import os

import numpy as np
import pytest

from app.errors import CheckpointError, ContractError
from app.grad import tensor as T
from app.grad.checkpoint import BLOB, load_into, read_checkpoint, save_checkpoint
from app.grad.gradcheck import grad_check
from app.grad.layers import Conv1d, Dense, GRUCell, Module
from app.grad.optim import Adam
from app.grad.tensor import Tensor, parameter, precision

PRIMITIVES = {
    "add": lambda a, b: a + b,
    "mul": lambda a, b: a * b,
    "tanh": lambda a, b: T.tanh(a),
    "sigmoid": lambda a, b: T.sigmoid(a),
    "relu": lambda a, b: T.relu(a),
    "exp": lambda a, b: T.exp(a),
    "abs": lambda a, b: T.abs(a),
    "clip": lambda a, b: T.clip(a, -0.5, 0.5),
    "softmax": lambda a, b: T.softmax(a),
    "logsumexp": lambda a, b: T.logsumexp(a),
    "l2_normalize": lambda a, b: T.l2_normalize(a),
    "matmul": lambda a, b: T.matmul(a, T.reshape(b, (7, 5))),
    "conv1d": lambda a, b: T.conv1d(a, T.reshape(b, (7, 5, 1)), T.sum(b, axis=0)),
    "concat": lambda a, b: T.concat([a, b], axis=0),
    "stack": lambda a, b: T.stack([a, b]),
    "slice": lambda a, b: a[1:4, ::2],
    "sum": lambda a, b: T.sum(a * b, axis=0),
    "weighted_sum": lambda a, b: T.weighted_sum(a, T.reshape(T.concat([b, b * b], axis=-1), (5, 7, 2))),
}


class TestPrimitives:
    def test_broadcast_add_sums_gradients_back(self):
        a = parameter(np.ones((3, 2)), "a")
        b = parameter(np.array([1.0, 2.0]), "b")
        T.sum(a * b).backward()
        assert np.allclose(a.grad, [[1.0, 2.0]] * 3)
        assert np.allclose(b.grad, [3.0, 3.0])

    def test_shared_input_accumulates(self):
        x = parameter(np.array([2.0]), "x")
        T.sum(x * x + x).backward()
        assert x.grad[0] == pytest.approx(5.0)

    def test_softmax_and_logsumexp_values(self):
        logits = Tensor(np.array([1.0, 2.0, 3.0]))
        probs = T.softmax(logits).data
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert T.logsumexp(logits).item() == pytest.approx(np.log(np.exp([1.0, 2.0, 3.0]).sum()), rel=1e-6)

    def test_l2_normalize_gives_unit_rows(self):
        rows = T.l2_normalize(Tensor(np.array([[3.0, 4.0], [1.0, 0.0]]))).data
        assert np.allclose(np.linalg.norm(rows, axis=-1), 1.0, atol=1e-6)

    def test_conv1d_matches_a_direct_loop(self, rng):
        x = rng.standard_normal((2, 9))
        w = rng.standard_normal((3, 2, 4))
        b = rng.standard_normal(3)
        with precision(np.float64):
            out = T.conv1d(Tensor(x), Tensor(w), Tensor(b), stride=2).data
        assert out.shape == (3, 3)
        for o in range(3):
            for t in range(3):
                expected = (x[:, 2 * t : 2 * t + 4] * w[o]).sum() + b[o]
                assert out[o, t] == pytest.approx(expected)

    def test_shape_mismatches_are_contract_errors(self):
        with pytest.raises(ContractError):
            T.matmul(Tensor(np.ones(3)), Tensor(np.ones((4, 2))))
        with pytest.raises(ContractError):
            T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
        with pytest.raises(ContractError):
            T.weighted_sum(Tensor(np.ones(3)), Tensor(np.ones((4, 2))))
        with pytest.raises(ContractError):
            T.conv1d(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 2, 4))), Tensor(np.ones(1)))
        with pytest.raises(ContractError):
            T.reshape(Tensor(np.ones(6)), (4, 2))

    def test_backward_needs_a_scalar(self):
        with pytest.raises(ContractError):
            parameter(np.ones(3), "v").backward()

    def test_non_finite_values_are_caught(self):
        with pytest.raises(FloatingPointError):
            T.mul(Tensor(np.array([1e30])), Tensor(np.array([1e30])))

    def test_long_chains_do_not_recurse(self):
        x = parameter(np.array([0.5]), "x")
        y = x
        for _ in range(5000):
            y = y + 0.0
        T.sum(y).backward()
        assert x.grad[0] == pytest.approx(1.0)


class TestGradientChecks:
    """Central differences in 64-bit against backprop for the composite ops."""

    def test_conv1d(self, rng):
        x = parameter(rng.standard_normal((2, 10)), "x")
        w = parameter(rng.standard_normal((3, 2, 4)), "w")
        b = parameter(rng.standard_normal(3), "b")
        report = grad_check(lambda: T.sum(T.tanh(T.conv1d(x, w, b, stride=2))), [("x", x), ("w", w), ("b", b)])
        assert report.passed(1e-6)

    def test_gru_cell(self, rng):
        cell = GRUCell("gru", 5, 4, rng)
        h = parameter(rng.standard_normal(4), "h")
        x = parameter(rng.standard_normal(5), "x")
        params = [("h", h), ("x", x)] + list(cell.named_parameters())
        report = grad_check(lambda: T.sum(cell(h, x) * cell(h, x)), params)
        assert report.passed(1e-6)
        assert len(report.max_rel_error) == 11

    @pytest.mark.parametrize("name", sorted(PRIMITIVES))
    def test_each_primitive(self, name, rng):
        a = parameter(rng.standard_normal((5, 7)), "a")
        b = parameter(rng.standard_normal((5, 7)), "b")
        op = PRIMITIVES[name]

        def loss():
            out = op(a, b)
            weights = np.random.default_rng(5).standard_normal(out.shape)
            return T.sum(out * Tensor(weights))

        report = grad_check(loss, [("a", a), ("b", b)], max_entries=35)
        assert report.passed(1e-6), "\n".join(report.lines())

    def test_abs_and_clip_subgradients(self):
        x = parameter(np.array([[0.0, 1.5, -2.0]]), "x")
        T.sum(T.abs(x)).backward()
        assert np.array_equal(x.grad, [[0.0, 1.0, -1.0]])
        y = parameter(np.array([-1.0, 0.2, 1.0]), "y")
        T.sum(T.clip(y, -0.5, 0.5)).backward()
        assert np.array_equal(y.grad, [0.0, 1.0, 0.0])

    def test_gru_through_forty_steps(self, rng):
        cell = GRUCell("gru", 3, 4, rng)
        xs = rng.standard_normal((40, 3))
        target = rng.standard_normal(4)

        def loss():
            h = Tensor(np.zeros(4))
            for x in xs:
                h = cell(h, Tensor(x))
            return T.sum(h * Tensor(target))

        report = grad_check(loss, list(cell.named_parameters()))
        assert report.passed(1e-5), "\n".join(report.lines())

    def test_attention_read(self, rng):
        scores = parameter(rng.standard_normal(6), "scores")
        values = parameter(rng.standard_normal((6, 3)), "values")
        target = rng.standard_normal(3)

        def loss():
            read = T.weighted_sum(T.softmax(scores), T.l2_normalize(values))
            return T.sum(read * Tensor(target))

        assert grad_check(loss, [("scores", scores), ("values", values)]).passed(1e-6)

    def test_masked_logsumexp_loss(self, rng):
        logits = parameter(rng.standard_normal((4, 4)), "logits")
        mask = np.where(rng.random((4, 4)) < 0.5, 0.0, -1e4)
        mask[:, 3] = 0.0

        def loss():
            return T.mean(T.logsumexp(logits) - T.logsumexp(logits + Tensor(mask)))

        assert grad_check(loss, [("logits", logits)]).passed(1e-6)

    def test_single_precision_analytic_gradients(self, rng):
        dense = Dense("fc", 4, 3, np.random.default_rng(0))
        x = rng.standard_normal(4)
        report = grad_check(lambda: T.sum(T.tanh(dense(Tensor(x)))), list(dense.named_parameters()), np.float32)
        assert report.passed(1e-2)

    def test_parameters_are_restored(self, rng):
        w = parameter(rng.standard_normal(5), "w")
        before = w.data.copy()
        grad_check(lambda: T.sum(w * w), [("w", w)])
        assert w.data.dtype == before.dtype
        assert np.array_equal(w.data, before)
        assert w.grad is None


class TestGRU:
    def test_zero_parameters_halve_the_state(self, rng):
        cell = GRUCell("gru", 3, 4, rng)
        for p in cell.parameters():
            p.data = np.zeros_like(p.data)
        h = rng.standard_normal(4)
        out = cell(Tensor(h), Tensor(rng.standard_normal(3))).data
        assert np.allclose(out, 0.5 * h, atol=1e-6)

    def test_closed_update_gate_keeps_the_state(self, rng):
        cell = GRUCell("gru", 3, 4, rng)
        cell.bz.data = np.full(4, -50.0, dtype=cell.bz.data.dtype)
        h = rng.standard_normal(4)
        out = cell(Tensor(h), Tensor(rng.standard_normal(3))).data
        assert np.allclose(out, h, atol=1e-6)


class TestAdam:
    def test_first_step_moves_by_the_learning_rate(self):
        p = parameter(np.array([1.0, -2.0, 0.5]), "p")
        opt = Adam([p], lr=0.01)
        before = p.data.copy()
        opt.step([np.array([3.0, -0.2, 0.0])])
        assert np.allclose(p.data - before, [-0.01, 0.01, 0.0], atol=1e-6)

    def test_quadratic_bowl_converges(self):
        center = np.array([0.5, -1.0, 2.0])
        p = parameter(np.array([3.0, 2.0, -1.0]), "p")
        opt = Adam([p], lr=0.1)
        for _ in range(200):
            p.zero_grad()
            diff = p - Tensor(center)
            T.sum(diff * diff).backward()
            opt.step()
        assert np.allclose(p.data, center, atol=0.05)

    def test_missing_gradients_leave_parameters_alone(self):
        p = parameter(np.ones(2), "p")
        Adam([p]).step([None])
        assert np.array_equal(p.data, np.ones(2, dtype=np.float32))

    def test_gradient_shapes_are_checked(self):
        p = parameter(np.ones(2), "p")
        with pytest.raises(ContractError):
            Adam([p]).step([np.ones(3)])
        with pytest.raises(ContractError):
            Adam([p]).step([np.ones(2), np.ones(2)])


class _Net(Module):
    def __init__(self, seed: int):
        super().__init__("net")
        rng = np.random.default_rng(seed)
        self.conv = self.add_module(Conv1d("conv", 5, 4, 3, 2, rng))
        self.gru = self.add_module(GRUCell("gru", 4, 6, rng))
        self.omega = self.add_parameter("omega", np.array([0.3]))


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        source, target = _Net(1), _Net(2)
        save_checkpoint(str(tmp_path), list(source.named_parameters()), {"iteration": 7})
        metadata = load_into(str(tmp_path), list(target.named_parameters()))
        assert metadata == {"iteration": 7}
        for (name, a), (_, b) in zip(source.named_parameters(), target.named_parameters()):
            assert a.data.tobytes() == b.data.tobytes(), name

    def test_names_are_qualified(self):
        names = [name for name, _ in _Net(0).named_parameters()]
        assert names[0] == "net.omega"
        assert "net.conv.W" in names and "net.gru.Whz" in names

    def test_truncated_blob(self, tmp_path):
        save_checkpoint(str(tmp_path), list(_Net(1).named_parameters()))
        blob = os.path.join(tmp_path, BLOB)
        with open(blob, "rb") as f:
            data = f.read()
        with open(blob, "wb") as f:
            f.write(data[:-8])
        with pytest.raises(CheckpointError):
            read_checkpoint(str(tmp_path))

    def test_mismatched_model(self, tmp_path):
        save_checkpoint(str(tmp_path), list(_Net(1).named_parameters()))
        other = Dense("fc", 2, 2, np.random.default_rng(0))
        with pytest.raises(CheckpointError, match="does not match"):
            load_into(str(tmp_path), list(other.named_parameters()))

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointError):
            read_checkpoint(str(tmp_path / "absent"))
