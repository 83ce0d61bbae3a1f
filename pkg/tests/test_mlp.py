import numpy as np
import pytest

from nextnn import Dataset, Loss, NetArch, forward, init_weights, local_gradient, weight_jacobian
from nextnn.mlp import jacobian_matrix, local_cost, neuron_groups, save_weights_csv, load_weights_csv

from conftest import central_diff_gradient


def linear_arch():
    # No hidden layer, identity output: f(w; x) = w0 * x + b.
    return NetArch(1, (), "identity")


class TestArch:
    def test_parameter_count(self):
        arch = NetArch(13, (10,), "tanh")
        assert arch.num_params == (13 + 1) * 10 + 11

    def test_rejects_zero_width(self):
        with pytest.raises(ValueError):
            NetArch(3, (0,))

    def test_groups_partition_all_parameters(self):
        arch = NetArch(3, (4, 2), "tanh")
        groups = neuron_groups(arch)
        covered = sorted(i for start, stop in groups for i in range(start, stop))
        assert covered == list(range(arch.num_params))
        # 3 input neurons + bias, 4 hidden + bias, 2 hidden + bias.
        assert len(groups) == (3 + 1) + (4 + 1) + (2 + 1)


class TestInitWeights:
    def test_deterministic_per_seed(self):
        arch = NetArch(5, (7,), "tanh")
        np.testing.assert_array_equal(init_weights(arch, 3), init_weights(arch, 3))

    def test_seeds_differ(self):
        arch = NetArch(5, (7,), "tanh")
        assert np.any(init_weights(arch, 1) != init_weights(arch, 2))

    def test_bound_and_zero_biases(self):
        # fan_in=2, fan_out=4 gives limit sqrt(6/6) = 1.
        arch = NetArch(2, (4,), "tanh")
        w = init_weights(arch, 11)
        first_layer = w[:8]
        assert np.all(np.abs(first_layer) <= 1.0)
        biases = w[8:12]
        np.testing.assert_array_equal(biases, np.zeros(4))


class TestForward:
    def test_zero_weights_tanh(self):
        arch = NetArch(3, (4,), "tanh")
        out = forward(arch, np.zeros(arch.num_params), np.array([0.3, -1.0, 2.0]))
        assert out.output == 0.0

    def test_zero_weights_sigmoid(self):
        arch = NetArch(3, (4,), "sigmoid")
        out = forward(arch, np.zeros(arch.num_params), np.array([0.3, -1.0, 2.0]))
        assert out.output == 0.5
        assert out.pre_activation == 0.0

    def test_linear_net(self):
        out = forward(linear_arch(), np.array([2.0, 0.0]), np.array([3.0]))
        assert out.output == 6.0 and out.pre_activation == 6.0

    def test_sigmoid_output_in_unit_interval(self, rng):
        arch = NetArch(2, (5,), "sigmoid")
        w = init_weights(arch, 0)
        res = forward(arch, w, rng.uniform(size=(50, 2)))
        assert np.all((res.output > 0) & (res.output < 1))
        np.testing.assert_allclose(res.output, 1 / (1 + np.exp(-res.pre_activation)))

    def test_dimension_mismatch(self):
        arch = NetArch(3, (2,))
        with pytest.raises(ValueError):
            forward(arch, np.zeros(arch.num_params), np.array([1.0, 2.0]))

    def test_rejects_non_finite_weights(self):
        arch = NetArch(2, ())
        w = np.array([np.inf, 0.0, 0.0])
        with pytest.raises(ValueError):
            forward(arch, w, np.array([1.0, 1.0]))


class TestWeightJacobian:
    def test_linear_net_by_hand(self):
        jac = weight_jacobian(linear_arch(), np.array([5.0, -1.0]), np.array([3.0]))
        np.testing.assert_array_equal(jac, [3.0, 1.0])

    @pytest.mark.parametrize("activation", ["tanh", "sigmoid", "identity"])
    def test_matches_finite_differences(self, rng, activation):
        arch = NetArch(3, (4, 3), activation)
        w = init_weights(arch, 5) + 0.1 * rng.standard_normal(arch.num_params)
        x = rng.uniform(size=3)
        jac = weight_jacobian(arch, w, x)
        oracle = central_diff_gradient(lambda v: forward(arch, v, x).output, w)
        np.testing.assert_allclose(jac, oracle, rtol=1e-5, atol=1e-7)

    def test_preactivation_jacobian_matches_finite_differences(self, rng):
        arch = NetArch(2, (3,), "sigmoid")
        w = init_weights(arch, 9)
        x = rng.uniform(size=2)
        jac = weight_jacobian(arch, w, x, preactivation=True)
        oracle = central_diff_gradient(lambda v: forward(arch, v, x).pre_activation, w)
        np.testing.assert_allclose(jac, oracle, rtol=1e-5, atol=1e-7)

    def test_symmetric_weights_give_symmetric_entries(self):
        # Two hidden units fed identically produce interchangeable gradients.
        arch = NetArch(1, (2,), "identity")
        w = np.array([0.7, 0.7, 0.0, 0.0, 0.5, 0.5, 0.0])
        jac = weight_jacobian(arch, w, np.array([1.3]))
        assert jac[0] == jac[1]   # input weights to the twin units
        assert jac[4] == jac[5]   # outgoing weights of the twin units


class TestLocalGradient:
    def test_zero_residual_gives_zero_gradient(self):
        arch = linear_arch()
        data = Dataset(np.array([[1.0], [2.0]]), np.array([3.0, 6.0]), "regression")
        grad = local_gradient(arch, np.array([3.0, 0.0]), data, Loss.SQUARED)
        np.testing.assert_array_equal(grad, np.zeros(2))

    def test_hand_chain_rule(self):
        # f = w*x, one sample (x=1, d=0), w=1: gradient = 2 (f - d) x = 2.
        arch = NetArch(1, (), "identity")
        data = Dataset(np.array([[1.0]]), np.array([0.0]), "regression")
        grad = local_gradient(arch, np.array([1.0, 0.0]), data, Loss.SQUARED)
        np.testing.assert_allclose(grad, [2.0, 2.0])  # bias sees the same residual

    def test_empty_dataset_contributes_nothing(self, small_arch, small_weights):
        data = Dataset(np.zeros((0, 3)), np.zeros(0), "regression")
        np.testing.assert_array_equal(
            local_gradient(small_arch, small_weights, data, Loss.SQUARED),
            np.zeros(small_arch.num_params))

    def test_squared_matches_finite_differences(self, rng):
        arch = NetArch(3, (4,), "tanh")
        w = init_weights(arch, 2)
        data = Dataset(rng.uniform(size=(6, 3)), rng.uniform(size=6), "regression")
        grad = local_gradient(arch, w, data, Loss.SQUARED)
        oracle = central_diff_gradient(lambda v: local_cost(arch, v, data, Loss.SQUARED), w)
        np.testing.assert_allclose(grad, oracle, rtol=1e-5, atol=1e-7)

    def test_cross_entropy_matches_finite_differences(self, rng):
        arch = NetArch(3, (4,), "sigmoid")
        w = init_weights(arch, 2)
        data = Dataset(rng.uniform(size=(6, 3)),
                       rng.integers(0, 2, size=6).astype(float), "classification")
        grad = local_gradient(arch, w, data, Loss.CROSS_ENTROPY)
        oracle = central_diff_gradient(lambda v: local_cost(arch, v, data, Loss.CROSS_ENTROPY), w)
        np.testing.assert_allclose(grad, oracle, rtol=1e-5, atol=1e-7)

    def test_cross_entropy_requires_sigmoid_output(self):
        arch = NetArch(2, (), "tanh")
        data = Dataset(np.array([[1.0, 0.0]]), np.array([1.0]), "classification")
        with pytest.raises(ValueError):
            local_gradient(arch, np.zeros(arch.num_params), data, Loss.CROSS_ENTROPY)

    def test_gradient_jacobian_consistency(self, rng):
        # For the squared loss the gradient is exactly sum_m 2 (f - d) J_m.
        arch = NetArch(4, (5,), "tanh")
        w = init_weights(arch, 21)
        data = Dataset(rng.uniform(size=(8, 4)), rng.uniform(size=8), "regression")
        grad = local_gradient(arch, w, data, Loss.SQUARED)
        jac = jacobian_matrix(arch, w, data.inputs)
        f = forward(arch, w, data.inputs).output
        by_parts = (2.0 * (f - data.targets)) @ jac
        np.testing.assert_allclose(grad, by_parts, rtol=1e-12, atol=1e-12)

    def test_gradient_field_is_lipschitz_at_desk_scale(self, rng):
        # No assertion on the constant itself, only that the ratio stays
        # bounded over many random weight pairs in a ball.
        arch = NetArch(2, (3,), "tanh")
        x = rng.uniform(size=2)
        ratios = []
        for _ in range(1000):
            w1 = rng.uniform(-2, 2, size=arch.num_params)
            w2 = rng.uniform(-2, 2, size=arch.num_params)
            g1 = weight_jacobian(arch, w1, x)
            g2 = weight_jacobian(arch, w2, x)
            denom = np.linalg.norm(w1 - w2)
            if denom > 1e-9:
                ratios.append(np.linalg.norm(g1 - g2) / denom)
        assert np.isfinite(ratios).all()
        assert max(ratios) < 1e6


class TestWeightsCsv:
    def test_round_trip(self, tmp_path, small_arch, small_weights):
        path = tmp_path / "w.csv"
        save_weights_csv(path, [small_weights, 2 * small_weights])
        loaded = load_weights_csv(path)
        np.testing.assert_allclose(loaded, np.stack([small_weights, 2 * small_weights]))
