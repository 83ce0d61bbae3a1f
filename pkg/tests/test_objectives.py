import math

import numpy as np
import pytest

from nextnn import Dataset, GroupPenalty, L1Penalty, L2Penalty, Loss, NetArch, global_cost, init_weights, loss_value
from nextnn.mlp import forward
from nextnn.objectives import NondifferentiableError, PRED_CLAMP


class TestLossValue:
    def test_squared(self):
        assert loss_value(Loss.SQUARED, 2.0, 3.0) == 1.0

    def test_cross_entropy_symmetric_at_half(self):
        assert loss_value(Loss.CROSS_ENTROPY, 1.0, 0.5) == pytest.approx(math.log(2))
        assert loss_value(Loss.CROSS_ENTROPY, 0.0, 0.5) == pytest.approx(math.log(2))

    def test_cross_entropy_rejects_non_binary_target(self):
        with pytest.raises(ValueError):
            loss_value(Loss.CROSS_ENTROPY, 0.3, 0.5)

    def test_cross_entropy_clamps_prediction(self):
        v = loss_value(Loss.CROSS_ENTROPY, 1.0, 0.0)
        assert v == pytest.approx(-math.log(PRED_CLAMP))

    def test_convexity_interpolation(self, rng):
        # l(d, t f1 + (1-t) f2) <= t l(d, f1) + (1-t) l(d, f2).
        for _ in range(100):
            t = rng.uniform()
            f1, f2 = rng.uniform(0.01, 0.99, size=2)
            d_sq = rng.uniform()
            mid = t * f1 + (1 - t) * f2
            assert loss_value(Loss.SQUARED, d_sq, mid) <= (
                t * loss_value(Loss.SQUARED, d_sq, f1)
                + (1 - t) * loss_value(Loss.SQUARED, d_sq, f2) + 1e-12)
            d_ce = float(rng.integers(0, 2))
            assert loss_value(Loss.CROSS_ENTROPY, d_ce, mid) <= (
                t * loss_value(Loss.CROSS_ENTROPY, d_ce, f1)
                + (1 - t) * loss_value(Loss.CROSS_ENTROPY, d_ce, f2) + 1e-12)


class TestPenalties:
    def test_l2_value_and_gradient(self):
        reg = L2Penalty(2.0)
        w = np.array([1.0, 1.0])
        assert reg.value(w) == 2.0
        np.testing.assert_array_equal(reg.gradient(w), [2.0, 2.0])

    def test_l1_value(self):
        assert L1Penalty(1.0).value(np.array([1.0, -2.0])) == 3.0

    def test_l1_matches_manual_sum_exactly(self, rng):
        w = rng.standard_normal(20)
        lam = 0.7
        assert L1Penalty(lam).value(w) == lam * np.abs(w).sum()

    def test_l1_has_no_gradient(self):
        with pytest.raises(NondifferentiableError):
            L1Penalty(1.0).gradient(np.ones(2))

    def test_group_single_block(self):
        reg = GroupPenalty(1.0, ((0, 2),))
        w = np.array([3.0, 4.0])
        assert reg.value(w) == pytest.approx(math.sqrt(2) * 5.0)

    def test_group_with_singleton_groups_equals_l1(self, rng):
        w = rng.standard_normal(6)
        groups = tuple((k, k + 1) for k in range(6))
        assert GroupPenalty(0.3, groups).value(w) == pytest.approx(L1Penalty(0.3).value(w), abs=1e-14)

    def test_group_partition_mismatch(self):
        reg = GroupPenalty(1.0, ((0, 2), (3, 4)))  # gap at index 2
        with pytest.raises(ValueError):
            reg.value(np.zeros(4))
        with pytest.raises(ValueError):
            GroupPenalty(1.0, ((0, 2),)).value(np.zeros(3))

    def test_rejects_nonpositive_lam(self):
        for build in (lambda: L2Penalty(0.0), lambda: L1Penalty(-1.0),
                      lambda: GroupPenalty(0.0, ((0, 1),))):
            with pytest.raises(ValueError):
                build()


class TestGlobalCost:
    def test_zero_residual_without_penalty(self):
        arch = NetArch(1, (), "identity")
        data = Dataset(np.array([[1.0], [2.0]]), np.array([2.0, 4.0]), "regression")
        assert global_cost(arch, np.array([2.0, 0.0]), [data], Loss.SQUARED) == 0.0

    def test_additivity_over_identical_agents(self, rng):
        arch = NetArch(2, (3,), "tanh")
        w = init_weights(arch, 1)
        data = Dataset(rng.uniform(size=(5, 2)), rng.uniform(size=5), "regression")
        one = global_cost(arch, w, [data], Loss.SQUARED)
        reg = L2Penalty(0.5)
        two = global_cost(arch, w, [data, data], Loss.SQUARED, reg)
        assert two == pytest.approx(2.0 * one + reg.value(w), rel=1e-12)

    def test_matches_sample_by_sample_oracle(self, rng):
        arch = NetArch(2, (3,), "tanh")
        w = init_weights(arch, 5)
        sets = [Dataset(rng.uniform(size=(4, 2)), rng.uniform(size=4), "regression")
                for _ in range(3)]
        reg = L2Penalty(0.2)
        # Oracle: accumulate every sample individually.
        total = 0.0
        for ds in sets:
            for x, d in zip(ds.inputs, ds.targets):
                f = forward(arch, w, x).output
                total += (d - f) ** 2
        total += 0.5 * 0.2 * float(w @ w)
        assert global_cost(arch, w, sets, Loss.SQUARED, reg) == pytest.approx(total, rel=1e-12)

    def test_stack_is_evaluated_at_the_average(self, rng):
        arch = NetArch(2, (), "identity")
        data = Dataset(rng.uniform(size=(4, 2)), rng.uniform(size=4), "regression")
        ws = np.stack([np.ones(arch.num_params), 3 * np.ones(arch.num_params)])
        at_mean = global_cost(arch, 2 * np.ones(arch.num_params), [data], Loss.SQUARED)
        assert global_cost(arch, ws, [data], Loss.SQUARED) == pytest.approx(at_mean, rel=1e-12)

    def test_nonnegative_for_squared_loss(self, rng):
        arch = NetArch(2, (3,), "tanh")
        for seed in range(5):
            w = init_weights(arch, seed)
            data = Dataset(rng.uniform(size=(6, 2)), rng.uniform(size=6), "regression")
            assert global_cost(arch, w, [data], Loss.SQUARED, L1Penalty(0.3)) >= 0.0
