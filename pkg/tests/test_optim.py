"""Optimizer update rules against independent scalar references."""

import numpy as np
import pytest

from skelwatch.optim import (
    OPTIMIZERS,
    Adagrad,
    Adam,
    RmsProp,
    Sgd,
    adam_step,
    make_optimizer,
)
from skelwatch.tensor import ContractError

from oracles import (
    adagrad_scalar_steps,
    adam_scalar_steps,
    rmsprop_scalar_steps,
    sgd_scalar_steps,
)


def quadratic_grad(w):
    return 2.0 * (w - 3.0)


def run_scalar(optimizer, w0, steps):
    w = {"w": np.array([w0])}
    for _ in range(steps):
        g = {"w": quadratic_grad(w["w"])}
        w = optimizer.step(w, g)
    return float(w["w"][0])


class TestAdam:
    def test_zero_gradient_from_start_keeps_params(self):
        opt = Adam(learning_rate=0.1)
        params = {"w": np.array([1.5, -2.0])}
        out = opt.step(params, {"w": np.zeros(2)})
        assert np.array_equal(out["w"], params["w"])

    def test_moments_decay_under_zero_gradient(self):
        opt = Adam(learning_rate=0.1)
        params = opt.step({"w": np.array([1.5, -2.0])}, {"w": np.array([1.0, -1.0])})
        m_before = opt.m["w"].copy()
        v_before = opt.v["w"].copy()
        opt.step(params, {"w": np.zeros(2)})
        assert np.array_equal(opt.m["w"], 0.9 * m_before)
        assert np.array_equal(opt.v["w"], 0.999 * v_before)

    def test_first_step_is_signed_learning_rate(self):
        # m_hat = g, v_hat = g^2, so the update is lr*g/(|g|+eps)
        opt = Adam(learning_rate=0.01)
        out = opt.step({"w": np.array([5.0])}, {"w": np.array([200.0])})
        expected = 5.0 - 0.01 * 200.0 / (200.0 + 1e-8)
        assert abs(out["w"][0] - expected) < 1e-15
        out2 = Adam(learning_rate=0.01).step(
            {"w": np.array([5.0])}, {"w": np.array([-0.003])})
        assert abs(out2["w"][0] - (5.0 + 0.01 * 0.003 / (0.003 + 1e-8))) < 1e-12

    def test_quadratic_matches_scalar_reference(self):
        final = run_scalar(Adam(learning_rate=0.1), 0.0, 50)
        reference = adam_scalar_steps(quadratic_grad, 0.0, 50, 0.1)
        assert abs(final - reference) < 1e-12
        assert abs(final - reference) < 0.05  # the documented tolerance
        assert abs(final - 3.0) < 0.2

    def test_functional_form_step_index(self):
        with pytest.raises(ContractError, match=">= 1"):
            adam_step({"w": np.ones(1)}, {"w": np.ones(1)}, {}, {}, 0, 0.1)

    def test_shape_mismatch(self):
        opt = Adam()
        with pytest.raises(ContractError, match="shape mismatch"):
            opt.step({"w": np.ones(3)}, {"w": np.ones(4)})

    def test_name_mismatch(self):
        opt = Adam()
        with pytest.raises(ContractError, match="disagree"):
            opt.step({"w": np.ones(3)}, {"b": np.ones(3)})


class TestOtherRules:
    def test_sgd_matches_reference(self):
        final = run_scalar(Sgd(learning_rate=0.1), 0.0, 50)
        assert abs(final - sgd_scalar_steps(quadratic_grad, 0.0, 50, 0.1)) < 1e-12
        assert abs(final - 3.0) < 1e-4

    def test_rmsprop_matches_reference(self):
        final = run_scalar(RmsProp(learning_rate=0.1), 0.0, 50)
        assert abs(final - rmsprop_scalar_steps(quadratic_grad, 0.0, 50, 0.1)) < 1e-12

    def test_adagrad_matches_reference(self):
        final = run_scalar(Adagrad(learning_rate=0.1), 0.0, 50)
        assert abs(final - adagrad_scalar_steps(quadratic_grad, 0.0, 50, 0.1)) < 1e-12

    @pytest.mark.parametrize("name", sorted(OPTIMIZERS))
    def test_all_rules_descend_the_quadratic(self, name):
        opt = make_optimizer(name, learning_rate=0.1)
        start_loss = (0.0 - 3.0) ** 2
        final = run_scalar(opt, 0.0, 50)
        assert (final - 3.0) ** 2 < 0.5 * start_loss

    @pytest.mark.parametrize("name", sorted(OPTIMIZERS))
    def test_zero_learning_rate_is_bitwise_noop(self, name):
        opt = make_optimizer(name, learning_rate=0.0)
        params = {"w": np.array([0.1, -7.25, 3e-20], dtype=np.float64)}
        out = params
        for _ in range(3):
            out = opt.step(out, {"w": np.array([5.0, -2.0, 1e6])})
        assert np.array_equal(out["w"], params["w"])
        assert out["w"].dtype == params["w"].dtype

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown optimizer"):
            make_optimizer("sgdm", learning_rate=0.1)
