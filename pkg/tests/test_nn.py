import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskshape.agents.ddpg import DDPGConfig, make_actor, make_critic
from riskshape.agents.dqn import DQNConfig, make_qnet
from riskshape.agents.ppo import PPOConfig, make_policy, make_value
from riskshape.nn import Adam, DenseNet, load_checkpoint, optim_step, save_checkpoint


def numeric_grads(net, x, seed_out, h=1e-5):
    """Central differences of L = sum(net(x) * seed_out) for every parameter."""
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = np.sum(net.predict(x) * seed_out)
            p[i] = old - h
            down = np.sum(net.predict(x) * seed_out)
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


# ---------------------------------------------------------------- forward


def test_zero_net_outputs_zero():
    net = DenseNet([4, 3, 2], ["identity", "identity"])
    net.set_flat(np.zeros(net.n_params))
    np.testing.assert_array_equal(net.predict(np.ones((5, 4))), np.zeros((5, 2)))


def test_identity_layer_passes_input():
    net = DenseNet([3, 3], ["identity"])
    net.weights[0][...] = np.eye(3)
    net.biases[0][...] = 0.0
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(net.predict(x), x)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError):
        DenseNet([3, 2], ["identity"]).forward(np.ones((1, 4)))


def test_softmax_only_last():
    with pytest.raises(ValueError):
        DenseNet([3, 4, 2], ["softmax", "identity"])


@given(st.integers(0, 10_000), st.floats(0.1, 50.0))
def test_softmax_rows_normalised(seed, scale):
    rng = np.random.default_rng(seed)
    net = DenseNet([6, 8, 5], ["tanh", "softmax"], seed=seed)
    net.weights[-1] *= scale
    p = net.predict(rng.normal(0, 3, (16, 6)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(p >= 0)
    assert np.all(np.isfinite(np.log(np.maximum(p, 1e-300))))


def test_softmax_entries_positive_on_moderate_logits():
    net = DenseNet([2, 5], ["softmax"])
    p = net.predict(np.array([[3.0, -2.0]]))
    assert np.all(p > 0)


# ---------------------------------------------------------------- backward


def test_scalar_product_rule():
    net = DenseNet([3, 1], ["identity"])
    w = np.array([0.5, -1.5, 2.0])
    net.weights[0][:, 0] = w
    net.biases[0][...] = 0.0
    x = np.array([[1.0, 2.0, -3.0]])
    _, cache = net.forward(x)
    (dw, db), dx = net.backward(cache, np.ones((1, 1)))
    np.testing.assert_array_equal(dw[:, 0], x[0])
    np.testing.assert_array_equal(dx[0], w)
    assert db[0] == 1.0


def test_relu_blocks_negative_preactivation():
    net = DenseNet([1, 1], ["relu"])
    net.weights[0][...] = 1.0
    net.biases[0][...] = 0.0
    _, cache = net.forward(np.array([[-2.0]]))
    (dw, db), dx = net.backward(cache, np.ones((1, 1)))
    assert dw[0, 0] == 0.0 and db[0] == 0.0 and dx[0, 0] == 0.0


def test_backward_rejects_stale_cache():
    net = DenseNet([3, 4, 2], ["tanh", "identity"])
    _, cache = net.forward(np.ones((2, 3)))
    with pytest.raises(ValueError):
        net.backward(cache, np.ones((3, 2)))
    with pytest.raises(ValueError):
        net.backward(cache[:1], np.ones((2, 2)))


def _agent_nets(obs_dim=10):
    return {
        "random3": DenseNet([5, 7, 6, 4], ["tanh", "relu", "identity"], seed=3),
        "qnet": make_qnet(obs_dim, DQNConfig(hidden=(16, 16)), seed=1),
        "policy": make_policy(obs_dim, PPOConfig(hidden=(16, 16)), seed=2),
        "value": make_value(obs_dim, PPOConfig(hidden=(16, 16)), seed=3),
        "actor": make_actor(obs_dim, DDPGConfig(hidden=(16, 16)), seed=4),
        "critic": make_critic(obs_dim, DDPGConfig(hidden=(16, 16)), seed=5),
    }


@pytest.mark.parametrize("name", list(_agent_nets()))
def test_gradients_match_finite_differences(name):
    net = _agent_nets()[name]
    rng = np.random.default_rng(42)
    x = rng.normal(size=(4, net.in_dim))
    if name == "policy":
        net.weights[-1] *= 100.0  # make the softmax non-trivial
    seed_out = rng.normal(size=(4, net.out_dim))
    _, cache = net.forward(x)
    grads, dx = net.backward(cache, seed_out)
    for g, fd in zip(grads, numeric_grads(net, x, seed_out)):
        assert rel_err(g, fd) < 1e-4

    # input gradient too
    fd_x = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += 1e-5
        xm[i] -= 1e-5
        fd_x[i] = (np.sum(net.predict(xp) * seed_out) - np.sum(net.predict(xm) * seed_out)) / 2e-5
    assert rel_err(dx, fd_x) < 1e-4


def test_raster_preset_gradients():
    net = make_policy(24 * 24, PPOConfig(hidden=(128,)), seed=0)
    net.weights[-1] *= 50.0
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (2, 576))
    seed_out = rng.normal(size=(2, 5))
    _, cache = net.forward(x)
    grads, _ = net.backward(cache, seed_out)
    # spot-check a random subset of first-layer weights to keep runtime small
    w = net.weights[0]
    for _ in range(40):
        i = (int(rng.integers(576)), int(rng.integers(128)))
        old = w[i]
        w[i] = old + 1e-5
        up = np.sum(net.predict(x) * seed_out)
        w[i] = old - 1e-5
        down = np.sum(net.predict(x) * seed_out)
        w[i] = old
        fd = (up - down) / 2e-5
        assert abs(fd - grads[0][i]) <= 1e-4 * max(abs(fd), abs(grads[0][i]), 1e-6)


# ---------------------------------------------------------------- optimizer


def test_zero_gradient_is_noop():
    net = DenseNet([3, 2], ["identity"], seed=0)
    before = net.get_flat()
    opt = Adam(net, lr=0.1)
    optim_step(net, [np.zeros_like(p) for p in net.params()], opt)
    np.testing.assert_array_equal(net.get_flat(), before)
    assert opt.t == 1


def _scalar_net(w0):
    net = DenseNet([1, 1], ["identity"])
    net.weights[0][...] = w0
    net.biases[0][...] = 0.0
    return net


def test_first_step_hand_computed():
    net = _scalar_net(2.0)
    opt = Adam(net, lr=0.1)
    opt.step(net, [np.ones((1, 1)), np.zeros(1)])
    # m = 0.1, v = 0.001; hats are 1 and 1, so the step is lr * 1 / (1 + eps)
    want = 2.0 - 0.1 * 1.0 / (1.0 + 1e-8)
    assert net.weights[0][0, 0] == pytest.approx(want, abs=1e-15)


def test_two_steps_hand_computed():
    net = _scalar_net(0.0)
    opt = Adam(net, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    w = 0.0
    m = v = 0.0
    for t, g in enumerate([3.0, -1.0], start=1):
        opt.step(net, [np.full((1, 1), g), np.zeros(1)])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert net.weights[0][0, 0] == pytest.approx(w, abs=1e-15)


def test_quadratic_convergence():
    net = _scalar_net(0.0)
    opt = Adam(net, lr=0.05)
    for _ in range(500):
        w = net.weights[0][0, 0]
        opt.step(net, [np.full((1, 1), 2.0 * (w - 3.0)), np.zeros(1)])
    assert abs(net.weights[0][0, 0] - 3.0) < 1e-2


def test_non_finite_gradient_skipped(caplog):
    net = DenseNet([2, 2], ["identity"], seed=0)
    opt = Adam(net)
    before = net.get_flat()
    grads = [np.full_like(p, np.nan) for p in net.params()]
    assert opt.step(net, grads) is False
    np.testing.assert_array_equal(net.get_flat(), before)
    assert opt.t == 0
    assert "non-finite" in caplog.text


def test_gradient_shape_mismatch():
    net = DenseNet([2, 2], ["identity"])
    with pytest.raises(ValueError):
        Adam(net).step(net, [np.zeros((3, 2)), np.zeros(2)])


def test_grad_norm_clipping():
    net = _scalar_net(0.0)
    opt = Adam(net, lr=0.1, max_grad_norm=1.0)
    opt.step(net, [np.full((1, 1), 100.0), np.zeros(1)])
    assert opt.m[0][0, 0] == pytest.approx(0.1)


def test_determinism_across_instances():
    rng = np.random.default_rng(5)
    batches = [(rng.normal(size=(8, 4)), rng.normal(size=(8, 3))) for _ in range(20)]
    finals = []
    for _ in range(2):
        net = DenseNet([4, 8, 3], ["relu", "identity"], seed=11)
        opt = Adam(net, lr=1e-2)
        for x, y in batches:
            out, cache = net.forward(x)
            grads, _ = net.backward(cache, 2 * (out - y) / len(x))
            opt.step(net, grads)
        finals.append(net.get_flat())
    np.testing.assert_array_equal(finals[0], finals[1])


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_exact(tmp_path):
    net = DenseNet([4, 6, 2], ["tanh", "softmax"], seed=9, out_scale=0.01)
    opt = Adam(net, lr=3e-4)
    rng = np.random.default_rng(0)
    for _ in range(3):
        _, cache = net.forward(rng.normal(size=(5, 4)))
        opt.step(net, net.backward(cache, rng.normal(size=(5, 2)))[0])
    save_checkpoint(tmp_path / "ck.json", {"net": net.to_dict(), "optim": opt.to_dict(), "episode": 7})
    blob = load_checkpoint(tmp_path / "ck.json")
    net2 = DenseNet.from_dict(blob["net"])
    np.testing.assert_array_equal(net2.get_flat(), net.get_flat())
    opt2 = Adam(net2)
    opt2.load_dict(blob["optim"])
    assert opt2.t == opt.t
    for a, b in zip(opt.m + opt.v, opt2.m + opt2.v):
        np.testing.assert_array_equal(a, b)
    assert blob["episode"] == 7


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"hello": 1}')
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x.json")
