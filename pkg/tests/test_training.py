import numpy as np
import pytest

from mtj_gxnor import training
from mtj_gxnor.array import SoftwareLaw, apply_update
from mtj_gxnor.device import MtjDeviceParams, Pulse, switching_probability
from mtj_gxnor.errors import ParameterError, TrainingDivergedError
from mtj_gxnor.gxnor import ActivationWindow, symmetric_grad
from mtj_gxnor.reference import reference_train
from mtj_gxnor.rng import RngStreams
from mtj_gxnor.training import (TrainConfig, backward, build_network, forward, hinge_loss,
                                lr_at, metrics_csv, step, train)


def small_net(sizes, seed=0, **kw):
    cfg = TrainConfig(seed=seed, hidden=tuple(sizes[1:-1]), **kw)
    streams = RngStreams(seed)
    return build_network(cfg, None, streams, sizes=sizes), cfg, streams


def toy_problem(seed, n=64, dim=16):
    """Labels from a hidden ternary teacher; ties dropped so the classes separate."""
    rng = np.random.default_rng(1000 + seed)
    teacher = rng.integers(-1, 2, dim)
    while not teacher.any():
        teacher = rng.integers(-1, 2, dim)
    x = rng.integers(-1, 2, (n, dim)).astype(float)
    s = x @ teacher
    return x[s != 0], (s[s != 0] > 0).astype(int)


def test_identity_forward():
    net, _, _ = small_net([3, 3])
    net.layers[0].array.set_weights(np.eye(3, dtype=int))
    scores, cache = forward(net, np.array([[1.0, 0.0, -1.0]]))
    np.testing.assert_allclose(scores[0] / net.layers[0].scale, [1, 0, -1], atol=1e-12)


def test_forward_matches_integer_products():
    net, _, _ = small_net([20, 8, 5], seed=4)
    rng = np.random.default_rng(0)
    x = rng.integers(-1, 2, (7, 20)).astype(float)
    scores, cache = forward(net, x)
    w0, w1 = net.weights()
    h = np.asarray(cache.pre[0])
    np.testing.assert_allclose(h, net.layers[0].scale * (x @ w0.T.astype(float)), atol=1e-12)
    np.testing.assert_allclose(scores, net.layers[1].scale * (cache.inputs[1] @ w1.T),
                               atol=1e-12)


def test_zero_gradient_gives_no_update():
    net, cfg, streams = small_net([12, 6, 3], lr=0.5)
    before = [w.copy() for w in net.weights()]
    x = np.ones((4, 12))
    _, cache = forward(net, x)
    grads = backward(net, cache, np.zeros((4, 3)))
    assert all(not g.any() for g in grads.weights)
    deltas = training.Adam().deltas(grads.weights, cfg.lr)
    step(net, deltas, streams)
    for a, b in zip(before, net.weights()):
        np.testing.assert_array_equal(a, b)


def test_least_squares_gradient_single_layer():
    net, _, _ = small_net([10, 4], seed=2)
    rng = np.random.default_rng(1)
    x = rng.integers(-1, 2, (6, 10)).astype(float)
    target = rng.normal(size=(6, 4))
    scores, cache = forward(net, x)
    grads = backward(net, cache, scores - target)
    w = net.weights()[0].astype(float)
    scale = net.layers[0].scale

    def loss(wm):
        return 0.5 * np.sum((scale * (x @ wm.T) - target) ** 2)

    fd = np.zeros_like(w)
    h = 1e-6
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            e = np.zeros_like(w)
            e[i, j] = h
            fd[i, j] = (loss(w + e) - loss(w - e)) / (2 * h)
    np.testing.assert_allclose(grads.weights[0], fd, atol=1e-6)


def test_hidden_error_uses_transpose_and_window():
    net, cfg, _ = small_net([12, 9, 3], seed=5)
    rng = np.random.default_rng(3)
    x = rng.integers(-1, 2, (5, 12)).astype(float)
    scores, cache = forward(net, x)
    d = rng.normal(size=scores.shape)
    grads = backward(net, cache, d)
    w1 = net.weights()[1].astype(float)
    dz1 = d * net.layers[1].scale
    delta0 = (dz1 @ w1) * symmetric_grad(ActivationWindow(), cache.pre[0])
    expected = (delta0 * net.layers[0].scale).T @ x
    np.testing.assert_allclose(grads.weights[0], expected, atol=1e-9)


def test_window_support():
    net, _, _ = small_net([12, 9, 3], seed=5)
    rng = np.random.default_rng(3)
    x = rng.integers(-1, 2, (50, 12)).astype(float)
    scores, cache = forward(net, x)
    grads = backward(net, cache, rng.normal(size=scores.shape))
    outside = np.abs(cache.pre[0]) > 1.0
    assert outside.any()
    # a hidden unit whose pre-activation is outside the window for every sample
    # receives no weight gradient
    dead = outside.all(axis=0)
    assert not grads.weights[0][dead].any()


def test_hinge_loss_and_gradient():
    scores = np.array([[2.0, -2.0, 0.5], [0.0, 0.0, 0.0]])
    loss, grad = hinge_loss(scores, np.array([0, 2]), 3)
    # row 0: all margins met except class 2 (slack 1.5); row 1: slack 1 everywhere
    assert loss == pytest.approx((1.5 ** 2 + 3.0) / 2)
    np.testing.assert_allclose(grad, [[0, 0, 1.5], [1, 1, -1]])


@pytest.mark.parametrize("delta", [0.5, 0.05])
def test_single_synapse_frequency_matches_pulse_law(delta):
    # 10^4 independent synapses at 0_s, each pushed up by delta once
    net, _, streams = small_net([100, 100])
    arr = net.layers[0].array
    arr.set_weights(np.zeros((100, 100), int))
    p = MtjDeviceParams()
    # off -> on needs the negative polarity
    expected = switching_probability(p, Pulse(-p.v_up, delta * p.t_up), p.r_off, "off")
    apply_update(arr, np.full((100, 100), delta), streams)
    freq = np.mean(arr.weights() == 1)
    sigma = np.sqrt(expected * (1 - expected) / 1e4)
    assert abs(freq - expected) <= max(3 * sigma, 1e-4)


def test_sgd_scheme_skips_zero_input_column():
    x = np.ones((10, 8))
    x[:, 3] = 0.0
    y = np.arange(10) % 2
    cfg = TrainConfig(epochs=1, batch_size=5, lr=0.5, optimizer="sgd", scheme="sgd",
                      hidden=(), seed=2)
    streams = RngStreams(2)
    net = build_network(cfg, None, streams, sizes=[8, 2])
    before = net.weights()[0].copy()
    hist = train(net, (x, y), (x, y), cfg, streams)
    after = net.weights()[0]
    np.testing.assert_array_equal(before[:, 3], after[:, 3])
    assert (before != after).any()
    # one array-wide window per sample
    assert hist[0].windows[0] <= 10


@pytest.mark.parametrize("mode", ["ternary", "binary", "bin-activation"])
@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
@pytest.mark.parametrize("scale_mode", ["fan_in", "layer", "neuron"])
def test_trajectory_matches_software_reference(mode, optimizer, scale_mode):
    rng = np.random.default_rng(1)
    x = rng.integers(-1, 2, (120, 20)).astype(float)
    y = (x[:, :3].sum(axis=1) > 0).astype(int) + (x[:, 3] > 0)
    cfg = TrainConfig(epochs=3, batch_size=20, lr=0.2, hidden=(16,), law="software",
                      mode=mode, optimizer=optimizer, scale_mode=scale_mode,
                      calibrate_every=2, calibrate_samples=40)
    streams = RngStreams(cfg.seed)
    net = build_network(cfg, None, streams, sizes=[20, 16, 3])
    snaps = []
    train(net, (x, y), (x[:5], y[:5]), cfg, streams,
          on_epoch=lambda m: snaps.append(net.weights()))
    assert len(snaps) == cfg.epochs
    _, ref_snaps = reference_train(cfg, x, y, sizes=[20, 16, 3])
    for ours, ref in zip(snaps, ref_snaps):
        for a, b in zip(ours, ref):
            np.testing.assert_array_equal(a, b)


def test_linearly_separable_toy_is_learned():
    hits = 0
    seeds = range(20)
    for seed in seeds:
        x, y = toy_problem(seed)
        cfg = TrainConfig(epochs=50, batch_size=8, lr=0.1, hidden=(16,), seed=seed)
        streams = RngStreams(seed)
        net = build_network(cfg, None, streams, sizes=[16, 16, 2])
        hist = train(net, (x, y), (x, y), cfg, streams)
        hits += any(m.test_acc == 1.0 for m in hist)
    assert hits >= 0.95 * len(seeds)


def run_toy(seed, **kw):
    x, y = toy_problem(seed)
    cfg = TrainConfig(epochs=3, batch_size=8, lr=0.1, hidden=(16,), seed=seed, **kw)
    streams = RngStreams(seed)
    net = build_network(cfg, None, streams, sizes=[16, 16, 2])
    energy = training.EnergyLog()
    hist = train(net, (x, y), (x, y), cfg, streams, energy=energy)
    return net, hist, energy


def test_same_seed_is_deterministic():
    a, ha, _ = run_toy(7)
    b, hb, _ = run_toy(7)
    assert metrics_csv(ha) == metrics_csv(hb)
    for wa, wb in zip(a.weights(), b.weights()):
        np.testing.assert_array_equal(wa, wb)
    _, hc, _ = run_toy(8)
    assert metrics_csv(ha) != metrics_csv(hc)


def test_bin_activation_mode():
    net, hist, _ = run_toy(3, mode="bin-activation")
    x, _ = toy_problem(3)
    _, cache = forward(net, x)
    assert set(np.unique(cache.inputs[1])) <= {-1.0, 1.0}
    assert set(np.unique(net.weights()[0])) <= {-1, 0, 1}


def test_binary_mode_weights_stay_binary():
    net, _, _ = run_toy(3, mode="binary")
    for w in net.weights():
        assert set(np.unique(w)) <= {-1, 1}


def test_energy_total_is_sum_of_phases():
    net, hist, energy = run_toy(1)
    parts = energy.energy()
    assert energy.total() == pytest.approx(sum(parts.values()), rel=1e-15)
    assert hist[-1].energy_j == pytest.approx(energy.total(), rel=1e-15)
    windows = sum(sum(m.windows) for m in hist)
    assert energy.time["update"] == pytest.approx(windows * energy.profile.t_up)
    assert all(v >= 0 for v in parts.values())


def test_nan_loss_raises(monkeypatch):
    monkeypatch.setattr(training, "hinge_loss",
                        lambda s, y, n=10: (float("nan"), np.zeros_like(s)))
    with pytest.raises(TrainingDivergedError) as err:
        run_toy(0)
    assert err.value.epoch == 1


def test_lr_schedule():
    cfg = TrainConfig(lr=0.1, milestones=(2, 4))
    assert [lr_at(cfg, e) for e in range(5)] == pytest.approx([0.1, 0.1, 0.01, 0.01, 0.001])


def test_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(lr=0.0)
    with pytest.raises(ParameterError):
        TrainConfig(scheme="sgd", optimizer="adam")
    with pytest.raises(ParameterError):
        TrainConfig(mode="quaternary")


def test_config_round_trip():
    cfg = TrainConfig(hidden=(32, 16), milestones=(3,), lr=0.02)
    assert training.config_from_dict(cfg.as_dict()) == cfg


def test_software_law_and_variation_build():
    from mtj_gxnor.array import VariationSpec
    cfg = TrainConfig(variation=VariationSpec(0.3, 0.0), hidden=(4,))
    net = build_network(cfg, None, RngStreams(0), sizes=[6, 4, 2])
    assert np.std(net.layers[0].array.r_on) > 0
    assert isinstance(training.make_law(TrainConfig(law="software")), SoftwareLaw)
