import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromarket.experiments import ExperimentConfig, run_experiment, weight_banks
from neuromarket.network import (
    FB,
    FEEDBACK_RULE,
    FF,
    INH,
    REWARD_RULE,
    DynamicsConfig,
    Network,
    Projection,
    SleepConfig,
    Topology,
    TopologyError,
    feedback_score,
    learn_fb,
    learn_ff,
    learn_m,
    top_k_binarize,
)
from neuromarket.scoring import Regularizer, ScoringConfig


def chain(weight=1.0, delay=0, n_in=1, n_out=1, **dyn):
    """S -> X with one dense fixed bank."""
    W = np.full((n_in, n_out), weight)
    topo = Topology({"S": n_in, "X": n_out},
                    [Projection("S", "X", W, np.ones_like(W, bool), FF, delay)])
    return Network(topo, DynamicsConfig(**dyn), learning=False)


def test_spike_is_strict_and_resets():
    net = chain(weight=1.0, theta=1.0, delta=0.0)
    assert not net.tic([1]).spikes["X"][0]  # voltage 1.0 is not above 1.0
    rep = net.tic([1])
    assert rep.spikes["X"][0] and rep.voltage["X"][0] == 0.0


def test_voltage_floor():
    net = chain(weight=0.0, delta=0.3)
    assert net.tic([1]).voltage["X"][0] == 0.0


@pytest.mark.parametrize("c, delta, theta", [(0.5, 0.05, 1.0), (0.3, 0.1, 1.0), (1.3, 0.2, 2.5)])
def test_constant_drive_fires_periodically(c, delta, theta):
    # voltage climbs c - delta per tic and fires on the first tic it exceeds theta
    period = int(np.floor(theta / (c - delta))) + 1
    net = chain(weight=c, delta=delta, theta=theta)
    fired = [t for t in range(10 * period) if net.tic([1]).spikes["X"][0]]
    assert fired[0] == period - 1
    assert set(np.diff(fired)) == {period}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=80), st.floats(0.5, 0.99), st.floats(0.05, 1.0))
def test_trace_matches_closed_form(train, decay, inc):
    net = chain(weight=2.0, delta=0.0, theta=1.0, trace_decay=decay, trace_increment=inc)
    for s in train:
        net.tic([s])
    T = len(train)
    closed = sum(inc * decay ** (T - t) * s for t, s in enumerate(train))
    assert abs(net.trace["S"][0] - closed) <= 1e-12
    assert abs(net.trace["X"][0] - closed) <= 1e-12  # X copies S within the tic


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 6), st.integers(0, 10))
def test_delay_delivers_exactly_d_tics_later(delay, when):
    net = chain(weight=2.0, delay=delay, delta=0.0, theta=1.0)
    out = [net.tic([t == when]).spikes["X"][0] for t in range(when + delay + 5)]
    assert [t for t, s in enumerate(out) if s] == [when + delay]


def test_topology_validation():
    W, M = np.ones((1, 1)), np.ones((1, 1), bool)
    with pytest.raises(TopologyError):
        Topology({"S": 1, "X": 1}, [Projection("X", "S", W, M, FF, 1)])
    with pytest.raises(TopologyError):
        Topology({"S": 1, "X": 1, "Y": 1}, [Projection("Y", "X", W, M, FF, 0)])
    with pytest.raises(TopologyError):
        Topology({"S": 1, "I": 1}, [Projection("S", "I", W, M, FF, 0, FEEDBACK_RULE)],
                 inhibitory=("I",))
    with pytest.raises(TopologyError):
        Projection("S", "X", W, M, "sideways")


def test_feedback_never_drives_voltage():
    W, M = np.full((1, 1), 5.0), np.ones((1, 1), bool)
    topo = Topology({"S": 1, "X": 1, "Y": 1},
                    [Projection("S", "Y", W, M, FF), Projection("Y", "X", W, M, FB)])
    net = Network(topo, DynamicsConfig(delta=0.0), learning=False)
    for _ in range(5):
        rep = net.tic([1])
    assert rep.spikes["Y"][0] and not rep.spikes["X"][0]
    assert net.fb_current["X"][0] == 5.0


# -- learning rules --------------------------------------------------------------


def test_learning_rule_examples():
    assert learn_ff([0.5], [1], [0.38], 0.01) == pytest.approx(np.array([[0.0019]]))
    assert learn_fb([1.5], 1.0, [1, 0], [0.38], 0.01) == pytest.approx(np.array([[0.0019], [0.0]]))
    assert learn_m(1.0, [3], 0.01) == pytest.approx([0.03])
    assert learn_m(-1.0, [3], 0.01) == pytest.approx([-0.03])


def test_top_k_examples():
    W = np.array([[0.1, 0.9], [0.5, 0.2], [0.5, 0.0]])
    M = np.ones_like(W, bool)
    assert top_k_binarize(W, M, 1).tolist() == [[0, 1], [1, 0], [0, 0]]  # tie -> lower row
    assert top_k_binarize(W, M, 5).sum() == 6
    M[0, 1] = False
    assert top_k_binarize(W, M, 1)[:, 1].tolist() == [0, 1, 0]
    assert top_k_binarize(W, np.ones_like(W, bool), 3, positive_only=True)[:, 1].tolist() == [1, 1, 0]


def test_feedback_score_gradient_matches_rule():
    # without a trace and without penalty the engine's step is lr times this gradient
    rng = np.random.default_rng(4)
    for _ in range(100):
        w_ff, w_fb = rng.uniform(0, 1, 5), rng.uniform(0, 1, 3)
        x_ff, x_fb = rng.integers(0, 2, 5), rng.integers(0, 2, 3)
        theta = 0.7
        if abs(w_ff @ x_ff - theta) < 1e-3:
            continue
        h = 1e-6
        fd_ff = [(feedback_score(w_ff + h * e, w_fb, x_ff, x_fb, theta)
                  - feedback_score(w_ff - h * e, w_fb, x_ff, x_fb, theta)) / (2 * h) for e in np.eye(5)]
        fd_fb = [(feedback_score(w_ff, w_fb + h * e, x_ff, x_fb, theta)
                  - feedback_score(w_ff, w_fb - h * e, x_ff, x_fb, theta)) / (2 * h) for e in np.eye(3)]
        spike = float(w_ff @ x_ff > theta)
        assert learn_ff([w_fb @ x_fb], x_ff, [spike], 1.0)[:, 0] == pytest.approx(fd_ff, abs=1e-6)
        assert learn_fb([w_ff @ x_ff], theta, x_fb, [spike], 1.0)[:, 0] == pytest.approx(fd_fb, abs=1e-6)


def loop(n_s=6, n_x=4, n_m=3, seed=0, **dyn):
    """S -> X -> M with feedback M -> X, all plastic, and a fixed inhibitory pool."""
    rng = np.random.default_rng(seed)

    def proj(pre, post, shape, kind=FF, rule=FEEDBACK_RULE, delay=0):
        mask = rng.random(shape) < 0.8
        return Projection(pre, post, rng.uniform(0, 1, shape), mask, kind, delay, rule)

    layers = {"S": n_s, "X": n_x, "I": 2, "M": n_m}
    projs = [proj("S", "X", (n_s, n_x)), proj("X", "M", (n_x, n_m), rule=REWARD_RULE),
             proj("M", "X", (n_m, n_x), FB), proj("S", "I", (n_s, 2), rule=None),
             Projection("I", "X", -0.3 * np.ones((2, n_x)), np.ones((2, n_x), bool), INH, 1)]
    return Network(Topology(layers, projs, inhibitory=("I",)), DynamicsConfig(**dyn),
                   SleepConfig(interval=7, k={("X", FF): 3, ("M", FF): 2}))


def drive(net, tics, seed=1):
    rng = np.random.default_rng(seed)
    for _ in range(tics):
        net.tic(rng.random(net.topology.layers["S"]) < 0.4)
        net.deliver_reward("M", rng.choice(net.topology.layers["M"], 1), rng.choice([-1.0, 1.0]))


def test_lazy_l1_equals_dense_rule():
    pen = ScoringConfig(Regularizer.L1, eta=5.0)
    lazy = loop(penalty=pen, lr_ff=0.05, lr_fb=0.05, delta=0.1)
    dense = loop(penalty=pen, lr_ff=0.05, lr_fb=0.05, delta=0.1)
    dense._decay.clear()
    lazy.sleep = dense.sleep = None
    drive(lazy, 200)
    drive(dense, 200)
    for p, q in zip(lazy.topology.projections, dense.topology.projections):
        assert np.allclose(lazy.weights(p.pre, p.post, p.kind), q.weights, atol=1e-12)


def test_reward_moves_weights_by_cospikes():
    W, M = np.full((1, 1), 2.0), np.ones((1, 1), bool)
    topo = Topology({"S": 1, "M": 1}, [Projection("S", "M", W, M, FF, 0, REWARD_RULE)])
    net = Network(topo, DynamicsConfig(delta=0.0, lr_m=0.01))
    for _ in range(3):
        net.tic([1])
    net.deliver_reward("M", [0], 1.0)
    assert net.weights("S", "M")[0, 0] == pytest.approx(1.0)  # clipped to [0, 1]
    net.topology.projections[0].weights[:] = 0.5
    net.deliver_reward("M", [0], -1.0)  # no cospikes since the last event
    assert net.weights("S", "M")[0, 0] == 0.5


def test_sleep_binarizes_plastic_banks():
    net = loop()
    report = net.sleep_regularize()
    W = net.weights("S", "X")
    assert set(np.unique(W)) <= {0.0, 1.0}
    assert np.all(W.sum(0) <= 3) and report[("X", FF)] == int(W.sum())


def test_inhibitory_weights_never_change():
    net = loop(lr_ff=0.2, lr_fb=0.2, lr_m=0.2)
    before = {p.name: p.weights.copy() for p in net.topology.projections if p.kind == INH or not p.plastic}
    drive(net, 300)
    for p in net.topology.projections:
        if p.name in before:
            assert np.array_equal(p.weights, before[p.name])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_engine_is_deterministic(seed):
    a, b = loop(seed=seed), loop(seed=seed)
    drive(a, 60, seed)
    drive(b, 60, seed)
    for p, q in zip(a.topology.projections, b.topology.projections):
        assert np.array_equal(p.weights, q.weights)
    assert all(np.array_equal(a.voltage[k], b.voltage[k]) for k in a.voltage)


def test_experiment_is_bit_identical_on_repeat():
    cfg = ExperimentConfig(duration=300, warmup=100)
    a, b = run_experiment(cfg, 3), run_experiment(cfg, 3)
    assert a.metrics.to_record() == b.metrics.to_record()
    wa, wb = weight_banks(a.network), weight_banks(b.network)
    assert all(np.array_equal(wa[k], wb[k]) for k in wa)


def test_experiment_keeps_inhibition_fixed():
    cfg = ExperimentConfig(duration=300, warmup=0)
    res = run_experiment(cfg, 0)
    fresh = run_experiment(cfg.replace(duration=0), 0)
    for p, q in zip(res.network.topology.projections, fresh.network.topology.projections):
        if p.kind == INH or not p.plastic:
            assert np.array_equal(p.weights, q.weights)


def test_snapshot_layout():
    net = loop()
    drive(net, 5)
    W, x, offs = net.snapshot()
    n = sum(net.topology.layers.values())
    assert W.shape == (n, n) and x.shape == (n,)
    sx, mx = offs["S"], offs["X"]
    assert np.array_equal(W[sx:sx + 6, mx:mx + 4], net.weights("S", "X"))
    assert not W[offs["M"]:, mx:mx + 4].any()  # feedback excluded
