import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromarket.scoring import (
    EPS_W,
    DimensionError,
    DomainError,
    Regularizer,
    ScoringConfig,
    activate,
    bregman,
    g_map,
    grad_update,
    neg_entropy,
    penalty_gradient,
    proper_score_from_convex,
    quadratic,
    regularizer_cost,
    reward,
    score,
    score_gradient,
    synapse_scores,
)

L2 = Regularizer.L2
LH = Regularizer.LH
L1 = Regularizer.L1


def test_activate_is_strict():
    assert activate([1, 1], [1, 0], 0.5) == 1
    assert activate([1, 1], [0, 0], 0.5) == 0
    assert activate([0.5], [1], 0.5) == 0


def test_activate_rejects_length_mismatch():
    with pytest.raises(DimensionError):
        activate([1, 1], [1], 0.5)


def test_reward_examples():
    assert reward([1, 1], [1, 1], 2.0, 0.5) == 3.0
    assert reward([1], [1], -1.0, 0.5) == -0.5
    assert reward([0, 0], [1, 1], 5.0, 0.5) == 0.0


def test_regularizer_costs():
    assert regularizer_cost(ScoringConfig(L2, eta=1.0), [3, 4]) == 12.5
    assert regularizer_cost(ScoringConfig(LH, eta=1.0), [1, 1]) == 0.0
    assert regularizer_cost(ScoringConfig(L1, eta=2.0), [0.5, 0.5]) == 0.5


def test_costs_only_count_the_mask():
    cfg = ScoringConfig(L2, eta=1.0)
    assert regularizer_cost(cfg, [3, 4], mask=[True, False]) == 4.5


@pytest.mark.parametrize("reg, w", [(L1, [-0.1, 0.5]), (L1, [1.5, 0.0]), (LH, [-1.0, 1.0])])
def test_domain_violations_raise(reg, w):
    with pytest.raises(DomainError):
        regularizer_cost(ScoringConfig(reg), w)


def test_eta_must_be_positive():
    with pytest.raises(ValueError):
        ScoringConfig(L2, eta=0.0)


def test_score_examples():
    assert score([1, 1], [1, 1], 2.0, ScoringConfig(L2, eta=1.0, theta=0.5)) == 2.0
    assert score([1, 0], [0, 0], 1.0, ScoringConfig(L1, eta=1.0, theta=0.5)) == 0.0


def test_grad_update_examples():
    cfg = ScoringConfig(L1, eta=2.0, theta=0.5)
    w = grad_update(cfg, np.array([0.6, 0.2]), [1, 0], 1.0, 0.1)
    # spiking: active synapse gets 0.1*(1 - 0.5), silent one only the decay
    assert w == pytest.approx([0.65, 0.15])
    cfg = ScoringConfig(L2, eta=2.0, theta=5.0)
    w0 = np.array([0.4, 0.8])
    assert grad_update(cfg, w0, [1, 1], 1.0, 0.5) == pytest.approx(w0 - 0.5 * w0 / 2.0)


def test_gated_penalty_leaves_silent_neuron_alone():
    cfg = ScoringConfig(L2, eta=1.0, theta=5.0)
    w0 = np.array([0.4, 0.8])
    assert np.array_equal(grad_update(cfg, w0, [1, 1], 1.0, 0.5, gate_penalty=True), w0)


def test_g_map_examples():
    assert g_map(ScoringConfig(L2, eta=1.0), [0.3]) == pytest.approx([0.3])
    assert g_map(ScoringConfig(LH, eta=1.0), [1.0]) == pytest.approx([1.0])
    assert list(g_map(ScoringConfig(L1, eta=2.0), [0.6, 0.4])) == [1.0, 0.0]
    # exact tie goes to 0
    assert list(g_map(ScoringConfig(L1, eta=2.0), [0.5])) == [0.0]


def test_bregman_examples():
    F, dF = quadratic(1.0)
    assert bregman(F, dF, [1, 2], [1, 2]) == 0.0
    assert bregman(F, dF, [1, 0], [0, 0]) == 0.5
    with pytest.raises(DimensionError):
        bregman(F, dF, [1, 0], [0])


def test_bregman_score_at_its_own_report():
    F, dF = quadratic(2.0)
    rho = lambda x: np.asarray(x, dtype=float)
    x = [1, 0, 1]
    assert proper_score_from_convex(F, dF, rho, x, rho(x)) == pytest.approx(-F(rho(x)))


def test_quadratic_bregman_score_matches_direct_rule_up_to_constant():
    # with F = |.|^2/2eta the Bregman score of report w equals <rho, w>/eta - |w|^2/2eta
    # up to a w-independent term, so rho = eta * mu * x reproduces <mu x, w> - |w|^2/2eta
    eta, mu = 1.7, 0.8
    F, dF = quadratic(eta)
    x = np.array([1.0, 0.0, 1.0])
    rho = lambda s: eta * mu * np.asarray(s, dtype=float)
    rng = np.random.default_rng(0)
    diffs = []
    for _ in range(50):
        w = rng.uniform(-2, 2, size=3)
        direct = mu * x @ w - w @ w / (2 * eta)
        diffs.append(proper_score_from_convex(F, dF, rho, x, w) - direct)
    assert np.ptp(diffs) < 1e-12


def test_bregman_score_maximized_at_mean_on_grid():
    F, dF = quadratic(1.0)
    outcomes = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    probs = np.array([0.2, 0.5, 0.3])
    axis = np.linspace(-0.5, 1.5, 41)
    best, best_w = -np.inf, None
    for a in axis:
        for b in axis:
            w = np.array([a, b])
            s = sum(p * proper_score_from_convex(F, dF, lambda v: v, x, w)
                    for p, x in zip(probs, outcomes))
            if s > best:
                best, best_w = s, w
    assert best_w == pytest.approx(probs @ outcomes, abs=0.05 / 2 + 1e-12)


# -- properties ------------------------------------------------------------------------

configs = st.builds(
    ScoringConfig,
    regularizer=st.sampled_from(list(Regularizer)),
    eta=st.floats(0.2, 5.0),
    theta=st.floats(-1.0, 2.0),
)


def _instance(seed, reg, n=4):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=n)
    if reg is L2:
        w = rng.uniform(-2, 2, size=n)
    elif reg is LH:
        w = rng.uniform(0.05, 2, size=n)
    else:
        w = rng.uniform(0, 1, size=n)
    mu = rng.uniform(-2, 2)
    return x, w, mu


@settings(max_examples=200, deadline=None)
@given(configs, st.integers(0, 2**32 - 1))
def test_selectivity_gate(cfg, seed):
    x, w, mu = _instance(seed, cfg.regularizer)
    if not activate(w, x, cfg.theta):
        assert reward(x, w, mu, cfg.theta) == 0.0


@settings(max_examples=200, deadline=None)
@given(configs, st.integers(0, 2**32 - 1))
def test_synapse_scores_sum_to_score(cfg, seed):
    x, w, mu = _instance(seed, cfg.regularizer)
    assert synapse_scores(x, w, mu, cfg).sum() == pytest.approx(score(x, w, mu, cfg), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(configs, st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(cfg, seed):
    x, w, mu = _instance(seed, cfg.regularizer)
    h = 1e-6
    if abs(w @ x - cfg.theta) <= 1e-3:
        return
    if cfg.regularizer is L1:
        w = np.clip(w, 2 * h, 1 - 2 * h)
    g = score_gradient(x, w, mu, cfg)
    fd = np.array([(score(x, w + h * e, mu, cfg) - score(x, w - h * e, mu, cfg)) / (2 * h)
                   for e in np.eye(w.size)])
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(configs, st.integers(0, 2**32 - 1), st.floats(0.01, 2.0))
def test_domains_survive_update_sequences(cfg, seed, lr):
    rng = np.random.default_rng(seed)
    x, w, _ = _instance(seed, cfg.regularizer)
    for _ in range(30):
        w = grad_update(cfg, w, rng.integers(0, 2, size=w.size), rng.uniform(-3, 3), lr)
        if cfg.regularizer is L1:
            assert np.all((w >= 0) & (w <= 1))
        elif cfg.regularizer is LH:
            assert np.all(w >= EPS_W)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0))
def test_bregman_nonnegative(seed, eta):
    rng = np.random.default_rng(seed)
    for F, dF, lo in [(*quadratic(eta), -3.0), (*neg_entropy(eta), 1e-3)]:
        a, b = rng.uniform(lo, 3.0, size=(2, 4))
        assert bregman(F, dF, a, b) >= -1e-12
        assert bregman(F, dF, a, a) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([L2, LH]), st.floats(0.2, 5.0), st.integers(0, 2**32 - 1))
def test_penalty_balances_gated_mean_at_g_map(reg, eta, seed):
    # at w = G(v) the penalty gradient equals v, so the expected update vanishes
    v = np.random.default_rng(seed).uniform(-1, 1, size=3)
    cfg = ScoringConfig(reg, eta=eta)
    assert penalty_gradient(cfg, g_map(cfg, v)) == pytest.approx(v, abs=1e-9)
