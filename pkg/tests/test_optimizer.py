import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrcache.core import DimensionError, cache_hit, quality_weights
from vrcache.optimizer import (
    DelayInputs,
    FrozenWeights,
    GradientMessage,
    OptimizerConfig,
    best_fixed_value,
    delay_halfspace,
    dpfl_delay_round,
    dpfl_round,
    fedavg_round,
    gradient_messages,
    hindsight_optimal,
    init_fedavg,
    init_network,
    local_gradient,
    one_bit_quantize,
    regret_min_step,
)
from vrcache.strategy import WeightSet, bs_combine, temporal_combine, user_combine

from .oracles import best_fixed_support


def ring(n):
    """(B, K) table and mask of a ring, self in column 0."""
    if n == 1:
        return np.zeros((1, 1), dtype=int), np.ones((1, 1), dtype=bool)
    nb = [sorted({(b - 1) % n, (b + 1) % n} - {b}) for b in range(n)]
    k = 1 + max(len(x) for x in nb)
    table = np.array([[b] + x + [b] * (k - 1 - len(x)) for b, x in enumerate(nb)])
    mask = np.array([[True] * (1 + len(x)) + [False] * (k - 1 - len(x)) for x in nb])
    return table, mask


def random_demands(rng, n_bs, n_users, n_tiles):
    d = rng.uniform(size=(n_bs, n_users, n_tiles)) * (rng.random((n_bs, n_users, n_tiles)) < 0.4)
    serving = rng.integers(0, n_bs, n_users)
    assoc = serving[None, :] == np.arange(n_bs)[:, None]
    return d * assoc[..., None], assoc


# ---------------------------------------------------------------- config and messages


def test_config_defaults_follow_horizon():
    cfg = OptimizerConfig(horizon=400)
    assert cfg.eta == cfg.mu == cfg.nu == cfg.iota == pytest.approx(0.05)
    assert cfg.batch == 400
    assert cfg.bits_per_entry == 1
    assert OptimizerConfig(quantize="full").bits_per_entry == 32


@pytest.mark.parametrize(
    "kwargs",
    [dict(tau=0), dict(horizon=3, tau=5), dict(eta=0.0), dict(quantize="two"), dict(delay_mode="x"), dict(batch=0),
     dict(projection="l1"), dict(penalty_delta=1.0), dict(sigma_penalty=-1.0)],
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_gradient_message_validation_and_bits():
    m = GradientMessage(0, 1, 3, np.array([[1.0, -1.0, 0.0]]))
    assert m.bits == 3
    assert GradientMessage(0, 1, 3, np.array([[0.3, 2.0]]), quantized=False).bits == 64
    with pytest.raises(ValueError):
        GradientMessage(0, 1, 3, np.array([[0.5]]))


@pytest.mark.parametrize("g,expected", [(0.3, 1.0), (-2.0, -1.0), (0.0, 0.0)])
def test_one_bit_quantize_examples(g, expected):
    assert one_bit_quantize(np.array([[g]])).item() == expected


def test_one_bit_quantize_rejects_nonfinite():
    with pytest.raises(ValueError):
        one_bit_quantize(np.array([np.nan]))


# ---------------------------------------------------------------- local gradient


def test_local_gradient_zero_demand():
    assert np.array_equal(local_gradient(np.full((2, 3), 0.5), np.zeros((2, 3))), np.zeros((2, 3)))


def test_local_gradient_single_entry_matches_central_difference():
    d = np.array([[1.0]])
    h = 1e-6

    def hit(p):
        return cache_hit(np.array([[p]]), d)

    fd = (hit(0.5 + h) - hit(0.5 - h)) / (2 * h)
    assert local_gradient(np.array([[0.5]]), d).item() == pytest.approx(fd, rel=1e-4)


def test_local_gradient_is_additive_over_tiles():
    d = np.array([[0.4, 0.9]])
    g = local_gradient(np.full((1, 2), 0.3), d)
    g0 = local_gradient(np.full((1, 1), 0.3), d[:, :1])
    g1 = local_gradient(np.full((1, 1), 0.3), d[:, 1:])
    assert np.allclose(g, np.concatenate([g0, g1], axis=1))


def _weighted_hit(phi_last, history, d, w, neighbors):
    hist = np.concatenate([history[:-1], phi_last[None]])
    bar = user_combine(temporal_combine(hist, w.sigma), w.upsilon)
    return cache_hit(bs_combine(bar, neighbors, w.rho), d)


def test_local_gradient_weighted_matches_finite_differences():
    rng = np.random.default_rng(11)
    tau, u, f, k = 3, 3, 4, 3
    for _ in range(20):
        hist = rng.uniform(size=(tau, u, f))
        w = WeightSet(
            sigma=rng.dirichlet(np.ones(tau), size=(u, f)).transpose(2, 0, 1),
            upsilon=rng.dirichlet(np.ones(u), size=(u, f)).transpose(0, 2, 1),
            rho=rng.dirichlet(np.ones(k), size=(u, f)).transpose(2, 0, 1),
        )
        nbrs = rng.uniform(size=(k - 1, u, f))
        d = rng.uniform(size=(u, f))
        g = local_gradient(hist[-1], d, w)
        step = 1e-6
        fd = np.zeros((u, f))
        for i, j in itertools.product(range(u), range(f)):
            e = np.zeros((u, f))
            e[i, j] = step
            fd[i, j] = (_weighted_hit(hist[-1] + e, hist, d, w, nbrs) - _weighted_hit(hist[-1] - e, hist, d, w, nbrs)) / (2 * step)
        assert np.allclose(g, fd, rtol=1e-4, atol=1e-8)


# ---------------------------------------------------------------- regret step and hindsight


def test_regret_min_step_examples():
    prev = np.array([[0.2, 0.3]])
    assert np.array_equal(regret_min_step(prev, np.zeros((1, 2)), 0.5, 1.0).values, prev)
    out = regret_min_step(prev, np.array([[1.0, -1.0]]), 1e-12, 1.0).values
    assert np.allclose(out, prev)
    with pytest.raises(ValueError):
        regret_min_step(prev, np.zeros((1, 2)), 0.0, 1.0)


def test_regret_min_step_beats_uniform_random_on_alternating_demands():
    # three tiles, tile 0 always wanted, tiles 1 and 2 alternate
    rng = np.random.default_rng(0)
    phi = np.full((1, 3), 1 / 3)
    online, rand = [], []
    demands = []
    for t in range(1, 201):
        d = np.array([[1.0, float(t % 2), float(1 - t % 2)]])
        demands.append(d)
        online.append(cache_hit(phi, d))
        r = np.zeros((1, 3))
        r[0, rng.integers(3)] = 1.0
        rand.append(cache_hit(r, d))
        phi = regret_min_step(phi, quality_weights(d), 1 / np.sqrt(t), 1.0).values
    best, _ = best_fixed_support(sum(quality_weights(d) for d in demands), 1)
    assert (best - sum(online)) / 200 < (best - sum(rand)) / 200


def test_hindsight_examples():
    q = np.array([[3.0, 1.0, 2.0]])
    # d with quality weights proportional to q: 1 - d = 10**(-q/2)
    d = 1.0 - 10 ** (-q / 2)
    phi = hindsight_optimal([d], 2).values
    assert phi.tolist() == [[1.0, 0.0, 1.0]]
    assert hindsight_optimal([d], 5).values.tolist() == [[1.0, 1.0, 1.0]]
    with pytest.raises(ValueError):
        hindsight_optimal([], 1)


def test_hindsight_matches_support_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(25):
        window = [rng.uniform(size=(3, 4)) for _ in range(int(rng.integers(1, 5)))]
        phi = hindsight_optimal(window, 3).values
        total = sum(quality_weights(d) for d in window)
        best, _ = best_fixed_support(total, 3)
        assert phi.sum() == 3
        assert float(np.sum(phi * total)) == pytest.approx(best)


def test_best_fixed_value_fractional_budget():
    w = np.array([[5.0, 3.0, 1.0, -2.0]])
    assert best_fixed_value(w, 2.5)[0] == pytest.approx(5 + 3 + 0.5)
    assert best_fixed_value(w, 10.0)[0] == pytest.approx(9.0)


def test_delay_halfspace_rearrangement():
    req = np.array([[True, False], [True, True]])
    tw = np.array([[0.02, 0.5], [0.03, 0.01]])
    a, r = delay_halfspace(req, tw, 0.05, 0.06)
    assert a.tolist() == [[0.05, 0.0], [0.05, 0.05]]
    assert r == pytest.approx((0.02 + 0.03 + 0.01) + 3 * 0.05 - 3 * 0.06)
    # a.phi >= r is the same as the summed delay <= summed threshold
    phi = np.array([[0.7, 0.2], [0.1, 0.9]])
    delay = np.sum(np.where(req, phi * tw + (1 - phi) * (tw + 0.05), 0.0))
    assert (np.sum(a * phi) >= r) == (delay <= 3 * 0.06)


# ---------------------------------------------------------------- rounds


def make_state(n_bs=3, n_users=4, n_tiles=6, budget=3.0, cfg=None, **kw):
    cfg = cfg or OptimizerConfig(horizon=300, tau=3)
    table, mask = ring(n_bs)
    return init_network(table, mask, n_users, n_tiles, budget, cfg, **kw), cfg


def test_single_bs_round_has_unit_rho():
    state, cfg = make_state(n_bs=1)
    d = np.zeros((1, 4, 6))
    d[0, 0, 0] = 1.0
    m = dpfl_round(state, d, cfg)
    assert np.all(state.rho == 1.0)
    assert m.grad_bits_sent.tolist() == [0]


def test_stationary_single_tile_concentrates():
    cfg = OptimizerConfig(horizon=300, tau=3)
    state, _ = make_state(n_bs=1, n_users=1, n_tiles=3, budget=1.0, cfg=cfg)
    d = np.zeros((1, 1, 3))
    d[0, 0, 1] = 1.0
    for _ in range(300):
        dpfl_round(state, d, cfg)
    target = hindsight_optimal([d[0]] * 300, 1.0).values
    assert target.tolist() == [[0.0, 1.0, 0.0]]
    assert state.deployed[0, 0, 1] > 0.9


def test_sign_mode_sends_one_thirtysecond_of_full_mode_bits():
    rng = np.random.default_rng(0)
    d, assoc = random_demands(rng, 3, 4, 6)
    bits = {}
    for mode in ("sign", "full"):
        cfg = OptimizerConfig(horizon=100, tau=3, quantize=mode)
        state, _ = make_state(cfg=cfg)
        bits[mode] = dpfl_round(state, d, cfg, association=assoc).grad_bits_sent
    assert np.all(bits["sign"] * 32 == bits["full"])
    # ring of three: two neighbor edges per BS, U*F signs each
    assert bits["sign"].tolist() == [2 * 4 * 6] * 3


def test_gradient_messages_one_per_edge():
    state, cfg = make_state()
    payload = one_bit_quantize(np.random.default_rng(1).normal(size=(3, 4, 6)))
    msgs = gradient_messages(state, payload, slot=0, quantized=True)
    assert len(msgs) == 6
    assert {(m.from_bs, m.to_bs) for m in msgs} == {(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)}
    assert sum(m.bits for m in msgs) == 6 * 24


def test_round_errors():
    state, cfg = make_state()
    with pytest.raises(DimensionError):
        dpfl_round(state, np.zeros((2, 4, 6)), cfg)
    bad = np.zeros((3, 4, 6))
    bad[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="slot 0"):
        dpfl_round(state, bad, cfg)
    with pytest.raises(ValueError):
        init_network(np.array([[1]]), np.array([[True]]), 2, 2, 1.0, cfg)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sign", "full"]))
def test_feasibility_after_every_round(seed, mode):
    rng = np.random.default_rng(seed)
    cfg = OptimizerConfig(horizon=50, tau=3, quantize=mode, eta=0.5, mu=0.5, nu=0.5, iota=0.5)
    state, _ = make_state(cfg=cfg, budget=float(rng.uniform(1, 10)))
    for _ in range(20):
        d, assoc = random_demands(rng, 3, 4, 6)
        dpfl_round(state, d, cfg, association=assoc)
        state.check(1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_feasibility_in_delay_mode(seed):
    rng = np.random.default_rng(seed)
    cfg = OptimizerConfig(horizon=50, tau=3, delay_mode="constrained", eta=0.5)
    state, _ = make_state(cfg=cfg)
    for _ in range(15):
        d, assoc = random_demands(rng, 3, 4, 6)
        a, r = delay_halfspace(d > 0, rng.uniform(0.001, 0.05, size=d.shape), 0.05, 0.06)
        m = dpfl_delay_round(state, d, cfg, DelayInputs(a, r), association=assoc)
        state.check(1e-9)
        # feasible slots keep the regret step inside the halfspace
        assert m.infeasible.dtype == bool


def _run(seed, cfg, rounds=25, delays=None, frozen=None, **kw):
    rng = np.random.default_rng(seed)
    state, _ = make_state(cfg=cfg, frozen=frozen, **kw)
    out = []
    for _ in range(rounds):
        d, assoc = random_demands(rng, 3, 4, 6)
        dl = None
        if delays is not None:
            dl = DelayInputs(*delay_halfspace(d > 0, 0.02, delays[0], delays[1]))
        m = dpfl_round(state, d, cfg, association=assoc, delays=dl)
        out.append((m.cache_hit.copy(), m.deployed.copy(), m.stationarity.copy()))
    return state, out


def test_rounds_are_deterministic():
    cfg = OptimizerConfig(horizon=100, tau=3)
    _, a = _run(3, cfg)
    _, b = _run(3, cfg)
    for x, y in zip(a, b):
        for u, v in zip(x, y):
            assert np.array_equal(u, v)


@pytest.mark.parametrize("delays", [(0.0, 0.06), (0.05, 1e9)])
def test_inactive_delay_constraint_matches_plain_round(delays):
    plain = OptimizerConfig(horizon=100, tau=3)
    constrained = OptimizerConfig(horizon=100, tau=3, delay_mode="constrained")
    _, a = _run(4, plain)
    _, b = _run(4, constrained, delays=delays)
    for x, y in zip(a, b):
        for u, v in zip(x, y):
            assert np.array_equal(u, v)


def test_delay_round_requires_mode_and_inputs():
    state, cfg = make_state()
    with pytest.raises(ValueError):
        dpfl_delay_round(state, np.zeros((3, 4, 6)), cfg, DelayInputs(np.zeros((3, 4, 6)), np.zeros(3)))
    cfg2 = OptimizerConfig(horizon=300, tau=3, delay_mode="constrained")
    with pytest.raises(ValueError):
        dpfl_delay_round(state, np.zeros((3, 4, 6)), cfg2, None)


def test_frozen_families_stay_fixed():
    cfg = OptimizerConfig(horizon=100, tau=2)
    state, _ = _run(
        5, cfg, frozen=FrozenWeights(sigma=True, rho=True, upsilon=True), sigma=np.array([0.5, 0.5]),
        rho=np.array([0.5, 0.25, 0.25]),
    )
    assert np.all(state.sigma == 0.5)
    assert np.all(state.rho[:, 0] == 0.5) and np.all(state.rho[:, 1:] == 0.25)
    learned, _ = _run(5, cfg)
    assert not np.allclose(learned.sigma, 0.5)


def test_fedavg_shares_one_strategy():
    cfg = OptimizerConfig(horizon=100, tau=3, quantize="full")
    state = init_fedavg(3, 4, 6, 3.0, cfg, n_networks=2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = np.concatenate([random_demands(rng, 3, 4, 6)[0] for _ in range(2)])
        m = fedavg_round(state, d, cfg)
        for g in range(2):
            block = m.deployed[3 * g: 3 * g + 3]
            assert np.array_equal(block[0], block[1]) and np.array_equal(block[0], block[2])
    with pytest.raises(DimensionError):
        fedavg_round(state, np.zeros((5, 4, 6)), cfg)


def test_fedavg_steps_on_mean_gradient():
    cfg = OptimizerConfig(horizon=100, tau=3, eta=0.01)
    state = init_fedavg(2, 1, 3, 1.0, cfg)
    d = np.zeros((2, 1, 3))
    d[0, 0, 0] = 1.0
    d[1, 0, 1] = 1.0
    fedavg_round(state, d, cfg)
    # both demanded tiles gain equally and the third loses
    assert state.phi[0, 0, 0] == pytest.approx(state.phi[0, 0, 1])
    assert state.phi[0, 0, 0] > state.phi[0, 0, 2]
