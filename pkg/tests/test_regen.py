import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwdre import stats
from rwdre.environment import EnvConfig, from_positions, generate
from rwdre.kernel import deterministic_kernel, symmetric_kernel, two_row_kernel
from rwdre.regen import (RegenBlock, RegenConfig, blocks_to_csv, covariance_estimate, find_regeneration,
                         iid_diagnostics, influence_field, standardized_batch_sums, velocity_estimate)
from rwdre.walker import evolve, record_times


def _blocks(taus, xs, replica=0):
    return [RegenBlock(replica, j, 0, t, (x,), False, True) for j, (t, x) in enumerate(zip(taus, xs))]


def test_config_defaults_and_validation():
    cfg = RegenConfig(0.4, 50)
    assert cfg.vbar == pytest.approx(0.4 / 3)
    with pytest.raises(ValueError):
        RegenConfig(0.4, 50, vbar=0.5)
    with pytest.raises(ValueError):
        RegenConfig(0.4, 0)


def test_deterministic_kernel_regenerates_every_step():
    env = generate(EnvConfig(rho=0.0, A=40, T=30, T_past=30))
    path = evolve(env, deterministic_kernel())
    res = find_regeneration(env, path, RegenConfig(0.4, 5))
    assert res.origin_regenerates
    assert all(b.tau == 1 and b.displacement == (1,) for b in res.blocks)
    assert not res.blocks[0].truncated
    v, se, excluded = velocity_estimate(res.blocks, min_blocks=10)
    assert v[0] == 1.0 and excluded > 0
    assert np.allclose(covariance_estimate(res.blocks * 10, min_blocks=10), 0)


def _cone_oracle(x, r, p, q, R):
    return all(q * (x[n] - x[r]) >= p * (n - r) and abs(x[n] - x[r]) <= R * (n - r) for n in range(r, len(x)))


def test_empty_cloud_matches_path_oracle():
    kern = symmetric_kernel()
    cfg = RegenConfig(0.4, 3)
    p, q = cfg.vbar.numerator, cfg.vbar.denominator
    seen = 0
    for rep in range(60):
        env = generate(EnvConfig(rho=0.0, A=80, T=60, T_past=60, seed=3, replica=rep))
        path = evolve(env, kern)
        res = find_regeneration(env, path, cfg)
        x = path.x1().tolist()
        recs = record_times(x, cfg.vbar)
        ok = [r for r in recs[1:] if _cone_oracle(x, r, p, q, 1)]
        assert [b.start + b.tau for b in res.blocks] == ok
        seen += len(ok)
    assert seen > 0


def test_blocks_satisfy_record_inequality_and_restart():
    kern = two_row_kernel()
    cfg = RegenConfig(0.4, 50)
    vb = cfg.vbar
    found = 0
    for rep in range(6):
        env = generate(EnvConfig(rho=3.0, laziness=0.875, A=400, T=400, T_past=400, seed=7, replica=rep),
                       field_mode="lazy")
        path = evolve(env, kern)
        res = find_regeneration(env, path, cfg)
        for b in res.blocks:
            assert b.tau >= 1
            assert vb.denominator * b.displacement[0] > vb.numerator * b.tau
        if len(res.blocks) >= 2:
            found += 1
            tail = find_regeneration(env, path, cfg, start=res.blocks[0].start + res.blocks[0].tau)
            assert [(b.tau, b.displacement) for b in tail.blocks] == [(b.tau, b.displacement) for b in res.blocks[1:]]
    assert found >= 1


def test_velocity_ratio_arithmetic():
    v, se, _ = velocity_estimate(_blocks([2, 4], [2, 2]), min_blocks=2)
    assert v[0] == pytest.approx(4 / 6)


def test_covariance_hand_blocks():
    sig = covariance_estimate(_blocks([1, 1], [1, -1]), v=np.array([0.0]), min_blocks=2)
    assert sig[0, 0] == pytest.approx(1.0)


def test_estimators_need_blocks():
    with pytest.raises(stats.InsufficientDataError):
        velocity_estimate(_blocks([1] * 5, [1] * 5))
    with pytest.raises(stats.InsufficientDataError):
        covariance_estimate(_blocks([1] * 50, [1] * 50))


def test_truncated_blocks_excluded():
    blocks = _blocks([1] * 40, [1] * 40)
    blocks[3].truncated = True
    blocks[5].conditioned = False
    _, _, excluded = velocity_estimate(blocks)
    assert excluded == 2


def test_iid_diagnostics_null_and_ar1():
    rng = np.random.default_rng(3)
    taus = rng.geometric(0.2, size=400)
    xs = rng.binomial(taus, 0.7)
    assert all(g.passed for g in iid_diagnostics(_blocks(taus, xs)))
    # AR(1) dependence between consecutive blocks
    z = np.zeros(400)
    for j in range(1, 400):
        z[j] = 0.7 * z[j - 1] + rng.normal()
    taus = np.maximum(1, np.round(10 + 3 * z)).astype(int)
    gates = {g.name: g for g in iid_diagnostics(_blocks(taus, taus))}
    assert not gates["lag1-tau"].passed


def test_batch_sums_standardised():
    rng = np.random.default_rng(4)
    taus = rng.geometric(0.3, size=2000)
    xs = rng.binomial(taus, 0.6)
    blocks = _blocks(taus, xs)
    v, _, _ = velocity_estimate(blocks)
    sig = covariance_estimate(blocks, v)
    z = standardized_batch_sums(blocks, v, sig, batch=20)
    assert len(z) == 100
    assert abs(z.mean()) < 0.4 and 0.6 < z.std() < 1.4
    assert stats.anderson_darling_normal(z).passed


def test_influence_field_empty_cloud():
    env = generate(EnvConfig(rho=0.0, A=10, T=10, T_past=10))
    assert influence_field(env, (0, 0), (1,), 5, "1/6") == (0, False)


def test_influence_field_hand_trajectory():
    cfg = EnvConfig(rho=0.0, A=5, T=6, T_past=2)
    w = np.array([[-1, -1, -1, 0, 1, 2, 2, 2, 2]])
    env = from_positions(cfg, w)
    assert influence_field(env, (0, 0), (1,), 5, "1/6") == (2, False)


def test_influence_field_tail_decays():
    env = generate(EnvConfig(rho=2.0, A=300, T=40, T_past=200, seed=5))
    hs = np.array([influence_field(env, (x, 0), (1,), 30, "2/15")[0] for x in range(-200, 201, 2)])
    ls = np.arange(1, 11)
    tail = np.array([np.mean(hs > l) for l in ls])
    slope, _, r2 = stats.slope_fit(ls, np.log(tail))
    assert slope < 0 and r2 >= 0.9


def test_blocks_csv(tmp_path):
    out = tmp_path / "b.csv"
    blocks_to_csv(_blocks([2, 3], [1, 2], replica=4), out, ["seed=1"])
    assert out.read_text().splitlines()[1:] == ["replica,blockIndex,tau,dx,truncated", "4,0,2,1,0", "4,1,3,2,0"]


@settings(max_examples=40)
@given(st.lists(st.sampled_from([-1, 1, 1]), min_size=5, max_size=80), st.sampled_from([(1, 6), (2, 15)]))
def test_empty_cloud_regeneration_is_the_cone_event(steps, pq):
    """With no particles the trajectory conditions are vacuous."""
    p, q = pq
    x = np.concatenate([[0], np.cumsum(steps)])
    T = len(x) - 1
    env = generate(EnvConfig(rho=0.0, A=T, T=T, T_past=T))

    class P:
        positions = x[:, None]
        t0 = 0

        def point(self, l):
            return (int(x[l]), l)
    res = find_regeneration(env, P(), RegenConfig(0.4, 1, vbar=f"{p}/{q}"))
    recs = record_times(x, f"{p}/{q}")
    want = [r for r in recs[1:] if _cone_oracle(x.tolist(), r, p, q, 1)]
    assert [b.start + b.tau for b in res.blocks] == want
