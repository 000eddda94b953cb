import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwdre import acceptance
from rwdre import renorm as rn


def test_scale_sequence_small():
    assert rn.scale_sequence(100, 2) == [100, 1000, 31000]


def test_scale_sequence_from_large_l0():
    lv = rn.scale_sequence(10 ** 50, 3)
    assert lv[1] == 10 ** 75
    for a, b in zip(lv, lv[1:]):
        assert b == math.isqrt(a) * a


def test_scale_table_at_large_l0():
    tb = rn.build_scale_table(10 ** 50, 20)
    assert tb.levels[1] == 10 ** 75
    assert tb.all_flags(), tb.flags
    # iota brackets every rho_k
    with mpmath.workdps(40):
        for r in tb.rho:
            assert r.b <= (tb.iota * 1).b
    assert tb.v_inf.a > 0
    assert all(row["k2large"] for row in tb.per_level[:-1])


def test_cascade_margin_independent_check():
    # v_k - v_{k+1} = v_k L_k^(-1/16) >= 4 L_k / L_{k+1}, recomputed in plain high-precision floats
    lv = rn.scale_sequence(10 ** 50, 20)
    with mpmath.workdps(80):
        v = mpmath.mpf(1)
        for k in range(20):
            a = mpmath.power(lv[k], mpmath.mpf(-1) / 16)
            gap = v * a
            assert gap >= 4 * mpmath.mpf(lv[k]) / lv[k + 1]
            assert gap >= mpmath.power(lv[k], mpmath.mpf(-1) / 8) >= 4 * mpmath.mpf(lv[k]) / lv[k + 1]
            v = v - gap


def test_scale_table_nondecreasing_direction():
    tb = rn.build_scale_table(10 ** 50, 20, direction="nondecreasing")
    assert tb.flags["iota_bound"] and tb.flags["rho_floor"]


def test_desk_scale_flags_fail_honestly():
    tb = rn.build_scale_table(16, 4)
    assert not tb.flags["k2large"]
    assert tb.flags["iota_bound"] and tb.flags["L_exact"]


def test_scale_table_preconditions():
    with pytest.raises(ValueError):
        rn.build_scale_table(10 ** 50, 3, v_hat=1e-6)
    with pytest.raises(ValueError):
        rn.build_scale_table(10 ** 50, 3, direction="sideways")
    with pytest.raises(ValueError):
        rn.scale_sequence(3, 2)


def test_rows_format():
    tb = rn.build_scale_table(100, 2)
    rows = tb.rows()
    assert [r["L_k"] for r in rows] == ["100", "1000", "31000"]
    assert float(rows[0]["rho_k"]) == 1.0
    big = rn.format_int(10 ** 200)
    assert big.endswith("e+200") and big.startswith("1")


def test_log_scale_matches_exact_integers():
    for k in range(6):
        L = rn.scale_sequence(10 ** 50, k)[-1]
        enc = rn.log_scale(10 ** 50, k)
        with mpmath.workdps(50):
            lg = mpmath.log(L)
            assert enc.a <= lg <= enc.b
    deep = rn.log_scale(10 ** 50, 40)
    assert deep.a > 0 and (deep.b - deep.a) / deep.a < 1e-20


def _ko_oracle(k, d, gamma, Co, co, L0):
    with mpmath.workdps(80):
        L = mpmath.mpf(rn.scale_sequence(L0, k)[-1])
        lg = mpmath.log(L)
        b = mpmath.mpf(1.5) ** 1.5
        lhs = Co * L ** (2 * d + 1) * (mpmath.exp(-(2 - b) * lg ** gamma)
                                       + mpmath.exp(-co * L ** (mpmath.mpf(1) / 16) + b * lg ** 1.5))
        return lhs < 1


def test_ko_condition_against_direct_evaluation():
    for k in range(4):
        assert rn.check_ko_condition(k, 1, 1.5, 1, 1, 10 ** 50) == _ko_oracle(k, 1, mpmath.mpf(1.5), 1, 1, 10 ** 50)


def test_ko_scan_is_monotone():
    scan = rn.ko_scan(1, 1.5, 1, 1, 10 ** 50, 30)
    first = scan.index(True)
    assert first == 3 and all(scan[first:])


def test_ko_large_constant_fails():
    assert rn.check_ko_condition(3, 1, 1.5, 1, 1, 10 ** 50)
    assert not rn.check_ko_condition(3, 1, 1.5, 10 ** 10 ** 4, 1, 10 ** 50)
    with pytest.raises(ValueError):
        rn.check_ko_condition(0, 1, 2.0, 1, 1, 10 ** 50)


def test_box_geometry_contains_lipschitz_paths():
    for L, R, d in ((4, 1, 1), (5, 2, 2)):
        geo = rn.box_geometry(L, R, d)
        assert geo["lo"] <= geo["base"][0] and geo["base"][1] <= geo["hi"]
        # furthest reach from the base in L - 1 steps stays inside
        assert geo["base"][0] - R * (L - 1) >= geo["lo"]
        assert geo["base"][1] - 1 + R * (L - 1) < geo["hi"]
    assert len(rn.moves(2, 1)) == 5 and len(rn.moves(1, 2)) == 5 and len(rn.moves(2, 2)) == 13


def test_constant_observables():
    for d, L in ((1, 5), (2, 3)):
        shape = (L,) + (5 * L,) * d
        assert rn.min_chi_over_crossings(rn.CrossingProblem(np.ones(shape))).chi == 1.0
        assert rn.min_chi_over_crossings(rn.CrossingProblem(np.zeros(shape))).chi == 0.0


def test_g_range_validated():
    with pytest.raises(ValueError):
        rn.CrossingProblem(np.full((2, 10), 2.0))


def test_infeasible_when_h_blocks_everything():
    p = rn.CrossingProblem(np.zeros((3, 15)), H=np.zeros((3, 15, 3), dtype=bool))
    assert not rn.min_chi_over_crossings(p).feasible
    assert not rn.brute_force_min_chi(p).feasible


def test_argmin_path_is_lipschitz_and_attains_minimum():
    rng = np.random.default_rng(2)
    L = 12
    g = rng.integers(-8, 9, size=(L, 5 * L)) / 8
    res = rn.min_chi_over_crossings(rn.CrossingProblem(g))
    p = res.path
    assert 0 <= p[0, 0] < L
    assert np.abs(np.diff(p[:, 0])).max() <= 1
    assert sum(g[t, p[t, 0] + 2 * L] for t in range(L)) == res.total


@st.composite
def crossing_problems(draw):
    d = draw(st.sampled_from([1, 2]))
    L = draw(st.integers(1, 7 if d == 1 else 5))
    if d == 2 and L > 3:
        L = draw(st.integers(1, 3))
    w = 5 * L
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    g = rng.integers(-8, 9, size=(L,) + (w,) * d) / 8
    H = None
    site_mask = None
    if draw(st.booleans()):
        H = rng.random((L,) + (w,) * d + (len(rn.moves(d, 1)),)) < 0.7
    if draw(st.booleans()):
        site_mask = rng.random((L,) + (w,) * d) < 0.8
    return rn.CrossingProblem(g, 1, H, site_mask)


@settings(max_examples=120)
@given(crossing_problems())
def test_dp_equals_enumeration(problem):
    a = rn.min_chi_over_crossings(problem)
    b = rn.brute_force_min_chi(problem)
    assert a.feasible == b.feasible
    if a.feasible:
        assert a.total == b.total


def test_dp_five_layers_in_two_dimensions():
    rng = np.random.default_rng(8)
    for _ in range(3):
        g = rng.integers(-4, 5, size=(5, 25, 25)) / 4
        p = rn.CrossingProblem(g, 1, start_mask=None)
        # restrict the start set to keep enumeration small
        sm = np.zeros((25, 25), dtype=bool)
        sm[10:12, 10:12] = True
        p.start_mask = sm
        assert rn.min_chi_over_crossings(p).total == rn.brute_force_min_chi(p).total


def test_dp_exact_with_fractions():
    from fractions import Fraction
    rng = np.random.default_rng(4)
    g = np.array([[Fraction(int(v), 7) for v in row] for row in rng.integers(-7, 8, size=(4, 20))], dtype=object)
    p = rn.CrossingProblem(g)
    a, b = rn.min_chi_over_crossings(p), rn.brute_force_min_chi(p)
    assert a.total == b.total and isinstance(a.total, Fraction)


def test_tampered_dp_is_caught(monkeypatch):
    real = rn.min_chi_over_crossings

    def off_by_one(problem):
        # forgets the last layer's contribution
        g = problem.g.copy()
        g[-1] = 0
        return real(rn.CrossingProblem(g, problem.R, problem.H, problem.site_mask, problem.start_mask))

    monkeypatch.setattr(rn, "min_chi_over_crossings", off_by_one)
    passed, _, detail = acceptance.c2_dp_oracle(True, 1, "")
    assert not passed and detail["mismatches"] > 0


def _slab_problem(bad, J=8, Lk=64):
    L1 = J * Lk
    g = np.ones((L1, 5 * L1))
    for j in bad:
        g[j * Lk:(j + 1) * Lk] = -1
    return rn.CrossingProblem(g)


def test_cascade_examples():
    assert rn.cascade_witness(_slab_problem([2]), 64, 1.0, 0.5) == []
    w = rn.cascade_witness(_slab_problem([0, 3, 7]), 64, 1.0, 0.5)
    assert [x["slab"] for x in w] == [0, 3, 7]
    assert all(x["chi"] == -1 for x in w)
    w = rn.cascade_witness(rn.CrossingProblem(-np.ones((512, 2560))), 64, 1.0, 0.5)
    assert len(w) == 8
    assert w[0]["index"].k == 0


def test_cascade_preconditions():
    with pytest.raises(ValueError):
        rn.cascade_witness(_slab_problem([0]), 64, 1.0, 0.9)
    with pytest.raises(ValueError):
        rn.cascade_witness(rn.CrossingProblem(np.ones((10, 50))), 3, 1.0, 0.5)


def test_pk_constant_one_is_zero():
    cfg = rn.PkConfig(observable="one", threshold=1.0, L=16)
    phat, _, _ = rn.estimate_pk(cfg, range(10))
    assert phat == 0.0


def test_pk_dense_cloud_under_union_bound():
    cfg = rn.PkConfig(rho=50.0, K=1, L=16, threshold=1.0, seed=3)
    phat, (lo, hi), _ = rn.estimate_pk(cfg, range(30))
    ub = rn.union_bound(50.0, 1, 16)
    assert phat == 0.0 and lo <= ub < 1e-15


def test_pk_sparse_cloud_fails_often():
    cfg = rn.PkConfig(rho=0.5, K=1, L=8, threshold=1.0, seed=3)
    phat, _, _ = rn.estimate_pk(cfg, range(20))
    assert phat == 1.0


def test_recursion_constant():
    assert rn.recursion_constant(0.0, 0.0, 16, 50.0, 1) == 1.0
    c = rn.recursion_constant(0.5, 0.5, 16, 1.0, 1)
    assert c == 1.0
    assert math.isinf(rn.recursion_constant(0.0, 0.1, 16, 1e9, 1))


def test_density_control_trivial_cases():
    assert rn.density_control_experiment(rn.PkConfig(K=0), 0.2, [16], range(5))[0]["phat"] == 0.0
    assert rn.density_control_experiment(rn.PkConfig(rho=0.0, K=1), 0.2, [16], range(5))[0]["phat"] == 1.0


def test_density_control_decreasing_in_rho():
    ps = []
    for rho in (1.0, 2.0, 4.0, 8.0):
        row = rn.density_control_experiment(rn.PkConfig(rho=rho, K=1, seed=2), 0.2, [64], range(25))[0]
        ps.append(row["phat"])
    assert all(a >= b for a, b in zip(ps, ps[1:]))
    assert ps[0] > ps[-1]


def test_density_control_half_space_constraint():
    cfg = rn.PkConfig(rho=2.0, K=1, seed=5)
    free = rn.density_control_experiment(cfg, 0.2, [32], range(20))[0]["phat"]
    cons = rn.density_control_experiment(cfg, 0.2, [32], range(20), v=0.1)[0]["phat"]
    assert cons <= free


def test_interpolation_consistency():
    cfg = rn.PkConfig(rho=1.0, K=1, seed=7)
    out = rn.interpolation_check(cfg, 8, 12, 16, 0.6, range(40))
    assert out["passed"]


def test_pk_csv(tmp_path):
    out = tmp_path / "pk.csv"
    rn.pk_rows_to_csv([{"k": 0, "L_k": 16, "rho_k": 50.0, "v_k": 1.0, "phat": 0.0, "ci_lo": 0.0, "ci_hi": 0.1}],
                      out, ["seed=1"])
    assert out.read_text().splitlines()[1:] == ["k,L_k,rho_k,v_k,phat,ci_lo,ci_hi", "0,16,50.0,1.0,0.0,0.0,0.1"]
