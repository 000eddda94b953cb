import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from rwdre import experiments as ex
from rwdre import slt
from rwdre.environment import ResourceError


def _enumerate_kernel(d, laziness, n):
    """p_n(0, .) by summing over every move sequence, in exact arithmetic."""
    lz = Fraction(laziness)
    moves = [((0,) * d, lz)]
    for a in range(d):
        for s in (1, -1):
            v = [0] * d
            v[a] = s
            moves.append((tuple(v), (1 - lz) / (2 * d)))
    out = {}
    for seq in itertools.product(moves, repeat=n):
        x = tuple(sum(m[0][a] for m in seq) for a in range(d))
        w = Fraction(1)
        for m in seq:
            w *= m[1]
        out[x] = out.get(x, 0) + w
    return out


def test_heat_kernel_fixtures():
    hk = slt.heat_kernel(1, 0.5, 30)
    assert hk.p(0, [[0]])[0] == 1.0
    assert hk.p(1, [[0], [1], [-1]]).tolist() == [0.5, 0.25, 0.25]
    assert hk.p(2, [[0]])[0] == 0.375
    assert slt.exact_heat_kernel_1d(2, 0, Fraction(1, 2)) == Fraction(3, 8)
    for n in (5, 17, 30):
        for x in range(-n, n + 1):
            assert hk.p(n, [[x]])[0] == pytest.approx(float(slt.exact_heat_kernel_1d(n, x, Fraction(1, 2))),
                                                       abs=1e-15)


@pytest.mark.parametrize("d,laziness,n", [(1, Fraction(1, 3), 6), (2, Fraction(1, 2), 4), (3, Fraction(1, 4), 3)])
def test_heat_kernel_against_path_enumeration(d, laziness, n):
    hk = slt.heat_kernel(d, float(laziness), n)
    exact = _enumerate_kernel(d, laziness, n)
    for x, p in exact.items():
        assert hk.p(n, [x])[0] == pytest.approx(float(p), abs=1e-15)
    assert hk.row(n).sum() == pytest.approx(1.0, abs=1e-12)


def test_heat_kernel_normalisation_and_symmetry():
    hk = slt.heat_kernel(2, 0.5, 20)
    for n in range(21):
        t = hk.row(n)
        assert abs(t.sum() - 1) < 1e-12
        assert np.allclose(t, t[::-1, :]) and np.allclose(t, t[:, ::-1]) and np.allclose(t, t.T)


def test_heat_kernel_budget():
    with pytest.raises(ResourceError):
        slt.heat_kernel(3, 0.5, 400, memory_budget_mb=1)


def test_fitted_constants():
    hk = slt.heat_kernel(1, 0.5, 256)
    c = hk.fitted_constants()
    # local CLT: sup_n sqrt(n) p_n(0, 0) stays below 1/sqrt(pi) for laziness 1/2
    assert 0.3 < c["C_sup"] < 1 / math.sqrt(math.pi) + 1e-9
    assert c["C_lip"] > 0
    assert c["tail"][256] < 1e-6
    # the log-log slope of p_t(0, 0) is close to -1/2
    ts = 2 ** np.arange(6, 9)
    slope = np.polyfit(np.log(ts), np.log([hk.p(int(t), [[0]])[0] for t in ts]), 1)[0]
    assert abs(slope + 0.5) < 0.15


def test_slt_hand_trace():
    st_ = slt.soft_local_times([[1.0]], [0, 0], [0.3, 0.9])
    assert st_.xi[0] == pytest.approx(0.3) and st_.G[0] == pytest.approx(0.3)
    st2 = slt.soft_local_times([[1.0], [1.0]], [0, 0], [0.3, 0.9])
    assert st2.xi.tolist() == pytest.approx([0.3, 0.6])
    assert st2.G[0] == pytest.approx(0.9)
    assert st2.matched.tolist() == [0, 1]
    assert np.allclose(st2.G_after(2), st2.G)


def test_slt_zero_density_points_never_bind():
    # site 1 has g = 0, its low point must be ignored
    st_ = slt.soft_local_times([[1.0, 0.0]], [1, 0], [0.01, 0.5])
    assert st_.xi[0] == pytest.approx(0.5) and st_.Z.tolist() == [0]


def test_slt_needs_points():
    with pytest.raises(slt.NeedMorePoints):
        slt.soft_local_times([[1.0], [1.0]], [0], [0.2])


def test_slt_shift_rule():
    g = [[0.5, 0.5]]
    a = slt.soft_local_times(g, [0, 1, 1], [0.4, 0.2, 0.9])
    b = slt.soft_local_times(g, [0, 1, 1], [0.4 + 0.1, 0.2 + 0.1, 0.9 + 0.1])
    assert a.Z[0] == b.Z[0]
    assert b.xi[0] - a.xi[0] == pytest.approx(0.1 / 0.5)


def _exact_xi(g, site, v):
    """Definition-level oracle in exact arithmetic: smallest candidate t covering k points."""
    g = [[Fraction(x) for x in row] for row in g]
    v = [Fraction(x) for x in v]
    G = [Fraction(0)] * len(g[0])
    out = []
    for k, gk in enumerate(g, start=1):
        cands = {Fraction(0)} | {(v[i] - G[site[i]]) / gk[site[i]] for i in range(len(v))
                                 if gk[site[i]] > 0 and v[i] >= G[site[i]]}
        ok = [t for t in sorted(cands)
              if sum(t * gk[site[i]] + G[site[i]] >= v[i] for i in range(len(v))) >= k]
        t = ok[0]
        out.append(t)
        G = [G[z] + t * gk[z] for z in range(len(G))]
    return out


@settings(max_examples=80)
@given(st.integers(1, 4), st.integers(1, 4), st.data())
def test_slt_exact_infimum(S, J, data):
    rows = []
    for _ in range(J):
        w = data.draw(st.lists(st.integers(0, 8), min_size=S, max_size=S).filter(lambda w: sum(w) > 0))
        rows.append([x / sum(w) for x in w])
    n_pts = data.draw(st.integers(J + 2, 12))
    site = data.draw(st.lists(st.integers(0, S - 1), min_size=n_pts, max_size=n_pts))
    v = data.draw(st.lists(st.integers(1, 400), min_size=n_pts, max_size=n_pts, unique=True))
    v = [x / 64 for x in v]
    support = {z for row in rows for z, p in enumerate(row) if p > 0}
    reach = [i for i in range(n_pts) if site[i] in support]
    try:
        got = slt.soft_local_times(rows, site, v)
    except slt.NeedMorePoints:
        assert len(reach) < J or True
        return
    want = _exact_xi(rows, site, v)
    assert got.xi.tolist() == pytest.approx([float(t) for t in want], rel=1e-9, abs=1e-12)
    for k in range(1, J + 1):
        t = got.xi[k - 1]
        assert got.covered_count(k, t * (1 + 1e-12) + 1e-15) >= k
        if t > 1e-9:
            assert got.covered_count(k, t * (1 - 1e-9)) < k
    assert np.allclose(got.G, (got.xi[:, None] * got.g).sum(axis=0))


def test_xi_are_exponential():
    xi = ex.slt_xi_sample(99, 2000)
    assert (xi > 0).all()
    assert sps.kstest(xi, "expon").pvalue > 0.01


def test_keyed_points_nest_under_ceiling():
    sites = np.arange(4)[:, None]
    s1, v1 = slt.poisson_points(3, 0, sites, 2.0)
    s2, v2 = slt.poisson_points(3, 0, sites, 5.0)
    low = v2 < 2.0
    assert sorted(zip(s1.tolist(), v1.tolist())) == sorted(zip(s2[low].tolist(), v2[low].tolist()))
    # intensity mu dv: about mu * ceiling points per site
    s, v = slt.poisson_points(5, 0, np.arange(2000)[:, None], 3.0)
    assert abs(len(v) / 2000 - 3.0) < 4 * math.sqrt(3.0 / 2000)


def test_keyed_slt_ceiling_sufficient():
    g = np.array([[0.2, 0.8], [0.5, 0.5], [1.0, 0.0]])
    st_ = slt.keyed_soft_local_times(g, np.arange(2)[:, None], 1, 0)
    assert st_.G.max() < st_.ceiling
    big = slt.poisson_points(1, 0, np.arange(2)[:, None], st_.ceiling * 4)
    again = slt.soft_local_times(g, *big)
    assert np.allclose(again.xi, st_.xi)


def _naive_sparse(points, L, rho):
    cells = {}
    for p in points:
        key = tuple(int(c) // L for c in p)
        cells[key] = cells.get(key, 0) + 1
    d = len(points[0]) if len(points) else 1
    return all(c <= rho * L ** d for c in cells.values())


def test_paving_examples():
    assert slt.paving_sparse_check(np.full(10, 3), 10, 1.0)
    assert not slt.paving_sparse_check(np.full(11, 3), 10, 1.0)
    assert slt.paving_sparse_check(np.empty(0), 4, 0.0)
    with pytest.raises(ValueError):
        slt.paving_sparse_check([1], 0, 1.0)


def test_paving_against_naive_count():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d = int(rng.integers(1, 3))
        L = int(rng.integers(1, 6))
        pts = rng.integers(-12, 12, size=(int(rng.integers(1, 40)), d))
        rho = float(rng.choice([0.25, 0.5, 1.0, 2.0]))
        assert slt.paving_sparse_check(pts, L, rho) == _naive_sparse(pts.tolist(), L, rho)


def test_integration_bound_examples():
    hk = slt.heat_kernel(1, 0.5, 256)
    lhs, rhs, ratio, c_min = slt.integration_bound([0], 4, 0.25, 64, hk)
    assert lhs == pytest.approx(hk.p(64, [[0]])[0])
    assert lhs <= rhs and c_min == 0.0
    # a single point with rho = 1/L^d at large density: the fitted constant is exactly tight
    lhs, rhs, ratio, c_min = slt.integration_bound([0], 20, 0.05, 64, hk)
    assert c_min > 0 and ratio == pytest.approx(1.0)
    far = slt.integration_bound([1000], 4, 0.25, 64, hk)
    assert far[0] == 0.0 and far[0] <= far[1]
    with pytest.raises(ValueError):
        slt.integration_bound([0, 0], 1, 1.0, 64, hk)
    with pytest.raises(ValueError):
        slt.integration_bound([0], 4, 1.0, 2, hk)


def test_integration_constant_sweep():
    hk = slt.heat_kernel(1, 0.5, 512)
    L, rho = 8, 1.0
    pts = slt.sparse_starts(L, rho, 40)
    pts = pts - pts.mean().astype(int)
    cs = [slt.integration_bound(pts, L, rho, n, hk)[3] for n in (L, 2 * L, 4 * L, 8 * L, 16 * L, 32 * L, 64 * L)]
    assert max(cs) < 1.0
    assert abs(cs[-1] - cs[-2]) < 0.1


def test_sparse_starts():
    pts = slt.sparse_starts(8, 1.0, 8)
    assert len(pts) == 64 and slt.paving_sparse_check(pts, 8, 1.0)
    assert not slt.paving_sparse_check(pts, 8, 0.9)


def test_coupling_no_walkers():
    hk = slt.heat_kernel(1, 0.5, 16)
    res = slt.couple_srw_poisson(np.empty((0, 1)), 8, 1.0, [1.5], 16, hk, range(5), seed=1)
    assert res.frequency().tolist() == [1.0]


def test_coupling_frequency_and_monotonicity():
    hk = slt.heat_kernel(1, 0.5, 256)
    starts = slt.sparse_starts(8, 1.0, 8)
    rps = [1.5, 2.0, 5.0, 10.0]
    res = slt.couple_srw_poisson(starts, 8, 1.0, rps, 256, hk, range(60), seed=3)
    f = res.frequency()
    assert f[-1] == 1.0
    assert (np.diff(res.dominated.astype(int), axis=1) >= 0).all()
    assert slt.coupling_bound(res.H_size, 1.0, 10.0, 8, 256, 1, 0.1) > 0.99


def test_coupling_rejects_bad_inputs():
    hk = slt.heat_kernel(1, 0.5, 16)
    with pytest.raises(ValueError):
        slt.couple_srw_poisson([[0]], 1, 1.0, [0.5], 16, hk, [0], 1)
    with pytest.raises(ValueError):
        slt.couple_srw_poisson([[0], [0]], 1, 1.0, [2.0], 16, hk, [0], 1)
