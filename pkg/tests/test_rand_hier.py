import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from rwdre import rand_hier as rh
from rwdre.rand_hier import KeyRangeError, RandomKey, Stream


def test_uniform_is_pure():
    k = RandomKey(Stream.UNIFORM_FIELD, replica=3, x=(5,), t=-2)
    assert rh.uniform(7, k) == rh.uniform(7, k)


def test_uniforms_pass_ks():
    x = np.arange(-50_000, 50_000)
    u = rh.uniforms(7, Stream.UNIFORM_FIELD, 0, x, 0)
    assert u.min() >= 0 and u.max() < 1
    assert sps.kstest(u, "uniform").pvalue > 0.01


def test_seed_changes_outputs():
    x = np.arange(10_000)
    a = rh.uniforms(7, Stream.UNIFORM_FIELD, 0, x)
    b = rh.uniforms(8, Stream.UNIFORM_FIELD, 0, x)
    assert np.mean(a != b) >= 0.999


def test_scalar_twin_matches_vectorised():
    xs = [(-3,), (0,), (17,)]
    vec = rh.uniforms(11, Stream.UNIFORM_FIELD, 2, np.array(xs), 5)
    for x, v in zip(xs, vec):
        assert rh.uniform_scalar(11, int(Stream.UNIFORM_FIELD), 2, x, 5) == v


def test_scalar_twin_matches_in_two_dimensions():
    xs = np.array([[1, -2], [0, 0], [-7, 9]])
    vec = rh.uniforms(3, Stream.UNIFORM_FIELD, 1, xs, -4)
    for x, v in zip(xs, vec):
        assert rh.uniform_scalar(3, int(Stream.UNIFORM_FIELD), 1, tuple(int(c) for c in x), -4) == v


def test_philox_known_answer():
    # published Philox4x32-10 test vector: zero counter and key
    out = rh.philox4x32(0, 0, 0, 0, 0, 0)
    assert [int(w) for w in out] == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]


def test_philox_known_answer_pi():
    out = rh.philox4x32(0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344, 0xA4093822, 0x299F31D0)
    assert [int(w) for w in out] == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


def test_encoding_is_injective_on_a_grid():
    xs = np.arange(-20, 21)
    his, los = [], []
    for stream in (0, 3):
        for replica in (0, 1):
            for t in (-1, 0, 1):
                for i in (0, 1):
                    hi, lo = rh.encode_keys(stream, replica, xs, t, i, 0)
                    his.append(hi)
                    los.append(lo)
    pairs = set(zip(np.concatenate(his).tolist(), np.concatenate(los).tolist()))
    assert len(pairs) == 2 * 2 * 3 * 2 * len(xs)


@pytest.mark.parametrize("field,kw", [
    ("replica", dict(replica=1 << 20)),
    ("time", dict(t=1 << 23)),
    ("particle index", dict(i=-1)),
    ("spatial coordinate", dict(x=np.array([1 << 39]))),
])
def test_out_of_range_keys_raise(field, kw):
    args = dict(stream=0, replica=0, x=np.array([0]), t=0, i=0, step=0)
    args.update(kw)
    with pytest.raises(KeyRangeError, match=field):
        rh.encode_keys(**args)


def test_random_key_validates_at_construction():
    with pytest.raises(KeyRangeError):
        RandomKey(Stream.REPLICA, replica=-1)


def test_poisson_zero_and_negative():
    assert rh.poisson(1, RandomKey(Stream.INITIAL_COUNT), 0.0) == 0
    with pytest.raises(ValueError):
        rh.poisson(1, RandomKey(Stream.INITIAL_COUNT), -1.0)


def test_poisson_moments_rho3():
    x = np.arange(100_000)
    n = rh.poissons(5, 3.0, Stream.INITIAL_COUNT, 0, x)
    assert abs(n.mean() - 3) <= 3 * np.sqrt(3 / 1e5)
    assert abs(n.var() - 3) <= 0.05 * 3


def test_poisson_rejection_branch_moments():
    x = np.arange(50_000)
    n = rh.poissons(5, 50.0, Stream.INITIAL_COUNT, 0, x)
    assert abs(n.mean() - 50) <= 4 * np.sqrt(50 / 5e4)
    assert abs(n.var() - 50) <= 0.05 * 50
    # chi-square against the exact pmf on the central range
    ks = np.arange(30, 71)
    obs = np.array([(n == k).sum() for k in ks])
    exp = sps.poisson.pmf(ks, 50) * len(n)
    chi = ((obs - exp) ** 2 / exp).sum()
    assert sps.chi2.sf(chi, len(ks) - 1) > 0.001


def test_replica_streams_uncorrelated():
    x = np.arange(100_000)
    a = rh.uniforms(9, Stream.UNIFORM_FIELD, 0, x)
    b = rh.uniforms(9, Stream.UNIFORM_FIELD, 1, x)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3 / np.sqrt(len(x))


def test_exponentials_are_exp1():
    e = rh.exponentials(4, Stream.SLT_POINTS, 0, np.arange(20_000))
    assert sps.kstest(e, "expon").pvalue > 0.01


def test_shifted_key():
    k = RandomKey(Stream.UNIFORM_FIELD, 0, (2, 3), 4)
    assert k.shifted((1, -1), 2) == RandomKey(Stream.UNIFORM_FIELD, 0, (3, 2), 6)


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=40, unique=True), st.randoms(use_true_random=False))
def test_order_independence(xs, rnd):
    """Evaluating a subset in any order gives the values of the full evaluation."""
    full = dict(zip(xs, rh.uniforms(13, Stream.UNIFORM_FIELD, 0, np.array(xs), 1)))
    sub = list(xs)
    rnd.shuffle(sub)
    sub = sub[: max(1, len(sub) // 2)]
    part = rh.uniforms(13, Stream.UNIFORM_FIELD, 0, np.array(sub), 1)
    assert all(full[x] == v for x, v in zip(sub, part))


@given(st.integers(0, 2 ** 64 - 1), st.integers(-(1 << 19), (1 << 19) - 1), st.integers(-1000, 1000))
def test_scalar_twin_property(seed, x, t):
    v = rh.uniforms(seed, Stream.UNIFORM_FIELD, 0, np.array([x]), t)[0]
    assert rh.uniform_scalar(seed, int(Stream.UNIFORM_FIELD), 0, (x,), t) == v
    assert 0 <= v < 1


@given(st.floats(0.0, 100.0), st.integers(0, 1000))
def test_poisson_deterministic(rho, seed):
    x = np.arange(50)
    a = rh.poissons(seed, rho, Stream.INITIAL_COUNT, 0, x)
    b = rh.poissons(seed, rho, Stream.INITIAL_COUNT, 0, x[::-1])[::-1]
    assert (a == b).all() and (a >= 0).all()
