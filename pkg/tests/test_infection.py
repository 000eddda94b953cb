import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rwdre.infection import (init_from_counts, init_infection, monotonicity_coupling, run_infection,
                             runs_to_csv, step_infection, summarize_runs, window_observable)


def test_empty_system_is_degenerate():
    st_ = init_infection(0.0, 10, seed=1)
    assert st_.degenerate and st_.front is None
    assert run_infection(0.0, 10, seed=1).degenerate


def test_forced_configuration():
    s = init_from_counts({0: 1, 1: 1})
    assert s.front == 0
    assert s.infected.tolist() == [True, False]


def test_void_probability_never_observed():
    for seed in range(10_000):
        assert not init_infection(2.0, 100, seed=seed).degenerate


def test_contact_infects_next_step():
    s = init_from_counts({0: 2})
    s.infected[:] = [True, False]
    s2 = step_infection(s, np.array([1, -1]))
    assert s2.infected.tolist() == [True, True]


def test_three_particle_hand_trace():
    s = init_from_counts({-1: 1, 1: 1, 2: 1})
    assert s.infected.tolist() == [True, False, False]
    s = step_infection(s, np.array([1, -1, 0]))
    assert s.positions.tolist() == [0, 0, 2] and s.infected.tolist() == [True, False, False]
    s = step_infection(s, np.array([1, 1, -1]))
    assert s.positions.tolist() == [1, 1, 1] and s.infected.tolist() == [True, True, False]
    assert s.front == 1
    s = step_infection(s, np.array([0, 0, 0]))
    assert s.infected.tolist() == [True, True, True]


def test_lone_infected_front_is_a_walk():
    speeds = []
    for rep in range(200):
        run = run_infection(None, 400, seed=3, replica=rep, state=init_from_counts({0: 1}, seed=3, replica=rep))
        assert set(np.diff(run.front).tolist()) <= {-1, 1}
        assert (run.front == run.srw).all()
        speeds.append(run.front[-1] / 400)
    m = np.mean(speeds)
    se = np.std(speeds, ddof=1) / np.sqrt(len(speeds))
    assert abs(m) <= 2.576 * se


def test_window_observable():
    assert window_observable(np.array([5, 7]), 5, 10) == 1
    assert window_observable(np.array([5]), 5, 10) == 0
    assert window_observable(np.array([5, 6]), 5, 10) == 0
    assert window_observable(np.array([5, 17]), 5, 10) == 0


def test_run_invariants():
    for rep in range(5):
        run = run_infection(2.0, 300, seed=11, replica=rep)
        assert run.dominated
        assert (np.diff(run.infected_count) >= 0).all()
        assert (np.diff(run.front) >= -1).all()


def test_step_state_matches_run():
    s = init_infection(2.0, 2 * 50 + 64, seed=2, replica=1)
    run = run_infection(2.0, 50, seed=2, replica=1)
    for n in range(50):
        assert s.front == run.front[n] and s.infected_count == run.infected_count[n]
        s = step_infection(s)


def test_monotone_in_density():
    fronts = monotonicity_coupling([1.0, 0.5, 1.0], 200, seed=4)
    assert (np.diff(fronts, axis=0) >= 0).all()


def test_summary_positive_speed():
    runs = [run_infection(2.0, 400, seed=5, replica=r) for r in range(30)]
    summ = summarize_runs(runs, 400)
    assert summ["ci99"][0] > 0 and summ["dominated_all"] and summ["degenerate"] == 0


def test_runs_csv(tmp_path):
    run = run_infection(1.0, 4, seed=1)
    out = tmp_path / "i.csv"
    runs_to_csv([run], out, ["seed=1"], every=2)
    lines = out.read_text().splitlines()
    assert lines[1] == "replica,t,front,infectedCount" and len(lines) == 2 + 3


@settings(max_examples=30)
@given(st.integers(0, 1000), st.floats(0.2, 3.0), st.floats(0.0, 2.0))
def test_infection_properties(seed, rho, extra):
    fronts = monotonicity_coupling([rho, extra], 60, seed=seed)
    if (fronts[0] > np.iinfo(np.int64).min).all():
        assert (fronts[1] >= fronts[0]).all()
        assert (np.diff(fronts[0]) >= -1).all()
    run = run_infection(rho, 60, seed=seed)
    if not run.degenerate:
        assert run.dominated and (np.diff(run.infected_count) >= 0).all()
