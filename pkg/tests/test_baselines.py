import math
from collections import Counter

import numpy as np
import pytest

from mecoffload.baselines import (aas_solve, equal_split, local_only, mdoa_assign, mdoa_solve, roa_assign,
                                  roa_solve)
from mecoffload.lower_level import LOCAL
from mecoffload.scenario import ScenarioRanges, generate_scenario
from mecoffload.upper_level import TOO_MANY_TASKS, eejs_solve


class TestMdoa:
    def test_nearest(self, make_scenario):
        s = make_scenario(np.full((1, 4, 2), 1e-5), server_pos=[(50.0, 0.0), (10.0, 0.0)])
        assert mdoa_assign(s).targets == (1,)

    def test_greedy_by_user_order(self, make_scenario):
        s = make_scenario(np.full((2, 4, 2), 1e-5), user_pos=[(0.0, 0.0), (1.0, 0.0)],
                          server_pos=[(5.0, 0.0), (30.0, 0.0)])
        assert mdoa_assign(s).targets == (0, 1)

    def test_equidistant_goes_to_lower_index(self, make_scenario):
        s = make_scenario(np.full((1, 4, 2), 1e-5), server_pos=[(0.0, 20.0), (20.0, 0.0)])
        assert mdoa_assign(s).targets == (0,)

    def test_surplus_users_unserved(self):
        s = generate_scenario(2, 3, 2, 64)
        assert mdoa_assign(s).targets.count(None) == 1
        r = mdoa_solve(s)
        assert TOO_MANY_TASKS in r.flags
        assert r.served_count <= 2


class TestRoa:
    def test_single_choice(self):
        s = generate_scenario(1, 1, 1, 8)
        assert roa_assign(s, 99).targets == (0,)

    def test_same_seed_same_assignment(self):
        s = generate_scenario(1, 3, 6, 8)
        assert roa_assign(s, 5) == roa_assign(s, 5)
        assert roa_solve(s, 5).total_energy_j == roa_solve(s, 5).total_energy_j

    def test_uniform_over_servers(self):
        s = generate_scenario(1, 1, 4, 8)
        counts = Counter(roa_assign(s, seed).targets[0] for seed in range(10000))
        for k in range(4):
            assert counts[k] / 10000 == pytest.approx(0.25, abs=0.02)

    def test_independent_of_scenario_stream(self):
        s = generate_scenario(7, 3, 5, 8)
        before = s.gains.copy()
        roa_assign(s, 7)
        assert np.array_equal(before, generate_scenario(7, 3, 5, 8).gains)

    def test_injective(self):
        s = generate_scenario(3, 3, 3, 8)
        for seed in range(50):
            t = roa_assign(s, seed).targets
            assert sorted(t) == [0, 1, 2]


class TestAas:
    @pytest.mark.parametrize("users, shares", [(2, [32, 32]), (3, [22, 21, 21]), (1, [64])])
    def test_equal_split(self, users, shares):
        assert list(np.bincount(equal_split(users, 64), minlength=users)) == shares

    def test_equal_power_fills_budget(self):
        s = generate_scenario(12, 3, 4, 64)
        r = aas_solve(s)
        alloc = r.best_outcome.allocation
        for i in range(3):
            owned = alloc.subcarrier_owner == i
            p = alloc.power_w[i]
            assert np.allclose(p[owned], 0.6 / owned.sum(), rtol=1e-15)
            assert not np.any(p[~owned])
            assert p.sum() == pytest.approx(0.6, rel=1e-12)
        assert sorted(np.bincount(alloc.subcarrier_owner)) == [21, 21, 22]

    def test_enumerates_all_assignments(self):
        s = generate_scenario(12, 3, 4, 64)
        r = aas_solve(s)
        assert len(r.per_assignment_log) == 24
        feasible = [e.total_energy_j for e in r.per_assignment_log if e.feasible]
        assert r.total_energy_j == min(feasible)

    def test_search_beats_equal_allocation(self):
        for seed in range(8):
            s = generate_scenario(200 + seed, 3, 4, 64)
            a, e = aas_solve(s), eejs_solve(s)
            if a.fully_feasible and e.fully_feasible:
                assert e.total_energy_j <= a.total_energy_j * 1.03

    def test_too_many_tasks(self):
        r = aas_solve(generate_scenario(2, 3, 2, 64))
        assert TOO_MANY_TASKS in r.flags and r.served_count == 0


class TestLocalOnly:
    def test_three_identical_users(self, make_scenario):
        s = make_scenario(np.full((3, 2, 1), 1e-5), user_pos=[(0.0, 0.0)] * 3)
        r = local_only(s)
        assert r.total_energy_j == pytest.approx(1.08, rel=1e-12)
        assert r.served_count == 3
        assert np.allclose(r.time_s, 1e6 / 0.6e9)

    def test_no_users(self, make_scenario):
        r = local_only(make_scenario(np.zeros((0, 2, 1))))
        assert r.total_energy_j == 0.0

    def test_times_are_per_user(self):
        a = local_only(generate_scenario(3, 2, 1, 4))
        b = local_only(generate_scenario(3, 3, 1, 4))
        assert np.array_equal(a.time_s, b.time_s[:2])

    def test_deadline_miss_counted(self):
        r = local_only(generate_scenario(3, 3, 1, 4, ScenarioRanges(deadline_s=(1e-4, 1e-4))))
        assert r.served_count == 0
        assert math.isfinite(r.total_energy_j)


def test_baselines_respect_one_task_per_server():
    s = generate_scenario(41, 3, 5, 64)
    for r in (mdoa_solve(s), roa_solve(s, 41), aas_solve(s)):
        servers = [k for k in r.best_assignment.targets if k not in (None, LOCAL)]
        assert len(servers) == len(set(servers))
