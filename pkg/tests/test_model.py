import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecoffload.model import (EdgeServer, EnergyBreakdown, SystemParams, TaskSpec, UnreachableServerError,
                              UserDevice, aggregate_rate, dbm_to_watts, local_energy, local_gate,
                              local_time, remote_compute_energy, remote_compute_time, remote_energy,
                              remote_time)


def user(f=0.6e9, D=1000, X=1000.0, tau=9e-3):
    return UserDevice(0, (0.0, 0.0), f, 0.6, TaskSpec(D, tau, X))


def sig4(x):
    return float(f"{x:.4g}")


class TestLocal:
    def test_time_low_endpoints(self):
        u = user()
        assert local_time(u.task, u) == pytest.approx(1.6667e-3, rel=5e-5)

    def test_time_high_endpoints(self):
        u = user(0.7e9, 1100, 1200.0)
        assert local_time(u.task, u) == pytest.approx(1.8857e-3, rel=5e-5)

    def test_energy_examples(self):
        u = user()
        assert sig4(local_energy(u.task, u, SystemParams())) == 0.36
        u = user(0.7e9, 1100, 1200.0)
        assert local_energy(u.task, u, SystemParams()) == pytest.approx(0.64680, rel=1e-5)

    def test_energy_quadruples_with_double_frequency(self):
        a, b = user(0.6e9), user(1.2e9)
        assert local_energy(b.task, b, SystemParams()) == pytest.approx(4 * local_energy(a.task, a, SystemParams()))

    def test_zero_data_size_is_rejected(self):
        with pytest.raises(ValueError):
            TaskSpec(0, 9e-3, 1000.0)


class TestGate:
    def test_energy_condition_fails_with_default_threshold(self):
        u = user()
        assert local_gate(u.task, u, SystemParams()) is False

    def test_unbounded_threshold_runs_locally(self):
        u = user()
        assert local_gate(u.task, u, SystemParams(local_energy_threshold_j=math.inf)) is True

    def test_deadline_equal_to_local_time_is_not_enough(self):
        u = user()
        t = local_time(u.task, u)
        tight = UserDevice(0, (0.0, 0.0), 0.6e9, 0.6, TaskSpec(1000, t, 1000.0))
        assert local_gate(tight.task, tight, SystemParams(local_energy_threshold_j=10.0)) is False

    def test_energy_equal_to_threshold_is_not_enough(self):
        u = user()
        e = local_energy(u.task, u, SystemParams())
        assert local_gate(u.task, u, SystemParams(local_energy_threshold_j=e)) is False


class TestRate:
    def gains(self, g=1e-4):
        return np.full((1, 4, 1), g)

    def test_single_subcarrier_example(self):
        noise = dbm_to_watts(-113)
        assert noise == pytest.approx(5.0119e-15, rel=1e-4)
        rate = aggregate_rate(0, 0, [(0, 0.1)], self.gains(), SystemParams())
        assert 1e-4 * 0.1 / noise == pytest.approx(1.9953e9, rel=1e-4)
        # 12.5e3 * log2(1 + 1.9953e9), evaluated at 30 digits with mpmath
        assert rate == pytest.approx(386174.14103969413, rel=1e-12)
        assert sig4(rate) == 3.862e5

    def test_empty_set_and_zero_power(self):
        assert aggregate_rate(0, 0, [], self.gains(), SystemParams()) == 0.0
        assert aggregate_rate(0, 0, [(0, 0.0), (1, 0.0)], self.gains(), SystemParams()) == 0.0

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            aggregate_rate(0, 0, [(0, -1e-3)], self.gains(), SystemParams())

    @given(st.floats(1e-6, 1.0), st.floats(1e-6, 1.0), st.floats(1e-9, 1e-3))
    def test_strictly_increasing_in_power_and_gain(self, p, dp, g):
        params = SystemParams()
        base = aggregate_rate(0, 0, [(0, p)], self.gains(g), params)
        assert aggregate_rate(0, 0, [(0, p + dp)], self.gains(g), params) > base
        assert aggregate_rate(0, 0, [(0, p)], self.gains(g * 1.5), params) > base


class TestRemote:
    server = EdgeServer(0, (0.0, 0.0), 1.15e9)

    def test_time_example(self):
        u = user()
        assert remote_compute_time(u.task, self.server) == pytest.approx(8.6957e-4, rel=5e-5)
        assert remote_time(u.task, 3.8683e5, self.server) == pytest.approx(3.4547e-3, rel=5e-5)

    def test_compute_term_at_fast_server(self):
        u = user()
        assert remote_compute_time(u.task, EdgeServer(0, (0, 0), 1.2e9)) == pytest.approx(8.3333e-4, rel=5e-5)

    def test_zero_rate_is_unreachable(self):
        u = user()
        with pytest.raises(UnreachableServerError):
            remote_time(u.task, 0.0, self.server)
        with pytest.raises(UnreachableServerError):
            remote_energy(u.task, [(0, 0.1)], 0.0, self.server, SystemParams())

    def test_energy_examples(self):
        u = user()
        fast = EdgeServer(0, (0.0, 0.0), 1.2e9)
        assert sig4(remote_compute_energy(u.task, fast, SystemParams())) == 0.0144
        e = remote_energy(u.task, [(0, 0.1)], 3.8683e5, fast, SystemParams())
        assert e.compute_j == pytest.approx(0.0144, rel=1e-12)
        assert e.transmit_j == pytest.approx(2.5851e-4, rel=5e-5)

    def test_large_rate_leaves_compute_time(self):
        u = user()
        assert remote_time(u.task, 1e300, self.server) == pytest.approx(remote_compute_time(u.task, self.server))

    @given(st.floats(1.0, 1e7), st.floats(1.01, 10.0))
    def test_transmit_time_decreases_with_rate(self, rate, factor):
        u = user()
        assert remote_time(u.task, rate * factor, self.server) < remote_time(u.task, rate, self.server)


@settings(max_examples=200)
@given(st.floats(0, 10), st.floats(0, 10))
def test_breakdown_is_additive(c, t):
    e = EnergyBreakdown.of(c, t)
    assert e.total_j == c + t


def test_formulas_are_pure():
    u = user(0.65e9, 1050, 1100.0)
    assert local_energy(u.task, u, SystemParams()) == local_energy(u.task, u, SystemParams())
    assert local_time(u.task, u) == local_time(u.task, u)


@pytest.mark.parametrize("field, value", [
    ("subcarrier_bandwidth_hz", 0.0), ("noise_power_w", -1.0), ("k_user", math.nan),
    ("num_subcarriers", 0), ("local_energy_threshold_j", 0.0),
])
def test_params_reject_nonpositive(field, value):
    with pytest.raises(ValueError):
        SystemParams(**{field: value})
