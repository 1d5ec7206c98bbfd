import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecoffload.model import dbm_to_watts
from mecoffload.scenario import (SCHEMA_VERSION, ScenarioFormatError, ScenarioRanges, generate_scenario,
                                 load_scenario, save_scenario, scenario_from_dict, scenario_to_dict)


@pytest.fixture(scope="module")
def snap():
    return generate_scenario(11, 3, 5, 64)


def test_table_constants_reach_params(snap):
    p = snap.params
    assert p.subcarrier_bandwidth_hz == 12.5e3
    assert p.noise_power_w == pytest.approx(10 ** -14.3, rel=1e-12)
    assert p.noise_power_w == pytest.approx(5.0119e-15, rel=1e-4)
    assert all(u.max_tx_power_w == 0.6 for u in snap.users)
    assert p.k_user == 1e-24 and p.k_server == 1e-26
    assert p.num_subcarriers == 64


def test_same_seed_is_bit_identical():
    a, b = generate_scenario(5, 3, 4, 16), generate_scenario(5, 3, 4, 16)
    assert a == b
    assert a.gains.tobytes() == b.gains.tobytes()
    assert generate_scenario(6, 3, 4, 16) != a


def test_pathloss_at_sixty_metres():
    assert 60.0 ** -2 == pytest.approx(2.7778e-4, rel=5e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 4), st.integers(1, 5), st.integers(1, 8))
def test_samples_lie_in_ranges(seed, n_users, n_servers, n_sub):
    s = generate_scenario(seed, n_users, n_servers, n_sub)
    rg = ScenarioRanges()
    assert s.gains.shape == (n_users, n_sub, n_servers)
    assert np.all(s.gains >= 0)
    for u in s.users:
        assert math.hypot(*u.position_m) <= rg.radius_m
        assert rg.data_size_bits[0] <= u.task.data_size_bits <= rg.data_size_bits[1]
        assert rg.intensity_cycles_per_bit[0] <= u.task.intensity_cycles_per_bit <= rg.intensity_cycles_per_bit[1]
        assert rg.deadline_s[0] <= u.task.deadline_s <= rg.deadline_s[1]
        assert rg.user_cpu_hz[0] <= u.cpu_freq_hz <= rg.user_cpu_hz[1]
    for k in s.servers:
        assert math.hypot(*k.position_m) <= rg.radius_m
        assert rg.server_cpu_hz[0] <= k.cpu_freq_hz <= rg.server_cpu_hz[1]
    assert all(s.distance(i, k) >= 1.0 for i in range(n_users) for k in range(n_servers))


def test_larger_server_count_extends_the_snapshot():
    small, large = generate_scenario(3, 3, 3, 64), generate_scenario(3, 3, 9, 64)
    assert small.users == large.users
    assert small.servers == large.servers[:3]
    assert np.array_equal(small.gains, large.gains[:, :, :3])


def test_gain_is_distance_scaled_exponential():
    s = generate_scenario(2, 2, 2, 20000)
    for i in range(2):
        for k in range(2):
            fading = s.gains[i, :, k] * s.distance(i, k) ** 2
            # Exp(1): mean 1, variance 1; 20000 samples give ~0.7% standard error
            assert fading.mean() == pytest.approx(1.0, abs=0.03)
            assert fading.var() == pytest.approx(1.0, abs=0.08)


def test_deadline_override():
    rg = ScenarioRanges(deadline_s=(0.009, 0.009))
    s = generate_scenario(4, 3, 3, 8, rg)
    assert all(u.task.deadline_s == 0.009 for u in s.users)


@pytest.mark.parametrize("counts", [(0, 3, 64), (3, 0, 64), (3, 3, 0)])
def test_zero_counts_rejected(counts):
    with pytest.raises(ValueError):
        generate_scenario(1, *counts)


def test_seed_range():
    with pytest.raises(ValueError):
        generate_scenario(-1, 1, 1, 1)
    with pytest.raises(ValueError):
        generate_scenario(2 ** 64, 1, 1, 1)


def test_gains_are_read_only(snap):
    with pytest.raises(ValueError):
        snap.gains[0, 0, 0] = 1.0


def test_user_outside_disk_rejected(make_scenario):
    with pytest.raises(ValueError, match="outside"):
        make_scenario(np.ones((1, 2, 1)), user_pos=[(100.0, 0.0)])


class TestFile:
    def test_round_trip_is_exact(self, snap, tmp_path):
        path = tmp_path / "s.json"
        save_scenario(snap, path)
        back = load_scenario(path)
        assert back == snap
        assert back.gains.tobytes() == snap.gains.tobytes()

    def test_file_declares_schema_and_shape(self, snap, tmp_path):
        path = tmp_path / "s.json"
        save_scenario(snap, path)
        doc = json.loads(path.read_text())
        assert doc["schema"] == SCHEMA_VERSION
        assert doc["gains"]["shape"] == [3, 64, 5]
        assert len(doc["gains"]["values"]) == 3 * 64 * 5

    def test_save_is_deterministic(self, snap, tmp_path):
        save_scenario(snap, tmp_path / "a.json")
        save_scenario(snap, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_negative_gain_names_the_entry(self, snap):
        doc = scenario_to_dict(snap)
        doc["gains"]["values"][7] = (-1e-6).hex()
        with pytest.raises(ScenarioFormatError) as err:
            scenario_from_dict(doc)
        assert err.value.field == "gains.values[7]"

    def test_mismatched_dimensions(self, snap):
        doc = scenario_to_dict(snap)
        doc["gains"]["shape"] = [3, 64, 4]
        with pytest.raises(ScenarioFormatError) as err:
            scenario_from_dict(doc)
        assert err.value.field == "gains.shape"

    @pytest.mark.parametrize("mutate, field", [
        (lambda d: d.pop("params"), "params"),
        (lambda d: d["params"].update(k_user="zz"), "params.k_user"),
        (lambda d: d["users"][1]["task"].update(data_size_bits=1.5), "users[1].task.data_size_bits"),
        (lambda d: d["users"][0].update(cpu_freq_hz=(-1.0).hex()), "users[0]"),
        (lambda d: d.update(schema="other/9"), "schema"),
        (lambda d: d["servers"][2].pop("cpu_freq_hz"), "servers[2].cpu_freq_hz"),
        (lambda d: d["users"][0].update(position_m=[(500.0).hex(), "0x0p+0"]), "users"),
    ])
    def test_errors_name_the_field(self, snap, mutate, field):
        doc = scenario_to_dict(snap)
        mutate(doc)
        with pytest.raises(ScenarioFormatError) as err:
            scenario_from_dict(doc)
        assert err.value.field == field

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioFormatError):
            load_scenario(path)


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == 1.0
    assert dbm_to_watts(27.78151250383644) == pytest.approx(0.6)
