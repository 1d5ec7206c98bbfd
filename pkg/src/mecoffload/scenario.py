"""Reproducible system snapshots: placement, tasks, and channel gains.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=...)``. Every user, server, and
user-server gain row has its own spawn key, so a scenario with more
servers (or users) contains the smaller one as an exact prefix. Two
scenarios generated from the same seed with different ``n_servers``
therefore share users, tasks, and the gains to the common servers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .model import EdgeServer, SystemParams, TaskSpec, UserDevice, dbm_to_watts

__all__ = [
    "SCHEMA_VERSION",
    "ScenarioRanges",
    "Scenario",
    "ScenarioFormatError",
    "generate_scenario",
    "save_scenario",
    "load_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "rng_for",
]

SCHEMA_VERSION = "mecoffload.scenario/1"

# spawn-key namespaces; never renumber, seeds must stay portable
_STREAM_USER = 1
_STREAM_SERVER = 2
_STREAM_GAIN = 3
STREAM_ROA = 4

MIN_SEPARATION_M = 1.0


class ScenarioFormatError(ValueError):
    """A scenario file failed to parse or violated an invariant."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class ScenarioRanges:
    """Closed sampling ranges and fixed constants for scenario generation."""

    radius_m: float = 60.0
    pathloss_exponent: float = 2.0
    data_size_bits: Tuple[int, int] = (1000, 1100)
    intensity_cycles_per_bit: Tuple[float, float] = (1000.0, 1200.0)
    deadline_s: Tuple[float, float] = (9e-3, 10e-3)
    user_cpu_hz: Tuple[float, float] = (0.6e9, 0.7e9)
    server_cpu_hz: Tuple[float, float] = (1.1e9, 1.2e9)
    max_tx_power_w: float = 0.6
    subcarrier_bandwidth_hz: float = 12.5e3
    noise_dbm: float = -113.0
    k_user: float = 1e-24
    k_server: float = 1e-26
    local_energy_threshold_j: float = 0.1


@dataclass(frozen=True, eq=False)
class Scenario:
    users: Tuple[UserDevice, ...]
    servers: Tuple[EdgeServer, ...]
    params: SystemParams
    gains: np.ndarray = field(repr=False)
    seed: int = 0
    pathloss_exponent: float = 2.0
    radius_m: float = 60.0

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        expected = (len(self.users), self.params.num_subcarriers, len(self.servers))
        if gains.shape != expected:
            raise ValueError(f"gains shape {gains.shape} does not match (users, subcarriers, servers) {expected}")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise ValueError("channel gains must be finite and nonnegative")
        for u in self.users:
            if math.hypot(*u.position_m) > self.radius_m * (1 + 1e-12):
                raise ValueError(f"user {u.id} lies outside the {self.radius_m} m deployment disk")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "servers", tuple(self.servers))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    @property
    def n_subcarriers(self) -> int:
        return self.params.num_subcarriers

    def distance(self, i: int, k: int) -> float:
        (ux, uy), (sx, sy) = self.users[i].position_m, self.servers[k].position_m
        return max(math.hypot(ux - sx, uy - sy), MIN_SEPARATION_M)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.users == other.users and self.servers == other.servers
                and self.params == other.params and self.seed == other.seed
                and self.pathloss_exponent == other.pathloss_exponent
                and self.radius_m == other.radius_m
                and self.gains.shape == other.gains.shape
                and np.array_equal(self.gains, other.gains))

    __hash__ = None


def _point_in_disk(rng: np.random.Generator, radius: float) -> Tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    theta = 2.0 * math.pi * rng.random()
    return (r * math.cos(theta), r * math.sin(theta))


def generate_scenario(seed: int, n_users: int, n_servers: int, n_subcarriers: int,
                      overrides: Optional[ScenarioRanges] = None) -> Scenario:
    """Draw one snapshot.

    Users and servers are placed uniformly in a disk; the gain of user i on
    subcarrier n towards server k is ``max(d, 1 m) ** -theta * h`` with
    ``h ~ Exp(1)`` (squared Rayleigh magnitude).
    """
    for name, count in (("n_users", n_users), ("n_servers", n_servers), ("n_subcarriers", n_subcarriers)):
        if int(count) != count or count < 1:
            raise ValueError(f"{name} must be a positive integer, got {count!r}")
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    rg = overrides or ScenarioRanges()

    users = []
    for i in range(n_users):
        rng = rng_for(seed, _STREAM_USER, i)
        pos = _point_in_disk(rng, rg.radius_m)
        data_size = int(rng.integers(rg.data_size_bits[0], rg.data_size_bits[1], endpoint=True))
        intensity = float(rng.uniform(*rg.intensity_cycles_per_bit))
        deadline = float(rng.uniform(*rg.deadline_s))
        cpu = float(rng.uniform(*rg.user_cpu_hz))
        task = TaskSpec(data_size, deadline, intensity)
        users.append(UserDevice(i, pos, cpu, rg.max_tx_power_w, task))

    servers = []
    for k in range(n_servers):
        rng = rng_for(seed, _STREAM_SERVER, k)
        pos = _point_in_disk(rng, rg.radius_m)
        servers.append(EdgeServer(k, pos, float(rng.uniform(*rg.server_cpu_hz))))

    gains = np.empty((n_users, n_subcarriers, n_servers))
    for i, user in enumerate(users):
        for k, server in enumerate(servers):
            d = max(math.dist(user.position_m, server.position_m), MIN_SEPARATION_M)
            fading = rng_for(seed, _STREAM_GAIN, i, k).exponential(1.0, n_subcarriers)
            gains[i, :, k] = d ** -rg.pathloss_exponent * fading

    params = SystemParams(
        subcarrier_bandwidth_hz=rg.subcarrier_bandwidth_hz,
        noise_power_w=dbm_to_watts(rg.noise_dbm),
        k_user=rg.k_user,
        k_server=rg.k_server,
        local_energy_threshold_j=rg.local_energy_threshold_j,
        num_subcarriers=n_subcarriers,
    )
    return Scenario(tuple(users), tuple(servers), params, gains, seed,
                    rg.pathloss_exponent, rg.radius_m)


# --- serialization -------------------------------------------------------

def _hex(x: float) -> str:
    return float(x).hex()


def _real(obj: Dict[str, Any], key: str, where: str) -> float:
    name = f"{where}.{key}" if where else key
    if key not in obj:
        raise ScenarioFormatError(name, "missing")
    raw = obj[key]
    try:
        if isinstance(raw, str):
            return float.fromhex(raw)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
    except (ValueError, OverflowError) as exc:
        raise ScenarioFormatError(name, f"not a real number ({exc})") from None
    raise ScenarioFormatError(name, f"expected a hex-float string or number, got {type(raw).__name__}")


def _int(obj: Dict[str, Any], key: str, where: str) -> int:
    name = f"{where}.{key}" if where else key
    if key not in obj:
        raise ScenarioFormatError(name, "missing")
    raw = obj[key]
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise ScenarioFormatError(name, f"expected an integer, got {raw!r}")
    return raw


def _point(obj: Dict[str, Any], where: str) -> Tuple[float, float]:
    raw = obj.get("position_m")
    if not isinstance(raw, list) or len(raw) != 2:
        raise ScenarioFormatError(f"{where}.position_m", "expected a 2-element list")
    return (_real({"x": raw[0]}, "x", f"{where}.position_m"),
            _real({"y": raw[1]}, "y", f"{where}.position_m"))


def scenario_to_dict(s: Scenario) -> Dict[str, Any]:
    p = s.params
    return {
        "schema": SCHEMA_VERSION,
        "seed": s.seed,
        "pathloss_exponent": _hex(s.pathloss_exponent),
        "radius_m": _hex(s.radius_m),
        "params": {
            "subcarrier_bandwidth_hz": _hex(p.subcarrier_bandwidth_hz),
            "noise_power_w": _hex(p.noise_power_w),
            "k_user": _hex(p.k_user),
            "k_server": _hex(p.k_server),
            "local_energy_threshold_j": _hex(p.local_energy_threshold_j),
            "num_subcarriers": p.num_subcarriers,
        },
        "users": [
            {
                "id": u.id,
                "position_m": [_hex(u.position_m[0]), _hex(u.position_m[1])],
                "cpu_freq_hz": _hex(u.cpu_freq_hz),
                "max_tx_power_w": _hex(u.max_tx_power_w),
                "task": {
                    "data_size_bits": u.task.data_size_bits,
                    "deadline_s": _hex(u.task.deadline_s),
                    "intensity_cycles_per_bit": _hex(u.task.intensity_cycles_per_bit),
                },
            }
            for u in s.users
        ],
        "servers": [
            {"id": k.id, "position_m": [_hex(k.position_m[0]), _hex(k.position_m[1])],
             "cpu_freq_hz": _hex(k.cpu_freq_hz)}
            for k in s.servers
        ],
        "gains": {
            "order": "row-major (user, subcarrier, server)",
            "shape": list(s.gains.shape),
            "values": [_hex(g) for g in s.gains.ravel(order="C")],
        },
    }


def scenario_from_dict(doc: Any) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("<root>", "expected an object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ScenarioFormatError("schema", f"expected {SCHEMA_VERSION!r}, got {doc.get('schema')!r}")
    seed = _int(doc, "seed", "")
    if not 0 <= seed < 2 ** 64:
        raise ScenarioFormatError("seed", "must be an unsigned 64-bit integer")

    pdoc = doc.get("params")
    if not isinstance(pdoc, dict):
        raise ScenarioFormatError("params", "missing or not an object")
    try:
        params = SystemParams(
            subcarrier_bandwidth_hz=_real(pdoc, "subcarrier_bandwidth_hz", "params"),
            noise_power_w=_real(pdoc, "noise_power_w", "params"),
            k_user=_real(pdoc, "k_user", "params"),
            k_server=_real(pdoc, "k_server", "params"),
            local_energy_threshold_j=_real(pdoc, "local_energy_threshold_j", "params"),
            num_subcarriers=_int(pdoc, "num_subcarriers", "params"),
        )
    except ScenarioFormatError:
        raise
    except ValueError as exc:
        raise ScenarioFormatError("params", str(exc)) from None

    users: List[UserDevice] = []
    for idx, u in enumerate(_list(doc, "users")):
        where = f"users[{idx}]"
        if not isinstance(u, dict) or not isinstance(u.get("task"), dict):
            raise ScenarioFormatError(where, "expected an object with a task")
        t = u["task"]
        try:
            task = TaskSpec(_int(t, "data_size_bits", f"{where}.task"),
                            _real(t, "deadline_s", f"{where}.task"),
                            _real(t, "intensity_cycles_per_bit", f"{where}.task"))
            users.append(UserDevice(_int(u, "id", where), _point(u, where),
                                    _real(u, "cpu_freq_hz", where),
                                    _real(u, "max_tx_power_w", where), task))
        except ScenarioFormatError:
            raise
        except ValueError as exc:
            raise ScenarioFormatError(where, str(exc)) from None

    servers: List[EdgeServer] = []
    for idx, k in enumerate(_list(doc, "servers")):
        where = f"servers[{idx}]"
        if not isinstance(k, dict):
            raise ScenarioFormatError(where, "expected an object")
        try:
            servers.append(EdgeServer(_int(k, "id", where), _point(k, where),
                                      _real(k, "cpu_freq_hz", where)))
        except ScenarioFormatError:
            raise
        except ValueError as exc:
            raise ScenarioFormatError(where, str(exc)) from None

    gdoc = doc.get("gains")
    if not isinstance(gdoc, dict):
        raise ScenarioFormatError("gains", "missing or not an object")
    shape = gdoc.get("shape")
    expected = [len(users), params.num_subcarriers, len(servers)]
    if shape != expected:
        raise ScenarioFormatError("gains.shape", f"declared {shape!r}, scenario implies {expected}")
    values = gdoc.get("values")
    if not isinstance(values, list) or len(values) != math.prod(expected):
        raise ScenarioFormatError("gains.values", f"expected {math.prod(expected)} entries")
    flat = np.array([_real({"v": v}, "v", f"gains.values[{j}]") for j, v in enumerate(values)],
                    dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(flat) | (flat < 0))
    if bad.size:
        raise ScenarioFormatError(f"gains.values[{bad[0]}]", "gain must be finite and nonnegative")

    theta, radius = _real(doc, "pathloss_exponent", ""), _real(doc, "radius_m", "")
    try:
        return Scenario(tuple(users), tuple(servers), params, flat.reshape(expected), seed, theta, radius)
    except ValueError as exc:
        raise ScenarioFormatError("users", str(exc)) from None


def _list(doc: Dict[str, Any], key: str) -> list:
    raw = doc.get(key)
    if not isinstance(raw, list):
        raise ScenarioFormatError(key, "missing or not a list")
    return raw


def save_scenario(s: Scenario, path: os.PathLike | str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=1)
        fh.write("\n")


def load_scenario(path: os.PathLike | str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioFormatError("<root>", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)
