"""Time and energy accounting for local and offloaded task execution.

All quantities are SI: bits, seconds, hertz, watts, joules. Every function
here is pure; the dataclasses are frozen value objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

__all__ = [
    "TaskSpec",
    "UserDevice",
    "EdgeServer",
    "SystemParams",
    "EnergyBreakdown",
    "UnreachableServerError",
    "dbm_to_watts",
    "local_time",
    "local_energy",
    "local_gate",
    "aggregate_rate",
    "remote_compute_time",
    "remote_time",
    "remote_compute_energy",
    "remote_energy",
]


class UnreachableServerError(ValueError):
    """Raised when a user-server pair has zero uplink rate."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def _require_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class TaskSpec:
    data_size_bits: int
    deadline_s: float
    intensity_cycles_per_bit: float

    def __post_init__(self):
        if int(self.data_size_bits) != self.data_size_bits or self.data_size_bits < 1:
            raise ValueError(f"data_size_bits must be an integer >= 1, got {self.data_size_bits!r}")
        _require_positive("deadline_s", self.deadline_s)
        _require_positive("intensity_cycles_per_bit", self.intensity_cycles_per_bit)

    @property
    def cycles(self) -> float:
        """Total CPU cycles needed to process the task."""
        return self.data_size_bits * self.intensity_cycles_per_bit


@dataclass(frozen=True)
class UserDevice:
    id: int
    position_m: Tuple[float, float]
    cpu_freq_hz: float
    max_tx_power_w: float
    task: TaskSpec

    def __post_init__(self):
        _require_positive("cpu_freq_hz", self.cpu_freq_hz)
        _require_positive("max_tx_power_w", self.max_tx_power_w)


@dataclass(frozen=True)
class EdgeServer:
    id: int
    position_m: Tuple[float, float]
    cpu_freq_hz: float

    def __post_init__(self):
        _require_positive("cpu_freq_hz", self.cpu_freq_hz)


@dataclass(frozen=True)
class SystemParams:
    subcarrier_bandwidth_hz: float = 12.5e3
    noise_power_w: float = dbm_to_watts(-113.0)
    k_user: float = 1e-24
    k_server: float = 1e-26
    local_energy_threshold_j: float = 0.1
    num_subcarriers: int = 64

    def __post_init__(self):
        for name in ("subcarrier_bandwidth_hz", "noise_power_w", "k_user",
                     "k_server", "local_energy_threshold_j"):
            value = getattr(self, name)
            # E_0 may be +inf to force local execution whenever the deadline allows
            if name == "local_energy_threshold_j" and value == math.inf:
                continue
            _require_positive(name, value)
        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            raise ValueError(f"num_subcarriers must be an integer >= 1, got {self.num_subcarriers!r}")


@dataclass(frozen=True)
class EnergyBreakdown:
    compute_j: float
    transmit_j: float
    total_j: float

    @classmethod
    def of(cls, compute_j: float, transmit_j: float) -> "EnergyBreakdown":
        return cls(compute_j, transmit_j, compute_j + transmit_j)


def local_time(task: TaskSpec, user: UserDevice) -> float:
    return task.cycles / user.cpu_freq_hz


def local_energy(task: TaskSpec, user: UserDevice, params: SystemParams) -> float:
    return params.k_user * user.cpu_freq_hz ** 2 * task.cycles


def local_gate(task: TaskSpec, user: UserDevice, params: SystemParams) -> bool:
    """True when the task should run on the device.

    Both the energy and the deadline conditions are strict.
    """
    return (local_energy(task, user, params) < params.local_energy_threshold_j
            and local_time(task, user) < task.deadline_s)


def aggregate_rate(user_i: int, server_k: int, subcarriers: Iterable[Tuple[int, float]],
                   gains: np.ndarray, params: SystemParams) -> float:
    """Uplink rate of user ``user_i`` towards ``server_k``.

    ``subcarriers`` holds ``(n, power_w)`` pairs for the subcarriers the user
    owns; ``gains`` is the ``(users, subcarriers, servers)`` gain tensor.
    """
    total = 0.0
    for n, power in subcarriers:
        if power < 0:
            raise ValueError(f"negative power {power!r} on subcarrier {n}")
        snr = gains[user_i, n, server_k] * power / params.noise_power_w
        total += math.log2(1.0 + snr)
    return params.subcarrier_bandwidth_hz * total


def remote_compute_time(task: TaskSpec, server: EdgeServer) -> float:
    return task.cycles / server.cpu_freq_hz


def remote_time(task: TaskSpec, rate: float, server: EdgeServer) -> float:
    if not rate > 0:
        raise UnreachableServerError(f"uplink rate is {rate!r}; server {server.id} unreachable")
    return task.data_size_bits / rate + remote_compute_time(task, server)


def remote_compute_energy(task: TaskSpec, server: EdgeServer, params: SystemParams) -> float:
    return params.k_server * server.cpu_freq_hz ** 2 * task.cycles


def remote_energy(task: TaskSpec, per_subcarrier_powers: Iterable[Tuple[int, float]],
                  rate: float, server: EdgeServer, params: SystemParams) -> EnergyBreakdown:
    if not rate > 0:
        raise UnreachableServerError(f"uplink rate is {rate!r}; server {server.id} unreachable")
    total_power = math.fsum(p for _, p in per_subcarrier_powers)
    transmit = total_power * task.data_size_bits / rate
    return EnergyBreakdown.of(remote_compute_energy(task, server, params), transmit)
