"""Scenario builders shared by the test modules."""

import numpy as np

from mecoffload.model import EdgeServer, SystemParams, TaskSpec, UserDevice
from mecoffload.scenario import Scenario

NOISE = SystemParams().noise_power_w


def build_scenario(gains, *, bits=1000, deadline=9e-3, intensity=1000.0, user_cpu=0.6e9,
                   server_cpu=1.15e9, pmax=0.6, user_pos=None, server_pos=None, **params):
    """Scenario with hand-picked gains; scalars broadcast over users/servers."""
    gains = np.asarray(gains, dtype=np.float64)
    n_users, n_sub, n_servers = gains.shape

    def per(value, count):
        return list(value) if np.ndim(value) else [value] * count

    bits, deadline, intensity = per(bits, n_users), per(deadline, n_users), per(intensity, n_users)
    user_cpu, pmax = per(user_cpu, n_users), per(pmax, n_users)
    server_cpu = per(server_cpu, n_servers)
    user_pos = user_pos or [(0.0, 0.0)] * n_users
    server_pos = server_pos or [(10.0 * (k + 1), 0.0) for k in range(n_servers)]
    users = tuple(UserDevice(i, user_pos[i], user_cpu[i], pmax[i],
                             TaskSpec(int(bits[i]), deadline[i], intensity[i]))
                  for i in range(n_users))
    servers = tuple(EdgeServer(k, server_pos[k], server_cpu[k]) for k in range(n_servers))
    return Scenario(users, servers, SystemParams(num_subcarriers=n_sub, **params), gains)


BANDWIDTH = 12.5e3


def tiny_instance(seed):
    """Small random instance with a fixed assignment and a finite grid optimum.

    Up to two users, up to four subcarriers and up to two servers. Gains
    are drawn as 10 to 1000 times the noise power per watt and demands as
    one to a few bits per hertz, so the least-power solution uses a
    visible share of the 1 W budget and a 64-level grid resolves it.
    Returns ``(scenario, assignment, snr_per_watt, demand_bps, chi, grid_zeta)``.
    """
    from mecoffload.lower_level import Assignment
    from oracles import oracle_zeta

    rng = np.random.default_rng([7, seed])
    n_users = int(rng.integers(1, 3))
    n_sub = int(rng.integers(n_users, 5))
    n_srv = int(rng.integers(n_users, 3))
    while True:
        snr = 10 ** rng.uniform(1, 3, size=(n_users, n_sub, n_srv))
        deadline = rng.uniform(4e-3, 10e-3, n_users)
        server_cpu = rng.uniform(1.1e9, 1.2e9, n_srv)
        targets = rng.permutation(n_srv)[:n_users]
        chi = deadline - 1e6 / server_cpu[targets]
        bits_per_hz = rng.uniform(1.0, 3.0 * max(1, n_sub // n_users), n_users)
        bits = np.maximum(1, np.round(bits_per_hz * chi * BANDWIDTH)).astype(int)
        scenario = build_scenario(snr * NOISE, bits=bits, deadline=deadline, server_cpu=server_cpu, pmax=1.0)
        assignment = Assignment(tuple(int(k) for k in targets))
        pair_snr = np.array([snr[i, :, k] for i, k in assignment.pairs])
        demand = bits / chi
        zeta, _ = oracle_zeta(pair_snr, demand, chi, np.ones(n_users), BANDWIDTH)
        if np.isfinite(zeta):
            return scenario, assignment, pair_snr, demand, chi, zeta
