"""Reference strategies: nearest server, random server, equal allocation, local only."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .lower_level import LOCAL, Assignment, LowerHyper, LowerSolveResult, _evaluate
from .model import local_energy, local_time
from .scenario import STREAM_ROA, Scenario, rng_for
from .upper_level import (TOO_MANY_TASKS, EejsResult, LogEntry, _Context, _result, _unserved,
                          enumerate_assignments, expand_assignment, offloading_users,
                          select_best)

__all__ = [
    "LocalOnlyResult",
    "mdoa_assign",
    "mdoa_solve",
    "roa_assign",
    "roa_solve",
    "equal_split",
    "aas_solve",
    "local_only",
]


def mdoa_assign(scenario: Scenario) -> Assignment:
    """Nearest free server per offloader, taken greedily in user order."""
    offloaders, _ = offloading_users(scenario)
    taken = set()
    compact: List[Optional[int]] = []
    for i in offloaders:
        free = [k for k in range(scenario.n_servers) if k not in taken]
        if not free:
            compact.append(None)
            continue
        k = min(free, key=lambda k: (scenario.distance(i, k), k))
        taken.add(k)
        compact.append(k)
    return expand_assignment(compact, offloaders, scenario.n_users)


def roa_assign(scenario: Scenario, seed: int) -> Assignment:
    """Uniformly random injective assignment from its own RNG stream."""
    offloaders, _ = offloading_users(scenario)
    rng = rng_for(seed, STREAM_ROA)
    perm = rng.permutation(scenario.n_servers)
    compact = [int(perm[j]) if j < scenario.n_servers else None for j in range(len(offloaders))]
    return expand_assignment(compact, offloaders, scenario.n_users)


def _fixed_assignment(strategy: str, scenario: Scenario, assignment: Assignment,
                      hyper: LowerHyper) -> EejsResult:
    offloaders, local_users = offloading_users(scenario)
    flags = (TOO_MANY_TASKS,) if len(offloaders) > scenario.n_servers else ()
    full = _Context(scenario).drop_impossible(assignment)
    return _result(strategy, scenario, full, hyper, offloaders, local_users, (), flags)


def mdoa_solve(scenario: Scenario, hyper: LowerHyper = LowerHyper()) -> EejsResult:
    return _fixed_assignment("mdoa", scenario, mdoa_assign(scenario), hyper)


def roa_solve(scenario: Scenario, seed: int, hyper: LowerHyper = LowerHyper()) -> EejsResult:
    return _fixed_assignment("roa", scenario, roa_assign(scenario, seed), hyper)


def equal_split(n_users: int, n_subcarriers: int) -> np.ndarray:
    """Round-robin owner (0..n_users-1) of every subcarrier."""
    if n_users < 1:
        raise ValueError("need at least one user")
    return np.arange(n_subcarriers) % n_users


def _aas_outcome(scenario: Scenario, assignment: Assignment) -> LowerSolveResult:
    p = scenario.params
    pairs = assignment.pairs
    users = np.array([i for i, _ in pairs])
    servers = np.array([k for _, k in pairs])
    gains = scenario.gains[users, :, servers]
    owner = equal_split(len(pairs), p.num_subcarriers)
    counts = np.bincount(owner, minlength=len(pairs))
    pmax = np.array([scenario.users[i].max_tx_power_w for i in users])
    power = np.where(owner[None, :] == np.arange(len(pairs))[:, None],
                     (pmax / np.maximum(counts, 1))[:, None], 0.0)
    bits = np.array([scenario.users[i].task.data_size_bits for i in users], dtype=np.float64)
    chi = np.array([scenario.users[i].task.deadline_s
                    - scenario.users[i].task.cycles / scenario.servers[k].cpu_freq_hz
                    for i, k in pairs])
    rates = p.subcarrier_bandwidth_hz * np.sum(np.log2(1.0 + gains * power / p.noise_power_w), axis=1)
    return _evaluate(assignment, scenario, users, servers, gains, chi, bits, pmax, owner, power,
                     rates, np.zeros(len(pairs)), np.zeros(len(pairs)), 0, True, 0.0)


def _aas_entry(scenario: Scenario, assignment: Assignment) -> LogEntry:
    if not assignment.pairs:
        return LogEntry(assignment, 0.0, False, True, 0, 0.0)
    out = _aas_outcome(scenario, assignment)
    users = [i for i, _ in assignment.pairs]
    per_user = [out.energies[i].total_j for i in users]
    ok = [bool(out.feasible[i]) for i in users]
    unassigned = any(k is None for k in assignment.targets)
    return LogEntry(assignment, math.fsum(per_user), all(ok) and not unassigned, True, sum(ok),
                    math.fsum(e for e, f in zip(per_user, ok) if f))


def aas_solve(scenario: Scenario) -> EejsResult:
    """Equal power and round-robin subcarriers, best assignment by enumeration."""
    offloaders, local_users = offloading_users(scenario)
    if not offloaders:
        return _result("aas", scenario, Assignment((LOCAL,) * scenario.n_users), LowerHyper(),
                       offloaders, local_users)
    candidates = enumerate_assignments(len(offloaders), scenario.n_servers)
    if not candidates:
        return _unserved("aas", scenario, offloaders, local_users, (TOO_MANY_TASKS,))
    ctx = _Context(scenario)
    log = [_aas_entry(scenario, ctx.drop_impossible(expand_assignment(c.targets, offloaders, scenario.n_users)))
           for c in candidates]
    best = log[select_best(log)].assignment
    outcome = _aas_outcome(scenario, best) if best.pairs else None
    served = outcome.feasible.copy() if outcome is not None else np.zeros(scenario.n_users, dtype=bool)
    energies = [e for e in outcome.energies if e is not None] if outcome is not None else []
    return EejsResult(
        strategy="aas",
        best_assignment=best,
        best_outcome=outcome,
        total_energy_j=outcome.total_energy_j if outcome is not None else 0.0,
        compute_energy_j=math.fsum(e.compute_j for e in energies),
        transmit_energy_j=math.fsum(e.transmit_j for e in energies),
        users_served=served,
        offloaders=offloaders,
        local_users=local_users,
        local_energy_j=math.fsum(local_energy(scenario.users[i].task, scenario.users[i], scenario.params)
                                 for i in local_users),
        per_assignment_log=tuple(log),
    )


@dataclass(frozen=True, eq=False)
class LocalOnlyResult:
    total_energy_j: float
    energy_j: np.ndarray
    time_s: np.ndarray
    deadline_met: np.ndarray

    @property
    def served_count(self) -> int:
        return int(np.count_nonzero(self.deadline_met))


def local_only(scenario: Scenario) -> LocalOnlyResult:
    p = scenario.params
    energy = np.array([local_energy(u.task, u, p) for u in scenario.users], dtype=np.float64)
    times = np.array([local_time(u.task, u) for u in scenario.users], dtype=np.float64)
    deadlines = np.array([u.task.deadline_s for u in scenario.users], dtype=np.float64)
    return LocalOnlyResult(math.fsum(energy), energy, times, times <= deadlines)
