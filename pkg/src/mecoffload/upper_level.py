"""Offloading-assignment search on top of the lower-level allocator."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .lower_level import (LOCAL, Assignment, LowerHyper,
                          LowerSolveResult, POWER_TOL_W, RATE_REL_TOL, _solve_arrays,
                          solve_lower)
from .model import local_energy, local_gate, remote_compute_energy, remote_compute_time
from .scenario import Scenario

__all__ = [
    "TOO_MANY_TASKS",
    "LogEntry",
    "EejsResult",
    "offloading_users",
    "enumerate_assignments",
    "expand_assignment",
    "eejs_solve",
    "hungarian_solve",
    "select_best",
]

TOO_MANY_TASKS = "more tasks than idle servers"

# cost used for infeasible pairs in the Hungarian matrix; far above any real energy
_INFEASIBLE_COST = 1e6


class LogEntry(NamedTuple):
    assignment: Assignment
    total_energy_j: float
    feasible: bool
    converged: bool
    served: int = 0
    served_energy_j: float = 0.0


@dataclass(frozen=True, eq=False)
class EejsResult:
    """Outcome of a strategy on one snapshot.

    ``total_energy_j`` sums remote energy over offloaders that received a
    server; on-device energy of gated users is kept apart in
    ``local_energy_j``.
    """

    strategy: str
    best_assignment: Assignment
    best_outcome: Optional[LowerSolveResult]
    total_energy_j: float
    compute_energy_j: float
    transmit_energy_j: float
    users_served: np.ndarray
    offloaders: Tuple[int, ...]
    local_users: Tuple[int, ...] = ()
    local_energy_j: float = 0.0
    per_assignment_log: Tuple[LogEntry, ...] = field(default=(), repr=False)
    flags: Tuple[str, ...] = ()

    @property
    def served_count(self) -> int:
        return int(np.count_nonzero(self.users_served[list(self.offloaders)])) if self.offloaders else 0

    @property
    def offloader_count(self) -> int:
        return len(self.offloaders)

    @property
    def fully_feasible(self) -> bool:
        return self.served_count == self.offloader_count

    @property
    def converged(self) -> bool:
        return self.best_outcome is not None and self.best_outcome.converged


def offloading_users(scenario: Scenario) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Split users into (offloaders, locally executed) by the local gate."""
    off, loc = [], []
    for u in scenario.users:
        (loc if local_gate(u.task, u, scenario.params) else off).append(u.id)
    return tuple(off), tuple(loc)


def enumerate_assignments(n_offloaders: int, n_servers: int) -> List[Assignment]:
    """All injective maps from offloaders to servers, in lexicographic order.

    Entry ``j`` of each assignment is the server of the j-th offloader. The
    list is empty when there are more offloaders than servers.
    """
    if n_offloaders > n_servers:
        return []
    return [Assignment(p) for p in itertools.permutations(range(n_servers), n_offloaders)]


def expand_assignment(compact: Sequence[Optional[int]], offloaders: Sequence[int], n_users: int) -> Assignment:
    """Place offloader-relative targets into a full per-user assignment."""
    targets: List[Optional[int]] = [LOCAL] * n_users
    for i, k in zip(offloaders, compact):
        targets[i] = k
    return Assignment(tuple(targets))


class _Context:
    """Per-scenario arrays reused across many lower-level solves."""

    def __init__(self, scenario: Scenario):
        p = scenario.params
        self.scenario = scenario
        self.bits = np.array([u.task.data_size_bits for u in scenario.users], dtype=np.float64)
        self.pmax = np.array([u.max_tx_power_w for u in scenario.users])
        self.compute_j = np.array([[remote_compute_energy(u.task, s, p) for s in scenario.servers]
                                   for u in scenario.users]).reshape(scenario.n_users, scenario.n_servers)
        self.chi = np.array([[u.task.deadline_s - remote_compute_time(u.task, s) for s in scenario.servers]
                             for u in scenario.users]).reshape(scenario.n_users, scenario.n_servers)

    def drop_impossible(self, assignment: Assignment) -> Assignment:
        targets = list(assignment.targets)
        for i, k in assignment.pairs:
            if self.chi[i, k] <= 0:
                targets[i] = None
        return Assignment(tuple(targets))

    def quick_solve(self, assignment: Assignment, hyper: LowerHyper) -> LogEntry:
        pairs = assignment.pairs
        if not pairs:
            return LogEntry(assignment, 0.0, False, True, 0, 0.0)
        users = np.array([i for i, _ in pairs])
        servers = np.array([k for _, k in pairs])
        gains = np.ascontiguousarray(self.scenario.gains[users, :, servers])
        chi = self.chi[users, servers]
        bits = self.bits[users]
        pmax = self.pmax[users]
        _, _, owner, power, rates, _, converged, _ = _solve_arrays(
            gains, bits, chi, pmax, self.scenario.params, hyper)
        totals = power.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            upload = np.where(rates > 0, bits / rates, np.inf)
            transmit = np.where(rates > 0, totals * bits / rates, 0.0)
        owns = np.bincount(owner[owner >= 0], minlength=len(pairs)) > 0
        ok = owns & (totals <= pmax + POWER_TOL_W) & (upload <= chi * (1 + RATE_REL_TOL))
        per_user = self.compute_j[users, servers] + transmit
        n_unassigned = sum(1 for k in assignment.targets if k is None)
        return LogEntry(assignment, math.fsum(per_user), bool(ok.all()) and n_unassigned == 0,
                        bool(converged), int(ok.sum()), math.fsum(per_user[ok]))


def _selection_key(entry: LogEntry, index: int):
    if entry.feasible:
        return (0, entry.total_energy_j, 0.0, index)
    return (1, -entry.served, entry.served_energy_j, index)


def select_best(entries: Sequence[LogEntry]) -> int:
    """Index of the chosen entry.

    Fully feasible entries win by least total energy. Otherwise the entry
    serving the most users wins, then least energy over served users.
    Remaining ties go to the earliest (lexicographically smallest) entry.
    """
    if not entries:
        raise ValueError("no candidate assignments")
    return min(range(len(entries)), key=lambda j: _selection_key(entries[j], j))


def _result(strategy: str, scenario: Scenario, assignment: Assignment, hyper: LowerHyper,
            offloaders, local_users, log=(), flags=()) -> EejsResult:
    outcome = solve_lower(assignment, scenario, hyper) if assignment.pairs else None
    served = np.zeros(scenario.n_users, dtype=bool)
    compute = transmit = 0.0
    if outcome is not None:
        served = outcome.feasible.copy()
        energies = [e for e in outcome.energies if e is not None]
        compute = math.fsum(e.compute_j for e in energies)
        transmit = math.fsum(e.transmit_j for e in energies)
    p = scenario.params
    local_j = math.fsum(local_energy(scenario.users[i].task, scenario.users[i], p) for i in local_users)
    return EejsResult(
        strategy=strategy,
        best_assignment=assignment,
        best_outcome=outcome,
        total_energy_j=outcome.total_energy_j if outcome is not None else 0.0,
        compute_energy_j=compute,
        transmit_energy_j=transmit,
        users_served=served,
        offloaders=tuple(offloaders),
        local_users=tuple(local_users),
        local_energy_j=local_j,
        per_assignment_log=tuple(log),
        flags=tuple(flags),
    )


def _unserved(strategy: str, scenario: Scenario, offloaders, local_users, flags) -> EejsResult:
    targets = [LOCAL] * scenario.n_users
    for i in offloaders:
        targets[i] = None
    return _result(strategy, scenario, Assignment(tuple(targets)), LowerHyper(), offloaders,
                   local_users, (), flags)


def eejs_solve(scenario: Scenario, hyper: LowerHyper = LowerHyper()) -> EejsResult:
    """Exhaustive search over injective assignments of the offloading users."""
    offloaders, local_users = offloading_users(scenario)
    if not offloaders:
        return _result("eejs", scenario, Assignment((LOCAL,) * scenario.n_users), hyper,
                       offloaders, local_users)
    candidates = enumerate_assignments(len(offloaders), scenario.n_servers)
    if not candidates:
        return _unserved("eejs", scenario, offloaders, local_users, (TOO_MANY_TASKS,))

    ctx = _Context(scenario)
    log = []
    for compact in candidates:
        full = ctx.drop_impossible(expand_assignment(compact.targets, offloaders, scenario.n_users))
        log.append(ctx.quick_solve(full, hyper))
    best = select_best(log)
    return _result("eejs", scenario, log[best].assignment, hyper, offloaders, local_users, log)


def hungarian_solve(scenario: Scenario, hyper: LowerHyper = LowerHyper()) -> EejsResult:
    """Assignment by the Hungarian method on decoupled single-user costs.

    ``cost[i][k]`` is user i's remote energy on server k when it alone
    holds all subcarriers. The chosen assignment is then re-solved with
    all offloaders competing for subcarriers.
    """
    offloaders, local_users = offloading_users(scenario)
    if not offloaders:
        return _result("hungarian", scenario, Assignment((LOCAL,) * scenario.n_users), hyper,
                       offloaders, local_users)
    if len(offloaders) > scenario.n_servers:
        return _unserved("hungarian", scenario, offloaders, local_users, (TOO_MANY_TASKS,))

    ctx = _Context(scenario)
    cost = np.full((len(offloaders), scenario.n_servers), _INFEASIBLE_COST)
    for r, i in enumerate(offloaders):
        for k in range(scenario.n_servers):
            if ctx.chi[i, k] <= 0:
                continue
            targets = [LOCAL] * scenario.n_users
            targets[i] = k
            entry = ctx.quick_solve(Assignment(tuple(targets)), hyper)
            if entry.feasible:
                cost[r, k] = entry.total_energy_j
            else:
                cost[r, k] = _INFEASIBLE_COST + entry.total_energy_j
    rows, cols = linear_sum_assignment(cost)
    compact = [None] * len(offloaders)
    for r, k in zip(rows, cols):
        compact[r] = int(k)
    full = ctx.drop_impossible(expand_assignment(compact, offloaders, scenario.n_users))
    entry = ctx.quick_solve(full, hyper)
    return _result("hungarian", scenario, full, hyper, offloaders, local_users, (entry,))
