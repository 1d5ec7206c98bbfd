"""Power and subcarrier allocation for a fixed offloading assignment.

Solves the convex surrogate of the transmit-energy problem, minimising
``sum_i chi_i * sum_n p_in`` subject to each user's per-device power budget,
exclusive subcarrier ownership, and the rate needed to upload the task
within its slack time. The solver is Lagrangian: water-filling powers for
given multipliers, per-subcarrier argmin ownership, and projected
subgradient updates of the multipliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernel
from .model import (EnergyBreakdown, remote_compute_energy,
                    remote_compute_time)
from .scenario import Scenario

__all__ = [
    "LOCAL",
    "Assignment",
    "Allocation",
    "DualState",
    "LowerHyper",
    "LowerSolveResult",
    "DeadlineImpossibleError",
    "slack_time",
    "initial_alpha",
    "waterfill_power",
    "phi",
    "assign_subcarriers",
    "update_duals",
    "min_power_for_rate",
    "solve_lower",
]

LN2 = math.log(2.0)
LOCAL = -1
POWER_TOL_W = 1e-9
RATE_REL_TOL = 1e-6


class DeadlineImpossibleError(ValueError):
    """Remote compute time alone already exceeds the task deadline."""


@dataclass(frozen=True)
class Assignment:
    """Offloading decision per user.

    ``targets[i]`` is a server index, ``LOCAL`` for on-device execution, or
    ``None`` for an offloader left without a server.
    """

    targets: Tuple[Optional[int], ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        servers = [k for k in self.targets if k is not None and k != LOCAL]
        if any(k < 0 for k in servers):
            raise ValueError(f"invalid server index in {self.targets}")
        if len(set(servers)) != len(servers):
            raise ValueError(f"server received more than one task: {self.targets}")

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        """``(user, server)`` pairs of users that offload, ordered by user."""
        return tuple((i, k) for i, k in enumerate(self.targets) if k is not None and k != LOCAL)

    def server_of(self, i: int) -> Optional[int]:
        k = self.targets[i]
        return None if k is None or k == LOCAL else k

    def __str__(self):
        def fmt(k):
            return "-" if k is None else ("L" if k == LOCAL else str(k))
        return "(" + ",".join(fmt(k) for k in self.targets) + ")"


@dataclass(frozen=True, eq=False)
class Allocation:
    """Subcarrier ownership (user index or -1) and per-(user, subcarrier) power."""

    subcarrier_owner: np.ndarray
    power_w: np.ndarray
    assignment: Assignment

    def owner_pair(self, n: int) -> Optional[Tuple[int, int]]:
        i = int(self.subcarrier_owner[n])
        if i < 0:
            return None
        return (i, self.assignment.server_of(i))

    def user_subcarriers(self, i: int) -> Sequence[Tuple[int, float]]:
        return [(int(n), float(self.power_w[i, n])) for n in np.flatnonzero(self.subcarrier_owner == i)]


@dataclass(frozen=True, eq=False)
class DualState:
    alpha: np.ndarray   # (users, servers)
    beta: np.ndarray    # (users,)
    iteration: int = 0


@dataclass(frozen=True)
class LowerHyper:
    """Dual-solver settings.

    ``step_rule="fixed"`` applies ``step_alpha``/``step_beta`` unchanged at
    every iteration. ``"adaptive"`` starts from them and, per multiplier,
    grows the step by ``step_grow`` while the subgradient keeps its sign
    (capped at ``step_cap`` times the initial step) and multiplies it by
    ``step_shrink`` on every sign change. After the first sign change a
    step never grows again. While any step is still growing the loop is not
    allowed to declare convergence, since a tiny initial step makes the
    relative dual change look settled long before the duals have moved.
    """

    step_alpha: float = 2e-18
    step_beta: float = 1e-5
    epsilon: float = 1e-5
    max_iter: int = 600
    step_rule: str = "adaptive"
    step_grow: float = 2.0
    step_shrink: float = 0.5
    step_cap: float = 1e12
    dual_tol: float = 1e-4
    refit: bool = True

    def __post_init__(self):
        if self.step_rule not in ("adaptive", "fixed"):
            raise ValueError(f"unknown step_rule {self.step_rule!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step_alpha <= 0 or self.step_beta <= 0 or self.epsilon <= 0:
            raise ValueError("step sizes and epsilon must be positive")


@dataclass(frozen=True, eq=False)
class LowerSolveResult:
    allocation: Allocation
    duals: DualState
    converged: bool
    iterations_used: int
    objective_zeta_j: float
    true_transmit_energy_j: float
    per_user_rate_bps: np.ndarray
    feasible: np.ndarray
    energies: Tuple[Optional[EnergyBreakdown], ...] = field(repr=False)
    slack_s: np.ndarray = field(repr=False)
    c10_gap: np.ndarray = field(repr=False)
    last_power_change_w: float = math.inf

    @property
    def offloaders(self) -> Tuple[int, ...]:
        return tuple(i for i, _ in self.allocation.assignment.pairs)

    @property
    def total_energy_j(self) -> float:
        return math.fsum(e.total_j for e in self.energies if e is not None)


# --- single-step operations ----------------------------------------------

def slack_time(i: int, assignment: Assignment, scenario: Scenario) -> float:
    """Deadline minus remote compute time for offloading user ``i``."""
    k = assignment.server_of(i)
    if k is None:
        raise ValueError(f"user {i} does not offload under {assignment}")
    task = scenario.users[i].task
    chi = task.deadline_s - remote_compute_time(task, scenario.servers[k])
    if chi <= 0:
        raise DeadlineImpossibleError(
            f"user {i} on server {k}: compute time exceeds deadline by {-chi:.3e} s")
    return chi


def initial_alpha(chi: float, gains_row: np.ndarray, max_power_w: float, scenario: Scenario) -> float:
    """Starting rate multiplier: water level at ``P^m / N`` over the median gain."""
    p = scenario.params
    positive = gains_row[gains_row > 0]
    if positive.size == 0:
        return 0.0
    g_med = float(np.median(positive))
    return LN2 * chi * (p.noise_power_w / g_med + max_power_w / p.num_subcarriers) / p.subcarrier_bandwidth_hz


def waterfill_power(i: int, n: int, k: int, duals: DualState, chi_i: float, scenario: Scenario) -> float:
    g = scenario.gains[i, n, k]
    if g <= 0:
        return 0.0
    p = scenario.params
    level = duals.alpha[i, k] * p.subcarrier_bandwidth_hz / (LN2 * (chi_i + duals.beta[i]))
    return max(level - p.noise_power_w / g, 0.0)


def phi(i: int, n: int, k: int, p_star: float, duals: DualState, chi_i: float, scenario: Scenario) -> float:
    """Partial derivative of the Lagrangian with respect to ``w[i, n, k]``."""
    p = scenario.params
    g = scenario.gains[i, n, k]
    return ((chi_i + duals.beta[i]) * p_star
            - duals.alpha[i, k] * p.subcarrier_bandwidth_hz * math.log2(1.0 + g * p_star / p.noise_power_w))


def assign_subcarriers(phi_matrix: np.ndarray) -> np.ndarray:
    """Index of the minimising row for every column.

    Rows are candidate pairs ordered by (user, server); ``np.argmin`` keeps
    the first minimum, which gives the lowest-index tie-break.
    """
    phi_matrix = np.asarray(phi_matrix, dtype=np.float64)
    if phi_matrix.ndim != 2 or phi_matrix.shape[0] == 0:
        raise ValueError("phi_matrix must be (pairs, subcarriers) with at least one pair")
    return np.argmin(phi_matrix, axis=0)


def update_duals(duals: DualState, allocation: Allocation, rates: np.ndarray,
                 assignment: Assignment, scenario: Scenario,
                 step_alpha, step_beta) -> DualState:
    """One projected subgradient step on the rate and power multipliers.

    ``step_alpha`` and ``step_beta`` may be scalars or per-user arrays.
    """
    alpha = duals.alpha.copy()
    beta = duals.beta.copy()
    step_alpha = np.broadcast_to(np.asarray(step_alpha, dtype=np.float64), beta.shape)
    step_beta = np.broadcast_to(np.asarray(step_beta, dtype=np.float64), beta.shape)
    for i, k in assignment.pairs:
        user = scenario.users[i]
        chi = slack_time(i, assignment, scenario)
        alpha[i, k] = max(0.0, alpha[i, k] + step_alpha[i] * (user.task.data_size_bits / chi - rates[i]))
        used = float(np.sum(allocation.power_w[i][allocation.subcarrier_owner == i]))
        beta[i] = max(0.0, beta[i] + step_beta[i] * (used - user.max_tx_power_w))
    return DualState(alpha, beta, duals.iteration + 1)


def min_power_for_rate(gains_row: np.ndarray, bits_per_hz: float, noise: float,
                       max_power: float) -> Tuple[np.ndarray, bool]:
    """Least total power reaching ``bits_per_hz`` (sum of log2 terms) on the given gains.

    Classic water-filling: the active set is the ``m`` strongest channels
    and the water level is ``2 ** ((bits - sum log2(g/noise)) / m)`` in units
    of noise. When the required power exceeds ``max_power`` the budget is
    water-filled instead (maximum rate) and ``False`` is returned.
    """
    out = np.zeros_like(gains_row, dtype=np.float64)
    idx = np.flatnonzero(gains_row > 0)
    if idx.size == 0 or bits_per_hz <= 0:
        return out, bits_per_hz <= 0
    order = idx[np.argsort(-gains_row[idx], kind="stable")]
    inv = noise / gains_row[order]                 # increasing
    log_snr = np.log2(gains_row[order] / noise)    # decreasing
    level = 0.0
    for m in range(1, order.size + 1):
        level = 2.0 ** ((bits_per_hz - np.sum(log_snr[:m])) / m)
        # level is in W; active set valid when the next channel would stay dry
        if m == order.size or level <= inv[m]:
            break
    p = np.maximum(level - inv, 0.0)
    if p.sum() <= max_power:
        out[order] = p
        return out, True
    for m in range(order.size, 0, -1):
        level = (max_power + np.sum(inv[:m])) / m
        if level > inv[m - 1]:
            break
    out[order] = np.maximum(level - inv, 0.0)
    return out, False


# --- full solve ----------------------------------------------------------

def _pair_arrays(assignment: Assignment, scenario: Scenario):
    pairs = assignment.pairs
    if not pairs:
        raise ValueError("assignment has no offloading users")
    users, servers = zip(*pairs)
    users, servers = np.array(users), np.array(servers)
    gains = np.ascontiguousarray(scenario.gains[users, :, servers])
    chi = np.array([slack_time(i, assignment, scenario) for i in users])
    bits = np.array([scenario.users[i].task.data_size_bits for i in users], dtype=np.float64)
    pmax = np.array([scenario.users[i].max_tx_power_w for i in users])
    return users, servers, gains, chi, bits, pmax


def _solve_arrays(gains, bits, chi, pmax, params, hyper: LowerHyper):
    return _kernel.solve_pairs(
        gains, bits, chi, pmax, params.subcarrier_bandwidth_hz, params.noise_power_w,
        hyper.step_alpha, hyper.step_beta, hyper.epsilon, hyper.max_iter, hyper.dual_tol,
        hyper.step_rule == "adaptive", hyper.step_grow, hyper.step_shrink, hyper.step_cap,
        hyper.refit)


def solve_lower(assignment: Assignment, scenario: Scenario, hyper: LowerHyper = LowerHyper()) -> LowerSolveResult:
    """Allocate power and subcarriers for ``assignment``.

    Raises :class:`DeadlineImpossibleError` if any offloader has no slack
    left after remote computation. Users ending with no usable subcarrier
    are returned as infeasible rather than raising.
    """
    users, servers, gains, chi, bits, pmax = _pair_arrays(assignment, scenario)
    alpha, beta, owner, power, rates, iterations, converged, max_dp = _solve_arrays(
        gains, bits, chi, pmax, scenario.params, hyper)
    return _evaluate(assignment, scenario, users, servers, gains, chi, bits, pmax,
                     owner, power, rates, alpha, beta, int(iterations), bool(converged), float(max_dp))


def _evaluate(assignment, scenario, users, servers, gains, chi, bits, pmax, owner, power,
              rates_pair, alpha, beta, iterations, converged, max_dp) -> LowerSolveResult:
    p = scenario.params
    n_users, n_servers = scenario.n_users, scenario.n_servers
    totals = power.sum(axis=1)

    owner_user = np.where(owner >= 0, users[np.maximum(owner, 0)], -1)
    power_full = np.zeros((n_users, p.num_subcarriers))
    power_full[users] = power
    rates = np.zeros(n_users)
    rates[users] = rates_pair
    feasible = np.zeros(n_users, dtype=bool)
    slack = np.full(n_users, np.nan)
    gap = np.full(n_users, np.nan)
    energies: list = [None] * n_users
    alpha_full = np.zeros((n_users, n_servers))
    alpha_full[users, servers] = alpha
    beta_full = np.zeros(n_users)
    beta_full[users] = beta

    transmit_total = 0.0
    for j, (i, k) in enumerate(zip(users, servers)):
        task = scenario.users[i].task
        slack[i] = chi[j]
        compute = remote_compute_energy(task, scenario.servers[k], p)
        owns = bool(np.any(owner == j))
        if rates_pair[j] > 0:
            transmit = totals[j] * bits[j] / rates_pair[j]
            upload = bits[j] / rates_pair[j]
            gap[i] = (chi[j] - upload) / chi[j]
            feasible[i] = (owns and totals[j] <= pmax[j] + POWER_TOL_W
                           and upload <= chi[j] * (1 + RATE_REL_TOL))
        else:
            # nothing uploaded, so nothing spent on the air interface
            transmit = 0.0
        transmit_total += transmit
        energies[i] = EnergyBreakdown.of(compute, transmit)

    allocation = Allocation(owner_user, power_full, assignment)
    return LowerSolveResult(
        allocation=allocation,
        duals=DualState(alpha_full, beta_full, iterations),
        converged=converged,
        iterations_used=iterations,
        objective_zeta_j=float(np.dot(chi, totals)),
        true_transmit_energy_j=transmit_total,
        per_user_rate_bps=rates,
        feasible=feasible,
        energies=tuple(energies),
        slack_s=slack,
        c10_gap=gap,
        last_power_change_w=max_dp,
    )

