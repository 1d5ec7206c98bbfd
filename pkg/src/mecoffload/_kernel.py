"""Compiled inner loop of the dual subgradient solver.

Mirrors the reference operations in :mod:`mecoffload.lower_level`
(``waterfill_power``, ``phi``, ``assign_subcarriers``, ``update_duals``)
so one iteration here equals one pass through those functions.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)


@njit(cache=True)
def dual_loop(gains, noise_over_gain, demand_bps, chi, pmax, bandwidth, noise,
              alpha0, step_alpha, step_beta, epsilon, max_iter, dual_tol,
              adaptive, grow, shrink, step_cap):
    """Run the water-fill / assign / dual-update loop for one assignment.

    ``gains`` and ``noise_over_gain`` are ``(pairs, subcarriers)``; row j is
    the offloading pair j (sorted by user index). Returns the duals after
    the last update, the allocation computed in the last iteration, and
    convergence diagnostics.
    """
    n_pairs, n_sub = gains.shape
    alpha = alpha0.copy()
    beta = np.zeros(n_pairs)
    mu = np.full(n_pairs, step_alpha)
    nu = np.full(n_pairs, step_beta)
    prev_ga = np.zeros(n_pairs)
    prev_gb = np.zeros(n_pairs)
    # a step may only grow until its subgradient first changes sign;
    # regrowing afterwards lets ownership swaps cycle indefinitely
    settled_a = np.zeros(n_pairs, dtype=np.bool_)
    settled_b = np.zeros(n_pairs, dtype=np.bool_)

    owner = np.full(n_sub, -1, dtype=np.int64)
    power = np.zeros((n_pairs, n_sub))
    prev_power = np.zeros((n_pairs, n_sub))
    cand = np.zeros(n_pairs)
    cand_log = np.zeros(n_pairs)
    level = np.zeros(n_pairs)
    rate = np.zeros(n_pairs)
    total_p = np.zeros(n_pairs)

    converged = False
    iterations = 0
    max_dp = math.inf
    for m in range(max_iter):
        for j in range(n_pairs):
            level[j] = alpha[j] * bandwidth / (LN2 * (chi[j] + beta[j]))
            rate[j] = 0.0
            total_p[j] = 0.0

        for n in range(n_sub):
            best = math.inf
            arg = -1
            for j in range(n_pairs):
                g = gains[j, n]
                p = level[j] - noise_over_gain[j, n]
                if p < 0.0 or g <= 0.0:
                    p = 0.0
                lg = math.log2(1.0 + g * p / noise)
                f = (chi[j] + beta[j]) * p - alpha[j] * bandwidth * lg
                cand[j] = p
                cand_log[j] = lg
                if f < best:
                    best = f
                    arg = j
            owner[n] = arg
            for j in range(n_pairs):
                power[j, n] = cand[j] if j == arg else 0.0
            rate[arg] += bandwidth * cand_log[arg]
            total_p[arg] += cand[arg]

        max_dp = 0.0
        for j in range(n_pairs):
            for n in range(n_sub):
                d = abs(power[j, n] - prev_power[j, n])
                if d > max_dp:
                    max_dp = d
                prev_power[j, n] = power[j, n]
        if m == 0:
            max_dp = math.inf
        iterations = m + 1

        dual_change = 0.0
        # a step still in its growth phase means the multiplier has not yet
        # reached its scale, so small relative changes prove nothing
        growing = False
        for j in range(n_pairs):
            ga = demand_bps[j] - rate[j]
            gb = total_p[j] - pmax[j]
            if adaptive and m > 0:
                if ga * prev_ga[j] < 0.0:
                    mu[j] *= shrink
                    settled_a[j] = True
                elif not settled_a[j] and (alpha[j] > 0.0 or ga > 0.0) and ga != 0.0:
                    mu[j] = min(mu[j] * grow, step_cap * step_alpha)
                    growing = growing or mu[j] < step_cap * step_alpha
                if gb * prev_gb[j] < 0.0:
                    nu[j] *= shrink
                    settled_b[j] = True
                elif not settled_b[j] and (beta[j] > 0.0 or gb > 0.0) and gb != 0.0:
                    nu[j] = min(nu[j] * grow, step_cap * step_beta)
                    growing = growing or nu[j] < step_cap * step_beta
            prev_ga[j] = ga
            prev_gb[j] = gb
            new_a = max(0.0, alpha[j] + mu[j] * ga)
            new_b = max(0.0, beta[j] + nu[j] * gb)
            scale = max(abs(alpha[j]), abs(new_a))
            if scale > 0.0:
                dual_change = max(dual_change, abs(new_a - alpha[j]) / scale)
            scale = max(abs(beta[j]), abs(new_b))
            if scale > 0.0:
                dual_change = max(dual_change, abs(new_b - beta[j]) / scale)
            alpha[j] = new_a
            beta[j] = new_b

        if max_dp <= epsilon and dual_change <= dual_tol and not growing:
            converged = True
            break

    return alpha, beta, owner, power, iterations, converged, max_dp


@njit(cache=True)
def refit_powers(gains, owner, bits_per_hz, noise, pmax):
    """Least-power water-filling per pair over the subcarriers it owns.

    Same rule as ``lower_level.min_power_for_rate``: the level meeting the
    rate target exactly, or the budget-limited level when that needs more
    than ``pmax``. Returns powers and a per-pair "target reached" flag.
    """
    n_pairs, n_sub = gains.shape
    power = np.zeros((n_pairs, n_sub))
    reached = np.zeros(n_pairs, dtype=np.bool_)
    for j in range(n_pairs):
        idx = np.empty(n_sub, dtype=np.int64)
        cnt = 0
        for n in range(n_sub):
            if owner[n] == j and gains[j, n] > 0.0:
                idx[cnt] = n
                cnt += 1
        if bits_per_hz[j] <= 0.0:
            reached[j] = True
            continue
        if cnt == 0:
            continue
        sel = idx[:cnt]
        g = gains[j, sel]
        order = np.argsort(-g, kind="mergesort")
        g = g[order]
        sel = sel[order]
        inv = noise / g
        level = 0.0
        acc = 0.0
        for m in range(1, cnt + 1):
            acc += math.log2(g[m - 1] / noise)
            level = 2.0 ** ((bits_per_hz[j] - acc) / m)
            if m == cnt or level <= inv[m]:
                break
        total = 0.0
        for m in range(cnt):
            total += max(level - inv[m], 0.0)
        if total <= pmax[j]:
            reached[j] = True
        else:
            acc = 0.0
            for m in range(cnt):
                acc += inv[m]
            for m in range(cnt, 0, -1):
                level = (pmax[j] + acc) / m
                if level > inv[m - 1]:
                    break
                acc -= inv[m - 1]
        for m in range(cnt):
            power[j, sel[m]] = max(level - inv[m], 0.0)
    return power, reached


@njit(cache=True)
def initial_alphas(gains, chi, pmax, bandwidth, noise, n_sub_total):
    """Multipliers whose water level puts ``pmax / N`` over each row's median gain."""
    n_pairs = gains.shape[0]
    out = np.zeros(n_pairs)
    for j in range(n_pairs):
        row = gains[j]
        pos = row[row > 0.0]
        if pos.size == 0:
            continue
        out[j] = LN2 * chi[j] * (noise / np.median(pos) + pmax[j] / n_sub_total) / bandwidth
    return out


@njit(cache=True)
def solve_pairs(gains, bits, chi, pmax, bandwidth, noise, step_alpha, step_beta,
                epsilon, max_iter, dual_tol, adaptive, grow, shrink, step_cap, refit):
    n_pairs, n_sub = gains.shape
    noise_over_gain = np.empty_like(gains)
    for j in range(n_pairs):
        for n in range(n_sub):
            noise_over_gain[j, n] = noise / gains[j, n] if gains[j, n] > 0.0 else np.inf
    alpha0 = initial_alphas(gains, chi, pmax, bandwidth, noise, n_sub)
    alpha, beta, owner, power, iterations, converged, max_dp = dual_loop(
        gains, noise_over_gain, bits / chi, chi, pmax, bandwidth, noise, alpha0,
        step_alpha, step_beta, epsilon, max_iter, dual_tol, adaptive, grow, shrink, step_cap)
    if refit:
        power, _ = refit_powers(gains, owner, bits / (chi * bandwidth), noise, pmax)
    rates = np.zeros(n_pairs)
    for j in range(n_pairs):
        acc = 0.0
        for n in range(n_sub):
            if power[j, n] > 0.0:
                acc += math.log2(1.0 + gains[j, n] * power[j, n] / noise)
        rates[j] = bandwidth * acc
    return alpha, beta, owner, power, rates, iterations, converged, max_dp
