"""Per-drop records, successful offloading probability, and grouped summaries."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

__all__ = ["DropRecord", "GroupStats", "AggregateReport", "sop", "aggregate", "GROUP_KEYS"]

GROUP_KEYS = ("strategy", "K", "profile")


@dataclass(frozen=True)
class DropRecord:
    seed: int
    K: int
    I_prime: int
    N: int
    strategy: str
    total_j: float
    compute_j: float
    transmit_j: float
    served: int
    offloaders: int
    converged_fraction: float
    profile: str = "table"
    local_j: float = 0.0
    wall_ms: Optional[float] = None

    def __post_init__(self):
        if self.served > self.offloaders:
            raise ValueError(f"served ({self.served}) exceeds offloaders ({self.offloaders})")
        if min(self.total_j, self.compute_j, self.transmit_j) < 0:
            raise ValueError("energies must be nonnegative")
        if not math.isclose(self.total_j, self.compute_j + self.transmit_j, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"total {self.total_j!r} != compute + transmit "
                             f"{self.compute_j + self.transmit_j!r}")


def sop(records: Iterable[DropRecord]) -> Optional[float]:
    """Served offloaders over all offloaders, pooled across drops.

    Returns ``None`` when the batch has no offloading users.
    """
    served = offloaders = 0
    for r in records:
        served += r.served
        offloaders += r.offloaders
    if offloaders == 0:
        return None
    return served / offloaders


@dataclass(frozen=True)
class GroupStats:
    strategy: str
    K: int
    profile: str
    drops: int
    mean_total_j: float
    mean_compute_j: float
    mean_transmit_j: float
    std_total_j: float
    std_compute_j: float
    std_transmit_j: float
    sop: Optional[float]
    mean_converged_fraction: float


@dataclass(frozen=True)
class AggregateReport:
    groups: Tuple[GroupStats, ...]
    drop_count: int

    def get(self, strategy: str, K: int, profile: str = "table") -> GroupStats:
        for g in self.groups:
            if (g.strategy, g.K, g.profile) == (strategy, K, profile):
                return g
        raise KeyError((strategy, K, profile))


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    mean = math.fsum(values) / len(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(records: Iterable[DropRecord]) -> AggregateReport:
    """Means and sample standard deviations per (strategy, K, profile).

    The mean total is formed as mean compute + mean transmit so the energy
    decomposition carries over exactly.
    """
    groups: Dict[Tuple[str, int, str], List[DropRecord]] = {}
    seeds = set()
    for r in records:
        groups.setdefault((r.strategy, r.K, r.profile), []).append(r)
        seeds.add(r.seed)
    if not groups:
        raise ValueError("no records to aggregate")

    out = []
    for (strategy, K, profile) in sorted(groups):
        rs = groups[(strategy, K, profile)]
        mc, sc = _mean_std([r.compute_j for r in rs])
        mt, st = _mean_std([r.transmit_j for r in rs])
        _, stot = _mean_std([r.total_j for r in rs])
        out.append(GroupStats(
            strategy=strategy, K=K, profile=profile, drops=len(rs),
            mean_total_j=mc + mt, mean_compute_j=mc, mean_transmit_j=mt,
            std_total_j=stot, std_compute_j=sc, std_transmit_j=st,
            sop=sop(rs),
            mean_converged_fraction=math.fsum(r.converged_fraction for r in rs) / len(rs),
        ))
    return AggregateReport(tuple(out), len(seeds))
