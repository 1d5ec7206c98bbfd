"""Monte Carlo sweeps over server counts, deadline profiles, and strategies.

Every (drop, profile, K) cell draws its scenario from ``base_seed + drop``,
so all strategies in a cell see the same snapshot, and because scenario
generation is nested, larger K extends the smaller-K snapshot of the same
drop. Rows are emitted in (drop, profile, strategy, K) order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml

from .baselines import aas_solve, local_only, mdoa_solve, roa_solve
from .lower_level import LowerHyper
from .metrics import DropRecord
from .scenario import Scenario, ScenarioRanges, generate_scenario
from .upper_level import EejsResult, eejs_solve, hungarian_solve, offloading_users

__all__ = [
    "STRATEGIES",
    "CSV_SCHEMA",
    "CSV_COLUMNS",
    "ConfigError",
    "Profile",
    "ExperimentConfig",
    "load_config",
    "run_strategy",
    "record_for",
    "run_drop",
    "run_experiment",
    "write_csv",
    "read_csv",
]

STRATEGIES = ("eejs", "hungarian", "mdoa", "roa", "aas", "local")
CSV_SCHEMA = "# mecoffload-results v1"
CSV_COLUMNS = ("seed", "K", "I_prime", "N", "strategy", "total_j", "compute_j", "transmit_j",
               "served", "offloaders", "converged_fraction", "wall_ms", "profile", "local_j")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    name: str
    deadline_s: Optional[Tuple[float, float]] = None
    strategies: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class ExperimentConfig:
    base_seed: int = 0
    drops: int = 200
    users: int = 3
    subcarriers: int = 64
    servers: Tuple[int, ...] = (3, 4, 5, 6, 7, 8, 9)
    strategies: Tuple[str, ...] = STRATEGIES
    profiles: Tuple[Profile, ...] = (Profile("table"),)
    solver: LowerHyper = field(default_factory=LowerHyper)
    scenario: ScenarioRanges = field(default_factory=ScenarioRanges)
    timing: bool = False
    workers: int = 1

    def ranges_for(self, profile: Profile) -> ScenarioRanges:
        if profile.deadline_s is None:
            return self.scenario
        return dataclasses.replace(self.scenario, deadline_s=profile.deadline_s)

    def strategies_for(self, profile: Profile) -> Tuple[str, ...]:
        if profile.strategies is None:
            return self.strategies
        return tuple(s for s in self.strategies if s in profile.strategies)


def _pair(value, name) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name}: expected [low, high]")
    lo, hi = float(value[0]), float(value[1])
    if not 0 < lo <= hi:
        raise ConfigError(f"{name}: need 0 < low <= high, got {value!r}")
    return (lo, hi)


def _dataclass_from(cls, doc, name):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            lo, hi = _pair(value, f"{name}.{key}")
            kind = type(default[0])
            kwargs[key] = (kind(lo), kind(hi))
        elif isinstance(default, bool):
            kwargs[key] = bool(value)
        elif isinstance(default, int):
            kwargs[key] = int(value)
        elif isinstance(default, float):
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(doc: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    allowed = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}")

    servers = doc.get("servers", list(ExperimentConfig.servers))
    if isinstance(servers, int):
        servers = [servers]
    if not servers or any(int(k) < 1 for k in servers):
        raise ConfigError("servers: need a nonempty list of positive counts")
    strategies = tuple(doc.get("strategies", STRATEGIES))
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad:
        raise ConfigError(f"strategies: unknown {bad}; choose from {list(STRATEGIES)}")

    profiles = []
    for j, p in enumerate(doc.get("profiles") or [{"name": "table"}]):
        if not isinstance(p, dict) or "name" not in p:
            raise ConfigError(f"profiles[{j}]: expected a mapping with a name")
        extra = set(p) - {"name", "deadline_s", "strategies"}
        if extra:
            raise ConfigError(f"profiles[{j}]: unknown keys {sorted(extra)}")
        deadline = _pair(p["deadline_s"], f"profiles[{j}].deadline_s") if p.get("deadline_s") is not None else None
        only = tuple(p["strategies"]) if p.get("strategies") is not None else None
        if only is not None and any(s not in STRATEGIES for s in only):
            raise ConfigError(f"profiles[{j}].strategies: unknown strategy in {list(only)}")
        profiles.append(Profile(str(p["name"]), deadline, only))
    if len({p.name for p in profiles}) != len(profiles):
        raise ConfigError("profiles: names must be unique")

    cfg = ExperimentConfig(
        base_seed=int(doc.get("base_seed", 0)),
        drops=int(doc.get("drops", 200)),
        users=int(doc.get("users", 3)),
        subcarriers=int(doc.get("subcarriers", 64)),
        servers=tuple(int(k) for k in servers),
        strategies=strategies,
        profiles=tuple(profiles),
        solver=_dataclass_from(LowerHyper, doc.get("solver"), "solver"),
        scenario=_dataclass_from(ScenarioRanges, doc.get("scenario"), "scenario"),
        timing=bool(doc.get("timing", False)),
        workers=int(doc.get("workers", 1)),
    )
    if cfg.drops < 1 or cfg.users < 1 or cfg.subcarriers < 1 or cfg.workers < 1:
        raise ConfigError("drops, users, subcarriers and workers must be >= 1")
    if cfg.base_seed < 0 or cfg.base_seed + cfg.drops > 2 ** 64:
        raise ConfigError("base_seed out of range")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from None
    return config_from_dict(doc or {})


def run_strategy(name: str, scenario: Scenario, seed: int, hyper: LowerHyper):
    if name == "eejs":
        return eejs_solve(scenario, hyper)
    if name == "hungarian":
        return hungarian_solve(scenario, hyper)
    if name == "mdoa":
        return mdoa_solve(scenario, hyper)
    if name == "roa":
        return roa_solve(scenario, seed, hyper)
    if name == "aas":
        return aas_solve(scenario)
    if name == "local":
        return local_only(scenario)
    raise ValueError(f"unknown strategy {name!r}")


def record_for(name: str, result, scenario: Scenario, seed: int, profile: str,
               wall_ms: Optional[float] = None) -> DropRecord:
    n_off = len(offloading_users(scenario)[0])
    if name == "local":
        return DropRecord(seed, scenario.n_servers, n_off, scenario.n_subcarriers, name,
                          result.total_energy_j, result.total_energy_j, 0.0,
                          result.served_count, scenario.n_users, 1.0, profile, 0.0, wall_ms)
    res: EejsResult = result
    if res.per_assignment_log:
        conv = sum(e.converged for e in res.per_assignment_log) / len(res.per_assignment_log)
    else:
        conv = 1.0 if res.converged or res.best_outcome is None else 0.0
    return DropRecord(seed, scenario.n_servers, res.offloader_count, scenario.n_subcarriers, name,
                      res.compute_energy_j + res.transmit_energy_j, res.compute_energy_j,
                      res.transmit_energy_j, res.served_count, res.offloader_count, conv,
                      profile, res.local_energy_j, wall_ms)


def run_drop(cfg: ExperimentConfig, drop: int) -> List[DropRecord]:
    seed = cfg.base_seed + drop
    rows = []
    for profile in cfg.profiles:
        ranges = cfg.ranges_for(profile)
        scenarios = {K: generate_scenario(seed, cfg.users, K, cfg.subcarriers, ranges) for K in cfg.servers}
        for name in cfg.strategies_for(profile):
            for K in cfg.servers:
                start = time.perf_counter()
                result = run_strategy(name, scenarios[K], seed, cfg.solver)
                wall = (time.perf_counter() - start) * 1e3 if cfg.timing else None
                rows.append(record_for(name, result, scenarios[K], seed, profile.name, wall))
    return rows


def _run_drop_star(args):
    return run_drop(*args)


def run_experiment(cfg: ExperimentConfig, progress=None) -> List[DropRecord]:
    records: List[DropRecord] = []
    jobs = [(cfg, d) for d in range(cfg.drops)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            # map preserves submission order regardless of completion order
            for d, rows in enumerate(pool.map(_run_drop_star, jobs)):
                records.extend(rows)
                if progress:
                    progress(d + 1, cfg.drops)
    else:
        for d, job in enumerate(jobs):
            records.extend(_run_drop_star(job))
            if progress:
                progress(d + 1, cfg.drops)
    return records


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(records: Sequence[DropRecord], path) -> None:
    """Write records atomically; an interrupted run leaves no partial file."""
    buf = io.StringIO()
    buf.write(CSV_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".results-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path) -> List[DropRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != CSV_SCHEMA:
            raise ConfigError(f"{path}: expected schema line {CSV_SCHEMA!r}, got {first!r}")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ConfigError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(DropRecord(
                seed=int(row["seed"]), K=int(row["K"]), I_prime=int(row["I_prime"]), N=int(row["N"]),
                strategy=row["strategy"], total_j=float(row["total_j"]), compute_j=float(row["compute_j"]),
                transmit_j=float(row["transmit_j"]), served=int(row["served"]),
                offloaders=int(row["offloaders"]), converged_fraction=float(row["converged_fraction"]),
                wall_ms=float(row["wall_ms"]) if row["wall_ms"] else None,
                profile=row["profile"], local_j=float(row["local_j"]),
            ))
        return out
