"""Geographically structured train/validation plans over groups of units."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from popbench._rng import rng_for
from popbench.datamodel import Dataset, ShareVector
from popbench.errors import DataError, SplitError


@dataclass(frozen=True)
class GroupedIndex:
    groups: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        groups = {g: tuple(ids) for g, ids in sorted(self.groups.items())}
        seen: set[str] = set()
        for g, ids in groups.items():
            if not ids:
                raise DataError(f"group {g!r} is empty")
            dup = seen.intersection(ids)
            if dup:
                raise DataError(f"unit {sorted(dup)[0]!r} belongs to more than one group")
            seen.update(ids)
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_dataset(cls, dataset: Dataset, level: str = "group") -> "GroupedIndex":
        return cls(dataset.groups(level))

    @property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(self.groups)

    @property
    def unit_ids(self) -> tuple[str, ...]:
        return tuple(sorted(u for ids in self.groups.values() for u in ids))


@dataclass(frozen=True)
class SplitConstraints:
    group_sample_frac: float = 0.70
    unit_frac_range: tuple[float, float] = (0.60, 0.80)
    pop_frac_range: tuple[float, float] = (0.65, 0.75)
    max_attempts: int = 1000

    def __post_init__(self):
        if not 0 < self.group_sample_frac < 1:
            raise DataError("group_sample_frac must lie in (0, 1)")
        for name in ("unit_frac_range", "pop_frac_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi < 1:
                raise DataError(f"{name} must satisfy 0 < low < high < 1")
        if self.max_attempts < 1:
            raise DataError("max_attempts must be positive")

    def accepts(self, unit_frac: float, pop_frac: float) -> bool:
        return (self.unit_frac_range[0] <= unit_frac <= self.unit_frac_range[1]
                and self.pop_frac_range[0] <= pop_frac <= self.pop_frac_range[1])

    def miss(self, unit_frac: float, pop_frac: float) -> float:
        def gap(v, lo, hi):
            return max(lo - v, 0.0, v - hi)
        return gap(unit_frac, *self.unit_frac_range) + gap(pop_frac, *self.pop_frac_range)


@dataclass(frozen=True)
class SplitIteration:
    iteration: int
    train_groups: frozenset[str]
    train_units: frozenset[str]
    train_unit_frac: float
    train_pop_frac: float
    validation_units: frozenset[str] = field(default=frozenset())


@dataclass(frozen=True)
class SplitPlan:
    iterations: tuple[SplitIteration, ...]
    kind: str = "monte_carlo"

    def __len__(self):
        return len(self.iterations)

    def __iter__(self):
        return iter(self.iterations)


def _fractions(index: GroupedIndex, share_of: Mapping[str, float], train_groups) -> tuple[float, float, frozenset]:
    train = frozenset(u for g in train_groups for u in index.groups[g])
    n_total = sum(len(v) for v in index.groups.values())
    total = math.fsum(share_of[u] for ids in index.groups.values() for u in ids)
    pop = math.fsum(share_of[u] for u in train) / total
    return len(train) / n_total, pop, train


def _one_iteration(index, share_of, all_units, constraints, k, seed, it) -> SplitIteration:
    rng = rng_for(seed, it)
    gids = index.group_ids
    best = None
    for _ in range(constraints.max_attempts):
        pick = rng.choice(len(gids), size=k, replace=False)
        groups = frozenset(gids[i] for i in pick)
        uf, pf, train = _fractions(index, share_of, groups)
        if constraints.accepts(uf, pf):
            return SplitIteration(it, groups, train, uf, pf, all_units - train)
        miss = constraints.miss(uf, pf)
        if best is None or miss < best[0]:
            best = (miss, uf, pf)
    raise SplitError(
        f"iteration {it}: no acceptable split after {constraints.max_attempts} attempts "
        f"(closest miss: unit_frac={best[1]:.4f}, pop_frac={best[2]:.4f})"
    )


def monte_carlo_splits(
    index: GroupedIndex,
    shares: ShareVector | Mapping[str, float],
    constraints: SplitConstraints = SplitConstraints(),
    n_iter: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
) -> SplitPlan:
    """Rejection-sample ceil(frac * G) training groups per iteration.

    Iteration ``i`` draws from its own stream (seed, i), so the plan is the
    same for any ``n_jobs``.
    """
    if len(index.groups) < 3:
        raise DataError("monte_carlo_splits needs at least 3 groups")
    if n_iter < 1:
        raise DataError("n_iter must be >= 1")
    share_of = shares.as_dict() if isinstance(shares, ShareVector) else dict(shares)
    # 0.7 * 10 evaluates to 7.000000000000001; absorb that before the ceiling
    k = math.ceil(constraints.group_sample_frac * len(index.groups) - 1e-9)
    k = min(max(k, 1), len(index.groups) - 1)
    all_units = frozenset(index.unit_ids)
    args = (index, share_of, all_units, constraints, k, seed)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            its = list(pool.map(lambda i: _one_iteration(*args, i), range(n_iter)))
    else:
        its = [_one_iteration(*args, i) for i in range(n_iter)]
    return SplitPlan(tuple(its), "monte_carlo")


def leave_one_group_out(
    index: GroupedIndex, shares: ShareVector | Mapping[str, float] | None = None
) -> SplitPlan:
    """One iteration per group (in id order) with that group held out."""
    if len(index.groups) < 2:
        raise DataError("leave_one_group_out needs at least 2 groups")
    share_of = None
    if shares is not None:
        share_of = shares.as_dict() if isinstance(shares, ShareVector) else dict(shares)
    all_units = frozenset(index.unit_ids)
    its = []
    for i, held in enumerate(index.group_ids):
        train_groups = frozenset(g for g in index.group_ids if g != held)
        if share_of is not None:
            uf, pf, train = _fractions(index, share_of, train_groups)
        else:
            train = all_units - frozenset(index.groups[held])
            uf, pf = len(train) / len(all_units), float("nan")
        its.append(SplitIteration(i, train_groups, train, uf, pf, frozenset(index.groups[held])))
    return SplitPlan(tuple(its), "leave_one_group_out")


@dataclass(frozen=True)
class SplitReport:
    valid: bool
    message: str

    def __bool__(self):
        return self.valid


def validate_split(
    plan: SplitPlan,
    index: GroupedIndex,
    shares: ShareVector | Mapping[str, float],
    constraints: SplitConstraints | None = SplitConstraints(),
) -> SplitReport:
    """Recompute partition properties and fractions; report the first violation.

    Pass ``constraints=None`` to check only partition and group atomicity
    (leave-one-group-out plans are not bound by the fraction windows).
    """
    share_of = shares.as_dict() if isinstance(shares, ShareVector) else dict(shares)
    all_units = frozenset(index.unit_ids)
    group_of = {u: g for g, ids in index.groups.items() for u in ids}
    for it in plan:
        val = it.validation_units or (all_units - it.train_units)
        both = it.train_units & val
        if both:
            return SplitReport(False, f"iteration {it.iteration}: unit {sorted(both)[0]!r} in both train and validation")
        if (it.train_units | val) != all_units:
            missing = sorted(all_units - (it.train_units | val))
            extra = sorted((it.train_units | val) - all_units)
            bad = missing[0] if missing else extra[0]
            return SplitReport(False, f"iteration {it.iteration}: unit {bad!r} not covered exactly once")
        for u in it.train_units:
            if group_of[u] not in it.train_groups:
                return SplitReport(False, f"iteration {it.iteration}: group {group_of[u]!r} split across sides")
        for u in val:
            if group_of[u] in it.train_groups:
                return SplitReport(False, f"iteration {it.iteration}: group {group_of[u]!r} split across sides")
        if constraints is not None:
            uf, pf, _ = _fractions(index, share_of, it.train_groups)
            if not constraints.accepts(uf, pf):
                return SplitReport(
                    False, f"iteration {it.iteration}: fractions unit={uf:.4f} pop={pf:.4f} outside constraints"
                )
    return SplitReport(True, f"{len(plan)} iterations valid")


def write_splits_csv(plan: SplitPlan, index: GroupedIndex, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "group_id", "is_train"])
        for it in plan:
            for g in index.group_ids:
                w.writerow([it.iteration, g, int(g in it.train_groups)])


def read_splits_csv(path, index: GroupedIndex, shares) -> SplitPlan:
    """Rebuild a plan from its audit export for an exact re-run."""
    train: dict[int, set[str]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups = train.setdefault(int(row["iteration"]), set())
            if row["is_train"] in ("1", "true", "True"):
                groups.add(row["group_id"])
    share_of = shares.as_dict() if isinstance(shares, ShareVector) else dict(shares)
    all_units = frozenset(index.unit_ids)
    its = []
    for i in sorted(train):
        uf, pf, units = _fractions(index, share_of, train[i])
        its.append(SplitIteration(i, frozenset(train[i]), units, uf, pf, all_units - units))
    return SplitPlan(tuple(its), "monte_carlo")
