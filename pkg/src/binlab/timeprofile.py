"""First-visit time profiling: trace replay, profile merging, ordering and
partition filling for start-up-aware layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class UnknownFunction(Exception):
    pass


class UniverseMismatch(Exception):
    pass


class InvalidArgument(Exception):
    pass


@dataclass
class Counter:
    first_visit: int | None = None
    last_visit: int | None = None
    runs: int = 0

    @property
    def startup_score(self):
        if self.first_visit is None:
            return None
        return self.last_visit - self.first_visit


@dataclass
class TimeProfile:
    universe: tuple  # function names, declaration order
    counters: dict = field(default_factory=dict)  # name -> Counter
    function_counter: int = 0

    def counter(self, name: str) -> Counter:
        return self.counters.setdefault(name, Counter())

    def visited(self):
        return [n for n in self.counters
                if self.counters[n].first_visit is not None]

    def to_json_dict(self) -> dict:
        out = {}
        for name in self.universe:
            c = self.counters.get(name)
            if c is None or c.first_visit is None:
                continue
            out[name] = {"first": c.first_visit, "last": c.last_visit,
                         "runs": c.runs,
                         "startup_score": c.startup_score}
        return out

    def dump_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def read_trace(text: str) -> list:
    """One function name per line; '#' starts a comment."""
    names = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return names


def record_run(trace, universe) -> TimeProfile:
    """Replay a start-up call trace: the global counter advances only on the
    first visit of a function, so first-visit values stay contiguous."""
    universe = tuple(universe)
    known = set(universe)
    profile = TimeProfile(universe=universe)
    c = 0
    for name in trace:
        if name not in known:
            raise UnknownFunction(name)
        ctr = profile.counter(name)
        if ctr.first_visit is None:
            ctr.first_visit = c
            ctr.last_visit = c
            ctr.runs = 1
            c += 1
        else:
            ctr.last_visit = c
    profile.function_counter = c
    return profile


def merge_profiles(p: TimeProfile, q: TimeProfile) -> TimeProfile:
    """Runs-weighted mean of visit counters, re-normalized to dense first-visit
    ranks (ties broken by function name)."""
    if set(p.universe) != set(q.universe):
        raise UniverseMismatch("profiles cover different function universes")

    means = {}
    for name in p.universe:
        cp = p.counters.get(name, Counter())
        cq = q.counters.get(name, Counter())
        runs = cp.runs + cq.runs
        weight = 0
        first_acc = 0.0
        last_acc = 0.0
        for c in (cp, cq):
            if c.first_visit is not None and c.runs > 0:
                weight += c.runs
                first_acc += c.first_visit * c.runs
                last_acc += c.last_visit * c.runs
        if weight:
            means[name] = (first_acc / weight, last_acc / weight, runs)

    merged = TimeProfile(universe=p.universe)
    ordered = sorted(means, key=lambda n: (means[n][0], n))
    last_ranks = sorted(means, key=lambda n: (means[n][1], n))
    last_rank_of = {n: i for i, n in enumerate(last_ranks)}
    for rank, name in enumerate(ordered):
        _, _, runs = means[name]
        ctr = merged.counter(name)
        ctr.first_visit = rank
        ctr.last_visit = max(rank, last_rank_of[name])
        ctr.runs = runs
    merged.function_counter = len(ordered)
    return merged


def order_functions(p: TimeProfile, universe=None) -> list:
    """Visited functions first (ascending first-visit), unvisited ones keep
    their declaration order."""
    universe = tuple(universe) if universe is not None else p.universe
    visited = [(p.counters[n].first_visit, n) for n in universe
               if p.counters.get(n) is not None
               and p.counters[n].first_visit is not None]
    visited.sort()
    rest = [n for n in universe
            if p.counters.get(n) is None
            or p.counters[n].first_visit is None]
    return [n for _, n in visited] + rest


def partition_functions(order, k: int, capacity: int) -> list:
    """Fill partitions 0..k-1 with profiled functions up to capacity each;
    overflow and unprofiled names land in the trailing rest partition.

    `order` entries are (name, profiled: bool) pairs or plain names (all
    treated as profiled).
    """
    if k < 1 or capacity < 1:
        raise InvalidArgument("partition count and capacity must be >= 1")
    entries = [(e, True) if isinstance(e, str) else tuple(e) for e in order]
    partitions = [[] for _ in range(k + 1)]
    current = 0
    for name, profiled in entries:
        if not profiled or current >= k:
            partitions[k].append(name)
            continue
        if len(partitions[current]) >= capacity:
            current += 1
            if current >= k:
                partitions[k].append(name)
                continue
        partitions[current].append(name)
    return partitions


def ordering_file(order, section_prefix: bool = False) -> str:
    prefix = ".text." if section_prefix else ""
    return "".join(f"{prefix}{name}\n" for name in order)
