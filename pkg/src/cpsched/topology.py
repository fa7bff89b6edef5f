"""Perception topology up to second order and the scheduler's empirical copy of it."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .detmodel import DetectionModel


def pair(i, j):
    if i == j:
        raise ValueError(f"a pair needs two distinct CoVs, got {i!r} twice")
    return frozenset((i, j))


@dataclass(frozen=True)
class PerceptionTopology:
    """``first[i]``: objects CoV ``i`` detects alone.  ``second[{i, j}]``: objects
    only the pair detects (never in either first-order set)."""

    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, objs in self.second.items():
            if len(key) != 2:
                raise ValueError(f"second-order key {set(key)} is not a pair")
            i, j = tuple(key)
            overlap = objs & (self.first.get(i, frozenset()) | self.first.get(j, frozenset()))
            if overlap:
                raise ValueError(f"pair {sorted(key, key=str)} repeats first-order objects {sorted(overlap, key=str)}")

    @classmethod
    def build(cls, first=None, second=None):
        """Construct from plain mappings; ``second`` keys may be any 2-tuples."""
        f = {i: frozenset(v) for i, v in (first or {}).items()}
        s = {}
        for key, v in (second or {}).items():
            k = pair(*key)
            s[k] = s.get(k, frozenset()) | frozenset(v)
        s = {k: v for k, v in s.items() if v}
        return cls(f, s)

    def first_of(self, i):
        return self.first.get(i, frozenset())

    def second_of(self, i, j):
        return self.second.get(pair(i, j), frozenset())

    @property
    def covs(self):
        ids = set(self.first)
        for k in self.second:
            ids |= k
        return ids

    @property
    def objects(self):
        out = set()
        for v in self.first.values():
            out |= v
        for v in self.second.values():
            out |= v
        return out

    def restrict(self, covs=None, objects=None):
        """Sub-topology over the given CoVs and/or objects."""
        keep_c = None if covs is None else set(covs)
        keep_o = None if objects is None else frozenset(objects)

        def cut(s):
            return s if keep_o is None else s & keep_o

        first = {i: cut(v) for i, v in self.first.items() if keep_c is None or i in keep_c}
        second = {k: cut(v) for k, v in self.second.items() if keep_c is None or k <= keep_c}
        return PerceptionTopology(first, {k: v for k, v in second.items() if v})

    def without_second(self):
        return PerceptionTopology(dict(self.first), {})

    def arrays(self, covs, objects):
        """Dense ``first (V, O)`` and symmetric ``second (V, V, O)`` boolean arrays."""
        cidx = {c: k for k, c in enumerate(covs)}
        oidx = {o: k for k, o in enumerate(objects)}
        first = np.zeros((len(covs), len(objects)), dtype=bool)
        second = np.zeros((len(covs), len(covs), len(objects)), dtype=bool)
        for i, objs in self.first.items():
            if i in cidx:
                for o in objs:
                    if o in oidx:
                        first[cidx[i], oidx[o]] = True
        for key, objs in self.second.items():
            i, j = tuple(key)
            if i in cidx and j in cidx:
                for o in objs:
                    if o in oidx:
                        second[cidx[i], cidx[j], oidx[o]] = True
                        second[cidx[j], cidx[i], oidx[o]] = True
        return first, second

    def to_json(self):
        return {
            "first": {str(i): sorted(v, key=str) for i, v in self.first.items()},
            "second": [[*sorted(k, key=str), sorted(v, key=str)] for k, v in self.second.items()],
        }

    @classmethod
    def from_json(cls, data, key=lambda s: s):
        first = {key(i): v for i, v in data.get("first", {}).items()}
        second = {(key(a) if isinstance(a, str) else a, key(b) if isinstance(b, str) else b): v for a, b, v in data.get("second", [])}
        return cls.build(first, second)


def compose(topo: PerceptionTopology, S) -> frozenset:
    """Objects detected when every CoV in ``S`` shares its data."""
    S = list(S)
    out = set()
    for i in S:
        out |= topo.first_of(i)
    for i, j in itertools.combinations(S, 2):
        out |= topo.second.get(frozenset((i, j)), frozenset())
    return frozenset(out)


def topology_from_counts(cov_ids, obj_ids, counts, difficulty, model: DetectionModel) -> PerceptionTopology:
    """Ground-truth topology from a ``(V, O)`` point-count matrix and per-object difficulties."""
    counts = np.asarray(counts, dtype=float).reshape(len(cov_ids), len(obj_ids))
    D = np.asarray(difficulty, dtype=float).reshape(len(obj_ids))
    seen = counts >= 1
    L = np.where(seen, np.log(np.maximum(counts, 1.0)), 0.0)
    single = seen & (L >= D[None, :])
    first = {c: frozenset(obj_ids[k] for k in np.flatnonzero(single[r])) for r, c in enumerate(cov_ids)}
    second = {}
    p = model.p
    for a, b in itertools.combinations(range(len(cov_ids)), 2):
        both = seen[a] | seen[b]
        if math.isinf(p):
            norm = np.maximum(L[a], L[b])
        else:
            norm = (L[a] ** p + L[b] ** p) ** (1.0 / p)
        joint = both & (norm >= D) & ~single[a] & ~single[b]
        if joint.any():
            second[frozenset((cov_ids[a], cov_ids[b]))] = frozenset(obj_ids[k] for k in np.flatnonzero(joint))
    return PerceptionTopology(first, second)


def ground_truth_topology(scans, difficulties, model: DetectionModel, objects=None) -> PerceptionTopology:
    """Topology implied by per-CoV scans.

    ``scans`` maps CoV id to a :class:`~cpsched.sensing.ScanResult`;
    ``difficulties`` maps object id to ``D_n``.  Only objects in ``objects``
    (default: all with a difficulty) are considered.
    """
    cov_ids = list(scans)
    obj_ids = list(objects) if objects is not None else list(difficulties)
    counts = np.array([[scans[c].points.get(o, 0) for o in obj_ids] for c in cov_ids], dtype=float).reshape(len(cov_ids), len(obj_ids))
    return topology_from_counts(cov_ids, obj_ids, counts, [difficulties[o] for o in obj_ids], model)


# --------------------------------------------------------------------------
# empirical state
# --------------------------------------------------------------------------


@dataclass
class EmpiricalState:
    """What the scheduler has learnt about the topology from past schedules."""

    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)
    last_seen_single: dict = field(default_factory=dict)
    last_seen_pair: dict = field(default_factory=dict)
    uncertainty: dict = field(default_factory=dict)
    prev_los: dict = field(default_factory=dict)

    @property
    def topo(self) -> PerceptionTopology:
        return PerceptionTopology(dict(self.first), {k: v for k, v in self.second.items() if v})

    def never_scheduled(self, cov):
        return cov not in self.last_seen_single

    def sync(self, live_covs, live_objects):
        """Evict departed CoVs and objects; register newcomers with empty sets."""
        covs = set(live_covs)
        objs = frozenset(live_objects)
        for d in (self.first, self.last_seen_single, self.uncertainty, self.prev_los):
            for k in [k for k in d if k not in covs]:
                del d[k]
        for d in (self.second, self.last_seen_pair):
            for k in [k for k in d if not k <= covs]:
                del d[k]
        for c in covs:
            self.first[c] = self.first.get(c, frozenset()) & objs
            self.uncertainty[c] = self.uncertainty.get(c, frozenset()) & objs
        for k in list(self.second):
            self.second[k] = self.second[k] & objs
        return self

    def dump(self, t):
        """One JSON line describing the state (for debugging)."""
        return json.dumps({
            "t": t,
            **self.topo.to_json(),
            "tau": {str(k): v for k, v in self.last_seen_single.items()},
            "uncertainty": {str(k): sorted(v, key=str) for k, v in self.uncertainty.items()},
        })


def replay(emp: EmpiricalState, scheduled, truth: PerceptionTopology, t) -> EmpiricalState:
    """Refresh the entries of every scheduled CoV and scheduled pair from ``truth``."""
    A = list(scheduled)
    for i in A:
        emp.first[i] = truth.first_of(i)
        emp.last_seen_single[i] = t
    for i, j in itertools.combinations(A, 2):
        k = frozenset((i, j))
        emp.second[k] = truth.second.get(k, frozenset())
        emp.last_seen_pair[k] = t
    # a stale pair entry cannot claim objects one member now detects alone
    fresh = set(A)
    for k, objs in emp.second.items():
        if k & fresh and not k <= fresh:
            i, j = tuple(k)
            emp.second[k] = objs - emp.first.get(i, frozenset()) - emp.first.get(j, frozenset())
    return emp


def refine(emp: EmpiricalState, predicted_los) -> EmpiricalState:
    """Drop entries whose objects are not predicted to be in line of sight.

    CoVs missing from ``predicted_los`` are left untouched.
    """
    for i, objs in emp.first.items():
        if i in predicted_los:
            emp.first[i] = objs & predicted_los[i]
    for k, objs in emp.second.items():
        i, j = tuple(k)
        if i in predicted_los and j in predicted_los:
            emp.second[k] = objs & predicted_los[i] & predicted_los[j]
    return emp


def update_uncertainty(emp: EmpiricalState, scheduled, prev_los, predicted_los, objects) -> EmpiricalState:
    """Objects predicted to newly enter each CoV's line of sight.

    Scheduled CoVs accumulate onto their previous uncertainty set; the others
    are reset to the newly emerging objects only.  ``prev_los`` holds the LoS
    sets assumed for the current frame; afterwards ``emp.prev_los`` holds
    ``predicted_los`` for the next one.
    """
    A = set(scheduled)
    objs = frozenset(objects)
    for i, los_next in predicted_los.items():
        hidden = objs - prev_los.get(i, frozenset())
        emerging = hidden & los_next
        if i in A:
            emp.uncertainty[i] = (emerging | emp.uncertainty.get(i, frozenset())) & objs
        else:
            emp.uncertainty[i] = emerging
    emp.prev_los = {i: frozenset(v) for i, v in predicted_los.items()}
    return emp
