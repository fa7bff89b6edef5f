"""Per-frame simulation loop.

One world (mobility, scans, difficulties, channel draws) is simulated per
seed and every selected algorithm is evaluated on it in lockstep, so results
are paired across algorithms.  An algorithm's records do not depend on which
other algorithms share the run.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..baselines import closest_first, cpm_baseline, greedy_area, offline_optimal
from ..channel import InfeasibleLink, channel_gain, classify_links, feature_size, min_bandwidth
from ..detmodel import sample_difficulty
from ..scheduler import Instance, SchedulerParams, cmass_schedule, fold_free
from ..sensing import PredictionState, predict_los, scan_frame
from ..topology import EmpiricalState, compose, refine, replay, topology_from_counts, update_uncertainty
from ..world import agent_boxes, importance_weights, init_frame, step_mobility
from .config import ExperimentConfig

CMASS_VARIANTS = ("cmass", "first-order", "cmass-noexplore")


@dataclass(frozen=True)
class FrameRecord:
    t: int
    algorithm: str
    scheduled: tuple  # ((cov id, cost Hz), ...)
    bandwidth_used: float
    budget: float
    detected: tuple
    utility: float
    total_weight: float
    cumulative_recall: float

    def to_dict(self):
        return {
            "t": self.t,
            "algorithm": self.algorithm,
            "scheduled": [[c, b] for c, b in self.scheduled],
            "bandwidth_used": self.bandwidth_used,
            "budget": self.budget,
            "detected": list(self.detected),
            "utility": self.utility,
            "total_weight": self.total_weight,
            "cumulative_recall": self.cumulative_recall,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["t"], d["algorithm"], tuple((c, b) for c, b in d["scheduled"]), d["bandwidth_used"], d["budget"],
                   tuple(d["detected"]), d["utility"], d["total_weight"], d["cumulative_recall"])


def _variant_params(name, base: SchedulerParams) -> SchedulerParams:
    if name == "first-order":
        return SchedulerParams(base.mix_weight, base.alpha, base.beta, base.use_uncertainty, base.use_ucb, base.use_refine, True)
    if name == "cmass-noexplore":
        return SchedulerParams(base.mix_weight, base.alpha, base.beta, False, False, False, base.first_order)
    return base


@dataclass
class _Learner:
    params: SchedulerParams
    emp: EmpiricalState = field(default_factory=EmpiricalState)
    pred: PredictionState = field(default_factory=PredictionState)


@dataclass
class _Tally:
    num: float = 0.0
    den: float = 0.0
    bandwidth: float = 0.0
    n_sched: int = 0
    frames: int = 0

    @property
    def recall(self):
        return self.num / self.den if self.den > 0 else 0.0


class Simulation:
    """Iterates frames of one seeded world and evaluates the configured algorithms."""

    def __init__(self, cfg: ExperimentConfig, topo_sink=None):
        self.cfg = cfg
        self.geom = cfg.map
        self.frame = init_frame(cfg.map, cfg.mobility, cfg.seed, cfg.dt, with_user=cfg.mode == "distributed")
        self.diff_rng = np.random.default_rng([cfg.seed, 0xD1FF])
        self.difficulty = {}
        self.learners = {a: _Learner(_variant_params(a, cfg.scheduler)) for a in cfg.algorithms if a in CMASS_VARIANTS}
        self.tally = {a: _Tally() for a in cfg.algorithms}
        self.topo_sink = topo_sink

    # -- world side -------------------------------------------------------

    def _assign_difficulties(self):
        for a in sorted(self.frame.objects, key=lambda a: a.id):
            if a.id not in self.difficulty:
                self.difficulty[a.id] = float(sample_difficulty(self.cfg.detection, self.diff_rng))
        live = {a.id for a in self.frame.objects}
        for k in [k for k in self.difficulty if k not in live]:
            del self.difficulty[k]

    def _user(self):
        if self.cfg.mode == "edge":
            ax, ay = self.cfg.interest.anchor
            return None, (ax, ay, 0.0)
        u = self.frame.user
        return u, (u.x, u.y, u.heading)

    def _links(self, t, user, pose):
        """Feasible CoVs of this frame and their bandwidth costs."""
        cfg, ch = self.cfg, self.cfg.channel
        ux, uy, _ = pose
        cands = sorted((a for a in self.frame.covs if a.kind != "user"), key=lambda a: a.id)
        cands = [a for a in cands if 0 < math.hypot(a.x - ux, a.y - uy) <= ch.max_comm_distance]
        if not cands:
            return [], {}
        vehicles = [a for a in self.frame.agents if a.is_vehicle]
        row = {a.id: k for k, a in enumerate(vehicles)}
        skip_u = row[user.id] if user is not None else -1
        cls, nblk = classify_links(
            [(ux, uy)] * len(cands), [(a.x, a.y) for a in cands], self.geom.building_boxes, agent_boxes(vehicles),
            [skip_u] * len(cands), [row[a.id] for a in cands],
        )
        rng = np.random.default_rng([cfg.seed, t, 0xC4A7])
        covs, costs = [], {}
        for a, c, nb in zip(cands, cls, nblk):
            d = math.hypot(a.x - ux, a.y - uy)
            gain = channel_gain(str(c), int(nb), d, ch, rng)
            size = feature_size(a, cfg.interest, pose, ch)
            if size <= 0:
                continue
            try:
                cost = min_bandwidth(size, gain, ch, cfg.dt, distance=d)
            except InfeasibleLink:
                continue
            covs.append(a.id)
            costs[a.id] = cost
        return covs, costs

    # -- main loop --------------------------------------------------------

    def step(self, t):
        cfg = self.cfg
        if t > 0:
            self.frame = step_mobility(self.frame, self.geom, cfg.seed, cfg.mobility)
        self._assign_difficulties()
        user, pose = self._user()
        objs = sorted(self.frame.objects, key=lambda a: a.id)
        w_all = importance_weights([(a.x, a.y) for a in objs], cfg.interest, pose) if objs else np.zeros(0)
        weights = {a.id: float(w) for a, w in zip(objs, w_all) if w > 0}
        obj_ids = list(weights)
        covs, costs = self._links(t, user, pose)
        free = (user.id,) if user is not None else ()
        sensed = list(covs) + list(free)
        fs = scan_frame(self.frame, self.geom, cfg.lidar, cov_ids=sensed, obj_ids=obj_ids)
        truth = topology_from_counts(sensed, obj_ids, fs.counts, [self.difficulty[o] for o in obj_ids], cfg.detection)
        total = float(sum(weights.values()))
        budget = cfg.budget(t)
        by_id = self.frame.by_id()
        records = []
        for algo in cfg.algorithms:
            if algo == "cpm":
                A = ()
                detected = cpm_baseline(truth, sensed)
            else:
                A = self._decide(algo, t, covs, costs, budget, weights, truth, pose, free, by_id)
                detected = compose(truth, tuple(A) + free)
            g = float(sum(weights[n] for n in detected))
            used = float(sum(costs[c] for c in A))
            tl = self.tally[algo]
            tl.num += g
            tl.den += total
            tl.bandwidth += used
            tl.n_sched += len(A)
            tl.frames += 1
            records.append(FrameRecord(t, algo, tuple((c, costs[c]) for c in A), used, budget,
                                       tuple(sorted(detected)), g, total, tl.recall))
            if algo in self.learners:
                self._learn(algo, t, A, free, truth, detected, covs, obj_ids, by_id)
        return records

    def _decide(self, algo, t, covs, costs, budget, weights, truth, pose, free, by_id):
        cfg = self.cfg
        if algo in self.learners:
            lr = self.learners[algo]
            lr.emp.sync(list(covs) + list(free), weights)
            return cmass_schedule(lr.emp, covs, costs, budget, weights, lr.params, t, free).scheduled
        if algo == "closest":
            return closest_first({c: (by_id[c].x, by_id[c].y) for c in covs}, costs, pose[:2], budget).scheduled
        if algo == "area":
            pos = {c: (by_id[c].x, by_id[c].y) for c in covs}
            return greedy_area(pos, cfg.interest, pose, self.geom.building_boxes, costs, budget, cfg.area_cell, cfg.channel.sensing_radius).scheduled
        if algo == "optimal":
            topo = fold_free(truth, free).restrict(covs)
            inst = Instance(tuple(covs), topo, weights, {c: costs[c] for c in covs}, budget)
            return offline_optimal(inst, cfg.optimal_cap)[0]
        raise ValueError(algo)

    def _learn(self, algo, t, A, free, truth, detected, covs, obj_ids, by_id):
        lr = self.learners[algo]
        p = lr.params
        replay(lr.emp, tuple(A) + free, truth, t)
        if p.use_refine or p.use_uncertainty:
            pos = {n: (by_id[n].x, by_id[n].y) for n in detected}
            predict_los(lr.pred, self.frame, self.geom, pos, list(covs) + list(free), self.cfg.lidar)
            if p.use_refine:
                refine(lr.emp, lr.pred.predicted_los)
            if p.use_uncertainty:
                update_uncertainty(lr.emp, tuple(A) + free, lr.emp.prev_los, lr.pred.predicted_los, obj_ids)
        if self.topo_sink is not None and algo == "cmass":
            self.topo_sink(lr.emp.dump(t))

    def summary(self):
        cfg = self.cfg
        rows = []
        for algo in cfg.algorithms:
            tl = self.tally[algo]
            rows.append({
                "algorithm": algo,
                "mode": cfg.mode,
                "seed": cfg.seed,
                "frames": tl.frames,
                "mpr": cfg.mobility.mpr,
                "mean_budget": float(np.mean([cfg.budget(t) for t in range(tl.frames)])) if tl.frames else 0.0,
                "weighted_recall": tl.recall,
                "mean_bandwidth": tl.bandwidth / tl.frames if tl.frames else 0.0,
                "mean_scheduled": tl.n_sched / tl.frames if tl.frames else 0.0,
            })
        return rows


def run_experiment(cfg: ExperimentConfig, topo_sink=None):
    """Simulate ``cfg.frames`` frames.  Returns ``(records, summary rows)``."""
    sim = Simulation(cfg, topo_sink)
    records = []
    for t in range(cfg.frames):
        records.extend(sim.step(t))
    return records, sim.summary()


def _cell(args):
    cfg, axis, value = args
    try:
        return axis, value, cfg.seed, run_experiment(cfg)[1]
    except Exception as exc:  # re-raised with the cell named
        raise RuntimeError(f"sweep cell {axis}={value!r} seed={cfg.seed}: {exc}") from exc


def apply_axis(cfg: ExperimentConfig, axis, value) -> ExperimentConfig:
    import dataclasses

    if axis == "MPR":
        return cfg.replace(mobility=dataclasses.replace(cfg.mobility, mpr=float(value)))
    if axis == "bandwidth":
        return cfg.replace(bandwidth=float(value))
    if axis in ("alpha", "beta"):
        return cfg.replace(scheduler=dataclasses.replace(cfg.scheduler, **{axis: float(value)}))
    raise ValueError(f"unknown sweep axis {axis!r}")


def sweep(cfg: ExperimentConfig, axis, values, seeds, jobs=1):
    """Mean and standard deviation of weighted recall per (value, algorithm) cell.

    ``seeds`` is a count (seeds ``cfg.seed .. cfg.seed + seeds - 1``) or an
    explicit list.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    seed_list = list(range(cfg.seed, cfg.seed + int(seeds))) if isinstance(seeds, int) else list(seeds)
    tasks = []
    for v in values:
        try:
            cell = apply_axis(cfg, axis, v)
        except ValueError as exc:
            raise ValueError(f"sweep cell {axis}={v!r}: {exc}") from exc
        tasks.extend((cell.replace(seed=s), axis, v) for s in seed_list)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_cell, tasks))
    else:
        results = [_cell(t) for t in tasks]
    table = []
    for v in values:
        for algo in cfg.algorithms:
            recs = [row["weighted_recall"] for ax, val, s, rows in results if val == v for row in rows if row["algorithm"] == algo]
            table.append({
                "axis": axis,
                "value": v,
                "algorithm": algo,
                "mean_recall": statistics.fmean(recs),
                "std_recall": statistics.stdev(recs) if len(recs) > 1 else 0.0,
                "n_seeds": len(recs),
                "recalls": recs,
            })
    return table
