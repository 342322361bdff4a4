"""Trajectory recording, wave classification and parameter sweeps.

The classifier is a documented heuristic standing in for visual
inspection.  It reads only a :class:`RunRecord`:

* **NW**: the activated fraction never exceeds ``f_wave``;
* **W**: it does, but falls below ``f_quiet`` before ``T_sustain`` and
  stays there;
* **RW**: activity persists past ``T_sustain`` with at most ``c_max``
  excited components on most late frames;
* **DW**: activity persists with more than ``c_max`` components on at
  least ``late_share`` of the late frames.

``T_sustain = t0 + t_sustain_frac * (t_end - t0)``.  A sweep cell whose
replicas split between RW and DW (each at least ``transition_share``) is
flagged ``T``.
"""
from __future__ import annotations

import itertools
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

from .fem import DofLayout, FemOperators
from .mesh import generate_square_grid, periodic_node_map
from .models import PARAMS, STEPPERS, ModelState, NumericalError
from .noise import GaussianKernel, NoiseSampler, replica_rng

LABELS = ("NW", "W", "RW", "DW")
FAILED = "FAIL"


@dataclass(frozen=True)
class ClassifyPolicy:
    u_act: float = 0.5
    f_wave: float = 0.05
    f_quiet: float = 0.01
    t_sustain_frac: float = 0.6
    c_max: int = 4
    late_share: float = 0.5
    transition_share: float = 0.3


@dataclass
class RunRecord:
    times: np.ndarray
    activated_fraction: np.ndarray
    component_count: np.ndarray
    nucleations: np.ndarray
    seed: int | None = None
    params: object = None
    snapshots: list = field(default_factory=list)
    failure: str | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.activated_fraction = np.asarray(self.activated_fraction, dtype=float)
        self.component_count = np.asarray(self.component_count, dtype=np.int64)
        self.nucleations = np.asarray(self.nucleations, dtype=np.int64)
        n = len(self.times)
        if not (len(self.activated_fraction) == len(self.component_count)
                == len(self.nucleations) == n):
            raise ValueError("record series must have equal length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        f = self.activated_fraction
        if np.any((f < 0) | (f > 1)):
            raise ValueError("activated fraction must lie in [0, 1]")
        if np.any(self.component_count < 0):
            raise ValueError("component counts must be nonnegative")

    @property
    def total_nucleations(self):
        return int(self.nucleations.sum())


@dataclass(frozen=True)
class WaveClass:
    label: str
    evidence: dict


class RecordTooShortError(ValueError):
    pass


def classify_run(record: RunRecord, policy: ClassifyPolicy = ClassifyPolicy(),
                 t_obs=None):
    """Label a run NW / W / RW / DW from its summary series alone."""
    t = record.times
    if len(t) < 2:
        raise RecordTooShortError("need at least two recorded frames")
    span = t[-1] - t[0]
    if t_obs is not None and span < t_obs - 1e-9:
        raise RecordTooShortError(f"record covers {span:g} < required {t_obs:g}")
    frac = record.activated_fraction
    t_sustain = t[0] + policy.t_sustain_frac * span
    max_fraction = float(frac.max())
    active = np.flatnonzero(frac >= policy.f_quiet)
    sustain_time = float(t[active[-1]]) if active.size else float(t[0])
    late = t >= t_sustain
    crowded = record.component_count[late] > policy.c_max
    share = float(crowded.mean()) if late.any() else 0.0
    evidence = dict(max_fraction=max_fraction, sustain_time=sustain_time,
                    t_sustain=float(t_sustain), crowded_late_share=share,
                    components_late=float(record.component_count[late].mean())
                    if late.any() else 0.0)
    if max_fraction <= policy.f_wave:
        return WaveClass("NW", evidence)
    if sustain_time < t_sustain:
        return WaveClass("W", evidence)
    if share >= policy.late_share:
        return WaveClass("DW", evidence)
    return WaveClass("RW", evidence)


# ---------------------------------------------------------- excited regions

def triangle_adjacency(mesh, node_map=None):
    """Edge-adjacency graph of triangles; ``node_map`` glues periodic nodes."""
    tris = mesh.triangles if node_map is None else np.asarray(node_map)[mesh.triangles]
    edges = np.sort(tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(mesh.n_triangles), 3)
    _, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    order = np.argsort(inv, kind="stable")
    inv_s, own_s = inv[order], owner[order]
    same = inv_s[1:] == inv_s[:-1]
    a, b = own_s[:-1][same], own_s[1:][same]
    n = mesh.n_triangles
    rows, cols = np.concatenate([a, b]), np.concatenate([b, a])
    return sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()


def excited_components(u, mesh, threshold, adjacency=None, node_map=None,
                       return_labels=False):
    """Connected groups of triangles whose three nodes all exceed ``threshold``.

    ``u`` holds values at every mesh node.  Returns the count (and the
    per-triangle labels, -1 for quiet triangles, if requested).
    """
    if adjacency is None:
        adjacency = triangle_adjacency(mesh, node_map)
    hot = (np.asarray(u)[mesh.triangles] > threshold).all(axis=1)
    labels = np.full(mesh.n_triangles, -1, dtype=np.int64)
    idx = np.flatnonzero(hot)
    count = 0
    if idx.size:
        sub = adjacency[idx][:, idx]
        count, lab = connected_components(sub, directed=False)
        labels[idx] = lab
    return (count, labels) if return_labels else count


# ------------------------------------------------------------- simulation

@dataclass
class Domain:
    """Operators, noise factor and bookkeeping shared by runs on one mesh."""

    ops: FemOperators
    sampler: NoiseSampler
    adjacency: sp.csr_matrix
    node_map: np.ndarray | None = None

    @classmethod
    def build(cls, mesh, boundary="neumann", kernel=None, discretization="p1",
              seed=0, period=None):
        if boundary == "periodic":
            pmap = periodic_node_map(mesh, period if period is not None
                                     else float(np.ptp(mesh.nodes[:, 0])))
            layout = DofLayout.periodic(mesh, pmap)
            node_map = pmap.master
        elif boundary in ("neumann", "free"):
            layout, node_map = DofLayout.free(mesh), None
        elif boundary == "dirichlet":
            layout, node_map = DofLayout.dirichlet(mesh), None
        else:
            raise ValueError(f"unknown boundary condition {boundary!r}")
        ops = FemOperators(mesh, layout)
        kernel = kernel if kernel is not None else GaussianKernel(2.0)
        sampler = NoiseSampler.build(kernel, mesh, layout, discretization, seed=seed)
        sampler.load_factor()
        return cls(ops, sampler, triangle_adjacency(mesh, node_map), node_map)

    @classmethod
    def periodic_square(cls, l, N, **kw):
        return cls.build(generate_square_grid(l, N), boundary="periodic", period=l, **kw)


@dataclass(frozen=True)
class RunConfig:
    dt: float = 0.05
    t_end: float = 60.0
    record_every: int = 10
    snapshot_every: int = 0
    u0: float = 0.0
    v0: float = 0.0


def default_initial_state(model, n, cfg):
    v0 = cfg.v0
    if model == "ms" and v0 == 0.0:
        v0 = 1.0      # MS rest state has the gate open
    return ModelState(np.full(n, cfg.u0), np.full(n, v0), 0.0)


def simulate(model, params, domain: Domain, cfg: RunConfig, rng,
             policy: ClassifyPolicy = ClassifyPolicy(), state=None, on_frame=None):
    """Run one trajectory and record its summary series.

    ``rng`` drives the unit-time noise samples.  A frame is recorded every
    ``cfg.record_every`` steps; ``on_frame(step, state)`` is called on every
    frame and ``cfg.snapshot_every`` steps (a multiple of ``record_every``)
    keeps full copies in ``record.snapshots``.
    """
    step = STEPPERS[model]
    ops = domain.ops
    n_steps = int(round(cfg.t_end / cfg.dt))
    if state is None:
        state = default_initial_state(model, ops.n_dofs, cfg)
    F = domain.sampler.load_factor()
    n_sites = domain.sampler.n_sites
    noisy = params.sigma != 0.0

    times, frac, comps, nucl, snaps = [], [], [], [], []
    prev_hot = np.zeros(ops.mesh.n_triangles, dtype=bool)

    def record(k, st):
        nonlocal prev_hot
        u_full = ops.layout.expand(st.u)
        count, labels = excited_components(u_full, ops.mesh, policy.u_act,
                                           adjacency=domain.adjacency,
                                           return_labels=True)
        hot = labels >= 0
        born = 0
        if count:
            overlap = np.zeros(count, dtype=bool)
            overlap[np.unique(labels[hot & prev_hot])] = True
            born = int(count - overlap.sum())
        prev_hot = hot
        times.append(st.t)
        frac.append(float(np.mean(st.u >= policy.u_act)))
        comps.append(count)
        nucl.append(born)
        if cfg.snapshot_every and k % cfg.snapshot_every == 0:
            snaps.append((st.t, u_full, ops.layout.expand(st.v)))
        if on_frame is not None:
            on_frame(k, st)

    failure = None
    record(0, state)
    # overflow in the explicit reaction is reported by the stepper's guard
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for k in range(1, n_steps + 1):
                load = F @ rng.standard_normal(n_sites) if noisy else None
                state = step(state, params, ops, load, cfg.dt)
                if k % cfg.record_every == 0:
                    record(k, state)
        except NumericalError as exc:
            failure = str(exc)
    return RunRecord(times, frac, comps, nucl, params=params,
                     snapshots=snaps, failure=failure)


# ------------------------------------------------------------------ sweeps

@dataclass
class SweepRow:
    i: int
    j: int
    axis1: float
    axis2: float
    seed: int
    label: str
    max_fraction: float
    sustain_time: float
    components_late: float
    nucleations: int
    failure: str | None = None


@dataclass
class CellSummary:
    axis1: float
    axis2: float
    modal: str
    histogram: dict
    transition: bool
    mean_nucleations: float


@dataclass
class SweepResult:
    axis1_name: str
    axis2_name: str
    rows: list
    cells: list

    def nucleation_trend(self, axis="axis2"):
        """Spearman correlation of per-run nucleation counts with an axis."""
        x = [getattr(r, axis) for r in self.rows]
        y = [r.nucleations for r in self.rows]
        res = spearmanr(x, y)
        return float(res.statistic), float(res.pvalue)


def run_seed(master_seed, i, j, r):
    """Integer seed recorded for replica ``r`` of cell ``(i, j)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(i, j, r))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def summarize_cell(rows, policy: ClassifyPolicy):
    hist = Counter(r.label for r in rows)
    n = len(rows) - hist.get(FAILED, 0)
    # ties resolve toward the calmer label
    modal = (max(LABELS, key=lambda lab: (hist.get(lab, 0), -LABELS.index(lab)))
             if n else FAILED)
    transition = n > 0 and (hist.get("RW", 0) >= policy.transition_share * n
                            and hist.get("DW", 0) >= policy.transition_share * n)
    return CellSummary(rows[0].axis1, rows[0].axis2, modal,
                       {lab: hist.get(lab, 0) for lab in (*LABELS, FAILED)}, transition,
                       float(np.mean([r.nucleations for r in rows])))


def sweep(model, axis1, axis2, seeds_per_cell, base_params, domain: Domain,
          cfg: RunConfig, policy: ClassifyPolicy = ClassifyPolicy(), seed=0,
          threads=1):
    """Classify ``seeds_per_cell`` runs on every cell of ``axis1 x axis2``.

    ``axis1`` and ``axis2`` are ``(parameter_name, values)`` pairs.  Replica
    ``r`` of cell ``(i, j)`` uses ``replica_rng(seed, i, j, r)``, so results
    do not depend on ``threads`` or on execution order.  A run that fails
    numerically is labelled ``"FAIL"``, keeps its diagnostic in the row and
    does not take part in the modal label.
    """
    (name1, vals1), (name2, vals2) = axis1, axis2
    params_cls = PARAMS[model]
    for name in (name1, name2):
        if name not in params_cls.__dataclass_fields__:
            raise ValueError(f"{model} has no parameter {name!r}")
    tasks = [(i, j, r) for i, j in itertools.product(range(len(vals1)), range(len(vals2)))
             for r in range(seeds_per_cell)]

    def work(task):
        i, j, r = task
        params = replace(base_params, **{name1: float(vals1[i]), name2: float(vals2[j])})
        rec = simulate(model, params, domain, cfg, replica_rng(seed, i, j, r), policy)
        ev = dict(max_fraction=float(rec.activated_fraction.max()),
                  sustain_time=float("nan"), components_late=float("nan"))
        if rec.failure is None:
            wc = classify_run(rec, policy)
            label, ev = wc.label, wc.evidence
        else:
            label = FAILED
        return SweepRow(i, j, float(vals1[i]), float(vals2[j]), run_seed(seed, i, j, r),
                        label, ev["max_fraction"], ev["sustain_time"],
                        ev["components_late"], rec.total_nucleations, rec.failure)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, tasks))
    else:
        rows = [work(t) for t in tasks]
    cells = [summarize_cell(list(group), policy)
             for _, group in itertools.groupby(rows, key=lambda r: (r.i, r.j))]
    return SweepResult(name1, name2, rows, cells)
