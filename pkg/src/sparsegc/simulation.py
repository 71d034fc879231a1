"""Weighted stochastic-block-model populations with class-differentiating edges,
and edge/node ROC evaluation of selection methods."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .types import EdgeIndex, GraphSample, PenaltyParams, SampleSet, SolverConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimDesign:
    num_nodes: int = 60
    community_sizes: tuple[int, ...] = (10,) * 6
    mu_within: float = 0.3
    mu_between: float = 0.1
    noise_variance: float = 0.2
    active_communities: tuple[int, ...] = (0, 1)
    differentiating_probability: float = 0.75
    effect_mean: float = 0.2
    effect_variance: float = 0.2
    samples_per_class: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "community_sizes", tuple(int(c) for c in self.community_sizes))
        object.__setattr__(self, "active_communities", tuple(int(c) for c in self.active_communities))
        if sum(self.community_sizes) != self.num_nodes or min(self.community_sizes) < 1:
            raise ValueError("community sizes must be positive and sum to num_nodes")
        if not 0 <= self.differentiating_probability <= 1:
            raise ValueError("differentiating_probability must lie in [0, 1]")
        if self.noise_variance <= 0 or self.effect_variance <= 0:
            raise ValueError("variances must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        K = len(self.community_sizes)
        if any(c < 0 or c >= K for c in self.active_communities):
            raise ValueError(f"active communities must be in 0..{K - 1}")

    @classmethod
    def equal_communities(cls, num_nodes: int, num_communities: int, **kwargs) -> "SimDesign":
        if num_nodes % num_communities:
            raise ValueError("num_nodes must be divisible by num_communities")
        size = num_nodes // num_communities
        return cls(num_nodes=num_nodes, community_sizes=(size,) * num_communities, **kwargs)

    @property
    def communities(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.community_sizes)), self.community_sizes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["community_sizes"] = list(self.community_sizes)
        d["active_communities"] = list(self.active_communities)
        return d


@dataclass(frozen=True)
class GroundTruth:
    num_nodes: int
    active_nodes: frozenset[int]
    differentiating_edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.differentiating_edges:
            if i not in self.active_nodes or j not in self.active_nodes:
                raise ValueError(f"edge ({i}, {j}) has an endpoint outside the active node set")

    def edge_mask(self, index: EdgeIndex | None = None) -> np.ndarray:
        index = index or EdgeIndex(self.num_nodes)
        mask = np.zeros(index.num_edges, dtype=bool)
        for i, j in self.differentiating_edges:
            mask[index.position(i, j)] = True
        return mask

    def node_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_nodes, dtype=bool)
        mask[list(self.active_nodes)] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "active_nodes": sorted(self.active_nodes),
            "differentiating_edges": [list(e) for e in sorted(self.differentiating_edges)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            int(d["num_nodes"]),
            frozenset(int(i) for i in d["active_nodes"]),
            frozenset((int(i), int(j)) for i, j in d["differentiating_edges"]),
        )


def generate_population(
    design: SimDesign, sample_seed: int | None = None
) -> tuple[SampleSet, GroundTruth]:
    """Draw ``samples_per_class`` graphs per class; class +1 is altered on E.

    Independent streams are spawned for the differentiating set and for each
    class, so class -1 graphs do not depend on ``p``. ``sample_seed`` redraws
    the graphs (e.g. an independent test set) while keeping the ground truth
    fixed by ``design.seed``.
    """
    comm = design.communities
    N = design.num_nodes
    index = EdgeIndex(N)
    active = np.isin(comm, design.active_communities)
    p = design.differentiating_probability
    if p > 0 and not active.any():
        raise ValueError("empty active node set with p > 0")

    truth_seq, neg_seq, pos_seq = np.random.SeedSequence(design.seed).spawn(3)
    if sample_seed is not None:
        neg_seq, pos_seq = np.random.SeedSequence([design.seed, sample_seed]).spawn(2)
    truth_rng, neg_rng, pos_rng = map(np.random.default_rng, (truth_seq, neg_seq, pos_seq))
    r, c = index.rows, index.cols
    within = active[r] & active[c]
    # One uniform per within-G pair regardless of p keeps the stream aligned.
    u = truth_rng.random(int(within.sum()))
    diff = np.zeros(index.num_edges, dtype=bool)
    diff[np.flatnonzero(within)[u < p]] = True

    means = np.where(comm[r] == comm[c], design.mu_within, design.mu_between)
    sd = np.sqrt(design.noise_variance)
    m = design.samples_per_class
    neg = neg_rng.normal(means, sd, size=(m, index.num_edges))
    pos = pos_rng.normal(means, sd, size=(m, index.num_edges))
    n_diff = int(diff.sum())
    if n_diff:
        pos[:, diff] = pos_rng.normal(
            design.effect_mean, np.sqrt(design.effect_variance), size=(m, n_diff)
        )
    edges = np.vstack([neg, pos])
    labels = np.r_[-np.ones(m, dtype=int), np.ones(m, dtype=int)]
    tag = "" if sample_seed is None else f"{sample_seed}-"
    ids = [f"{tag}neg{k:04d}" for k in range(m)] + [f"{tag}pos{k:04d}" for k in range(m)]
    data = SampleSet.from_arrays(edges, labels, ids)
    truth = GroundTruth(
        N,
        frozenset(np.flatnonzero(active).tolist()),
        frozenset(zip(r[diff].tolist(), c[diff].tolist())),
    )
    return data, truth


class UndefinedRateError(ValueError):
    """A true-positive rate was requested against an empty truth set."""


def _edge_mask(selected, index: EdgeIndex) -> np.ndarray:
    if isinstance(selected, np.ndarray) and selected.dtype == bool:
        if selected.shape != (index.num_edges,):
            raise ValueError("edge mask has the wrong length")
        return selected
    mask = np.zeros(index.num_edges, dtype=bool)
    for i, j in selected:
        mask[index.position(i, j)] = True
    return mask


def incident_nodes(edge_mask: np.ndarray, index: EdgeIndex) -> np.ndarray:
    nodes = np.zeros(index.num_nodes, dtype=bool)
    nodes[index.rows[edge_mask]] = True
    nodes[index.cols[edge_mask]] = True
    return nodes


def _rates(selected: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    neg = ~truth
    fpr = float((selected & neg).sum() / neg.sum()) if neg.any() else 0.0
    tpr = float((selected & truth).sum() / truth.sum())
    return fpr, tpr


def selection_rates(selected_edges, truth: GroundTruth, index: EdgeIndex | None = None):
    """Edge and node false/true positive rates ``(efpr, etpr, nfpr, ntpr)``.

    ``selected_edges`` is a boolean mask over canonical edges or an iterable
    of ``(i, j)`` pairs. A node counts as selected if it touches a selected edge.
    """
    index = index or EdgeIndex(truth.num_nodes)
    sel = _edge_mask(selected_edges, index)
    E_true = truth.edge_mask(index)
    if not E_true.any():
        raise UndefinedRateError("edge TPR undefined: no differentiating edges")
    if not truth.active_nodes:
        raise UndefinedRateError("node TPR undefined: no active nodes")
    efpr, etpr = _rates(sel, E_true)
    nfpr, ntpr = _rates(incident_nodes(sel, index), truth.node_mask())
    return efpr, etpr, nfpr, ntpr


def roc_auc(points: Iterable[tuple[float, float]]) -> tuple[float, list[tuple[float, float]]]:
    """Trapezoid AUC of (FPR, TPR) points with (0,0) and (1,1) added.

    Points sharing an FPR keep the largest TPR, and TPR is made
    non-decreasing in FPR before integrating.
    """
    best: dict[float, float] = {0.0: 0.0, 1.0: 1.0}
    for f, t in points:
        best[f] = max(best.get(f, 0.0), t)
    fpr = np.array(sorted(best))
    tpr = np.maximum.accumulate(np.array([best[f] for f in fpr]))
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return auc, list(zip(fpr.tolist(), tpr.tolist()))


@dataclass(frozen=True)
class SelectionRoc:
    edge_auc: float
    node_auc: float
    edge_points: list = field(default_factory=list)
    node_points: list = field(default_factory=list)
    raw_points: list = field(default_factory=list)

    @property
    def roc_points(self) -> list:
        return self.raw_points


def selections_roc(selections: Sequence[np.ndarray], truth: GroundTruth) -> SelectionRoc:
    """ROC/AUC from a ladder of edge selections (boolean masks)."""
    index = EdgeIndex(truth.num_nodes)
    raw = [selection_rates(s, truth, index) for s in selections]
    e_auc, e_pts = roc_auc((r[0], r[1]) for r in raw)
    n_auc, n_pts = roc_auc((r[2], r[3]) for r in raw)
    return SelectionRoc(e_auc, n_auc, e_pts, n_pts, raw)


def _fit_selection(args):
    from .solver import fit

    data, lam, rho, gamma, config, init = args
    try:
        model, _ = fit(data, PenaltyParams(lam, rho, gamma), config, init)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        # A failed ladder point is dropped; contract violations propagate.
        logger.warning("fit failed at lambda=%g rho=%g: %s", lam, rho, exc)
        return None
    return model


def selection_auc(
    data: SampleSet,
    truth: GroundTruth,
    lam: float,
    rho_ladder: Sequence[float],
    config: SolverConfig | None = None,
    *,
    gamma: float = 1e-5,
    warm_start: bool = True,
) -> SelectionRoc:
    """Fit at each ``rho`` (fixed ``lam``) and summarize edge/node ROC.

    With ``warm_start`` the ladder is walked from the largest ``rho`` down,
    each fit starting from the previous solution.
    """
    rho_ladder = list(rho_ladder)
    if not rho_ladder:
        raise ValueError("rho ladder is empty")
    if any(b < a for a, b in zip(rho_ladder, rho_ladder[1:])):
        raise ValueError("rho ladder must be ascending")
    config = config or SolverConfig()
    selections = []
    prev = None
    for rho in reversed(rho_ladder):
        model = _fit_selection((data, lam, rho, gamma, config, prev if warm_start else None))
        if model is None:
            continue
        prev = model
        selections.append(model.selected_edges())
    if len(selections) < 2:
        raise RuntimeError("fewer than two ladder points produced a fit")
    return selections_roc(selections[::-1], truth)


def rho_ladder(lam: float, lo: float = 1e-5, hi: float = 0.05, num: int = 9) -> list[float]:
    """Ascending ``rho`` values whose edge threshold ``lam * rho`` spans ``[lo, hi]``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    return (np.logspace(np.log10(lo), np.log10(hi), num) / lam).tolist()


def _roc_task(args):
    design, lam, rhos, config, gamma = args
    data, truth = generate_population(design)
    return selection_auc(data, truth, lam, rhos, config, gamma=gamma)


def roc_study(
    designs: Sequence[SimDesign],
    lam: float,
    rho_ladder: Sequence[float],
    config: SolverConfig | None = None,
    *,
    gamma: float = 1e-5,
    jobs: int | None = 1,
) -> list[SelectionRoc]:
    """:func:`selection_auc` for each design (one population per design)."""
    from .model_selection import _map

    tasks = [(d, lam, list(rho_ladder), config, gamma) for d in designs]
    return _map(_roc_task, tasks, jobs)
