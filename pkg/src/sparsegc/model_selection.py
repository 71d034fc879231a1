"""Tuning-parameter search and selection uncertainty.

Cross-validation walks each ``rho`` column of the grid along a warm-started
``lam`` path (largest ``lam`` first). Folds, paths and subsample fits are
independent tasks; results are gathered by index, so output does not depend
on the number of workers.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .solver import accuracy, fit
from .types import DataError, PenaltyParams, SampleSet, SolverConfig

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.75


def half_decades(lo: int, hi: int) -> list[float]:
    """``10**lo, 10**(lo + 0.5), ..., 10**hi``."""
    return [float(10.0 ** (e / 2)) for e in range(2 * lo, 2 * hi + 1)]


@dataclass(frozen=True)
class TuningGrid:
    lambdas: tuple[float, ...]
    rhos: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        rho = tuple(float(v) for v in self.rhos)
        if not lam or not rho:
            raise ValueError("tuning grid axes must be nonempty")
        if any(v <= 0 or not np.isfinite(v) for v in lam):
            raise ValueError("lambdas must be positive and finite")
        if any(v < 0 or not np.isfinite(v) for v in rho):
            raise ValueError("rhos must be nonnegative and finite")
        for name, axis in (("lambdas", lam), ("rhos", rho)):
            if any(b <= a for a, b in zip(axis, axis[1:])):
                raise ValueError(f"{name} must be strictly ascending")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "rhos", rho)

    @classmethod
    def default(cls) -> "TuningGrid":
        """lam in 1e-7..1e-2 and rho in 1e-3..1e2, half-decade steps."""
        return cls(half_decades(-7, -2), half_decades(-3, 2))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.lambdas), len(self.rhos)

    def cells(self) -> list[tuple[float, float]]:
        return [(lam, rho) for lam in self.lambdas for rho in self.rhos]


@dataclass(frozen=True)
class CvResult:
    """Per-cell statistics, indexed ``[lambda_index, rho_index]``.

    ``accuracy_se`` is the sample standard deviation of fold accuracies over
    ``sqrt(folds)``. Sparsities are the fractions of zero edges and inactive
    nodes in the refit on all data.
    """

    grid: TuningGrid
    fold_accuracy: np.ndarray
    accuracy: np.ndarray
    accuracy_se: np.ndarray
    active_edges: np.ndarray
    active_nodes: np.ndarray
    edge_sparsity: np.ndarray
    node_sparsity: np.ndarray
    chosen_cell: tuple[float, float]
    one_se_cell: tuple[float, float]
    fold_assignments: np.ndarray
    seed: int
    failed_fits: int = 0

    @property
    def folds(self) -> int:
        return self.fold_accuracy.shape[0]

    def cell_index(self, cell: tuple[float, float]) -> tuple[int, int]:
        return self.grid.lambdas.index(cell[0]), self.grid.rhos.index(cell[1])

    def best_accuracy(self) -> float:
        return float(self.accuracy[self.cell_index(self.chosen_cell)])

    def table(self) -> list[dict]:
        """One record per cell in grid order (lambda-major)."""
        rows = []
        for a, lam in enumerate(self.grid.lambdas):
            for r, rho in enumerate(self.grid.rhos):
                rows.append(
                    {
                        "lambda": lam,
                        "rho": rho,
                        "accuracy": float(self.accuracy[a, r]),
                        "accuracy_se": float(self.accuracy_se[a, r]),
                        "edge_sparsity": float(self.edge_sparsity[a, r]),
                        "node_sparsity": float(self.node_sparsity[a, r]),
                        "active_edges": int(self.active_edges[a, r]),
                        "active_nodes": int(self.active_nodes[a, r]),
                    }
                )
        return rows


@dataclass(frozen=True)
class NestedCvResult:
    outer_accuracy: np.ndarray
    chosen_cells: tuple[tuple[float, float], ...]
    fold_assignments: np.ndarray
    seed: int

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.outer_accuracy))

    @property
    def accuracy_se(self) -> float:
        return _se(self.outer_accuracy)


@dataclass(frozen=True)
class StabilityReport:
    selection_probability: np.ndarray
    node_probability: np.ndarray
    num_subsample_pairs: int
    base_params: tuple[float, float]
    expected_false_bound: float | None
    failed_fits: int = 0
    theta: float = DEFAULT_THETA
    full_coefficients: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_nodes(self) -> int:
        return self.node_probability.shape[0]

    def ranking(self) -> list[tuple[int, int, float, float]]:
        """``(i, j, coefficient, probability)`` sorted by probability, descending.

        Ties keep canonical edge order. The coefficient is from the full-data
        fit (0 if it was not computed).
        """
        from .types import EdgeIndex

        idx = EdgeIndex(self.num_nodes)
        order = np.argsort(-self.selection_probability, kind="stable")
        coef = self.full_coefficients
        out = []
        for e in order:
            i, j = int(idx.rows[e]), int(idx.cols[e])
            c = float(coef[i, j]) if coef is not None else 0.0
            out.append((i, j, c, float(self.selection_probability[e])))
        return out


def _se(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def default_jobs() -> int:
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def _map(func: Callable, tasks: Sequence, jobs: int | None) -> list:
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if jobs == 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(func, tasks))


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample from a seeded stratified shuffle split."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    y = np.asarray(y)
    counts = [int(np.sum(y > 0)), int(np.sum(y <= 0))]
    if min(counts) < folds:
        raise DataError(
            f"cannot stratify {counts[0]} positive / {counts[1]} negative samples "
            f"into {folds} folds with both classes in every fold"
        )
    assignment = np.empty(y.size, dtype=int)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    for f, (_, test) in enumerate(splitter.split(np.zeros(y.size), y)):
        assignment[test] = f
    return assignment


def _prepare(train: SampleSet, test: SampleSet | None, rank_standardize: bool):
    if not rank_standardize:
        return train, test
    from .io import rank_standardize as rank_fn

    train_t, record = rank_fn(train)
    return train_t, (record.apply(test) if test is not None else None)


def _path_task(args):
    """Fit a descending-lambda path at one rho; score on the held-out part."""
    train, test, lambdas, rho, gamma, config, rank_std = args
    train, test = _prepare(train, test, rank_std)
    out = []
    prev = None
    for lam in sorted(lambdas, reverse=True):
        try:
            model, _ = fit(train, PenaltyParams(lam, rho, gamma), config, prev)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            logger.warning("fit failed at lambda=%g rho=%g: %s", lam, rho, exc)
            out.append((lam, np.nan, -1, -1))
            continue
        prev = model
        acc = accuracy(model, test) if test is not None else np.nan
        out.append((lam, acc, model.active_edges, model.active_nodes))
    return out


def _chosen(acc: np.ndarray, grid: TuningGrid) -> tuple[int, int]:
    if np.all(np.isnan(acc)):
        raise RuntimeError("every grid cell failed")
    best = np.nanmax(acc)
    # Ties go to the sparser model: larger rho, then larger lambda.
    cands = [(r, a) for a in range(acc.shape[0]) for r in range(acc.shape[1]) if acc[a, r] == best]
    r, a = max(cands)
    return a, r


def _one_se(acc, se, edges, nodes, chosen: tuple[int, int]) -> tuple[int, int]:
    best = acc[chosen]
    floor = best - se[chosen]
    cands = []
    for a in range(acc.shape[0]):
        for r in range(acc.shape[1]):
            if acc[a, r] >= floor and edges[a, r] >= 0:
                cands.append((edges[a, r], nodes[a, r], -r, -a))
    e, n, r, a = min(cands)
    return -a, -r


def cross_validate(
    data: SampleSet,
    grid: TuningGrid,
    folds: int = 10,
    seed: int = 0,
    config: SolverConfig | None = None,
    *,
    gamma: float = 1e-5,
    jobs: int | None = 1,
    rank_standardize: bool = False,
) -> CvResult:
    """Stratified k-fold grid search with a full-data refit for sparsity.

    Parameters
    ----------
    jobs : int or None
        Worker processes; ``None`` uses every available CPU.
    rank_standardize : bool
        Refit the rank-standardization inside each training fold and apply
        the training statistics to the held-out fold.
    """
    config = config or SolverConfig()
    data.require_both_classes()
    assignment = stratified_folds(data.y, folds, seed)
    splits = []
    for f in range(folds):
        train = data.subset(np.flatnonzero(assignment != f))
        test = data.subset(np.flatnonzero(assignment == f))
        if min(train.class_counts()) == 0 or min(test.class_counts()) == 0:
            raise DataError(f"fold {f} lacks one of the classes")
        splits.append((train, test))
    splits.append((data, None))  # full-data refit

    tasks = [
        (train, test, grid.lambdas, rho, gamma, config, rank_standardize)
        for train, test in splits
        for rho in grid.rhos
    ]
    results = _map(_path_task, tasks, jobs)

    L, R = grid.shape
    fold_acc = np.full((folds, L, R), np.nan)
    edges = np.full((L, R), -1, dtype=int)
    nodes = np.full((L, R), -1, dtype=int)
    failed = 0
    for k, path in enumerate(results):
        f, r = divmod(k, R)
        for lam, acc, ne, nn in path:
            a = grid.lambdas.index(lam)
            if ne < 0:
                failed += 1
            if f < folds:
                fold_acc[f, a, r] = acc
            else:
                edges[a, r], nodes[a, r] = ne, nn

    ok = ~np.isnan(fold_acc)
    mean = np.full((L, R), np.nan)
    se = np.full((L, R), np.nan)
    for a in range(L):
        for r in range(R):
            vals = fold_acc[ok[:, a, r], a, r]
            if vals.size:
                mean[a, r] = vals.mean()
                se[a, r] = _se(vals)
    chosen = _chosen(mean, grid)
    assert all(mean[chosen] >= m for m in mean[~np.isnan(mean)])
    one_se = _one_se(mean, se, edges, nodes, chosen)

    n_edges, n_nodes = data.index.num_edges, data.num_nodes
    edge_sp = np.where(edges >= 0, 1.0 - edges / n_edges, np.nan)
    node_sp = np.where(nodes >= 0, 1.0 - nodes / n_nodes, np.nan)
    return CvResult(
        grid=grid,
        fold_accuracy=fold_acc,
        accuracy=mean,
        accuracy_se=se,
        active_edges=edges,
        active_nodes=nodes,
        edge_sparsity=edge_sp,
        node_sparsity=node_sp,
        chosen_cell=(grid.lambdas[chosen[0]], grid.rhos[chosen[1]]),
        one_se_cell=(grid.lambdas[one_se[0]], grid.rhos[one_se[1]]),
        fold_assignments=assignment,
        seed=seed,
        failed_fits=failed,
    )


def one_se_rule(cv: CvResult) -> tuple[float, float]:
    """Sparsest cell within one standard error of the best mean accuracy.

    Fewest active edges first, then fewest active nodes, then larger rho.
    """
    a, r = _one_se(
        cv.accuracy, cv.accuracy_se, cv.active_edges, cv.active_nodes, cv.cell_index(cv.chosen_cell)
    )
    return cv.grid.lambdas[a], cv.grid.rhos[r]


def nested_cross_validate(
    data: SampleSet,
    grid: TuningGrid,
    folds: int = 10,
    inner_folds: int = 10,
    seed: int = 0,
    config: SolverConfig | None = None,
    *,
    gamma: float = 1e-5,
    jobs: int | None = 1,
    rank_standardize: bool = False,
) -> NestedCvResult:
    """Outer k-fold accuracy of the full tuning procedure.

    Each outer training portion runs its own inner grid search; the chosen
    cell is refit there and scored on the outer held-out fold.
    """
    config = config or SolverConfig()
    assignment = stratified_folds(data.y, folds, seed)
    inner_seeds = np.random.SeedSequence(seed).generate_state(folds)
    accs, cells = [], []
    for f in range(folds):
        train = data.subset(np.flatnonzero(assignment != f))
        test = data.subset(np.flatnonzero(assignment == f))
        inner = cross_validate(
            train, grid, inner_folds, int(inner_seeds[f]), config,
            gamma=gamma, jobs=jobs, rank_standardize=rank_standardize,
        )
        lam, rho = inner.chosen_cell
        tr, te = _prepare(train, test, rank_standardize)
        model, _ = fit(tr, PenaltyParams(lam, rho, gamma), config)
        accs.append(accuracy(model, te))
        cells.append((lam, rho))
    return NestedCvResult(np.array(accs), tuple(cells), assignment, seed)


def _stability_task(args):
    data, lam, rho, gamma, config = args
    try:
        model, _ = fit(data, PenaltyParams(lam, rho, gamma), config)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        logger.warning("subsample fit failed: %s", exc)
        return None
    return model.selected_edges(), model.active_node_mask()


def complementary_pairs(n: int, pairs: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint halves of size ``n // 2`` drawn ``pairs`` times."""
    rng = np.random.default_rng(seed)
    half = n // 2
    out = []
    for _ in range(pairs):
        perm = rng.permutation(n)
        out.append((np.sort(perm[:half]), np.sort(perm[half : 2 * half])))
    return out


def stability_selection(
    data: SampleSet,
    params: tuple[float, float],
    pairs: int = 50,
    seed: int = 0,
    config: SolverConfig | None = None,
    *,
    gamma: float = 1e-5,
    jobs: int | None = 1,
    theta: float = DEFAULT_THETA,
    full_fit: bool = True,
) -> StabilityReport:
    """Complementary-pairs stability selection at fixed ``(lam, rho)``.

    Samples are put in canonical order (by subject id) before splitting, so
    the result does not depend on input order. ``expected_false_bound`` is
    the Meinshausen-Buhlmann bound ``q**2 / ((2 theta - 1) p)`` on the
    expected number of false selections at threshold ``theta``, used here as
    an approximation; ``q`` is the mean number of edges selected per fit.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if len(data) < 4:
        raise DataError("stability selection needs at least 4 samples")
    if not 0.5 < theta <= 1:
        raise ValueError("theta must lie in (0.5, 1]")
    lam, rho = map(float, params)
    config = config or SolverConfig()
    ids = data.subject_ids
    order = sorted(range(len(data)), key=lambda k: (ids[k], k))
    canon = data.subset(order)
    tasks = []
    for a, b in complementary_pairs(len(canon), pairs, seed):
        tasks.append((canon.subset(a), lam, rho, gamma, config))
        tasks.append((canon.subset(b), lam, rho, gamma, config))
    results = _map(_stability_task, tasks, jobs)
    good = [r for r in results if r is not None]
    failed = len(results) - len(good)
    if failed > 0.2 * len(results):
        raise RuntimeError(f"{failed} of {len(results)} subsample fits failed")
    edge_counts = np.sum([g[0] for g in good], axis=0, dtype=float)
    node_counts = np.sum([g[1] for g in good], axis=0, dtype=float)
    edge_prob = edge_counts / len(good)
    node_prob = node_counts / len(good)
    q = float(np.mean([g[0].sum() for g in good]))
    bound = q * q / ((2 * theta - 1) * data.index.num_edges)
    coef = None
    if full_fit:
        try:
            coef = fit(data, PenaltyParams(lam, rho, gamma), config)[0].coefficients
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            logger.warning("full-data fit failed: %s", exc)
    return StabilityReport(
        selection_probability=edge_prob,
        node_probability=node_prob,
        num_subsample_pairs=pairs,
        base_params=(lam, rho),
        expected_false_bound=bound,
        failed_fits=failed,
        theta=theta,
        full_coefficients=coef,
    )
