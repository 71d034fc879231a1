"""Shared domain types: graph samples, coefficient models, parameter bundles.

Edges are always enumerated in row-major upper-triangle order, i.e.
``(0, 1), (0, 2), ..., (0, N-1), (1, 2), ...``. Every file format,
coefficient vector and report in the package uses this layout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12


class DataError(ValueError):
    """Input data violates a structural requirement."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def as_graph_matrix(adjacency, *, name: str = "adjacency") -> np.ndarray:
    """Validate a square matrix and return its exact projection onto graphs.

    Matrices whose asymmetry is within ``1e-12 * max(1, max|A|)`` are
    symmetrized by averaging; the diagonal must already be zero.
    """
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise DataError(f"{name} is not symmetric")
    if np.any(np.diag(a) != 0):
        raise DataError(f"{name} has a nonzero diagonal")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class EdgeIndex:
    """Bijection between off-diagonal pairs ``i < j`` and a flat edge vector."""

    num_nodes: int

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be positive")

    @cached_property
    def rows(self) -> np.ndarray:
        return np.triu_indices(self.num_nodes, k=1)[0]

    @cached_property
    def cols(self) -> np.ndarray:
        return np.triu_indices(self.num_nodes, k=1)[1]

    @property
    def num_edges(self) -> int:
        return self.num_nodes * (self.num_nodes - 1) // 2

    @property
    def pair_list(self) -> list[tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    def position(self, i: int, j: int) -> int:
        """Flat position of the unordered pair ``{i, j}``."""
        if i == j:
            raise ValueError("diagonal pairs have no edge position")
        if i > j:
            i, j = j, i
        n = self.num_nodes
        return i * (2 * n - i - 1) // 2 + (j - i - 1)

    @classmethod
    def from_num_edges(cls, num_edges: int) -> "EdgeIndex":
        n = int(round((1 + np.sqrt(1 + 8 * num_edges)) / 2))
        if n * (n - 1) // 2 != num_edges:
            raise DataError(f"{num_edges} is not a triangular number of edges")
        return cls(n)


def vectorize_upper(adjacency, index: EdgeIndex) -> np.ndarray:
    """Flatten a symmetric zero-diagonal matrix into its upper-triangle vector."""
    a = np.asarray(adjacency, dtype=float)
    if a.shape != (index.num_nodes, index.num_nodes):
        raise DataError(
            f"matrix shape {a.shape} does not match {index.num_nodes} nodes"
        )
    a = as_graph_matrix(a)
    return a[index.rows, index.cols]


def devectorize_upper(v, index: EdgeIndex) -> np.ndarray:
    """Inverse of :func:`vectorize_upper`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (index.num_edges,):
        raise DataError(
            f"edge vector has length {v.size}, expected {index.num_edges}"
        )
    a = np.zeros((index.num_nodes, index.num_nodes))
    a[index.rows, index.cols] = v
    a[index.cols, index.rows] = v
    return a


@dataclass(frozen=True)
class GraphSample:
    adjacency: np.ndarray
    label: int
    subject_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _frozen(as_graph_matrix(self.adjacency)))
        if self.label not in (-1, 1):
            raise DataError(f"label must be -1 or +1, got {self.label!r}")
        object.__setattr__(self, "label", int(self.label))

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]


class SampleSet:
    """Ordered collection of graph samples on a common labeled node set.

    The edge design matrix ``X`` (one row per sample, one column per edge in
    canonical order) is built once and reused by the loss.
    """

    def __init__(self, samples: Sequence[GraphSample]):
        samples = tuple(samples)
        if not samples:
            raise DataError("sample set is empty")
        n_nodes = {s.num_nodes for s in samples}
        if len(n_nodes) != 1:
            raise DataError(f"samples have differing node counts: {sorted(n_nodes)}")
        self.samples = samples
        self.num_nodes = n_nodes.pop()
        self.index = EdgeIndex(self.num_nodes)
        X = np.empty((len(samples), self.index.num_edges))
        for k, s in enumerate(samples):
            X[k] = s.adjacency[self.index.rows, self.index.cols]
        X.setflags(write=False)
        self.X = X
        y = np.array([s.label for s in samples], dtype=float)
        y.setflags(write=False)
        self.y = y

    @classmethod
    def from_arrays(cls, edges, labels, subject_ids=None) -> "SampleSet":
        """Build from an ``(n, E)`` edge matrix and a label vector."""
        edges = np.atleast_2d(np.asarray(edges, dtype=float))
        index = EdgeIndex.from_num_edges(edges.shape[1])
        if subject_ids is None:
            subject_ids = [f"s{k:04d}" for k in range(edges.shape[0])]
        return cls(
            GraphSample(devectorize_upper(row, index), int(lab), str(sid))
            for row, lab, sid in zip(edges, labels, subject_ids)
        )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def subset(self, indices) -> "SampleSet":
        return SampleSet([self.samples[int(i)] for i in indices])

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.samples]

    def class_counts(self) -> tuple[int, int]:
        """Return ``(n_plus, n_minus)``."""
        n_plus = int(np.sum(self.y > 0))
        return n_plus, len(self) - n_plus

    def require_both_classes(self):
        n_plus, n_minus = self.class_counts()
        if n_plus == 0 or n_minus == 0:
            raise DataError("fitting requires at least one sample of each class")


@dataclass(frozen=True)
class PenaltyParams:
    """Tuning parameters of the penalized objective.

    ``lam`` scales the whole node+edge penalty, ``rho`` weights the
    elementwise part against the row-group part, ``gamma`` is the ridge.
    """

    lam: float
    rho: float
    gamma: float = 1e-5

    def __post_init__(self):
        for name in ("lam", "rho", "gamma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite nonnegative number, got {v}")


@dataclass(frozen=True)
class SolverConfig:
    t0: float = 1.0
    alpha: float = 2.0
    delta: float = 0.5
    eta: float = 1e-3
    prox_tol: float = 1e-7
    admm_tol_init: float = 1e-4
    admm_tol_min: float = 1e-8
    admm_mu: float = 0.1
    max_outer_iter: int = 2000
    max_admm_iter: int = 10_000

    def __post_init__(self):
        checks = {
            "t0": self.t0 > 0,
            "alpha": self.alpha >= 1,
            "delta": 0 < self.delta < 1,
            "eta": self.eta > 0,
            "prox_tol": self.prox_tol > 0,
            "admm_tol_init": self.admm_tol_init > 0,
            "admm_tol_min": self.admm_tol_min > 0,
            "admm_mu": self.admm_mu > 0,
            "max_outer_iter": self.max_outer_iter >= 1,
            "max_admm_iter": self.max_admm_iter >= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"SolverConfig fields out of range: {', '.join(bad)}")

    def admm_tol(self, outer_iteration: int) -> float:
        """ADMM tolerance used at a given (1-based) outer iteration."""
        return max(self.admm_tol_init / max(outer_iteration, 1), self.admm_tol_min)


def count_active(coefficients: np.ndarray) -> tuple[int, int]:
    """Return ``(active_edges, active_nodes)`` of a coefficient matrix.

    An edge is active if either of its two entries is nonzero, so the
    count also makes sense for non-symmetric (union formulation) fits.
    """
    nz = coefficients != 0
    pair = np.triu(nz | nz.T, k=1)
    return int(pair.sum()), int(np.any(nz, axis=1).sum())


@dataclass(frozen=True)
class CoefficientModel:
    coefficients: np.ndarray
    intercept: float
    objective_trace: tuple[float, ...] = ()
    active_edges: int = field(init=False)
    active_nodes: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen(self.coefficients))
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "objective_trace", tuple(map(float, self.objective_trace)))
        edges, nodes = count_active(self.coefficients)
        object.__setattr__(self, "active_edges", edges)
        object.__setattr__(self, "active_nodes", nodes)

    @property
    def num_nodes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.coefficients, self.coefficients.T))

    def selected_edges(self) -> np.ndarray:
        """Boolean mask over canonical edge positions."""
        c = self.coefficients != 0
        c = c | c.T
        idx = EdgeIndex(self.num_nodes)
        return c[idx.rows, idx.cols]

    def active_node_mask(self) -> np.ndarray:
        return np.any(self.coefficients != 0, axis=1)

    def negated(self) -> "CoefficientModel":
        return CoefficientModel(-self.coefficients, -self.intercept, self.objective_trace)
