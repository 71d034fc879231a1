"""Logistic loss over graph inner products and the Newton intercept update.

The classifier score of a graph ``A`` is ``<A, B> + b = sum_ij A_ij B_ij + b``.
Because every ``A`` is symmetric with zero diagonal, only the pair sums
``B_ij + B_ji`` (i < j) enter, which lets everything run on the ``(n, E)``
edge design matrix of :class:`~sparsegc.types.SampleSet`.

Other smooth losses can be plugged into the solver by providing an object
with the same ``value_and_grad(scores, y)`` / ``curvature(scores, y)``
interface as :class:`LogisticLoss`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .types import DataError, SampleSet


class InterceptError(RuntimeError):
    """Newton's method for the intercept failed.

    ``last`` holds the final iterate.
    """

    def __init__(self, message: str, last: float = float("nan")):
        super().__init__(message)
        self.last = last


class LogisticLoss:
    """Mean of ``log(1 + exp(-y * s))`` over samples."""

    @staticmethod
    def value(scores: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(np.logaddexp(0.0, -y * scores)))

    @staticmethod
    def value_and_grad(scores: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss value and its derivative with respect to each score (already / n)."""
        z = -y * scores
        value = float(np.mean(np.logaddexp(0.0, z)))
        return value, -y * expit(z) / scores.size

    @staticmethod
    def curvature(scores: np.ndarray, y: np.ndarray) -> np.ndarray:
        p = expit(scores)
        return p * (1.0 - p) / scores.size


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient_B: np.ndarray
    gradient_b: float


def _check(B: np.ndarray, data: SampleSet) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (data.num_nodes, data.num_nodes):
        raise DataError(
            f"coefficient shape {B.shape} does not match {data.num_nodes} nodes"
        )
    return B


def pair_sums(B: np.ndarray, data: SampleSet) -> np.ndarray:
    """``B_ij + B_ji`` for every canonical edge."""
    idx = data.index
    return B[idx.rows, idx.cols] + B[idx.cols, idx.rows]


def graph_scores(B, data: SampleSet) -> np.ndarray:
    """``<A^(k), B>`` for every sample, without intercept."""
    B = _check(B, data)
    return data.X @ pair_sums(B, data)


def edge_gradient_to_matrix(g: np.ndarray, data: SampleSet) -> np.ndarray:
    idx = data.index
    G = np.zeros((data.num_nodes, data.num_nodes))
    G[idx.rows, idx.cols] = g
    G[idx.cols, idx.rows] = g
    return G


def logistic_loss(B, b: float, data: SampleSet) -> float:
    return LogisticLoss.value(graph_scores(B, data) + b, data.y)


def logistic_gradient(B, b: float, data: SampleSet) -> LossValue:
    """Loss value with gradients in ``B`` (entrywise) and in ``b``.

    ``gradient_B[i, j]`` is the partial derivative with respect to the single
    entry ``B_ij``; it is symmetric with zero diagonal because the data are.
    """
    scores = graph_scores(B, data) + b
    value, dscore = LogisticLoss.value_and_grad(scores, data.y)
    G = edge_gradient_to_matrix(data.X.T @ dscore, data)
    return LossValue(value, G, float(dscore.sum()))


def newton_intercept(
    B,
    data: SampleSet,
    tol: float = 1e-10,
    *,
    scores: np.ndarray | None = None,
    b0: float | None = None,
    max_iter: int = 100,
) -> float:
    """Minimize the loss over the intercept with ``B`` held fixed.

    One-dimensional Newton with step halving. ``scores`` may carry
    precomputed ``<A^(k), B>`` values to skip the matrix product.
    """
    n_plus, n_minus = data.class_counts()
    if n_plus == 0 or n_minus == 0:
        raise InterceptError("intercept diverges: data contain a single class")
    s = graph_scores(B, data) if scores is None else scores
    y = data.y

    def derivative(b):
        return float(LogisticLoss.value_and_grad(s + b, y)[1].sum())

    b = float(np.log(n_plus / n_minus)) if b0 is None else float(b0)
    g = derivative(b)
    # The derivative is increasing in b; halve Newton steps until |g| drops.
    for _ in range(max_iter):
        if abs(g) < tol:
            return b
        h = float(LogisticLoss.curvature(s + b, y).sum())
        step = g / h if h > 0 else np.sign(g)
        for _ in range(60):
            b_new = b - step
            g_new = derivative(b_new)
            if abs(g_new) < abs(g):
                break
            step *= 0.5
        else:
            raise InterceptError("intercept step halving failed", last=b)
        b, g = b_new, g_new
    raise InterceptError("intercept Newton iteration did not converge", last=b)
