"""Accelerated proximal gradient fit of the node/edge-sparse graph classifier.

Objective::

    F(B, b) = mean_k log(1 + exp(-y_k (<A_k, B> + b)))
              + gamma/2 ||B||_F^2 + lam (sum_i ||B_(i)||_2 + rho ||B||_1)

minimized over symmetric zero-diagonal ``B`` (or, with
``formulation="union"``, over zero-diagonal ``B`` without symmetry).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .loss import LogisticLoss, newton_intercept
from .prox import AdmmNotConverged, admm_solve, penalty_value, prox_union_closed_form
from .types import (
    CoefficientModel,
    DataError,
    PenaltyParams,
    SampleSet,
    SolverConfig,
    as_graph_matrix,
)

logger = logging.getLogger(__name__)

# Slack on the sufficient-decrease test; the loss-only form is checked at 1e-12.
_ACCEPT_SLACK = 5e-13
BACKTRACKING_TOL = 1e-12
_MAX_BACKTRACKS = 200
_RESTART_AFTER = 5


class SolverError(RuntimeError):
    """The outer iteration diverged or could not take a step."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class BacktrackingViolation(AssertionError):
    """An accepted step failed the quadratic upper-bound condition."""


@dataclass(frozen=True)
class FitDiagnostics:
    outer_iterations: int
    objective_trace: tuple[float, ...]
    step_size_trace: tuple[float, ...]
    backtracking_counts: tuple[int, ...]
    backtracking_slack: tuple[float, ...]
    admm_iterations: tuple[int, ...]
    kkt_residual: float
    converged: bool
    restarts: int = 0
    admm_cap_hits: int = 0
    final_objective: float = float("nan")
    raw_coefficients: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "final_objective": self.final_objective,
            "restarts": self.restarts,
            "admm_cap_hits": self.admm_cap_hits,
            "min_backtracking_slack": min(self.backtracking_slack, default=None),
            "objective_trace": list(self.objective_trace),
            "step_size_trace": list(self.step_size_trace),
            "backtracking_counts": list(self.backtracking_counts),
            "admm_iterations": list(self.admm_iterations),
        }


class _Problem:
    """Caches the data layout for fast loss/gradient evaluation."""

    def __init__(self, data: SampleSet, penalty: PenaltyParams):
        self.data = data
        self.penalty = penalty
        self.rows = data.index.rows
        self.cols = data.index.cols
        self.N = data.num_nodes

    def scores(self, B):
        return self.data.X @ (B[self.rows, self.cols] + B[self.cols, self.rows])

    def loss(self, scores, b):
        return LogisticLoss.value(scores + b, self.data.y)

    def loss_and_grad(self, scores, b):
        value, d = LogisticLoss.value_and_grad(scores + b, self.data.y)
        g = self.data.X.T @ d
        G = np.zeros((self.N, self.N))
        G[self.rows, self.cols] = g
        G[self.cols, self.rows] = g
        return value, G

    def ridge(self, B):
        return 0.5 * self.penalty.gamma * float(np.vdot(B, B))

    def objective(self, B, b, scores=None):
        s = self.scores(B) if scores is None else scores
        p = self.penalty
        return self.loss(s, b) + self.ridge(B) + penalty_value(B, p.lam, p.rho)


def _check_B(B, data: SampleSet, symmetric: bool = True) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (data.num_nodes, data.num_nodes):
        raise DataError(f"coefficient shape {B.shape} does not match {data.num_nodes} nodes")
    return as_graph_matrix(B, name="coefficients") if symmetric else B


def objective(B, b: float, data: SampleSet, penalty: PenaltyParams) -> float:
    """Full penalized objective at ``(B, b)``."""
    B = _check_B(B, data, symmetric=False)
    return _Problem(data, penalty).objective(B, b)


def fit(
    data: SampleSet,
    penalty: PenaltyParams,
    config: SolverConfig | None = None,
    init: CoefficientModel | None = None,
    *,
    formulation: str = "symmetric",
    prox: str = "admm",
    backend: str | None = None,
) -> tuple[CoefficientModel, FitDiagnostics]:
    """Fit ``(B, b)`` by accelerated proximal gradient with backtracking.

    Parameters
    ----------
    formulation : {"symmetric", "union"}
        ``"union"`` drops the symmetry constraint (non-overlapping row
        groups); the returned model then holds ``(B + B^T) / 2`` and the raw
        solution is kept in ``diagnostics.raw_coefficients``.
    prox : {"admm", "closed_form"}
        ``"closed_form"`` is only valid for the union formulation.

    Returns
    -------
    model, diagnostics
    """
    config = config or SolverConfig()
    if formulation not in ("symmetric", "union"):
        raise ValueError(f"unknown formulation {formulation!r}")
    if prox not in ("admm", "closed_form"):
        raise ValueError(f"unknown prox {prox!r}")
    symmetric = formulation == "symmetric"
    if symmetric and prox == "closed_form":
        raise ValueError("the closed-form prox requires formulation='union'")
    data.require_both_classes()
    prob = _Problem(data, penalty)
    lam, rho = penalty.lam, penalty.rho

    if init is not None:
        B = _check_B(init.coefficients, data, symmetric=symmetric).copy()
        b = float(init.intercept)
    else:
        B = np.zeros((data.num_nodes, data.num_nodes))
        n_plus, n_minus = data.class_counts()
        b = float(np.log(n_plus / n_minus))
    s_B = prob.scores(B)
    F = prob.objective(B, b, s_B)
    B_init, b_init, F_init = B.copy(), b, F

    trace, steps, backtracks, slacks, admm_its = [F], [], [], [], []
    t = config.t0
    B_prev = B
    momentum = 0
    increases = 0
    restarts = 0
    cap_hits = 0
    eps_prev = None
    state = None
    converged = False
    k = 0
    for k in range(1, config.max_outer_iter + 1):
        momentum += 1
        if momentum > 1:
            W = B + ((momentum - 1) / (momentum + 2)) * (B - B_prev)
        else:
            W = B
        s_W = prob.scores(W)
        loss_W, grad_W = prob.loss_and_grad(s_W, b)
        ridge_W = prob.ridge(W)
        smooth_grad = grad_W + penalty.gamma * W
        tol = config.admm_tol(k)

        n_back = 0
        its = 0
        while True:
            Z = W - t * smooth_grad
            if prox == "closed_form":
                B_new = prox_union_closed_form(Z, t, lam, rho)
            elif lam == 0:
                B_new = Z.copy()
                if symmetric:
                    B_new = 0.5 * (B_new + B_new.T)
                np.fill_diagonal(B_new, 0.0)
            else:
                try:
                    B_new, state = admm_solve(
                        Z, t, penalty, config, tol, state, symmetric=symmetric, backend=backend
                    )
                except AdmmNotConverged as exc:
                    B_new, state = exc.result, exc.state
                    cap_hits += 1
                    logger.debug("outer iteration %d: %s", k, exc)
                its += state.iteration
            s_new = prob.scores(B_new)
            loss_new = prob.loss(s_new, b)
            D = B_new - W
            lin = float(np.vdot(smooth_grad, D))
            quad = float(np.vdot(D, D)) / (2.0 * t)
            smooth_new = loss_new + prob.ridge(B_new)
            if smooth_new <= loss_W + ridge_W + lin + quad + _ACCEPT_SLACK:
                break
            t *= config.delta
            n_back += 1
            if n_back > _MAX_BACKTRACKS:
                raise SolverError("backtracking failed to find an acceptable step", trace)

        slack = loss_W + float(np.vdot(grad_W, D)) + quad - loss_new
        if slack < -BACKTRACKING_TOL:
            raise BacktrackingViolation(
                f"accepted step violates the descent condition by {-slack:.3g}"
            )
        b = newton_intercept(B_new, data, scores=s_new, b0=b)
        F_new = prob.objective(B_new, b, s_new)
        if not np.isfinite(F_new):
            raise SolverError("objective became non-finite", trace)

        eps = F - F_new
        increases = increases + 1 if eps < 0 else 0
        if increases >= _RESTART_AFTER:
            momentum = 0
            increases = 0
            restarts += 1
            B_prev = B_new
        else:
            B_prev = B
        B, F = B_new, F_new
        trace.append(F)
        steps.append(t)
        backtracks.append(n_back)
        slacks.append(slack)
        admm_its.append(its)

        if eps > 0 and eps_prev is not None and abs(eps - eps_prev) / eps < config.eta:
            t *= config.alpha
        eps_prev = eps
        if abs(eps) < config.prox_tol * (1.0 + abs(F)):
            converged = True
            break

    if F > F_init + 1e-12:
        logger.warning("final objective above its initial value; returning the start point")
        B, b, F = B_init, b_init, F_init

    raw = None
    if symmetric:
        coef = B
        kkt = kkt_residual(coef, b, data, penalty)
    else:
        raw = B.copy()
        coef = 0.5 * (B + B.T)
        kkt = float("nan")
    model = CoefficientModel(coef, b, trace)
    diag = FitDiagnostics(
        outer_iterations=k,
        objective_trace=tuple(trace),
        step_size_trace=tuple(steps),
        backtracking_counts=tuple(backtracks),
        backtracking_slack=tuple(slacks),
        admm_iterations=tuple(admm_its),
        kkt_residual=kkt,
        converged=converged,
        restarts=restarts,
        admm_cap_hits=cap_hits,
        final_objective=F,
        raw_coefficients=raw,
    )
    return model, diag


def _split_excess(C: np.ndarray, free: np.ndarray, lam: float, iters: int = 2000) -> np.ndarray:
    """Rebalance shared demand between pairs of inactive rows.

    ``C`` holds the per-row demand on each inactive row; entries where both
    endpoints are inactive (``free``) may be shifted between ``C[i, j]``
    and ``C[j, i]``. Minimizes ``sum_i (||C_i|| - lam)_+^2`` by gradient
    descent on the antisymmetric shift and returns the per-row excess.
    """
    C = C.copy()
    for _ in range(iters):
        norms = np.linalg.norm(C, axis=1)
        excess = np.maximum(norms - lam, 0.0)
        if not np.any(excess[np.any(free, axis=1)] > 0):
            break
        w = np.divide(2.0 * excess, norms, out=np.zeros_like(norms), where=norms > 0)
        K = w[:, None] * C
        step = 0.25 * np.where(free, K - K.T, 0.0)
        C -= step
    return np.maximum(np.linalg.norm(C, axis=1) - lam, 0.0)


def kkt_residual(B, b: float, data: SampleSet, penalty: PenaltyParams) -> float:
    """Optimality certificate for a symmetric fit: zero at the exact optimum.

    Works in edge coordinates ``beta_e = B_ij = B_ji``. Combines
    (i) the exact subgradient residual on nonzero edges, (ii) the lasso
    dual-norm excess on zero edges between active nodes, (iii) the group
    dual-norm excess of each inactive node, and (iv) the intercept gradient.
    """
    B = _check_B(B, data)
    prob = _Problem(data, penalty)
    lam, rho, gamma = penalty.lam, penalty.rho, penalty.gamma
    s = prob.scores(B)
    _, d = LogisticLoss.value_and_grad(s + b, data.y)
    grad_b = float(d.sum())
    rows, cols = prob.rows, prob.cols
    g = 2.0 * (data.X.T @ d) + 2.0 * gamma * B[rows, cols]
    beta = B[rows, cols]
    norms = np.linalg.norm(B, axis=1)
    active = norms > 0
    nz = beta != 0
    lasso = 2.0 * lam * rho

    r_nz = g[nz] + lam * beta[nz] * (1.0 / norms[rows[nz]] + 1.0 / norms[cols[nz]])
    r_nz += lasso * np.sign(beta[nz])

    both = ~nz & active[rows] & active[cols]
    r_zero = np.maximum(np.abs(g[both]) - lasso, 0.0)

    r_rows = np.zeros(0)
    inactive = ~active
    if np.any(inactive):
        h = np.maximum(np.abs(g) - lasso, 0.0)
        N = data.num_nodes
        H = np.zeros((N, N))
        H[rows, cols] = h
        H[cols, rows] = h
        free = np.outer(inactive, inactive)
        np.fill_diagonal(free, False)
        # Demand on an inactive row: the full excess toward an active
        # neighbour, half of it (to start) toward an inactive neighbour.
        C = np.where(free, 0.5 * H, H) * inactive[:, None]
        r_rows = _split_excess(C, free, lam)[inactive]

    total = np.sum(r_nz**2) + np.sum(r_zero**2) + np.sum(r_rows**2) + grad_b**2
    return float(np.sqrt(total))


def predict(model: CoefficientModel, graph) -> tuple[int, float]:
    """Label and score ``<A, B> + b`` for one adjacency matrix (ties -> +1)."""
    A = np.asarray(graph, dtype=float)
    if A.shape != model.coefficients.shape:
        raise DataError(f"graph shape {A.shape} does not match model {model.coefficients.shape}")
    score = float(np.sum(A * model.coefficients)) + model.intercept
    return (1 if score >= 0 else -1), score


def predict_scores(model: CoefficientModel, data: SampleSet) -> np.ndarray:
    if data.num_nodes != model.num_nodes:
        raise DataError(f"data have {data.num_nodes} nodes, model has {model.num_nodes}")
    C = model.coefficients
    r, c = data.index.rows, data.index.cols
    return data.X @ (C[r, c] + C[c, r]) + model.intercept


def predict_labels(model: CoefficientModel, data: SampleSet) -> np.ndarray:
    return np.where(predict_scores(model, data) >= 0, 1, -1)


def accuracy(model: CoefficientModel, data: SampleSet) -> float:
    return float(np.mean(predict_labels(model, data) == data.y))
