"""Proximal operators for the node (row-group) + edge (elementwise) penalty.

``prox_admm`` handles the overlapping groups created by the symmetry
constraint; ``prox_union_closed_form`` is the exact prox when symmetry is
dropped and the row groups no longer overlap.

The ADMM iterations run in a compiled kernel when ``sparsegc._admm_core``
is importable, otherwise in numpy. Set ``SPARSEGC_PURE_PYTHON=1`` before
import to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import _admm_py
from .types import PenaltyParams, SolverConfig

_KERNELS = {"python": _admm_py.admm_iterate}
try:
    if os.environ.get("SPARSEGC_PURE_PYTHON"):
        raise ImportError("pure-python mode requested")
    from ._admm_core import admm_iterate as _compiled_iterate
except ImportError:
    BACKEND = "python"
else:
    _KERNELS["cython"] = _compiled_iterate
    BACKEND = "cython"


def available_backends() -> tuple[str, ...]:
    return tuple(_KERNELS)


class AdmmNotConverged(RuntimeError):
    """Iteration cap reached; ``result`` holds the last iterate and ``state``."""

    def __init__(self, message, result, state):
        super().__init__(message)
        self.result = result
        self.state = state


def soft_threshold(x, t):
    """``sign(x) * max(|x| - t, 0)``, elementwise."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def group_soft_threshold(row, t: float) -> np.ndarray:
    """Shrink a vector's Euclidean norm by ``t`` (zero if the norm is <= t)."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    row = np.asarray(row, dtype=float)
    norm = float(np.linalg.norm(row))
    if norm <= t:
        return np.zeros_like(row)
    return (1.0 - t / norm) * row


@dataclass
class AdmmState:
    """Iterates of the ADMM prox solver, reusable as a warm start."""

    B_tilde: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    U: np.ndarray
    V: np.ndarray
    iteration: int = 0
    primal_residual: float = float("inf")
    dual_residual: float = float("inf")
    step: float = 1.0
    converged: bool = False

    @classmethod
    def cold(cls, Z: np.ndarray, step: float) -> "AdmmState":
        zeros = np.zeros_like(Z)
        return cls(Z.copy(), Z.copy(), Z.copy(), zeros, zeros.copy(), step=step)

    def copy(self) -> "AdmmState":
        return replace(
            self,
            B_tilde=self.B_tilde.copy(),
            Q=self.Q.copy(),
            R=self.R.copy(),
            U=self.U.copy(),
            V=self.V.copy(),
        )


def project_graph(Z, symmetric: bool = True) -> np.ndarray:
    """Nearest zero-diagonal (symmetric) matrix in Frobenius norm."""
    Z = np.array(Z, dtype=float)
    if symmetric:
        Z = 0.5 * (Z + Z.T)
    np.fill_diagonal(Z, 0.0)
    return Z


def penalty_value(B, lam: float, rho: float) -> float:
    """``lam * (sum_i ||B_(i)||_2 + rho * ||B||_1)``."""
    B = np.asarray(B)
    return float(lam * (np.linalg.norm(B, axis=1).sum() + rho * np.abs(B).sum()))


def _assemble(Q: np.ndarray, R: np.ndarray, symmetric: bool) -> np.ndarray:
    # Entry (i, j) survives only if R_ij != 0 and the row group(s) are active.
    active = np.any(Q != 0, axis=1)
    if symmetric:
        out = np.triu(np.where(np.outer(active, active), R, 0.0), k=1)
        return out + out.T
    out = np.where(active[:, None], R, 0.0)
    np.fill_diagonal(out, 0.0)
    return out


def admm_solve(
    Z,
    t: float,
    penalty: PenaltyParams,
    config: SolverConfig,
    tol: float,
    state: AdmmState | None = None,
    *,
    symmetric: bool = True,
    backend: str | None = None,
    raise_on_cap: bool = True,
) -> tuple[np.ndarray, AdmmState]:
    """Run ADMM for ``prox_{t * penalty}(Z)``; return the sparse result and state.

    A warm-start ``state`` from a previous call is reused; its multipliers are
    rescaled by the ratio of step sizes since they live on the ``t * lam`` scale.
    """
    if t <= 0 or tol <= 0:
        raise ValueError("step and tolerance must be positive")
    Z = np.ascontiguousarray(project_graph(Z, symmetric))
    if not np.all(np.isfinite(Z)):
        raise ValueError("prox input has non-finite entries")
    mu = config.admm_mu
    kernel = _KERNELS[backend or BACKEND]
    if state is None:
        state = AdmmState.cold(Z, t)
    else:
        state = state.copy()
        if state.step != t:
            ratio = t / state.step
            state.U *= ratio
            state.V *= ratio
            state.step = t
    for name in ("B_tilde", "Q", "R", "U", "V"):
        setattr(state, name, np.ascontiguousarray(getattr(state, name), dtype=float))
    it, eps_p, eps_d, converged = kernel(
        Z,
        state.B_tilde,
        state.Q,
        state.R,
        state.U,
        state.V,
        t * penalty.lam / mu,
        t * penalty.lam * penalty.rho / mu,
        mu,
        tol,
        config.max_admm_iter,
        symmetric,
    )
    state.iteration = int(it)
    state.primal_residual = float(eps_p)
    state.dual_residual = float(eps_d)
    state.converged = bool(converged)
    result = _assemble(state.Q, state.R, symmetric)
    if not converged and raise_on_cap:
        raise AdmmNotConverged(
            f"ADMM hit {config.max_admm_iter} iterations "
            f"(residuals {eps_p:.3g}, {eps_d:.3g}; tol {tol:.3g})",
            result,
            state,
        )
    return result, state


def prox_admm(
    Z,
    t: float,
    penalty: PenaltyParams,
    config: SolverConfig | None = None,
    tol: float = 1e-8,
    *,
    symmetric: bool = True,
    backend: str | None = None,
) -> np.ndarray:
    """Prox of ``t * lam * (sum_i ||B_(i)||_2 + rho ||B||_1)`` over graphs.

    Returns an exactly symmetric, zero-diagonal matrix whose zero pattern
    comes from the thresholded splitting variables rather than from
    round-off in the averaged iterate.
    """
    config = config or SolverConfig()
    if penalty.lam == 0:
        return project_graph(Z, symmetric)
    result, _ = admm_solve(Z, t, penalty, config, tol, symmetric=symmetric, backend=backend)
    return result


def prox_union_closed_form(Z, t: float, lam: float, rho: float) -> np.ndarray:
    """Exact prox of the non-overlapping (no symmetry) sparse group lasso.

    Entrywise soft-threshold at ``t*lam*rho`` followed by row-wise group
    soft-threshold at ``t*lam``; diagonal forced to zero.
    """
    Z = np.array(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise ValueError("prox input has non-finite entries")
    np.fill_diagonal(Z, 0.0)
    S = np.sign(Z) * np.maximum(np.abs(Z) - t * lam * rho, 0.0)
    norms = np.linalg.norm(S, axis=1)
    shrink = np.zeros_like(norms)
    big = norms > t * lam
    shrink[big] = 1.0 - t * lam / norms[big]
    return shrink[:, None] * S
