"""Pure-numpy ADMM iterations (fallback for the compiled kernel).

Solves ``min_B 1/2 ||B - Z||^2 + t*lam*(sum_i ||B_(i)||_2 + rho*||B||_1)``
over zero-diagonal (and, if ``symmetric``, symmetric) ``B`` by splitting
``B = Q`` (row groups) and ``B = R`` (entries). Per iteration::

    B = (Z + mu*sym(Q) + mu*R - sym(U) - V) / (1 + 2*mu)      diag(B) = 0
    Q_(i) = (1 - group_level / ||B_(i) + U_(i)/mu||)_+ (B_(i) + U_(i)/mu)
    R = soft(B + V/mu, lasso_level)
    U += mu*(B - Q);  V += mu*(B - R)

with ``group_level = t*lam/mu`` and ``lasso_level = t*lam*rho/mu``; ``sym``
is dropped when ``symmetric`` is false. Stops when both

    eps_p = mu*(max|Q - Q_prev| + max|R - R_prev|)
    eps_d = mu*(||B - Q||_F + ||B - R||_F)

fall below ``tol``.
"""
from __future__ import annotations

import numpy as np


def admm_iterate(Z, B, Q, R, U, V, group_level, lasso_level, mu, tol, max_iter, symmetric):
    scale = 1.0 / (1.0 + 2.0 * mu)
    it, eps_p, eps_d, converged = 0, 0.0, 0.0, False
    diag = np.diag_indices(Z.shape[0])
    while it < max_iter:
        it += 1
        if symmetric:
            B[...] = (Z + mu * (0.5 * (Q + Q.T)) + mu * R - 0.5 * (U + U.T) - V) * scale
        else:
            B[...] = (Z + mu * Q + mu * R - U - V) * scale
        B[diag] = 0.0

        X = B + U / mu
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        shrink = np.zeros_like(norms)
        big = norms > group_level
        shrink[big] = 1.0 - group_level / norms[big]
        Qn = shrink[:, None] * X

        Y = B + V / mu
        Rn = np.sign(Y) * np.maximum(np.abs(Y) - lasso_level, 0.0)

        dq = float(np.max(np.abs(Qn - Q)))
        dr = float(np.max(np.abs(Rn - R)))
        rq = B - Qn
        rr = B - Rn
        U += mu * rq
        V += mu * rr
        Q[...] = Qn
        R[...] = Rn
        eps_p = mu * (dq + dr)
        eps_d = mu * (float(np.sqrt(np.sum(rq * rq))) + float(np.sqrt(np.sum(rr * rr))))
        if eps_p < tol and eps_d < tol:
            converged = True
            break
    return it, eps_p, eps_d, converged
