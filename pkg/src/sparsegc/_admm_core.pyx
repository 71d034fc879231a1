# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ADMM iterations for the row-group + elementwise prox.

Mirrors ``sparsegc._admm_py.admm_iterate`` exactly; see that module for
the update equations. All arrays are updated in place.
"""
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free


def admm_iterate(const double[:, ::1] Z, double[:, ::1] B, double[:, ::1] Q,
                 double[:, ::1] R, double[:, ::1] U, double[:, ::1] V,
                 double group_level, double lasso_level, double mu,
                 double tol, Py_ssize_t max_iter, bint symmetric):
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t i, j, it = 0
    cdef double scale = 1.0 / (1.0 + 2.0 * mu)
    cdef double inv_mu = 1.0 / mu
    cdef double x, nrm, shrink, qn, rn, d, dq, dr, ssq_q, ssq_r
    cdef double eps_p = 0.0, eps_d = 0.0
    cdef bint converged = False
    cdef double *row = <double *> malloc(n * sizeof(double))
    if row == NULL:
        raise MemoryError()
    try:
        while it < max_iter:
            it += 1
            for i in range(n):
                for j in range(n):
                    if i == j:
                        B[i, j] = 0.0
                    elif symmetric:
                        B[i, j] = (Z[i, j] + mu * (0.5 * (Q[i, j] + Q[j, i])) + mu * R[i, j]
                                   - 0.5 * (U[i, j] + U[j, i]) - V[i, j]) * scale
                    else:
                        B[i, j] = (Z[i, j] + mu * Q[i, j] + mu * R[i, j]
                                   - U[i, j] - V[i, j]) * scale
            dq = 0.0
            dr = 0.0
            ssq_q = 0.0
            ssq_r = 0.0
            for i in range(n):
                nrm = 0.0
                for j in range(n):
                    x = B[i, j] + U[i, j] * inv_mu
                    row[j] = x
                    nrm += x * x
                nrm = sqrt(nrm)
                if nrm > group_level:
                    shrink = 1.0 - group_level / nrm
                else:
                    shrink = 0.0
                for j in range(n):
                    qn = shrink * row[j]
                    d = fabs(qn - Q[i, j])
                    if d > dq:
                        dq = d
                    Q[i, j] = qn
                    d = B[i, j] - qn
                    ssq_q += d * d
                    U[i, j] += mu * d

                    x = B[i, j] + V[i, j] * inv_mu
                    if x > lasso_level:
                        rn = x - lasso_level
                    elif x < -lasso_level:
                        rn = x + lasso_level
                    else:
                        rn = 0.0
                    d = fabs(rn - R[i, j])
                    if d > dr:
                        dr = d
                    R[i, j] = rn
                    d = B[i, j] - rn
                    ssq_r += d * d
                    V[i, j] += mu * d
            eps_p = mu * (dq + dr)
            eps_d = mu * (sqrt(ssq_q) + sqrt(ssq_r))
            if eps_p < tol and eps_d < tol:
                converged = True
                break
    finally:
        free(row)
    return it, eps_p, eps_d, converged
