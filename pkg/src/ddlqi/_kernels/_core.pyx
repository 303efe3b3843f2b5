# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the hot numerical kernels.

Mirrors ``_corepy`` exactly: dense Kronecker-LU Lyapunov solves (one LU
factorization shared between the cost and Gramian equations, since the
second operator is the transpose of the first), a Cholesky stability
certificate, and a fixed-step classical Runge-Kutta segment runner for
the projected gradient flow.
"""

from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

import numpy as np

BACKEND = "compiled"

OK = 0
SINGULAR = 1
NOT_STABLE = 2
REJECTED = 3

cdef int C_OK = 0
cdef int C_SINGULAR = 1
cdef int C_NOT_STABLE = 2


cdef int _lu_factor(double* m, int* piv, int d) noexcept nogil:
    """Row-pivoted LU in place; returns -1 on (near-)exact singularity."""
    cdef int i, j, k, pr
    cdef double mx, v, tmp
    for k in range(d):
        pr = k
        mx = fabs(m[k * d + k])
        for i in range(k + 1, d):
            v = fabs(m[i * d + k])
            if v > mx:
                mx = v
                pr = i
        if mx <= 1e-300:
            return -1
        piv[k] = pr
        if pr != k:
            for j in range(d):
                tmp = m[k * d + j]
                m[k * d + j] = m[pr * d + j]
                m[pr * d + j] = tmp
        v = m[k * d + k]
        for i in range(k + 1, d):
            m[i * d + k] /= v
            tmp = m[i * d + k]
            if tmp != 0.0:
                for j in range(k + 1, d):
                    m[i * d + j] -= tmp * m[k * d + j]
    return 0


cdef void _lu_solve(double* lu, int* piv, double* b, int d) noexcept nogil:
    """Solve M x = b in place given the factorization P M = L U."""
    cdef int i, j
    cdef double tmp, s
    for i in range(d):
        if piv[i] != i:
            tmp = b[i]
            b[i] = b[piv[i]]
            b[piv[i]] = tmp
    for i in range(1, d):
        s = b[i]
        for j in range(i):
            s -= lu[i * d + j] * b[j]
        b[i] = s
    for i in range(d - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, d):
            s -= lu[i * d + j] * b[j]
        b[i] = s / lu[i * d + i]


cdef void _lu_solve_t(double* lu, int* piv, double* b, int d) noexcept nogil:
    """Solve M^T x = b in place: U^T y = b, L^T z = y, x = P^T z."""
    cdef int i, j
    cdef double s, tmp
    for i in range(d):
        s = b[i]
        for j in range(i):
            s -= lu[j * d + i] * b[j]
        b[i] = s / lu[i * d + i]
    for i in range(d - 1, -1, -1):
        s = b[i]
        for j in range(i + 1, d):
            s -= lu[j * d + i] * b[j]
        b[i] = s
    for i in range(d - 1, -1, -1):
        if piv[i] != i:
            tmp = b[i]
            b[i] = b[piv[i]]
            b[piv[i]] = tmp


cdef int _cholesky_ok(double* w, double* l, int d) noexcept nogil:
    """Lower Cholesky of w into l; returns -1 when not positive definite."""
    cdef int i, j, k
    cdef double s
    for i in range(d):
        for j in range(i + 1):
            s = w[i * d + j]
            for k in range(j):
                s -= l[i * d + k] * l[j * d + k]
            if i == j:
                if s <= 0.0:
                    return -1
                l[i * d + i] = sqrt(s)
            else:
                l[i * d + j] = s / l[j * d + j]
    return 0


cdef void _mm(double* a, double* b, double* c, int p, int q, int r) noexcept nogil:
    """c (p x r) = a (p x q) @ b (q x r)."""
    cdef int i, j, k
    cdef double aik
    memset(c, 0, p * r * sizeof(double))
    for i in range(p):
        for k in range(q):
            aik = a[i * q + k]
            if aik != 0.0:
                for j in range(r):
                    c[i * r + j] += aik * b[k * r + j]


cdef void _build_kron(double* a, double* kron, int na) noexcept nogil:
    """Operator of a^T P + P a on row-major vec(P): nv x nv with nv = na^2."""
    cdef int i, j, k, nv = na * na
    memset(kron, 0, nv * nv * sizeof(double))
    for i in range(na):
        for j in range(na):
            for k in range(na):
                kron[(i * na + j) * nv + (k * na + j)] += a[k * na + i]
                kron[(i * na + j) * nv + (i * na + k)] += a[k * na + j]


def lyap_solve(a, q):
    """Solve ``a^T P + P a + q = 0`` by dense Kronecker LU.

    Returns ``None`` when the operator is singular to working precision.
    """
    a_c = np.ascontiguousarray(a, dtype=np.float64)
    q_c = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] av = a_c
    cdef double[:, ::1] qv = q_c
    cdef int d = av.shape[0]
    cdef int nv = d * d
    cdef int i, st
    cdef double* kron = <double*> malloc(nv * nv * sizeof(double))
    cdef double* rhs = <double*> malloc(nv * sizeof(double))
    cdef int* piv = <int*> malloc(nv * sizeof(int))
    if kron == NULL or rhs == NULL or piv == NULL:
        free(kron)
        free(rhs)
        free(piv)
        raise MemoryError
    out = None
    cdef double* qp = &qv[0, 0]
    with nogil:
        _build_kron(&av[0, 0], kron, d)
        st = _lu_factor(kron, piv, nv)
        if st == 0:
            for i in range(nv):
                rhs[i] = -qp[i]
            _lu_solve(kron, piv, rhs, nv)
    if st == 0:
        p = np.empty((d, d))
        cdef_view_copy(p, rhs, nv)
        if np.all(np.isfinite(p)):
            out = p
    free(kron)
    free(rhs)
    free(piv)
    return out


cdef cdef_view_copy(pobj, double* src, int n):
    cdef double[:, ::1] pv = pobj
    memcpy(&pv[0, 0], src, n * sizeof(double))


cdef class FlowKernel:
    """Evaluator for the projected gradient flow of the data-driven
    linear-quadratic-integral cost (see ``_corepy.FlowKernel`` for the
    algorithmic contract; this class is a drop-in compiled equivalent).
    """

    cdef int na, ns, m, nv
    cdef double* d_mat
    cdef double* ub
    cdef double* qa
    cdef double* r_mat
    cdef double* nbasis
    cdef double* untr
    cdef double* dnt
    cdef double* acl
    cdef double* ug
    cdef double* rug
    cdef double* qrhs
    cdef double* kron
    cdef double* pmat
    cdef double* wmat
    cdef double* chol
    cdef double* gam
    cdef double* tmp_mna
    cdef double* tmp_mna2
    cdef int* piv
    cdef double* f2
    cdef double* f3
    cdef double* f4
    cdef double* gtmp
    cdef double* gnew
    cdef double* dgnew
    cdef readonly str backend

    def __cinit__(self, d, ub, qa, r, nbasis):
        d_c = np.ascontiguousarray(d, dtype=np.float64)
        ub_c = np.ascontiguousarray(ub, dtype=np.float64)
        qa_c = np.ascontiguousarray(qa, dtype=np.float64)
        r_c = np.ascontiguousarray(r, dtype=np.float64)
        n_c = np.ascontiguousarray(nbasis, dtype=np.float64)
        untr_c = np.ascontiguousarray((ub_c @ n_c).T @ r_c, dtype=np.float64)
        dnt_c = np.ascontiguousarray((d_c @ n_c).T, dtype=np.float64)
        self.na = d_c.shape[0]
        self.ns = d_c.shape[1]
        self.m = ub_c.shape[0]
        self.nv = self.na * self.na
        self.backend = BACKEND
        cdef int na = self.na, ns = self.ns, m = self.m, nv = self.nv
        self.d_mat = self._copy_in(d_c, na * ns)
        self.ub = self._copy_in(ub_c, m * ns)
        self.qa = self._copy_in(qa_c, na * na)
        self.r_mat = self._copy_in(r_c, m * m)
        self.nbasis = self._copy_in(n_c, ns * m)
        self.untr = self._copy_in(untr_c, m * m)
        self.dnt = self._copy_in(dnt_c, m * na)
        self.acl = self._alloc(na * na)
        self.ug = self._alloc(m * na)
        self.rug = self._alloc(m * na)
        self.qrhs = self._alloc(na * na)
        self.kron = self._alloc(nv * nv)
        self.pmat = self._alloc(nv)
        self.wmat = self._alloc(nv)
        self.chol = self._alloc(na * na)
        self.gam = self._alloc(m * na)
        self.tmp_mna = self._alloc(m * na)
        self.tmp_mna2 = self._alloc(m * na)
        self.piv = <int*> malloc(nv * sizeof(int))
        if self.piv == NULL:
            raise MemoryError
        self.f2 = self._alloc(ns * na)
        self.f3 = self._alloc(ns * na)
        self.f4 = self._alloc(ns * na)
        self.gtmp = self._alloc(ns * na)
        self.gnew = self._alloc(ns * na)
        self.dgnew = self._alloc(ns * na)

    cdef double* _alloc(self, int n) except NULL:
        cdef double* p = <double*> malloc(n * sizeof(double))
        if p == NULL:
            raise MemoryError
        return p

    cdef double* _copy_in(self, arr, int n) except NULL:
        cdef double[:, ::1] av = arr
        cdef double* p = self._alloc(n)
        memcpy(p, &av[0, 0], n * sizeof(double))
        return p

    def __dealloc__(self):
        free(self.d_mat)
        free(self.ub)
        free(self.qa)
        free(self.r_mat)
        free(self.nbasis)
        free(self.untr)
        free(self.dnt)
        free(self.acl)
        free(self.ug)
        free(self.rug)
        free(self.qrhs)
        free(self.kron)
        free(self.pmat)
        free(self.wmat)
        free(self.chol)
        free(self.gam)
        free(self.tmp_mna)
        free(self.tmp_mna2)
        free(self.piv)
        free(self.f2)
        free(self.f3)
        free(self.f4)
        free(self.gtmp)
        free(self.gnew)
        free(self.dgnew)

    cdef int _eval(self, double* g, double* dg, double* cost,
                   double* gnorm) noexcept nogil:
        cdef int na = self.na, ns = self.ns, m = self.m, nv = self.nv
        cdef int i, j, k
        cdef double s, gn
        _mm(self.d_mat, g, self.acl, na, ns, na)
        _mm(self.ub, g, self.ug, m, ns, na)
        _mm(self.r_mat, self.ug, self.rug, m, m, na)
        for i in range(na):
            for j in range(na):
                s = self.qa[i * na + j]
                for k in range(m):
                    s += self.ug[k * na + i] * self.rug[k * na + j]
                self.qrhs[i * na + j] = s
        _build_kron(self.acl, self.kron, na)
        if _lu_factor(self.kron, self.piv, nv) != 0:
            return C_SINGULAR
        for i in range(nv):
            self.pmat[i] = -self.qrhs[i]
        _lu_solve(self.kron, self.piv, self.pmat, nv)
        for i in range(na):
            for j in range(i):
                s = 0.5 * (self.pmat[i * na + j] + self.pmat[j * na + i])
                self.pmat[i * na + j] = s
                self.pmat[j * na + i] = s
        memset(self.wmat, 0, nv * sizeof(double))
        for i in range(na):
            self.wmat[i * na + i] = -1.0
        _lu_solve_t(self.kron, self.piv, self.wmat, nv)
        for i in range(na):
            for j in range(i):
                s = 0.5 * (self.wmat[i * na + j] + self.wmat[j * na + i])
                self.wmat[i * na + j] = s
                self.wmat[j * na + i] = s
        s = 0.0
        for i in range(nv):
            s += self.pmat[i] + self.wmat[i]
        if not (s == s and -1e308 < s < 1e308):
            return C_SINGULAR
        s = 0.0
        for i in range(na):
            s += self.pmat[i * na + i]
        cost[0] = s
        if _cholesky_ok(self.wmat, self.chol, na) != 0:
            return C_NOT_STABLE
        _mm(self.untr, self.ug, self.tmp_mna, m, m, na)
        _mm(self.dnt, self.pmat, self.tmp_mna2, m, na, na)
        for i in range(m * na):
            self.tmp_mna[i] += self.tmp_mna2[i]
        _mm(self.tmp_mna, self.wmat, self.gam, m, na, na)
        gn = 0.0
        for i in range(m * na):
            self.gam[i] *= 2.0
            gn += self.gam[i] * self.gam[i]
        gnorm[0] = sqrt(gn)
        _mm(self.nbasis, self.gam, dg, ns, m, na)
        for i in range(ns * na):
            dg[i] = -dg[i]
        return 0

    def eval_point(self, g):
        """Return ``(status, cost, gnorm, dg)`` at the parameterizer ``g``."""
        g_c = np.ascontiguousarray(g, dtype=np.float64)
        cdef double[:, ::1] gv = g_c
        dg = np.empty((self.ns, self.na))
        cdef double[:, ::1] dgv = dg
        cdef double cost = 0.0, gnorm = 0.0
        cdef int st
        with nogil:
            st = self._eval(&gv[0, 0], &dgv[0, 0], &cost, &gnorm)
        if st == C_SINGULAR:
            return SINGULAR, np.nan, np.nan, None
        if st == C_NOT_STABLE:
            return NOT_STABLE, cost, np.nan, None
        return OK, cost, gnorm, dg

    def run_segment(self, g, dg1, double h, int max_steps, double cost_prev,
                    double gnorm_prev):
        """Advance up to ``max_steps`` fixed-step RK4 steps in place.

        Same contract as the pure-Python twin: ``g`` and ``dg1`` must be
        C-contiguous float64 arrays and are updated on every accepted
        step; returns ``(accepted, status, cost, gnorm)``.
        """
        cdef double[:, ::1] gv = g
        cdef double[:, ::1] d1 = dg1
        cdef int accepted = 0, reject = 0, st = 0
        cdef int nel = self.ns * self.na
        cdef int i
        cdef double cost = cost_prev, gnorm = gnorm_prev
        cdef double cnew = 0.0, gnew_n = 0.0, cdum = 0.0, gdum = 0.0
        cdef double half = 0.5 * h, sixth = h / 6.0
        cdef double* gp = &gv[0, 0]
        cdef double* f1 = &d1[0, 0]
        with nogil:
            while accepted < max_steps:
                reject = 0
                for i in range(nel):
                    self.gtmp[i] = gp[i] + half * f1[i]
                if self._eval(self.gtmp, self.f2, &cdum, &gdum) != 0:
                    reject = 1
                if reject == 0:
                    for i in range(nel):
                        self.gtmp[i] = gp[i] + half * self.f2[i]
                    if self._eval(self.gtmp, self.f3, &cdum, &gdum) != 0:
                        reject = 1
                if reject == 0:
                    for i in range(nel):
                        self.gtmp[i] = gp[i] + h * self.f3[i]
                    if self._eval(self.gtmp, self.f4, &cdum, &gdum) != 0:
                        reject = 1
                if reject == 0:
                    for i in range(nel):
                        self.gnew[i] = gp[i] + sixth * (
                            f1[i] + 2.0 * self.f2[i] + 2.0 * self.f3[i]
                            + self.f4[i])
                    st = self._eval(self.gnew, self.dgnew, &cnew, &gnew_n)
                    # Slack sits above cost-evaluation roundoff so that
                    # sub-noise true progress near the optimum is not
                    # rejected (which would collapse the step size).
                    if st != 0 or cnew > cost + 1e-10 * (1.0 + fabs(cost)):
                        reject = 1
                if reject:
                    break
                memcpy(gp, self.gnew, nel * sizeof(double))
                memcpy(f1, self.dgnew, nel * sizeof(double))
                cost = cnew
                gnorm = gnew_n
                accepted += 1
        if reject:
            return accepted, REJECTED, cost, gnorm
        return accepted, OK, cost, gnorm
