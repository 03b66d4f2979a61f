# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same signatures and semantics as ``ssimpc._purepy``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()

BACKEND = "cython"


def rff_eval(const double[:, ::1] W, const double[::1] b, Z):
    cdef const double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], M = W.shape[0], d = W.shape[1]
    out = np.empty((n, M))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, i, j
    cdef double a
    for r in range(n):
        for i in range(M):
            a = b[i]
            for j in range(d):
                a += W[i, j] * z[r, j]
            o[r, i] = cos(a)
    return out


def rff_eval_grad(const double[:, ::1] W, const double[::1] b, Z):
    cdef const double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], M = W.shape[0], d = W.shape[1]
    phi = np.empty((n, M))
    dphi = np.empty((n, M))
    cdef double[:, ::1] o = phi
    cdef double[:, ::1] s = dphi
    cdef Py_ssize_t r, i, j
    cdef double a
    for r in range(n):
        for i in range(M):
            a = b[i]
            for j in range(d):
                a += W[i, j] * z[r, j]
            o[r, i] = cos(a)
            s[r, i] = -sin(a)
    return phi, dphi


cdef inline void _cp_deriv(const double* p, const double* x, double F, double* out) noexcept nogil:
    cdef double mc = p[0], mp = p[1], l = p[2], g = p[3]
    cdef double th = x[2], thd = x[3]
    cdef double s = sin(th), c = cos(th)
    cdef double mt = mc + mp
    cdef double tmp = (-mp * l * thd * thd * s - F) / mt
    cdef double thdd = (g * s + c * tmp) / (l * (4.0 / 3.0 - mp * c * c / mt))
    out[0] = x[1]
    out[1] = (mp * l * (thd * thd * s - thdd * c) + F) / mt
    out[2] = thd
    out[3] = thdd


def cartpole_rk4(p, double dt, X, U):
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], r, j
    out = np.empty((n, 4))
    cdef double[:, ::1] o = out
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef double F
    for r in range(n):
        F = u[r, 0]
        _cp_deriv(&pp[0], &x[r, 0], F, k1)
        for j in range(4):
            tmp[j] = x[r, j] + 0.5 * dt * k1[j]
        _cp_deriv(&pp[0], tmp, F, k2)
        for j in range(4):
            tmp[j] = x[r, j] + 0.5 * dt * k2[j]
        _cp_deriv(&pp[0], tmp, F, k3)
        for j in range(4):
            tmp[j] = x[r, j] + dt * k3[j]
        _cp_deriv(&pp[0], tmp, F, k4)
        for j in range(4):
            o[r, j] = x[r, j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    return out


cdef inline void _quad_deriv(const double* p, const double* x, const double* u, double* out) noexcept nogil:
    cdef double m = p[0]
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double T = u[0], wx = u[1], wy = u[2], wz = u[3]
    cdef double R[3][3]
    cdef double vb[3]
    cdef double fb[3]
    cdef int i, j
    R[0][0] = 1.0 - 2.0 * (qy * qy + qz * qz)
    R[0][1] = 2.0 * (qx * qy - qw * qz)
    R[0][2] = 2.0 * (qx * qz + qw * qy)
    R[1][0] = 2.0 * (qx * qy + qw * qz)
    R[1][1] = 1.0 - 2.0 * (qx * qx + qz * qz)
    R[1][2] = 2.0 * (qy * qz - qw * qx)
    R[2][0] = 2.0 * (qx * qz - qw * qy)
    R[2][1] = 2.0 * (qy * qz + qw * qx)
    R[2][2] = 1.0 - 2.0 * (qx * qx + qy * qy)
    for i in range(3):
        out[i] = x[3 + i]
        out[3 + i] = R[i][2] * (T / m) + p[1 + i]
    if p[13] != 0.0:
        for i in range(3):
            vb[i] = R[0][i] * x[3] + R[1][i] * x[4] + R[2][i] * x[5]
        for i in range(3):
            fb[i] = p[4 + 3 * i] * vb[0] + p[5 + 3 * i] * vb[1] + p[6 + 3 * i] * vb[2]
        for i in range(3):
            out[3 + i] -= (R[i][0] * fb[0] + R[i][1] * fb[1] + R[i][2] * fb[2]) / m
    out[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[8] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[9] = 0.5 * (qw * wz + qx * wy - qy * wx)


def quadrotor_rk4(p, double dt, X, U):
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], r, j
    out = np.empty((n, 10))
    cdef double[:, ::1] o = out
    cdef double k1[10]
    cdef double k2[10]
    cdef double k3[10]
    cdef double k4[10]
    cdef double tmp[10]
    cdef double nq
    for r in range(n):
        _quad_deriv(&pp[0], &x[r, 0], &u[r, 0], k1)
        for j in range(10):
            tmp[j] = x[r, j] + 0.5 * dt * k1[j]
        _quad_deriv(&pp[0], tmp, &u[r, 0], k2)
        for j in range(10):
            tmp[j] = x[r, j] + 0.5 * dt * k2[j]
        _quad_deriv(&pp[0], tmp, &u[r, 0], k3)
        for j in range(10):
            tmp[j] = x[r, j] + dt * k3[j]
        _quad_deriv(&pp[0], tmp, &u[r, 0], k4)
        for j in range(10):
            o[r, j] = x[r, j] + (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        nq = sqrt(o[r, 6] * o[r, 6] + o[r, 7] * o[r, 7] + o[r, 8] * o[r, 8] + o[r, 9] * o[r, 9])
        for j in range(6, 10):
            o[r, j] /= nq
    return out


def ilqr_backward(fx, fu, Q, R, Qf, ex, ev, u, lo, hi, double mu):
    cdef const double[:, :, ::1] A_ = np.ascontiguousarray(fx, dtype=np.float64)
    cdef const double[:, :, ::1] B_ = np.ascontiguousarray(fu, dtype=np.float64)
    cdef const double[:, ::1] Qm = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] Rm = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, ::1] Qfm = np.ascontiguousarray(Qf, dtype=np.float64)
    cdef const double[:, ::1] exm = np.ascontiguousarray(ex, dtype=np.float64)
    cdef const double[:, ::1] evm = np.ascontiguousarray(ev, dtype=np.float64)
    cdef const double[:, ::1] um = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[::1] lom = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] him = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t N = B_.shape[0], n = B_.shape[1], m = B_.shape[2]

    k_arr = np.zeros((N, m))
    K_arr = np.zeros((N, m, n))
    cdef double[:, ::1] k = k_arr
    cdef double[:, :, ::1] K = K_arr

    cdef double[::1] Vx = np.empty(n)
    cdef double[:, ::1] Vxx = np.empty((n, n))
    cdef double[::1] Qx = np.empty(n)
    cdef double[::1] Qu = np.empty(m)
    cdef double[:, ::1] VB = np.empty((n, m))
    cdef double[:, ::1] VA = np.empty((n, n))
    cdef double[:, ::1] Qxx = np.empty((n, n))
    cdef double[:, ::1] Quu = np.empty((m, m))
    cdef double[:, ::1] Qux = np.empty((m, n))
    cdef double[:, ::1] H = np.empty((m, m))
    cdef double[:, ::1] S = np.empty((m, n + 1))
    cdef double[::1] Quuk = np.empty(m)
    cdef double[:, ::1] QuuK = np.empty((m, n))
    cdef Py_ssize_t[::1] fidx = np.empty(m, dtype=np.intp)

    cdef Py_ssize_t t, i, j, l, a, c, p, q, nf
    cdef double acc, dV1 = 0.0, dV2 = 0.0

    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += 2.0 * Qfm[i, j] * exm[N, j]
            Vxx[i, j] = 2.0 * Qfm[i, j]
        Vx[i] = acc

    for t in range(N - 1, -1, -1):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += 2.0 * Qm[i, j] * exm[t, j] + A_[t, j, i] * Vx[j]
            Qx[i] = acc
        for a in range(m):
            acc = 0.0
            for c in range(m):
                acc += 2.0 * Rm[a, c] * evm[t, c]
            for j in range(n):
                acc += B_[t, j, a] * Vx[j]
            Qu[a] = acc
        for i in range(n):
            for a in range(m):
                acc = 0.0
                for j in range(n):
                    acc += Vxx[i, j] * B_[t, j, a]
                VB[i, a] = acc
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += Vxx[i, l] * A_[t, l, j]
                VA[i, j] = acc
        for i in range(n):
            for j in range(n):
                acc = 2.0 * Qm[i, j]
                for l in range(n):
                    acc += A_[t, l, i] * VA[l, j]
                Qxx[i, j] = acc
        for a in range(m):
            for c in range(m):
                acc = 2.0 * Rm[a, c]
                for j in range(n):
                    acc += B_[t, j, a] * VB[j, c]
                Quu[a, c] = acc
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += VB[j, a] * A_[t, j, i]
                Qux[a, i] = acc

        nf = 0
        for a in range(m):
            if (um[t, a] <= lom[a] and Qu[a] > 0.0) or (um[t, a] >= him[a] and Qu[a] < 0.0):
                continue
            fidx[nf] = a
            nf += 1

        if nf > 0:
            # Cholesky of the free block, lower triangle in H
            for p in range(nf):
                for q in range(p + 1):
                    acc = Quu[fidx[p], fidx[q]]
                    if p == q:
                        acc += mu
                    for l in range(q):
                        acc -= H[p, l] * H[q, l]
                    if p == q:
                        if acc <= 0.0:
                            return k_arr, K_arr, np.zeros(2), False
                        H[p, p] = sqrt(acc)
                    else:
                        H[p, q] = acc / H[q, q]
            for p in range(nf):
                S[p, 0] = Qu[fidx[p]]
                for i in range(n):
                    S[p, 1 + i] = Qux[fidx[p], i]
            for c in range(n + 1):
                for p in range(nf):
                    acc = S[p, c]
                    for l in range(p):
                        acc -= H[p, l] * S[l, c]
                    S[p, c] = acc / H[p, p]
                for p in range(nf - 1, -1, -1):
                    acc = S[p, c]
                    for l in range(p + 1, nf):
                        acc -= H[l, p] * S[l, c]
                    S[p, c] = acc / H[p, p]
            for p in range(nf):
                k[t, fidx[p]] = -S[p, 0]
                for i in range(n):
                    K[t, fidx[p], i] = -S[p, 1 + i]

        for a in range(m):
            acc = 0.0
            for c in range(m):
                acc += Quu[a, c] * k[t, c]
            Quuk[a] = acc
            dV1 += k[t, a] * Qu[a]
            dV2 += 0.5 * k[t, a] * acc
            for i in range(n):
                acc = 0.0
                for c in range(m):
                    acc += Quu[a, c] * K[t, c, i]
                QuuK[a, i] = acc

        for i in range(n):
            acc = Qx[i]
            for a in range(m):
                acc += K[t, a, i] * Quuk[a] + K[t, a, i] * Qu[a] + Qux[a, i] * k[t, a]
            Vx[i] = acc
        for i in range(n):
            for j in range(n):
                acc = Qxx[i, j]
                for a in range(m):
                    acc += K[t, a, i] * QuuK[a, j] + K[t, a, i] * Qux[a, j] + Qux[a, i] * K[t, a, j]
                VA[i, j] = acc
        for i in range(n):
            for j in range(n):
                Vxx[i, j] = 0.5 * (VA[i, j] + VA[j, i])

    return k_arr, K_arr, np.array([dV1, dV2]), True
