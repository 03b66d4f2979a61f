"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_core.pyx``.
``ssimpc.kernels`` picks one at import time.
"""

import numpy as np

BACKEND = "python"


def rff_eval(W, b, Z):
    """cos(Z @ W.T + b) for a batch of inputs, shape (n, M)."""
    return np.cos(Z @ W.T + b)


def rff_eval_grad(W, b, Z):
    """Feature values and their phase derivative -sin(.), both (n, M)."""
    arg = Z @ W.T + b
    return np.cos(arg), -np.sin(arg)


def _cartpole_deriv(p, X, U):
    mc, mp, l, g = p[0], p[1], p[2], p[3]
    th = X[:, 2]
    thd = X[:, 3]
    F = U[:, 0]
    s = np.sin(th)
    c = np.cos(th)
    mt = mc + mp
    tmp = (-mp * l * thd * thd * s - F) / mt
    thdd = (g * s + c * tmp) / (l * (4.0 / 3.0 - mp * c * c / mt))
    xdd = (mp * l * (thd * thd * s - thdd * c) + F) / mt
    out = np.empty_like(X)
    out[:, 0] = X[:, 1]
    out[:, 1] = xdd
    out[:, 2] = thd
    out[:, 3] = thdd
    return out


def cartpole_rk4(p, dt, X, U):
    """One RK4 step of the cart-pole for each row of X. p = (m_c, m_p, l, g)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    k1 = _cartpole_deriv(p, X, U)
    k2 = _cartpole_deriv(p, X + 0.5 * dt * k1, U)
    k3 = _cartpole_deriv(p, X + 0.5 * dt * k2, U)
    k4 = _cartpole_deriv(p, X + dt * k3, U)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _quad_deriv(p, X, U):
    m = p[0]
    gx, gy, gz = p[1], p[2], p[3]
    D = p[4:13].reshape(3, 3)
    v = X[:, 3:6]
    qw, qx, qy, qz = X[:, 6], X[:, 7], X[:, 8], X[:, 9]
    T = U[:, 0]
    wx, wy, wz = U[:, 1], U[:, 2], U[:, 3]

    n = X.shape[0]
    R = np.empty((n, 3, 3))
    R[:, 0, 0] = 1.0 - 2.0 * (qy * qy + qz * qz)
    R[:, 0, 1] = 2.0 * (qx * qy - qw * qz)
    R[:, 0, 2] = 2.0 * (qx * qz + qw * qy)
    R[:, 1, 0] = 2.0 * (qx * qy + qw * qz)
    R[:, 1, 1] = 1.0 - 2.0 * (qx * qx + qz * qz)
    R[:, 1, 2] = 2.0 * (qy * qz - qw * qx)
    R[:, 2, 0] = 2.0 * (qx * qz - qw * qy)
    R[:, 2, 1] = 2.0 * (qy * qz + qw * qx)
    R[:, 2, 2] = 1.0 - 2.0 * (qx * qx + qy * qy)

    acc = R[:, :, 2] * (T / m)[:, None]
    acc[:, 0] += gx
    acc[:, 1] += gy
    acc[:, 2] += gz
    if p[13] != 0.0:
        vb = np.einsum("nji,nj->ni", R, v)
        fb = vb @ D.T
        acc -= np.einsum("nij,nj->ni", R, fb) / m

    out = np.empty_like(X)
    out[:, 0:3] = v
    out[:, 3:6] = acc
    out[:, 6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[:, 7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[:, 8] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[:, 9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    return out


def quadrotor_rk4(p, dt, X, U):
    """RK4 step of the thrust/body-rate quadrotor, quaternion renormalized.

    p = (m, g_x, g_y, g_z, D row-major (9), drag_flag).
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    k1 = _quad_deriv(p, X, U)
    k2 = _quad_deriv(p, X + 0.5 * dt * k1, U)
    k3 = _quad_deriv(p, X + 0.5 * dt * k2, U)
    k4 = _quad_deriv(p, X + dt * k3, U)
    out = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[:, 6:10] /= np.sqrt(np.sum(out[:, 6:10] ** 2, axis=1))[:, None]
    return out


def ilqr_backward(fx, fu, Q, R, Qf, ex, ev, u, lo, hi, mu):
    """Riccati-like backward pass of box-aware iLQR.

    Stage cost is e'Qe + v'Rv (no 1/2 factor), so all cost derivatives
    carry a factor 2. Controls sitting on a bound whose gradient pushes
    further out are clamped: their feedforward and feedback rows are zero
    and the remaining block is solved exactly.

    Returns (k, K, dV, ok); dV = (sum k'Qu, sum k'Quu k / 2).
    """
    N, n, m = fu.shape
    k = np.zeros((N, m))
    K = np.zeros((N, m, n))
    Vx = 2.0 * Qf @ ex[N]
    Vxx = 2.0 * Qf
    dV1 = 0.0
    dV2 = 0.0
    Q2 = 2.0 * Q
    R2 = 2.0 * R
    eye = np.eye(m)
    for t in range(N - 1, -1, -1):
        A = fx[t]
        B = fu[t]
        Qx = Q2 @ ex[t] + A.T @ Vx
        Qu = R2 @ ev[t] + B.T @ Vx
        VB = Vxx @ B
        Qxx = Q2 + A.T @ Vxx @ A
        Quu = R2 + B.T @ VB
        Qux = VB.T @ A
        Quu_reg = Quu + mu * eye

        free = ~(((u[t] <= lo) & (Qu > 0.0)) | ((u[t] >= hi) & (Qu < 0.0)))
        kt = np.zeros(m)
        Kt = np.zeros((m, n))
        if free.any():
            H = Quu_reg[np.ix_(free, free)]
            try:
                L = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                return k, K, np.zeros(2), False
            rhs = np.concatenate([Qu[free][:, None], Qux[free]], axis=1)
            sol = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            kt[free] = -sol[:, 0]
            Kt[free] = -sol[:, 1:]
        k[t] = kt
        K[t] = Kt

        dV1 += kt @ Qu
        dV2 += 0.5 * kt @ Quu @ kt
        Vx = Qx + Kt.T @ Quu @ kt + Kt.T @ Qu + Qux.T @ kt
        Vxx = Qxx + Kt.T @ Quu @ Kt + Kt.T @ Qux + Qux.T @ Kt
        Vxx = 0.5 * (Vxx + Vxx.T)
    return k, K, np.array([dV1, dV2]), True
