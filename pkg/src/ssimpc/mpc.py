"""Receding-horizon iLQR on the learned-model-augmented dynamics.

The prediction model over the whole horizon is

    x_{k+1} = F(x_k, u_k) + h_hat(z(x_k, u_k))

where F is a plant's deterministic discrete map and h_hat the random-feature
model under the current parameters. Inputs are box constrained.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .plants import DivergenceError

__all__ = [
    "CostSpec",
    "SolverOptions",
    "AugmentedDynamics",
    "MpcProblem",
    "MpcSolution",
    "rollout",
    "solve",
    "receding_step",
    "stage_cost",
]

BOX_TOL = 1e-12


def _check_sym(M, name, strict, tol=1e-10):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=tol, rtol=0):
        raise ValueError(f"{name} must be square and symmetric")
    lam = np.linalg.eigvalsh(M)[0]
    if (strict and lam <= tol) or (not strict and lam < -tol):
        kind = "positive definite" if strict else "positive semidefinite"
        raise ValueError(f"{name} must be {kind} (min eigenvalue {lam:.3g})")
    return M


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Quadratic tracking cost e'Qe + v'Rv with e = x - x_ref, v = u - u_ref.

    ``reference(k)`` returns ``(x_ref, u_ref)`` at absolute step ``k``; when
    omitted the reference is the origin.
    """

    Q: np.ndarray
    R: np.ndarray
    Q_terminal: Optional[np.ndarray] = None
    reference: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_sym(self.Q, "Q", strict=False))
        object.__setattr__(self, "R", _check_sym(self.R, "R", strict=True))
        Qf = self.Q if self.Q_terminal is None else self.Q_terminal
        object.__setattr__(self, "Q_terminal", _check_sym(Qf, "Q_terminal", strict=False))

    def ref(self, k):
        if self.reference is None:
            return np.zeros(self.Q.shape[0]), np.zeros(self.R.shape[0])
        x_ref, u_ref = self.reference(k)
        return np.asarray(x_ref, dtype=float), np.asarray(u_ref, dtype=float)


def stage_cost(cost, x, u, x_ref, u_ref):
    e = np.asarray(x) - x_ref
    v = np.asarray(u) - u_ref
    return float(e @ cost.Q @ e + v @ cost.R @ v)


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 50
    rel_tol: float = 1e-6
    mu_init: float = 1e-6
    mu_max: float = 1e6
    mu_min: float = 1e-9
    armijo: float = 1e-4
    line_search_steps: int = 11
    fd_step: float = 1e-6


class AugmentedDynamics:
    """Deterministic plant map plus an optional random-feature residual model.

    With ``params`` None (or all-zero parameters) the map reduces to the
    plant's own discrete map. ``exact_residual`` adds the plant's known true
    disturbance instead; used by the clairvoyant comparator.
    """

    def __init__(self, plant, features=None, params=None, exact_residual=False):
        self.plant = plant
        self.features = features
        self.params = params
        self.exact_residual = exact_residual and plant.true_disturbance is not None
        if params is not None:
            if features is None:
                raise ValueError("params given without a feature set")
            if params.blocks.shape != (plant.state_dim, features.count):
                raise ValueError(
                    f"params shape {params.blocks.shape} != ({plant.state_dim}, {features.count})"
                )
            if features.kernel.input_dim != plant.feature_dim:
                raise ValueError("feature set input_dim does not match plant features")
        n, m = plant.state_dim, plant.input_dim
        self._zjac = plant.feature_map.jacobian(n + m)

    @property
    def state_dim(self):
        return self.plant.state_dim

    @property
    def input_dim(self):
        return self.plant.input_dim

    def _base(self, X, U):
        out = self.plant.step_batch(X, U)
        if self.exact_residual:
            Z = self.plant.feature_map(X, U)
            out = out + np.array([self.plant.true_disturbance(z) for z in Z])
        return out

    def model_residual(self, X, U):
        """h_hat at a batch of (x, u); zeros when there is no learned model."""
        if self.params is None:
            return np.zeros((X.shape[0], self.state_dim))
        Z = self.plant.feature_map(X, U)
        phi = kernels.rff_eval(self.features.frequencies, self.features.phases, Z)
        return phi @ self.params.blocks.T / self.features.count

    def step_batch(self, X, U):
        out = self._base(X, U)
        if self.params is not None:
            out = out + self.model_residual(X, U)
        return out

    def step(self, x, u):
        return self.step_batch(x[None, :], u[None, :])[0]

    def linearize(self, X, U, fd_step=1e-6):
        """Jacobians (A_k, B_k) of the augmented map at each (x_k, u_k).

        The plant part uses central differences with per-coordinate step
        ``fd_step * max(1, |v|)``; the learned part is differentiated exactly.
        """
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        N, n = X.shape
        m = U.shape[1]
        w = n + m
        V = np.concatenate([X, U], axis=1)
        h = fd_step * np.maximum(1.0, np.abs(V))  # (N, w)
        P = np.repeat(V[:, None, :], 2 * w, axis=1)  # (N, 2w, w)
        idx = np.arange(w)
        P[:, idx, idx] += h
        P[:, w + idx, idx] -= h
        P = P.reshape(N * 2 * w, w)
        F = self._base(P[:, :n], P[:, n:]).reshape(N, 2, w, n)
        J = (F[:, 0] - F[:, 1]) / (2.0 * h[:, :, None])  # (N, w, n)
        J = np.transpose(J, (0, 2, 1))  # (N, n, w)

        if self.params is not None:
            fs = self.features
            Z = self.plant.feature_map(X, U)
            _, dphi = kernels.rff_eval_grad(fs.frequencies, fs.phases, Z)
            # d h_hat / d z = (1/M) alpha diag(-sin) W
            dh_dz = np.einsum("rm,km,mj->krj", self.params.blocks, dphi, fs.frequencies)
            dh_dz /= fs.count
            J = J + dh_dz @ self._zjac
        return J[:, :, :n], J[:, :, n:]


@dataclass(eq=False)
class MpcProblem:
    horizon: int
    dynamics: AugmentedDynamics
    cost: CostSpec
    start_step: int = 0
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError("horizon must be >= 2")
        n, m = self.dynamics.state_dim, self.dynamics.input_dim
        if self.cost.Q.shape != (n, n) or self.cost.R.shape != (m, m):
            raise ValueError("cost matrices do not match the dynamics dimensions")
        refs = [self.cost.ref(self.start_step + k) for k in range(self.horizon + 1)]
        self.x_ref = np.array([r[0] for r in refs])
        self.u_ref = np.array([r[1] for r in refs[: self.horizon]])

    @property
    def lower(self):
        return self.dynamics.plant.input_lower

    @property
    def upper(self):
        return self.dynamics.plant.input_upper


@dataclass(eq=False)
class MpcSolution:
    inputs: np.ndarray
    states: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _objective(problem, X, U):
    c = problem.cost
    E = X - problem.x_ref
    Vv = U - problem.u_ref
    run = np.einsum("ki,ij,kj->", E[:-1], c.Q, E[:-1]) + np.einsum("ki,ij,kj->", Vv, c.R, Vv)
    return float(run + E[-1] @ c.Q_terminal @ E[-1])


def rollout(problem, x0, inputs):
    """Simulate ``inputs`` through the augmented model; returns (states, objective)."""
    U = np.asarray(inputs, dtype=float)
    N = problem.horizon
    if U.shape != (N, problem.dynamics.input_dim):
        raise ValueError(f"inputs must have shape ({N}, {problem.dynamics.input_dim})")
    if np.any(U < problem.lower - BOX_TOL) or np.any(U > problem.upper + BOX_TOL):
        raise ValueError("inputs outside the box")
    X = np.empty((N + 1, problem.dynamics.state_dim))
    X[0] = x0
    for k in range(N):
        X[k + 1] = problem.dynamics.step(X[k], U[k])
        if not np.all(np.isfinite(X[k + 1])):
            raise DivergenceError(f"rollout diverged at step {k}")
    return X, _objective(problem, X, U)


def _forward(problem, x0, Xb, Ub, k, K, alpha):
    N = problem.horizon
    lo, hi = problem.lower, problem.upper
    dyn = problem.dynamics
    X = np.empty_like(Xb)
    U = np.empty_like(Ub)
    X[0] = x0
    for t in range(N):
        U[t] = np.clip(Ub[t] + alpha * k[t] + K[t] @ (X[t] - Xb[t]), lo, hi)
        X[t + 1] = dyn.step(X[t], U[t])
        if not np.all(np.isfinite(X[t + 1])):
            return None, None, np.inf
    return X, U, _objective(problem, X, U)


def solve(problem, x0, warm_start=None):
    """Box-constrained iLQR from ``warm_start`` (default: the input reference)."""
    opt = problem.options
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    U = problem.u_ref.copy() if warm_start is None else np.array(warm_start, dtype=float)
    U = np.clip(U, problem.lower, problem.upper)
    X, J = rollout(problem, x0, U)
    history = [J]
    mu = opt.mu_init
    converged = False
    it = 0
    scales = 0.5 ** np.arange(opt.line_search_steps)
    Q, R, Qf = problem.cost.Q, problem.cost.R, problem.cost.Q_terminal

    lin = None
    while it < opt.max_iter:
        it += 1
        if lin is None:
            fx, fu = problem.dynamics.linearize(X[:-1], U, opt.fd_step)
            lin = (fx, fu, X - problem.x_ref, U - problem.u_ref)
        fx, fu, ex, ev = lin
        while True:
            k, K, dV, ok = kernels.ilqr_backward(
                fx, fu, Q, R, Qf, ex, ev, U, problem.lower, problem.upper, mu
            )
            if ok:
                break
            mu *= 10.0
            if mu > opt.mu_max:
                return MpcSolution(U, X, J, it, False, history)

        expected_full = -(dV[0] + dV[1])
        if expected_full <= opt.rel_tol * abs(J):
            converged = True
            break

        accepted = False
        for a in scales:
            Xn, Un, Jn = _forward(problem, x0, X, U, k, K, a)
            expected = -(a * dV[0] + a * a * dV[1])
            if Jn < J and J - Jn >= opt.armijo * expected:
                accepted = True
                break
        if not accepted:
            mu *= 10.0
            if mu > opt.mu_max:
                break
            continue

        rel = (J - Jn) / max(abs(J), 1e-300)
        X, U, J = Xn, Un, Jn
        lin = None
        history.append(J)
        mu = max(mu / 2.0, opt.mu_min)
        if rel < opt.rel_tol:
            converged = True
            break

    return MpcSolution(U, X, J, it, converged, history)


def receding_step(problem, x0, prev_solution=None):
    """One MPC step; the warm start is the previous plan shifted by one."""
    if prev_solution is None:
        warm = None
    else:
        prev = prev_solution.inputs
        warm = np.vstack([prev[1:], prev[-1:]])
    sol = solve(problem, x0, warm)
    return sol.inputs[0].copy(), sol
