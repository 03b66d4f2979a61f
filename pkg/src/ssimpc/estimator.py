"""Projected online gradient descent on the squared prediction error."""

from dataclasses import dataclass, replace

import numpy as np

from .rff import ParamEstimate

__all__ = [
    "Observation",
    "EstimatorState",
    "initial_state",
    "resolve_learning_rate",
    "loss",
    "gradient",
    "update",
    "project",
    "batch_optimum",
    "static_regret",
]


@dataclass(frozen=True, eq=False)
class Observation:
    features_at_z: np.ndarray  # (M,)
    target: np.ndarray  # (d_h,)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    params: ParamEstimate
    learning_rate: float
    step_count: int = 0
    cumulative_loss: float = 0.0


def initial_state(output_dim, count, learning_rate, radius_bh=10.0):
    if learning_rate < 0:
        raise ValueError("learning rate must be nonnegative")
    return EstimatorState(ParamEstimate.zeros(output_dim, count, radius_bh), float(learning_rate))


def resolve_learning_rate(kind, value, horizon=None):
    """``fixed`` -> value; ``horizon_scaled`` -> value / sqrt(horizon)."""
    if kind == "fixed":
        return float(value)
    if kind == "horizon_scaled":
        if not horizon or horizon < 1:
            raise ValueError("horizon_scaled learning rate needs a horizon >= 1")
        return float(value) / np.sqrt(horizon)
    raise ValueError(f"unknown learning-rate kind {kind!r}")


def _residual(state, obs):
    A = state.params.blocks
    phi = np.asarray(obs.features_at_z, dtype=float)
    y = np.asarray(obs.target, dtype=float)
    if phi.shape != (A.shape[1],) or y.shape != (A.shape[0],):
        raise ValueError(
            f"observation shapes {phi.shape}, {y.shape} do not match params {A.shape}"
        )
    return y - A @ phi / A.shape[1], phi


def loss(state, obs):
    r, _ = _residual(state, obs)
    return float(r @ r)


def gradient(state, obs):
    r, phi = _residual(state, obs)
    return np.outer(-2.0 / phi.shape[0] * r, phi)


def project(params):
    B = params.radius_bh
    return ParamEstimate(np.clip(params.blocks, -B, B), B)


def update(state, obs):
    r, phi = _residual(state, obs)
    step_loss = float(r @ r)
    grad = np.outer(-2.0 / phi.shape[0] * r, phi)
    moved = ParamEstimate(state.params.blocks - state.learning_rate * grad, state.params.radius_bh)
    return replace(
        state,
        params=project(moved),
        step_count=state.step_count + 1,
        cumulative_loss=state.cumulative_loss + step_loss,
    )


def _box_lsq(Phi, y, bound, tol=1e-8, max_iter=100_000):
    """min ||y - Phi a||^2 subject to |a_i| <= bound, one output column."""
    # minimum-norm unconstrained solution; Tikhonov jitter keeps the normal
    # equations well posed when Phi is rank deficient
    G = Phi.T @ Phi
    g = Phi.T @ y
    a = np.linalg.lstsq(G + 1e-12 * np.eye(G.shape[0]), g, rcond=None)[0]
    if np.all(np.abs(a) <= bound):
        return a

    # accelerated projected gradient
    L = 2.0 * np.linalg.eigvalsh(G)[-1]
    if L <= 0:
        return np.clip(a, -bound, bound)
    x = np.clip(a, -bound, bound)
    yk = x.copy()
    tk = 1.0
    for _ in range(max_iter):
        grad = 2.0 * (G @ yk - g)
        x_new = np.clip(yk - grad / L, -bound, bound)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        yk = x_new + ((tk - 1.0) / t_new) * (x_new - x)
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x)):
            x = x_new
            break
        x, tk = x_new, t_new
    return x


def batch_optimum(feature_rows, targets, radius_bh):
    """Best fixed coefficient blocks in hindsight, shape (d_h, M)."""
    Phi = np.asarray(feature_rows, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    M = Phi.shape[1]
    scaled = Phi / M
    # loss separates across output rows and the box across coefficients
    return np.stack([_box_lsq(scaled, Y[:, r], radius_bh) for r in range(Y.shape[1])])


def static_regret(losses_online, feature_rows, targets, radius_bh):
    """Cumulative online loss minus the loss of the best fixed parameters in the box."""
    losses_online = np.asarray(losses_online, dtype=float)
    if losses_online.size < 1:
        raise ValueError("need at least one step")
    Phi = np.asarray(feature_rows, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    A = batch_optimum(Phi, Y, radius_bh)
    resid = Y - Phi @ A.T / Phi.shape[1]
    return float(losses_online.sum() - np.sum(resid * resid))
