"""Simulated control-affine plants, RK4 discretization and residual observation.

Every plant is described in continuous time by a vectorized derivative
``nominal_deriv(X, U)`` over a leading batch axis. The discrete map is one
RK4 step of length ``dt`` with the input held constant. Cart-pole and
quadrotor plants carry a compiled fast path (``discrete_batch``) that must
agree with the generic RK4 route.

Disturbances live in discrete residual units: the learned target is
``x_next - nominal_discrete(x, u)``.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from ._purepy import _cartpole_deriv as _cartpole_deriv_batch
from ._purepy import _quad_deriv as _quad_deriv_batch

__all__ = [
    "DivergenceError",
    "InvalidStateError",
    "FeatureMap",
    "PlantModel",
    "NoiseSpec",
    "CartPoleParams",
    "QuadrotorParams",
    "rk4_step",
    "nominal_discrete",
    "step_truth",
    "observe_residual",
    "true_residual",
    "make_cartpole",
    "make_quadrotor",
    "make_linear",
    "with_disturbance",
    "reference_trajectory",
]

INPUT_SLACK = 1e-9
QUAT_TOL = 1e-6


class DivergenceError(FloatingPointError):
    """Raised when a simulation step produces non-finite values."""


class InvalidStateError(ValueError):
    """Raised when a state violates a plant's structural constraint."""


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """z = [x; u][indices] / scales. Linear, so its Jacobian is constant."""

    indices: tuple
    scales: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        if s.shape != (len(self.indices),) or np.any(s <= 0):
            raise ValueError("feature scales must be positive, one per feature index")
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    @property
    def dim(self):
        return len(self.indices)

    def __call__(self, x, u):
        xu = np.concatenate([np.asarray(x, float), np.asarray(u, float)], axis=-1)
        return xu[..., list(self.indices)] / self.scales

    def jacobian(self, width):
        J = np.zeros((self.dim, width))
        J[np.arange(self.dim), list(self.indices)] = 1.0 / self.scales
        return J

    def rescaled(self, factors):
        return FeatureMap(self.indices, self.scales * np.asarray(factors, dtype=float))


@dataclass(frozen=True, eq=False)
class PlantModel:
    name: str
    state_dim: int
    input_dim: int
    nominal_deriv: Callable
    feature_map: FeatureMap
    input_lower: np.ndarray
    input_upper: np.ndarray
    dt: float
    true_disturbance: Optional[Callable] = None
    discrete_batch: Optional[Callable] = None
    post_step: Optional[Callable] = None
    check_state: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lo = np.asarray(self.input_lower, dtype=float)
        hi = np.asarray(self.input_upper, dtype=float)
        if lo.shape != (self.input_dim,) or hi.shape != (self.input_dim,):
            raise ValueError("input bounds must have shape (input_dim,)")
        if not np.all(lo < hi):
            raise ValueError("input_lower must be < input_upper componentwise")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "input_lower", lo)
        object.__setattr__(self, "input_upper", hi)

    @property
    def feature_dim(self):
        return self.feature_map.dim

    def feature_extract(self, x, u):
        return self.feature_map(x, u)

    def input_matrix(self, x):
        """g(x) of the continuous model, exact because the model is affine in u."""
        x = np.asarray(x, dtype=float)[None, :]
        U = np.vstack([np.zeros(self.input_dim), np.eye(self.input_dim)])
        X = np.repeat(x, self.input_dim + 1, axis=0)
        d = self.nominal_deriv(X, U)
        return (d[1:] - d[0]).T

    def step_batch(self, X, U):
        """Deterministic discrete map for a batch, without disturbance or noise."""
        if self.discrete_batch is not None:
            return self.discrete_batch(X, U)
        out = rk4_step(self.nominal_deriv, X, U, self.dt, check=False)
        if self.post_step is not None:
            out = self.post_step(out)
        return out


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    scale: object = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "bounded_uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if np.any(np.asarray(self.scale, dtype=float) < 0):
            raise ValueError("noise scale must be nonnegative")

    def draw(self, rng, dim):
        if self.kind == "none":
            return np.zeros(dim)
        scale = np.broadcast_to(np.asarray(self.scale, dtype=float), (dim,))
        if self.kind == "gaussian":
            return rng.standard_normal(dim) * scale
        return rng.uniform(-1.0, 1.0, size=dim) * scale


@dataclass(frozen=True)
class CartPoleParams:
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.81

    def __post_init__(self):
        if min(self.cart_mass, self.pole_mass, self.half_length, self.gravity) <= 0:
            raise ValueError("cart-pole parameters must be positive")

    def as_array(self):
        return np.array([self.cart_mass, self.pole_mass, self.half_length, self.gravity])


@dataclass(frozen=True, eq=False)
class QuadrotorParams:
    mass: float = 0.68
    gravity: tuple = (0.0, 0.0, -9.81)
    drag_matrix: np.ndarray = field(default_factory=lambda: 0.3 * np.eye(3))
    thrust_min: float = 0.0
    thrust_max: Optional[float] = None
    rate_bound: float = 3.0

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        D = np.asarray(self.drag_matrix, dtype=float)
        if D.shape != (3, 3):
            raise ValueError("drag_matrix must be 3x3")
        if np.linalg.eigvalsh(0.5 * (D + D.T))[0] < -1e-12:
            raise ValueError("drag_matrix must be positive semidefinite")
        object.__setattr__(self, "drag_matrix", D)
        if self.thrust_max is None:
            object.__setattr__(self, "thrust_max", 2.0 * self.hover_thrust)

    @property
    def hover_thrust(self):
        return self.mass * float(np.linalg.norm(self.gravity))

    def as_array(self, drag_on):
        return np.concatenate(
            [[self.mass], np.asarray(self.gravity, float), self.drag_matrix.ravel(), [1.0 if drag_on else 0.0]]
        )


def rk4_step(deriv, x, u, dt, check=True):
    """Classical RK4 with ``u`` held constant over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = deriv(x, u)
    k2 = deriv(x + 0.5 * dt * k1, u)
    k3 = deriv(x + 0.5 * dt * k2, u)
    k4 = deriv(x + dt * k3, u)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if check and not np.all(np.isfinite(out)):
        raise DivergenceError("RK4 step produced non-finite state")
    return out


def _admissible_input(plant, u):
    u = np.asarray(u, dtype=float)
    lo, hi = plant.input_lower, plant.input_upper
    if np.any(u < lo - INPUT_SLACK) or np.any(u > hi + INPUT_SLACK):
        raise ValueError(f"input {u} outside box [{lo}, {hi}]")
    return np.clip(u, lo, hi)


def nominal_discrete(plant, x, u):
    x = np.asarray(x, dtype=float)
    u = _admissible_input(plant, u)
    if plant.check_state is not None:
        plant.check_state(x)
    out = plant.step_batch(x[None, :], u[None, :])[0]
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"{plant.name}: non-finite state after discrete step")
    return out


def step_truth(plant, noise, x, u, rng):
    """Advance the true plant one step; returns (x_next, rng)."""
    u = _admissible_input(plant, u)
    x_next = nominal_discrete(plant, x, u)
    if plant.true_disturbance is not None:
        x_next = x_next + plant.true_disturbance(plant.feature_extract(x, u))
    x_next = x_next + noise.draw(rng, plant.state_dim)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"{plant.name}: non-finite state")
    return x_next, rng


def observe_residual(plant, x_t, u_t, x_next):
    return np.asarray(x_next, dtype=float) - nominal_discrete(plant, x_t, u_t)


def true_residual(truth, nominal, x, u):
    """Noise-free truth step minus nominal step at (x, u)."""
    x_next = nominal_discrete(truth, x, u)
    if truth.true_disturbance is not None:
        x_next = x_next + truth.true_disturbance(truth.feature_extract(x, u))
    return x_next - nominal_discrete(nominal, x, u)


def with_disturbance(plant, h, name=None):
    """Copy of ``plant`` whose true step adds ``h(z)`` (discrete units)."""
    return replace(plant, true_disturbance=h, name=name or plant.name + "+h")


def make_cartpole(params_true=None, nominal_scale=0.75, dt=1.0 / 15.0, force_bound=30.0,
                  feature_scales=None):
    """(truth, nominal) cart-pole pair; the nominal scales m_c, m_p and l.

    State (x, x_dot, theta, theta_dot), input F, features z = [x; F].
    """
    if params_true is None:
        params_true = CartPoleParams()
    if not 0 < nominal_scale <= 1:
        raise ValueError("nominal_scale must lie in (0, 1]")
    params_nom = CartPoleParams(
        params_true.cart_mass * nominal_scale,
        params_true.pole_mass * nominal_scale,
        params_true.half_length * nominal_scale,
        params_true.gravity,
    )
    fmap = FeatureMap((0, 1, 2, 3, 4), np.ones(5))
    if feature_scales is not None:
        fmap = fmap.rescaled(feature_scales)

    def build(name, p):
        arr = p.as_array()
        return PlantModel(
            name=name,
            state_dim=4,
            input_dim=1,
            nominal_deriv=lambda X, U: _cartpole_deriv(arr, X, U),
            feature_map=fmap,
            input_lower=np.array([-force_bound]),
            input_upper=np.array([force_bound]),
            dt=dt,
            discrete_batch=lambda X, U: kernels.cartpole_rk4(arr, dt, X, U),
            meta={"params": p},
        )

    return build("cartpole-truth", params_true), build("cartpole-nominal", params_nom)


def _cartpole_deriv(p, X, U):
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if X.ndim == 1:
        return _cartpole_deriv(p, X[None, :], U[None, :])[0]
    return _cartpole_deriv_batch(p, X, U)


def _quad_check(x):
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(x[6:10]) - 1.0) > QUAT_TOL:
        raise InvalidStateError("quaternion in state is not unit norm")


def _renormalize(X):
    X = np.array(X, dtype=float)
    X[..., 6:10] /= np.linalg.norm(X[..., 6:10], axis=-1, keepdims=True)
    return X


def make_quadrotor(params=None, drag_on=True, dt=0.02, feature_scales=None):
    """(truth, nominal) quadrotor pair with collective thrust and body-rate inputs.

    State (p, v, q) with q = (w, x, y, z); input (T, omega). The truth adds
    linear body-frame rotor drag when ``drag_on``. Features are
    z = [v; q; omega; T / T_max].
    """
    if params is None:
        params = QuadrotorParams()
    idx = (3, 4, 5, 6, 7, 8, 9, 11, 12, 13, 10)
    fmap = FeatureMap(idx, np.r_[np.ones(10), params.thrust_max])
    if feature_scales is not None:
        fmap = fmap.rescaled(feature_scales)
    lo = np.array([params.thrust_min, -params.rate_bound, -params.rate_bound, -params.rate_bound])
    hi = np.array([params.thrust_max, params.rate_bound, params.rate_bound, params.rate_bound])

    def build(name, drag):
        arr = params.as_array(drag)

        def deriv(X, U):
            X = np.asarray(X, dtype=float)
            U = np.asarray(U, dtype=float)
            if X.ndim == 1:
                return deriv(X[None, :], U[None, :])[0]
            return _quad_deriv_batch(arr, X, U)

        return PlantModel(
            name=name,
            state_dim=10,
            input_dim=4,
            nominal_deriv=deriv,
            feature_map=fmap,
            input_lower=lo,
            input_upper=hi,
            dt=dt,
            discrete_batch=lambda X, U: kernels.quadrotor_rk4(arr, dt, X, U),
            post_step=_renormalize,
            check_state=_quad_check,
            meta={"params": params, "drag_on": drag},
        )

    return build("quadrotor-truth", drag_on), build("quadrotor-nominal", False)


def make_linear(A, B, dt=1.0, bounds=1e6, discrete=True):
    """Linear test plant; ``discrete`` means x+ = A x + B u exactly."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), (m,))

    def deriv(X, U):
        return np.asarray(X) @ A.T + np.asarray(U) @ B.T

    return PlantModel(
        name="linear",
        state_dim=n,
        input_dim=m,
        nominal_deriv=deriv,
        feature_map=FeatureMap(tuple(range(n + m)), np.ones(n + m)),
        input_lower=-bounds,
        input_upper=bounds.copy(),
        dt=dt,
        discrete_batch=deriv if discrete else None,
        meta={"A": A, "B": B, "discrete": discrete},
    )


def _ramp_phase(t, speed, ramp, scale):
    """Phase and phase rate for a path whose speed ramps linearly to ``speed``."""
    if ramp <= 0 or t >= ramp:
        r0 = 0.5 * ramp if ramp > 0 else 0.0
        return (speed / scale) * (r0 + (t - max(ramp, 0.0))), speed / scale
    return (speed / scale) * t * t / (2.0 * ramp), (speed / scale) * t / ramp


def reference_trajectory(kind, params, t):
    """Reference (x_ref, u_ref) at time ``t`` seconds.

    ``setpoint`` takes ``state`` and ``input`` lists. ``circle`` and
    ``lemniscate`` produce quadrotor-shaped references from ``center``,
    ``radius``, ``max_speed``, ``ramp_time`` and ``hover_thrust``; the
    lemniscate is the Gerono curve (r sin p, r sin p cos p) whose peak speed
    is ``max_speed`` once ramped.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if kind == "setpoint":
        return np.asarray(params["state"], float).copy(), np.asarray(params["input"], float).copy()
    if kind not in ("circle", "lemniscate"):
        raise ValueError(f"unknown reference kind {kind!r}")

    c = np.asarray(params.get("center", (0.0, 0.0, 1.0)), dtype=float)
    r = float(params["radius"])
    vm = float(params["max_speed"])
    ramp = float(params.get("ramp_time", 0.0))
    if kind == "circle":
        ph, rate = _ramp_phase(t, vm, ramp, r)
        pos = c + r * np.array([np.cos(ph), np.sin(ph), 0.0])
        vel = r * rate * np.array([-np.sin(ph), np.cos(ph), 0.0])
    else:
        ph, rate = _ramp_phase(t, vm, ramp, r * np.sqrt(2.0))
        pos = c + r * np.array([np.sin(ph), np.sin(ph) * np.cos(ph), 0.0])
        vel = r * rate * np.array([np.cos(ph), np.cos(2.0 * ph), 0.0])
    x_ref = np.concatenate([pos, vel, [1.0, 0.0, 0.0, 0.0]])
    u_ref = np.array([float(params["hover_thrust"]), 0.0, 0.0, 0.0])
    return x_ref, u_ref
