"""Closed-loop episodes: learned-model MPC, nominal MPC and the clairvoyant proxy.

Each step solves the MPC under the current model, applies the first input to
the true plant, observes the one-step residual against the nominal model and
(for ``ssi_mpc``) takes one projected gradient step on the residual fit.
"""

import logging
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimator as est
from .mpc import AugmentedDynamics, MpcProblem, SolverOptions, receding_step, stage_cost
from .plants import DivergenceError, InvalidStateError, NoiseSpec, observe_residual, step_truth
from .rff import KernelSpec, evaluate_features, sample_features

__all__ = [
    "CONTROLLER_KINDS",
    "EpisodeConfig",
    "TrajectoryLog",
    "derive_seed",
    "initial_state_sample",
    "run_episode",
    "run_paired",
]

log = logging.getLogger(__name__)

CONTROLLER_KINDS = ("ssi_mpc", "nominal_mpc", "clairvoyant_mpc")


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def derive_seed(master, *names):
    """Deterministic 64-bit child seed of ``master`` for a named stream."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(_key(p) for p in names))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def initial_state_sample(lower, upper, rng):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape:
        raise ValueError("initial-state bounds have different shapes")
    if np.any(lower > upper):
        raise ValueError("initial-state lower bound exceeds upper bound")
    return rng.uniform(lower, upper)


@dataclass(eq=False)
class EpisodeConfig:
    truth: object
    nominal: object
    cost: object
    controller: str = "ssi_mpc"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    feature_count: int = 75
    learning_rate: float = 0.25
    radius_bh: float = 10.0
    bandwidth: float = 1.0
    horizon: int = 20
    steps: int = 90
    init_lower: object = None
    init_upper: object = None
    master_seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.controller not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.controller!r}")
        if self.steps < 1 or self.feature_count < 1:
            raise ValueError("steps and feature_count must be >= 1")
        n = self.truth.state_dim
        if self.init_lower is None:
            self.init_lower = np.zeros(n)
        if self.init_upper is None:
            self.init_upper = np.array(self.init_lower, dtype=float)

    def with_controller(self, kind):
        return replace(self, controller=kind)


@dataclass(eq=False)
class TrajectoryLog:
    controller: str
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    residual: np.ndarray
    loss: np.ndarray
    stage_cost: np.ndarray
    value: np.ndarray
    solver_iters: np.ndarray
    converged: np.ndarray
    x_ref: np.ndarray
    param_max_abs: np.ndarray
    final_state: np.ndarray
    final_params: object = None
    failed: bool = False
    steps_requested: int = 0

    def __len__(self):
        return self.t.shape[0]

    @property
    def cumulative_cost(self):
        return float(np.sum(self.stage_cost))

    @property
    def cumulative_sq_error(self):
        return float(np.sum(self.x * self.x))

    def summary(self):
        pos_err = self.x[:, :3] - self.x_ref[:, :3] if self.x.shape[1] >= 3 else self.x - self.x_ref
        return {
            "controller": self.controller,
            "steps": len(self),
            "failed": self.failed,
            "cumulative_cost": self.cumulative_cost,
            "cumulative_sq_error": self.cumulative_sq_error,
            "rmse_position": float(np.sqrt(np.mean(np.sum(pos_err**2, axis=1)))) if len(self) else float("nan"),
            "mean_loss": float(np.mean(self.loss)) if len(self) else float("nan"),
        }


def _empty_log(n, m, steps):
    z = lambda *s: np.zeros(s)
    return dict(
        t=np.arange(steps), x=z(steps, n), u=z(steps, m), residual=z(steps, n),
        loss=z(steps), stage_cost=z(steps), value=z(steps), solver_iters=np.zeros(steps, dtype=int),
        converged=np.zeros(steps, dtype=bool), x_ref=z(steps, n), param_max_abs=z(steps),
    )


def run_episode(cfg):
    """Run one closed-loop episode; a pure function of ``cfg``."""
    truth, nominal, cost = cfg.truth, cfg.nominal, cfg.cost
    n, m = nominal.state_dim, nominal.input_dim
    kind = cfg.controller

    rng_init = np.random.default_rng(derive_seed(cfg.master_seed, "init"))
    rng_noise = np.random.default_rng(derive_seed(cfg.master_seed, "noise", cfg.noise.seed))
    x = initial_state_sample(cfg.init_lower, cfg.init_upper, rng_init)

    fs = sample_features(
        KernelSpec(nominal.feature_dim, cfg.bandwidth), cfg.feature_count,
        derive_seed(cfg.master_seed, "features"),
    )
    state = est.initial_state(n, cfg.feature_count, cfg.learning_rate, cfg.radius_bh)
    frozen = state

    rec = _empty_log(n, m, cfg.steps)
    prev = None
    failed = False
    done = 0
    for t in range(cfg.steps):
        if kind == "ssi_mpc":
            dyn = AugmentedDynamics(nominal, fs, state.params)
        elif kind == "nominal_mpc":
            dyn = AugmentedDynamics(nominal)
        else:
            dyn = AugmentedDynamics(truth, exact_residual=True)
        problem = MpcProblem(cfg.horizon, dyn, cost, start_step=t, options=cfg.solver)
        try:
            u, sol = receding_step(problem, x, prev)
            x_next, _ = step_truth(truth, cfg.noise, x, u, rng_noise)
        except (DivergenceError, InvalidStateError) as exc:
            log.warning("%s episode failed at step %d: %s", kind, t, exc)
            failed = True
            break
        prev = sol

        resid = observe_residual(nominal, x, u, x_next)
        obs = est.Observation(evaluate_features(fs, nominal.feature_extract(x, u)), resid)
        if kind == "ssi_mpc":
            loss_t = est.loss(state, obs)
            state = est.update(state, obs)
        elif kind == "nominal_mpc":
            loss_t = est.loss(frozen, obs)
        else:
            loss_t = 0.0

        x_ref = problem.x_ref[0]
        rec["x"][t] = x
        rec["u"][t] = u
        rec["residual"][t] = resid
        rec["loss"][t] = loss_t
        rec["stage_cost"][t] = stage_cost(cost, x, u, x_ref, problem.u_ref[0])
        rec["value"][t] = sol.objective
        rec["solver_iters"][t] = sol.iterations
        rec["converged"][t] = sol.converged
        rec["x_ref"][t] = x_ref
        rec["param_max_abs"][t] = state.params.max_abs()
        x = x_next
        done = t + 1

    rec = {k: v[:done] for k, v in rec.items()}
    return TrajectoryLog(
        controller=kind, final_state=x, final_params=state.params, failed=failed,
        steps_requested=cfg.steps, **rec,
    )


def run_paired(cfg_alg, cfg_oracle):
    """Run two controllers on identical plants, noise and initial-state streams."""
    if cfg_alg.truth is not cfg_oracle.truth or cfg_alg.nominal is not cfg_oracle.nominal:
        raise ValueError("paired configs must share the same plant models")
    if cfg_alg.master_seed != cfg_oracle.master_seed:
        raise ValueError("paired configs must share the master seed")
    if cfg_alg.steps != cfg_oracle.steps:
        raise ValueError("paired configs must have the same number of steps")
    return run_episode(cfg_alg), run_episode(cfg_oracle)
