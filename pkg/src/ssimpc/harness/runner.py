"""Scenario execution: seeded episodes over repeats and sweep grids.

Each episode writes its own CSV; the summary CSV and digest JSON are written
once, by the parent, after all episodes finish.
"""

import csv
import io
import json
import logging
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import estimator as est
from ..controller import EpisodeConfig, derive_seed, run_episode, run_paired
from ..metrics import dynamic_regret, sublinearity_slope
from ..mpc import CostSpec, SolverOptions
from ..plants import (
    CartPoleParams,
    NoiseSpec,
    QuadrotorParams,
    make_cartpole,
    make_quadrotor,
    reference_trajectory,
)

__all__ = [
    "RunArtifacts",
    "build_episode",
    "episode_header",
    "episode_rows",
    "write_atomic",
    "run_scenario",
    "run_regret",
]

log = logging.getLogger(__name__)

SUMMARY_FIELDS = [
    "controller", "features", "learning_rate", "repeat", "seed", "steps", "failed",
    "cumulative_cost", "cumulative_sq_error", "rmse_position", "mean_loss", "final_loss",
]


@dataclass
class RunArtifacts:
    out_dir: Path
    episode_csvs: list = field(default_factory=list)
    summary_csv: Path = None
    digest_path: Path = None
    plots: list = field(default_factory=list)
    digest: dict = field(default_factory=dict)
    failures: int = 0


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_atomic(path, text):
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def episode_header(n, m):
    return (
        ["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
        + [f"residual{i}" for i in range(n)]
        + ["l_t", "stage_cost", "V_t", "solver_iters", "converged"]
    )


def episode_rows(lg):
    for k in range(len(lg)):
        yield (
            [int(lg.t[k])] + list(lg.x[k]) + list(lg.u[k]) + list(lg.residual[k])
            + [lg.loss[k], lg.stage_cost[k], lg.value[k], int(lg.solver_iters[k]), bool(lg.converged[k])]
        )


def _plants(cfg):
    p = cfg.plant
    if p.kind == "cartpole":
        params = CartPoleParams(p.cart_mass, p.pole_mass, p.half_length, p.gravity)
        truth, nominal = make_cartpole(
            params, nominal_scale=p.nominal_scale, dt=p.dt, force_bound=p.force_bound,
            feature_scales=cfg.controller.feature_scales,
        )
        return truth, nominal, None
    qp = QuadrotorParams(
        mass=p.mass, drag_matrix=np.diag(p.drag_coefficients), thrust_max=p.thrust_max,
        rate_bound=p.rate_bound,
    )
    truth, nominal = make_quadrotor(qp, drag_on=p.drag, dt=p.dt, feature_scales=cfg.controller.feature_scales)
    r = p.reference
    rp = dict(center=tuple(r.center), radius=r.radius, max_speed=r.max_speed, ramp_time=r.ramp_time,
              hover_thrust=qp.hover_thrust)
    dt = p.dt
    return truth, nominal, lambda k: reference_trajectory(r.kind, rp, k * dt)


def _solver(cfg):
    s = cfg.controller.solver
    return SolverOptions(max_iter=s.max_iter, rel_tol=s.rel_tol, mu_init=s.mu_init, mu_max=s.mu_max,
                         line_search_steps=s.line_search_steps)


def build_episode(cfg, controller, features, learning_rate, seed, steps=None, plants=None):
    """EpisodeConfig for one (controller, M, eta, seed) point of a scenario."""
    truth, nominal, reference = plants if plants is not None else _plants(cfg)
    c = cfg.controller
    Q = np.diag(c.q_diag)
    cost = CostSpec(Q, np.diag(c.r_diag), Q_terminal=c.terminal_scale * Q, reference=reference)
    if reference is None:
        lo, hi = cfg.plant.init_lower, cfg.plant.init_upper
    else:
        x0 = reference(0)[0]
        spread = np.zeros_like(x0)
        spread[:3] = cfg.plant.init_spread
        lo, hi = x0 - spread, x0 + spread
    nb = cfg.noise
    return EpisodeConfig(
        truth=truth, nominal=nominal, cost=cost, controller=controller,
        noise=NoiseSpec(nb.kind, nb.scale, nb.seed),
        feature_count=int(features), learning_rate=float(learning_rate), radius_bh=c.radius_bh,
        bandwidth=c.bandwidth, horizon=c.horizon, steps=int(steps or cfg.run.steps),
        init_lower=np.asarray(lo, float), init_upper=np.asarray(hi, float),
        master_seed=seed, solver=_solver(cfg),
    )


def _eta(cfg, value=None, horizon=None):
    lr = cfg.controller.learning_rate
    v = lr.value if value is None else value
    T = horizon or lr.horizon or cfg.run.steps
    return est.resolve_learning_rate(lr.kind, v, T)


def _episode_name(controller, M, eta, r):
    return f"{controller}_M{M}_eta{eta:g}_r{r}.csv"


def _run_one(args):
    cfg, controller, M, eta, r, seed, out = args
    lg = run_episode(build_episode(cfg, controller, M, eta, seed))
    n, m = lg.x.shape[1], lg.u.shape[1]
    path = Path(out) / "episodes" / _episode_name(controller, M, eta, r)
    write_atomic(path, _csv_text(episode_header(n, m), episode_rows(lg)))
    s = lg.summary()
    row = dict(
        controller=controller, features=M, learning_rate=eta, repeat=r, seed=seed, steps=s["steps"],
        failed=lg.failed, cumulative_cost=s["cumulative_cost"], cumulative_sq_error=s["cumulative_sq_error"],
        rmse_position=s["rmse_position"] if cfg.plant.kind == "quadrotor" else float("nan"),
        mean_loss=s["mean_loss"],
        final_loss=float(lg.loss[-1]) if len(lg) else float("nan"),
    )
    return str(path), row


def _median(vals):
    vals = [v for v in vals if np.isfinite(v)]
    return float(np.median(vals)) if vals else None


def _digest(cfg, rows, mode):
    groups = {}
    for row in rows:
        groups.setdefault((row["controller"], row["features"], row["learning_rate"]), []).append(row)
    out = []
    for (ctrl, M, eta), rs in groups.items():
        ok = [r for r in rs if not r["failed"]]
        out.append(dict(
            controller=ctrl, features=M, learning_rate=eta, repeats=len(rs),
            failures=len(rs) - len(ok),
            median_cumulative_cost=_median([r["cumulative_cost"] for r in ok]),
            median_cumulative_sq_error=_median([r["cumulative_sq_error"] for r in ok]),
            median_rmse_position=_median([r["rmse_position"] for r in ok]),
            median_mean_loss=_median([r["mean_loss"] for r in ok]),
        ))
    return dict(
        scenario=cfg.name, mode=mode, plant=cfg.plant.kind, steps=cfg.run.steps, dt=cfg.plant.dt,
        groups=out, failures=sum(g["failures"] for g in out), notes=[],
    )


def _prepare_out(out):
    out = Path(out)
    try:
        (out / "episodes").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _execute(jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def run_scenario(cfg, out_dir=None, seed=None, workers=None, sweep=False):
    """Run all repeats (and, with ``sweep``, every (M, eta) grid point)."""
    master = cfg.run.seed if seed is None else int(seed)
    out = _prepare_out(out_dir or cfg.run.output_dir)
    c = cfg.controller
    if sweep:
        if cfg.sweep is None:
            raise ValueError("scenario has no sweep block")
        grid = [(M, _eta(cfg, eta)) for M in cfg.sweep.features for eta in cfg.sweep.learning_rates]
    else:
        grid = [(c.features, _eta(cfg))]
    # the seed ignores (M, eta) so every grid point sees the same noise and init
    seeds = [derive_seed(master, cfg.name, r) for r in range(cfg.run.repeats)]
    jobs = []
    for M, eta in grid:
        for ctrl in [c.kind] + list(c.baselines):
            if ctrl != "ssi_mpc" and any(j[1] == ctrl for j in jobs):
                continue  # learning parameters do not affect the baselines
            for r, s in enumerate(seeds):
                jobs.append((cfg, ctrl, M, eta, r, s, str(out)))

    results = _execute(jobs, workers or cfg.run.workers)
    rows = [row for _, row in results]
    art = RunArtifacts(out_dir=out, episode_csvs=[Path(p) for p, _ in results])
    art.summary_csv = out / "summary.csv"
    write_atomic(art.summary_csv, _csv_text(SUMMARY_FIELDS, ([row[k] for k in SUMMARY_FIELDS] for row in rows)))
    art.digest = _digest(cfg, rows, "sweep" if sweep else "run")
    art.failures = art.digest["failures"]
    art.digest_path = out / "digest.json"
    write_atomic(art.digest_path, json.dumps(art.digest, indent=2, sort_keys=True) + "\n")
    return art


def run_regret(cfg, horizons, out_dir=None, seed=None, c_value=None):
    """Paired ssi-vs-clairvoyant runs to max(horizons), truncated at each horizon.

    The learning rate is ``c / sqrt(T_max)``; ``c`` defaults to the scenario's
    learning-rate value. Regret is against the clairvoyant-MPC proxy.
    """
    horizons = sorted(int(h) for h in horizons)
    if len(horizons) < 3 or horizons[0] < 1:
        raise ValueError("need at least three positive horizons")
    T = horizons[-1]
    master = cfg.run.seed if seed is None else int(seed)
    out = _prepare_out(out_dir or cfg.run.output_dir)
    c = cfg.controller.learning_rate.value if c_value is None else c_value
    eta = est.resolve_learning_rate("horizon_scaled", c, T)
    plants = _plants(cfg)
    rows, fits, failures = [], [], 0
    for r in range(cfg.run.repeats):
        s = derive_seed(master, cfg.name, r)
        a = build_episode(cfg, "ssi_mpc", cfg.controller.features, eta, s, steps=T, plants=plants)
        la, lb = run_paired(a, a.with_controller("clairvoyant_mpc"))
        if la.failed or lb.failed:
            failures += 1
            continue
        rep = dynamic_regret(la, lb)
        vals = [float(rep.prefix[h - 1]) for h in horizons]
        fit = sublinearity_slope(horizons, vals)
        fits.append(fit)
        for h, v in zip(horizons, vals):
            rows.append([r, s, h, v, v / h, fit.exponent, fit.floored])
    write_atomic(out / "regret.csv", _csv_text(
        ["repeat", "seed", "horizon", "regret", "regret_per_step", "exponent", "floored"], rows))
    med = {}
    for h in horizons:
        v = [row[3] for row in rows if row[2] == h]
        med[str(h)] = _median(v)
    digest = dict(
        scenario=cfg.name, mode="regret", comparator="clairvoyant-mpc proxy", learning_rate=eta,
        horizons=horizons, median_regret=med,
        median_exponent=_median([f.exponent for f in fits]),
        exponents=[f.exponent for f in fits], failures=failures, notes=[],
    )
    write_atomic(out / "regret.json", json.dumps(digest, indent=2, sort_keys=True) + "\n")
    return digest
