"""Regret and error accounting over trajectory logs.

Dynamic regret here is always measured against the clairvoyant MPC proxy,
never against the exact non-causal optimum.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "RegretReport",
    "SlopeFit",
    "NoiseFloor",
    "dynamic_regret",
    "sublinearity_slope",
    "stabilization_error",
    "tracking_rmse",
    "noise_floor_check",
]

SLOPE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RegretReport:
    horizon: int
    alg_cumulative_cost: float
    oracle_cumulative_cost: float
    dynamic_regret: float
    prefix: np.ndarray
    normalized: np.ndarray
    comparator: str = "clairvoyant-mpc proxy"


class SlopeFit(NamedTuple):
    exponent: float
    intercept: float
    residual: float
    floored: bool


class NoiseFloor(NamedTuple):
    ratio: float
    defined: bool


def dynamic_regret(alg, oracle):
    """Prefix regret series; each controller's cost is taken on its own trajectory."""
    a = np.asarray(alg.stage_cost, dtype=float)
    b = np.asarray(oracle.stage_cost, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"log lengths differ: {a.shape[0]} vs {b.shape[0]}")
    prefix = np.cumsum(a) - np.cumsum(b)
    tau = np.arange(1, a.shape[0] + 1)
    ca, cb = float(a.sum()), float(b.sum())
    return RegretReport(
        horizon=a.shape[0],
        alg_cumulative_cost=ca,
        oracle_cumulative_cost=cb,
        dynamic_regret=ca - cb,
        prefix=prefix,
        normalized=prefix / tau,
    )


def sublinearity_slope(horizons, values):
    """Least-squares fit of log(value) = p log(T) + c."""
    T = np.asarray(horizons, dtype=float)
    v = np.asarray(values, dtype=float)
    if T.shape != v.shape or T.size < 3:
        raise ValueError("need at least three (horizon, value) pairs")
    if np.any(np.diff(T) <= 0) or T[0] <= 0:
        raise ValueError("horizons must be positive and strictly increasing")
    floored = bool(np.any(v <= 0))
    lv = np.log(np.maximum(v, SLOPE_FLOOR))
    lt = np.log(T)
    p, c = np.polyfit(lt, lv, 1)
    resid = float(np.sqrt(np.mean((lv - (p * lt + c)) ** 2)))
    return SlopeFit(float(p), float(c), resid, floored)


def stabilization_error(log):
    if len(log) == 0:
        raise ValueError("empty log")
    sq = np.sum(np.asarray(log.x) ** 2, axis=1)
    return sq, float(sq.sum())


def tracking_rmse(log, reference=None, position=slice(0, 3)):
    """Position RMSE against ``reference`` (defaults to the logged reference)."""
    ref = np.asarray(log.x_ref if reference is None else reference, dtype=float)
    x = np.asarray(log.x, dtype=float)
    if ref.shape[0] != x.shape[0]:
        raise ValueError(f"reference has {ref.shape[0]} rows, log has {x.shape[0]}")
    err = x[:, position] - ref[:, position]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def noise_floor_check(log, noise):
    """Mean loss over the second half of the episode over the noise energy E||w||^2."""
    if noise.kind == "none":
        return NoiseFloor(float("nan"), False)
    n = np.asarray(log.x).shape[1]
    var = np.broadcast_to(np.asarray(noise.scale, dtype=float), (n,)) ** 2
    if noise.kind == "bounded_uniform":
        var = var / 3.0
    energy = float(var.sum())
    if energy == 0.0:
        return NoiseFloor(float("nan"), False)
    loss = np.asarray(log.loss, dtype=float)
    tail = loss[loss.shape[0] // 2:]
    return NoiseFloor(float(tail.mean()) / energy, True)
