"""Scenario configuration: strict YAML parsing, defaulting and serialization.

A scenario file has the top-level blocks ``name``, ``plant``, ``noise``,
``controller``, ``run`` and optionally ``sweep``. Parsing fills every default
so that ``serialize`` echoes the complete configuration back, and
``parse_config(serialize(cfg)) == cfg``.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from ..controller import CONTROLLER_KINDS

__all__ = [
    "ConfigError",
    "CartPoleBlock",
    "QuadrotorBlock",
    "ReferenceBlock",
    "NoiseBlock",
    "LearningRateBlock",
    "SolverBlock",
    "ControllerBlock",
    "RunBlock",
    "SweepBlock",
    "ScenarioConfig",
    "parse_config",
    "load_config",
    "serialize",
]


class ConfigError(ValueError):
    pass


@dataclass
class ReferenceBlock:
    kind: str = "circle"
    radius: float = 0.5
    max_speed: float = 0.8
    ramp_time: float = 2.0
    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.0])


@dataclass
class CartPoleBlock:
    kind: str = "cartpole"
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.81
    nominal_scale: float = 0.75
    force_bound: float = 30.0
    dt: float = 1.0 / 15.0
    init_lower: List[float] = field(default_factory=lambda: [-1.0, -0.1, -0.2, -0.1])
    init_upper: List[float] = field(default_factory=lambda: [1.0, 0.1, 0.2, 0.1])


@dataclass
class QuadrotorBlock:
    kind: str = "quadrotor"
    mass: float = 0.68
    drag: bool = True
    drag_coefficients: List[float] = field(default_factory=lambda: [0.3, 0.3, 0.3])
    rate_bound: float = 3.0
    thrust_max: Optional[float] = None
    dt: float = 0.02
    init_spread: float = 0.0
    reference: ReferenceBlock = field(default_factory=ReferenceBlock)


@dataclass
class NoiseBlock:
    kind: str = "none"
    scale: float = 0.0
    seed: int = 0


@dataclass
class LearningRateBlock:
    kind: str = "fixed"
    value: float = 0.25
    horizon: Optional[int] = None


@dataclass
class SolverBlock:
    max_iter: int = 50
    rel_tol: float = 1e-6
    mu_init: float = 1e-6
    mu_max: float = 1e6
    line_search_steps: int = 11


@dataclass
class ControllerBlock:
    kind: str = "ssi_mpc"
    baselines: List[str] = field(default_factory=list)
    features: Optional[int] = None
    learning_rate: LearningRateBlock = field(default_factory=LearningRateBlock)
    radius_bh: float = 10.0
    horizon: Optional[int] = None
    q_diag: Optional[List[float]] = None
    r_diag: Optional[List[float]] = None
    terminal_scale: Optional[float] = None
    bandwidth: Optional[float] = None
    feature_scales: Optional[List[float]] = None
    solver: SolverBlock = field(default_factory=SolverBlock)


@dataclass
class RunBlock:
    steps: Optional[int] = None
    duration: Optional[float] = None
    repeats: int = 1
    seed: int = 0
    output_dir: str = "artifacts"
    workers: int = 1


@dataclass
class SweepBlock:
    features: List[int] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)


@dataclass
class ScenarioConfig:
    name: str
    plant: object
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    controller: ControllerBlock = field(default_factory=ControllerBlock)
    run: RunBlock = field(default_factory=RunBlock)
    sweep: Optional[SweepBlock] = None

    @property
    def dt(self):
        return self.plant.dt


# plant-dependent controller defaults
_PLANT_DEFAULTS = {
    "cartpole": dict(
        features=75, horizon=20, q_diag=[5.0, 0.1, 5.0, 0.1], r_diag=[0.1],
        terminal_scale=1.0, bandwidth=1.0, duration=6.0,
    ),
    "quadrotor": dict(
        features=50, horizon=10, q_diag=[50.0] * 3 + [5.0] * 3 + [1.0] * 4,
        r_diag=[1.0, 0.1, 0.1, 0.1], terminal_scale=10.0, bandwidth=100.0, duration=20.0,
    ),
}
_DIMS = {"cartpole": (4, 1, 5), "quadrotor": (10, 4, 11)}
_PLANTS = {"cartpole": CartPoleBlock, "quadrotor": QuadrotorBlock}


class _Lines:
    """Line numbers (1-based) of mapping keys, by key path."""

    def __init__(self, text):
        self.map = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError:
            node = None
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (str(k.value),)
                self.map[key] = k.start_mark.line + 1
                self._walk(v, key)

    def at(self, path):
        while path:
            if path in self.map:
                return self.map[path]
            path = path[:-1]
        return None


def _where(path, lines):
    name = ".".join(path) if path else "<root>"
    ln = lines.at(tuple(path)) if lines else None
    return f"{name} (line {ln})" if ln else name


def _fail(msg, path, lines):
    raise ConfigError(f"{_where(path, lines)}: {msg}")


def _num(v, path, lines, integer=False):
    if isinstance(v, bool):
        _fail(f"expected a number, got {v!r}", path, lines)
    if isinstance(v, str):
        # YAML 1.1 reads "1e-6" as a string
        try:
            v = float(v)
        except ValueError:
            _fail(f"expected a number, got {v!r}", path, lines)
    if not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(f"expected a finite number, got {v!r}", path, lines)
    if integer:
        if float(v) != int(v):
            _fail(f"expected an integer, got {v!r}", path, lines)
        return int(v)
    return float(v)


def _convert(value, tp, path, lines):
    origin = getattr(tp, "__origin__", None)
    args = getattr(tp, "__args__", ())
    if origin is not None and type(None) in args:
        if value is None:
            return None
        tp = next(a for a in args if a is not type(None))
        origin = getattr(tp, "__origin__", None)
        args = getattr(tp, "__args__", ())
    if value is None:
        _fail("value may not be null", path, lines)
    if dataclasses.is_dataclass(tp):
        return _block(tp, value, path, lines)
    if origin in (list, List):
        if not isinstance(value, list):
            _fail(f"expected a list, got {value!r}", path, lines)
        return [_convert(v, args[0], path, lines) for v in value]
    if tp is bool:
        if not isinstance(value, bool):
            _fail(f"expected true/false, got {value!r}", path, lines)
        return value
    if tp is int:
        return _num(value, path, lines, integer=True)
    if tp is float:
        return _num(value, path, lines)
    if tp is str:
        if not isinstance(value, str):
            _fail(f"expected a string, got {value!r}", path, lines)
        return value
    if tp is object:
        return value
    raise TypeError(f"unsupported field type {tp!r}")


def _block(cls, data, path, lines):
    if not isinstance(data, dict):
        _fail(f"expected a mapping, got {type(data).__name__}", path, lines)
    hints = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in hints:
            _fail(f"unknown key {key!r}", list(path) + [str(key)], lines)
    kwargs = {}
    for name, f in hints.items():
        if name in data:
            kwargs[name] = _convert(data[name], f.type, list(path) + [name], lines)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        _fail(str(exc), path, lines)


def _check(cond, msg, path, lines):
    if not cond:
        _fail(msg, path, lines)


def _validate(cfg, lines):
    p = cfg.plant
    kind = p.kind
    n, m, nz = _DIMS[kind]
    P = ["plant"]
    _check(p.dt > 0, "dt must be > 0", P + ["dt"], lines)
    if kind == "cartpole":
        for k in ("cart_mass", "pole_mass", "half_length", "gravity", "force_bound"):
            _check(getattr(p, k) > 0, f"{k} must be > 0", P + [k], lines)
        _check(0 < p.nominal_scale <= 1, "nominal_scale must lie in (0, 1]", P + ["nominal_scale"], lines)
        for k in ("init_lower", "init_upper"):
            _check(len(getattr(p, k)) == n, f"{k} needs {n} entries", P + [k], lines)
        _check(all(a <= b for a, b in zip(p.init_lower, p.init_upper)),
               "init_lower exceeds init_upper", P + ["init_lower"], lines)
    else:
        _check(p.mass > 0, "mass must be > 0", P + ["mass"], lines)
        _check(len(p.drag_coefficients) == 3 and min(p.drag_coefficients) >= 0,
               "drag_coefficients needs 3 nonnegative entries", P + ["drag_coefficients"], lines)
        _check(p.rate_bound > 0, "rate_bound must be > 0", P + ["rate_bound"], lines)
        _check(p.thrust_max is None or p.thrust_max > 0, "thrust_max must be > 0", P + ["thrust_max"], lines)
        _check(p.init_spread >= 0, "init_spread must be >= 0", P + ["init_spread"], lines)
        r = p.reference
        R = P + ["reference"]
        _check(r.kind in ("circle", "lemniscate"), f"unknown reference kind {r.kind!r}", R + ["kind"], lines)
        _check(r.radius > 0, "radius must be > 0", R + ["radius"], lines)
        _check(r.max_speed > 0, "max_speed must be > 0", R + ["max_speed"], lines)
        _check(r.ramp_time >= 0, "ramp_time must be >= 0", R + ["ramp_time"], lines)
        _check(len(r.center) == 3, "center needs 3 entries", R + ["center"], lines)

    nb = cfg.noise
    _check(nb.kind in ("none", "gaussian", "bounded_uniform"), f"unknown noise kind {nb.kind!r}",
           ["noise", "kind"], lines)
    _check(nb.scale >= 0, "scale must be >= 0", ["noise", "scale"], lines)

    c = cfg.controller
    C = ["controller"]
    _check(c.kind in CONTROLLER_KINDS, f"unknown controller kind {c.kind!r}", C + ["kind"], lines)
    for b in c.baselines:
        _check(b in CONTROLLER_KINDS and b != c.kind, f"bad baseline {b!r}", C + ["baselines"], lines)
    _check(len(set(c.baselines)) == len(c.baselines), "duplicate baselines", C + ["baselines"], lines)
    _check(c.features >= 1, "features must be >= 1", C + ["features"], lines)
    lr = c.learning_rate
    _check(lr.kind in ("fixed", "horizon_scaled"), f"unknown learning-rate kind {lr.kind!r}",
           C + ["learning_rate", "kind"], lines)
    _check(lr.value > 0, "learning rate must be > 0", C + ["learning_rate", "value"], lines)
    _check(lr.horizon is None or lr.horizon >= 1, "horizon must be >= 1", C + ["learning_rate", "horizon"], lines)
    _check(c.radius_bh > 0, "radius_bh must be > 0", C + ["radius_bh"], lines)
    _check(c.horizon >= 2, "horizon must be >= 2", C + ["horizon"], lines)
    _check(len(c.q_diag) == n and min(c.q_diag) >= 0, f"q_diag needs {n} nonnegative entries",
           C + ["q_diag"], lines)
    _check(len(c.r_diag) == m and min(c.r_diag) > 0, f"r_diag needs {m} positive entries",
           C + ["r_diag"], lines)
    _check(c.terminal_scale >= 0, "terminal_scale must be >= 0", C + ["terminal_scale"], lines)
    _check(c.bandwidth > 0, "bandwidth must be > 0", C + ["bandwidth"], lines)
    if c.feature_scales is not None:
        _check(len(c.feature_scales) == nz and min(c.feature_scales) > 0,
               f"feature_scales needs {nz} positive entries", C + ["feature_scales"], lines)
    s = c.solver
    S = C + ["solver"]
    _check(s.max_iter >= 1, "max_iter must be >= 1", S + ["max_iter"], lines)
    _check(s.rel_tol > 0, "rel_tol must be > 0", S + ["rel_tol"], lines)
    _check(0 < s.mu_init <= s.mu_max, "need 0 < mu_init <= mu_max", S + ["mu_init"], lines)
    _check(s.line_search_steps >= 1, "line_search_steps must be >= 1", S + ["line_search_steps"], lines)

    r = cfg.run
    _check(r.steps >= 1, "steps must be >= 1", ["run", "steps"], lines)
    _check(r.duration > 0, "duration must be > 0", ["run", "duration"], lines)
    _check(r.repeats >= 1, "repeats must be >= 1", ["run", "repeats"], lines)
    _check(r.seed >= 0, "seed must be >= 0", ["run", "seed"], lines)
    _check(r.workers >= 1, "workers must be >= 1", ["run", "workers"], lines)
    _check(bool(r.output_dir), "output_dir must be nonempty", ["run", "output_dir"], lines)

    if cfg.sweep is not None:
        sw = cfg.sweep
        _check(sw.features and min(sw.features) >= 1, "features needs positive entries",
               ["sweep", "features"], lines)
        _check(sw.learning_rates and min(sw.learning_rates) > 0, "learning_rates must be > 0",
               ["sweep", "learning_rates"], lines)


def _fill(cfg, lines):
    d = _PLANT_DEFAULTS[cfg.plant.kind]
    c = cfg.controller
    for k in ("features", "horizon", "q_diag", "r_diag", "terminal_scale", "bandwidth"):
        if getattr(c, k) is None:
            setattr(c, k, d[k])
    r = cfg.run
    dt = cfg.plant.dt
    if r.steps is None and r.duration is None:
        r.duration = d["duration"]
    if r.steps is None:
        r.steps = int(round(r.duration / dt))
    elif r.duration is None:
        r.duration = r.steps * dt
    elif r.steps != int(round(r.duration / dt)):
        _fail(f"steps={r.steps} disagrees with duration/dt={r.duration / dt:.6g}", ["run", "steps"], lines)


def parse_config(text):
    """Parse scenario YAML text into a fully defaulted ``ScenarioConfig``."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    lines = _Lines(text)
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    allowed = {f.name for f in dataclasses.fields(ScenarioConfig)}
    for key in data:
        if key not in allowed:
            _fail(f"unknown key {key!r}", [str(key)], lines)
    if "name" not in data or not isinstance(data["name"], str) or not data["name"]:
        _fail("a nonempty string 'name' is required", ["name"], lines)
    pdata = data.get("plant")
    if not isinstance(pdata, dict) or "kind" not in pdata:
        _fail("plant block with a 'kind' is required", ["plant"], lines)
    kind = pdata["kind"]
    if kind not in _PLANTS:
        _fail(f"unknown plant kind {kind!r}", ["plant", "kind"], lines)

    cfg = ScenarioConfig(
        name=data["name"],
        plant=_block(_PLANTS[kind], pdata, ["plant"], lines),
        noise=_block(NoiseBlock, data.get("noise") or {}, ["noise"], lines),
        controller=_block(ControllerBlock, data.get("controller") or {}, ["controller"], lines),
        run=_block(RunBlock, data.get("run") or {}, ["run"], lines),
        sweep=None if data.get("sweep") is None else _block(SweepBlock, data["sweep"], ["sweep"], lines),
    )
    _fill(cfg, lines)
    _validate(cfg, lines)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize(cfg):
    """YAML text with every field present, in declaration order."""
    return yaml.safe_dump(dataclasses.asdict(cfg), sort_keys=False, default_flow_style=None)
