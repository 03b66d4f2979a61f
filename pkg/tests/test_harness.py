import csv
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ssimpc.controller import run_episode
from ssimpc.harness import ConfigError, emit_plots, load_config, parse_config, run_regret, run_scenario, serialize
from ssimpc.harness import cli, runner
from ssimpc.harness.plots import svg_line_plot
from ssimpc.harness.runner import build_episode, episode_header, write_atomic

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

MINI = """
name: mini
plant: {kind: cartpole}
controller: {kind: ssi_mpc, baselines: [nominal_mpc], features: 20}
run: {steps: 12, repeats: 2}
sweep: {features: [10, 20], learning_rates: [0.1, 1.0]}
"""


def test_minimal_config_is_fully_defaulted():
    cfg = parse_config("name: x\nplant: {kind: cartpole}\n")
    c = cfg.controller
    assert c.kind == "ssi_mpc" and c.features == 75 and c.horizon == 20
    assert c.learning_rate.kind == "fixed" and c.learning_rate.value == 0.25
    assert c.q_diag == [5.0, 0.1, 5.0, 0.1] and c.r_diag == [0.1]
    assert cfg.run.duration == 6.0 and cfg.run.steps == 90
    text = serialize(cfg)
    for key in ("radius_bh", "bandwidth", "q_diag", "steps", "nominal_scale"):
        assert key in text


def test_mismatch_cartpole_scenario():
    cfg = load_config(SCENARIOS / "cartpole_mismatch.yaml")
    assert cfg.controller.features == 75
    assert cfg.controller.learning_rate.value == 0.25
    assert cfg.controller.horizon == 20
    assert cfg.plant.dt == pytest.approx(1 / 15)
    assert cfg.plant.nominal_scale == 0.75
    assert cfg.run.repeats == 10


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_scenarios_round_trip(path):
    cfg = load_config(path)
    assert parse_config(serialize(cfg)) == cfg
    assert serialize(parse_config(serialize(cfg))) == serialize(cfg)


def test_unknown_key_named_with_line():
    with pytest.raises(ConfigError, match=r"learning_rte.*line 5"):
        parse_config("name: a\nplant:\n  kind: cartpole\ncontroller:\n  learning_rte: 0.1\n")
    with pytest.raises(ConfigError, match="colour"):
        parse_config("name: a\nplant: {kind: cartpole}\ncolour: red\n")
    with pytest.raises(ConfigError, match="drag"):
        parse_config("name: a\nplant: {kind: cartpole, drag: true}\n")


@pytest.mark.parametrize(
    "text, match",
    [
        ("controller: {learning_rate: {value: 0.0}}", "learning rate"),
        ("controller: {learning_rate: {value: -1}}", "learning rate"),
        ("controller: {features: 0}", "features"),
        ("controller: {horizon: 1}", "horizon"),
        ("controller: {r_diag: [0.0]}", "r_diag"),
        ("controller: {q_diag: [1.0, 1.0]}", "q_diag"),
        ("controller: {kind: gp_mpc}", "controller kind"),
        ("run: {repeats: 0}", "repeats"),
        ("run: {steps: 10, duration: 6.0}", "disagrees"),
        ("noise: {kind: gaussian, scale: -0.1}", "scale"),
        ("sweep: {features: [50], learning_rates: [0.0]}", "learning_rates"),
        ("controller: {features: many}", "number"),
    ],
)
def test_range_violations(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config("name: a\nplant: {kind: cartpole}\n" + text + "\n")


def test_structural_errors():
    for text in ("- 1\n- 2\n", "name: a\n", "name: a\nplant: {kind: boat}\n", "plant: {kind: cartpole}\n", "a: [1,\n"):
        with pytest.raises(ConfigError):
            parse_config(text)


def test_duration_to_steps_and_scientific_floats():
    cfg = parse_config("name: a\nplant: {kind: quadrotor}\nrun: {duration: 1.0}\n"
                       "controller: {solver: {rel_tol: 1e-7}}\n")
    assert cfg.run.steps == 50
    assert cfg.controller.solver.rel_tol == 1e-7
    assert cfg.controller.horizon == 10 and len(cfg.controller.q_diag) == 10


@given(
    M=st.integers(1, 2000),
    eta=st.floats(1e-6, 100.0, allow_nan=False),
    N=st.integers(2, 40),
    q=st.lists(st.floats(0, 100), min_size=4, max_size=4),
    r=st.floats(1e-3, 10),
    steps=st.integers(1, 10_000),
    seed=st.integers(0, 2**31),
    scale=st.floats(0.05, 1.0),
    kind=st.sampled_from(["fixed", "horizon_scaled"]),
)
def test_round_trip_property(M, eta, N, q, r, steps, seed, scale, kind):
    text = (
        "name: prop\n"
        f"plant: {{kind: cartpole, nominal_scale: {scale!r}}}\n"
        f"controller: {{features: {M}, horizon: {N}, q_diag: {q!r}, r_diag: [{r!r}], "
        f"learning_rate: {{kind: {kind}, value: {eta!r}}}}}\n"
        f"run: {{steps: {steps}, seed: {seed}}}\n"
    )
    cfg = parse_config(text)
    assert parse_config(serialize(cfg)) == cfg


def _mini(tmp_path, text=MINI):
    cfg = parse_config(text)
    cfg.run.output_dir = str(tmp_path / "out")
    return cfg


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_scenario_outputs(tmp_path):
    cfg = _mini(tmp_path)
    art = run_scenario(cfg)
    assert art.failures == 0
    assert len(art.episode_csvs) == 4  # (ssi + nominal) x 2 repeats
    for p in art.episode_csvs:
        rows = _read(p)
        assert rows[0] == episode_header(4, 1)
        assert rows[0] == (["t", "x0", "x1", "x2", "x3", "u0", "residual0", "residual1", "residual2",
                            "residual3", "l_t", "stage_cost", "V_t", "solver_iters", "converged"])
        assert len(rows) - 1 == 12
    digest = json.loads(art.digest_path.read_text())
    assert {g["controller"] for g in digest["groups"]} == {"ssi_mpc", "nominal_mpc"}
    assert not list(Path(art.out_dir).rglob("*.tmp"))


def test_episode_csv_matches_log(tmp_path):
    cfg = _mini(tmp_path)
    art = run_scenario(cfg)
    seed = runner.derive_seed(cfg.run.seed, cfg.name, 1)
    lg = run_episode(build_episode(cfg, "ssi_mpc", 20, 0.25, seed))
    rows = _read(Path(art.out_dir) / "episodes" / "ssi_mpc_M20_eta0.25_r1.csv")[1:]
    data = np.array(rows, float)
    assert data.shape[0] == len(lg)
    assert np.array_equal(data[:, 1:5], lg.x)
    assert np.array_equal(data[:, 10], lg.loss)
    assert np.array_equal(data[:, 13], lg.solver_iters)
    summary = _read(art.summary_csv)
    row = next(r for r in summary[1:] if r[0] == "ssi_mpc" and r[3] == "1")
    assert float(row[7]) == pytest.approx(lg.cumulative_cost, rel=1e-9)


def test_reruns_are_byte_identical(tmp_path):
    cfg = _mini(tmp_path)
    a = run_scenario(cfg, out_dir=tmp_path / "a", sweep=True)
    b = run_scenario(cfg, out_dir=tmp_path / "b", sweep=True, workers=2)
    emit_plots(a.out_dir)
    emit_plots(b.out_dir)
    files_a = sorted(p.relative_to(a.out_dir) for p in a.out_dir.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b.out_dir) for p in b.out_dir.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (a.out_dir / rel).read_bytes() == (b.out_dir / rel).read_bytes(), rel


def test_sweep_summary_rows(tmp_path):
    cfg = _mini(tmp_path)
    art = run_scenario(cfg, sweep=True)
    rows = _read(art.summary_csv)[1:]
    ssi = [(r[1], r[2], r[3]) for r in rows if r[0] == "ssi_mpc"]
    assert len(ssi) == len(set(ssi)) == 2 * 2 * 2
    # the same repeat uses the same seed at every grid point
    seeds = {(r[3], r[4]) for r in rows}
    assert len(seeds) == 2


def test_sweep_requires_block(tmp_path):
    cfg = _mini(tmp_path, "name: m\nplant: {kind: cartpole}\nrun: {steps: 3}\n")
    with pytest.raises(ValueError):
        run_scenario(cfg, sweep=True)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = _mini(tmp_path)
    with pytest.raises(OSError):
        run_scenario(cfg, out_dir=blocker / "sub")


def test_write_atomic_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "a.csv"
    write_atomic(target, "old\n")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(runner.os, "replace", boom)
    with pytest.raises(OSError):
        write_atomic(target, "new\n")
    assert target.read_text() == "old\n"
    assert list(tmp_path.iterdir()) == [target]


def test_plots(tmp_path):
    cfg = _mini(tmp_path)
    art = run_scenario(cfg, sweep=True)
    paths = emit_plots(art.out_dir, ["error", "prediction", "sweep", "regret"])
    names = sorted(p.name for p in paths)
    assert names == ["error.svg", "prediction.svg", "sweep.svg"]
    for p in paths:
        text = p.read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    digest = json.loads(art.digest_path.read_text())
    assert any("regret" in n for n in digest["notes"])
    with pytest.raises(ValueError):
        emit_plots(art.out_dir, ["pie"])


def test_regret_run_and_plot(tmp_path):
    cfg = _mini(tmp_path, "name: r\nplant: {kind: cartpole}\ncontroller: {features: 10}\nrun: {steps: 40, repeats: 2}\n")
    d = run_regret(cfg, [10, 20, 40], c_value=10.0)
    assert d["comparator"] == "clairvoyant-mpc proxy"
    assert d["learning_rate"] == pytest.approx(10.0 / np.sqrt(40))
    assert len(d["exponents"]) == 2
    rows = _read(Path(cfg.run.output_dir) / "regret.csv")
    assert rows[0][:4] == ["repeat", "seed", "horizon", "regret"] and len(rows) == 7
    svg = svg_line_plot([("a", [10, 20, 40], [1.0, 1.5, 2.0]), ("fit", [10, 20, 40], [1.0, 1.4, 2.0], "dash")],
                        "t", "x", "y", logx=True, logy=True, annotation="p = 0.5")
    assert "stroke-dasharray" in svg and "p = 0.5" in svg


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    good = tmp_path / "s.yaml"
    good.write_text(MINI + f"\n")
    out = tmp_path / "cli"
    assert cli.main(["run", "--scenario", str(good), "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()
    assert cli.main(["plot", "--artifacts", str(out), "--kinds", "error"]) == 0
    assert (out / "plots" / "error.svg").exists()

    bad = tmp_path / "bad.yaml"
    bad.write_text("name: a\nplant: {kind: cartpole}\ncontroller: {learning_rte: 1}\n")
    assert cli.main(["run", "--scenario", str(bad)]) == 1
    assert "learning_rte" in capsys.readouterr().err
    nosweep = tmp_path / "nosweep.yaml"
    nosweep.write_text("name: a\nplant: {kind: cartpole}\n")
    assert cli.main(["sweep", "--scenario", str(nosweep)]) == 1

    real = runner.run_episode

    def failing(cfg):
        lg = real(cfg)
        lg.failed = True
        return lg

    monkeypatch.setattr(runner, "run_episode", failing)
    assert cli.main(["run", "--scenario", str(good), "--out", str(tmp_path / "f")]) == 2
    digest = json.loads((tmp_path / "f" / "digest.json").read_text())
    assert digest["failures"] == 4
