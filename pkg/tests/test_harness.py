import csv
import json
import struct
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
import pytest
import yaml

from oseen_cpinn.fields import ClosureField, FieldModel, FieldModelSpec
from oseen_cpinn.harness.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from oseen_cpinn.harness.cli import main
from oseen_cpinn.harness.config import GridSpec, config_from_dict, default_output_root, load_config
from oseen_cpinn.harness.experiments import (
    RA_COLUMNS,
    TABLE_COLUMNS,
    _recenter,
    build_model,
    family,
    method,
    oracle_velocity,
    recover_pressure,
    run_ra_sweep,
    run_single,
    run_table_experiment,
    write_csv,
)
from oseen_cpinn.harness.reporting import error_report
from oseen_cpinn.harness.training import OptimizerConfig, TrainingDiverged, train
from oseen_cpinn.losses import FORMULATIONS, LossConfig, formulation_loss
from oseen_cpinn.problem import ExactSolution, OseenCase, OseenCoefficients, make_example2
from oseen_cpinn.sampling import tensor_grid, uniform_grid

TINY = {
    "case": {"name": "example1"},
    "grid": {"N": [4, 5]},
    "formulations": ["pinn_primal", "cpinn_primal"],
    "arch": {"width": 4, "depth": 1},
    "pressure_arch": {"width": 4, "depth": 1},
    "optimizer": {"iterations": 20, "learning_rate": 1e-2},
    "pressure_optimizer": {"iterations": 10},
    "seeds": [0, 1],
    "eval_grid": 11,
}


# training

def test_quadratic_toy_converges():
    target = jnp.array([0.3, -1.2, 2.0])
    cfg = OptimizerConfig(learning_rate=5e-2, iterations=2000, schedule="cosine", final_lr_ratio=1e-3)
    theta, hist = train(jnp.zeros(3), lambda t: jnp.sum((t - target) ** 2), cfg)
    assert np.abs(np.asarray(theta) - np.asarray(target)).max() <= 1e-4
    assert len(hist) == 2001 and hist[-1] < hist[0]


def test_training_is_deterministic(ex1):
    colloc = tensor_grid(5)
    cfg = config_from_dict(TINY)

    def once():
        m = build_model("cpinn_primal", cfg.arch, cfg.pressure_arch, seed=3)
        lc = LossConfig("cpinn_primal")
        return train(m, lambda mm: formulation_loss(mm, ex1, colloc, lc).total, OptimizerConfig(iterations=30))

    (m1, h1), (m2, h2) = once(), once()
    assert np.array_equal(h1, h2) and np.array_equal(m1.flat(), m2.flat())


def test_divergence_reports_iteration():
    # sgd on -t moves t by exactly one per step; the loss turns NaN once t passes 5.5
    cfg = OptimizerConfig("sgd", learning_rate=1.0, iterations=50)
    with pytest.raises(TrainingDiverged) as exc:
        train(jnp.zeros(()), lambda t: jnp.where(t > 5.5, jnp.nan, 0.0) - t, cfg, chunk=4)
    assert exc.value.iteration == 6


def test_no_flow_curl_loss_trains_to_zero():
    # the zero velocity is an exact global minimizer of the curl loss for the no-flow case
    case = make_example2(1.0)
    colloc = tensor_grid(10)
    lc = LossConfig("cpinn_pr")
    m = FieldModel.init(FieldModelSpec(8, 1, outputs="stream", seed=0), "divergence_free")
    opt = OptimizerConfig(learning_rate=1e-2, iterations=5000, schedule="cosine", final_lr_ratio=1e-3)
    _, hist = train(m, lambda mm: formulation_loss(mm, case, colloc, lc).total, opt)
    assert hist[-1] <= 1e-6


def test_optimizer_config_validation():
    for bad in ({"iterations": 0}, {"learning_rate": 0.0}, {"name": "lbfgsb"}, {"schedule": "step"}):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


# error reports

def test_error_report_exact_solution(ex1):
    rep = error_report(ClosureField.from_exact(ex1.exact), ex1, n_eval=31, loss_history=[3.0, 1.0])
    assert rep.velocity_err_pct <= 1e-10 and rep.velocity_err_h1_pct <= 1e-10
    assert rep.pressure_err_pct <= 1e-10
    assert rep.div_linf <= 1e-12
    assert rep.loss_final == rep.loss_history[-1] == 1.0
    assert rep.velocity_metric == "rel_l2_pct"


def test_error_report_zero_model_example2(ex2):
    rep = error_report(ClosureField.zero(), ex2, n_eval=21)
    assert rep.velocity_metric == "grad_l2_abs"
    assert rep.velocity_err_pct == 0.0 and rep.grad_u_l2 == 0.0


def test_error_report_needs_exact(ex1):
    bare = OseenCase(ex1.coeffs, ex1.forcing, ex1.boundary_data, None)
    with pytest.raises(ValueError):
        error_report(ClosureField.zero(), bare)


def test_error_report_permutation_invariant(ex1):
    m = build_model("cpinn_primal", FieldModelSpec(6, 2), FieldModelSpec(outputs="pressure"), 0)
    pts = uniform_grid(25)
    perm = np.random.default_rng(0).permutation(len(pts))
    a = error_report(m, ex1, points=pts)
    b = error_report(m, ex1, points=pts[perm])
    for key in ("velocity_err_pct", "velocity_err_h1_pct", "pressure_err_pct", "div_linf", "grad_u_l2"):
        assert getattr(b, key) == pytest.approx(getattr(a, key), rel=1e-12)


@pytest.mark.parametrize("c", [1.0, -250.0, 1e-3])
def test_pressure_error_ignores_constant_shift(ex1, c):
    p = ClosureField(pressure_fn=lambda x: jnp.sin(3 * x[0]) * x[1] ** 2)
    pc = ClosureField(pressure_fn=lambda x: jnp.sin(3 * x[0]) * x[1] ** 2 + c)
    u = ClosureField.from_exact(ex1.exact, with_pressure=False)
    a = error_report(u, ex1, p, n_eval=31).pressure_err_pct
    b = error_report(u, ex1, pc, n_eval=31).pressure_err_pct
    assert b == pytest.approx(a, rel=1e-10)


# pressure recovery

def test_recenter_zeroes_the_discrete_mean():
    spec = FieldModelSpec(5, 2, outputs="pressure", output_scale=3.0)
    m = FieldModel.init(spec)
    pts = tensor_grid(7).interior
    r = _recenter(m, pts)
    vals = np.asarray([float(r.pressure(jnp.asarray(x))) for x in pts])
    assert abs(vals.mean()) <= 1e-12
    x = jnp.array([0.2, 0.9])
    np.testing.assert_allclose(np.asarray(jax.grad(r.pressure)(x)), np.asarray(jax.grad(m.pressure)(x)), rtol=1e-14)


def test_recovery_of_zero_target():
    z = lambda x: jnp.zeros(2)  # noqa: E731
    ex = ExactSolution(u=z, p=lambda x: 0.0 * x[0], u_jac=lambda x: jnp.zeros((2, 2)), u_lap=z, p_grad=z)
    case = OseenCase(OseenCoefficients.constant(1.0, (1.0, 1.0), 1.0), z, z, ex)
    pm, hist, _ = recover_pressure(oracle_velocity(case), case, tensor_grid(6), FieldModelSpec(4, 1, outputs="pressure"),
                                   OptimizerConfig(iterations=5))
    vals = np.asarray([float(pm.pressure(jnp.asarray(x))) for x in uniform_grid(11)])
    assert np.abs(vals - vals.mean()).max() <= 1e-6
    assert hist[-1] == 0.0


def test_oracle_mode_short_run_reduces_error():
    case = make_example2(1e3)
    colloc = tensor_grid(10)
    spec = FieldModelSpec(16, 2, outputs="pressure")
    _, hist, rep = recover_pressure(oracle_velocity(case), case, colloc, spec, OptimizerConfig(iterations=300),
                                    n_eval=21)
    assert hist[-1] < hist[0]
    assert rep.pressure_err_pct < 50.0


# checkpoints

@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_checkpoint_round_trip(tmp_path, formulation):
    m = build_model(formulation, FieldModelSpec(5, 2), FieldModelSpec(3, 1, outputs="pressure"), seed=4)
    path = save_checkpoint(tmp_path / "m.ckpt", m, {"formulation": formulation})
    m2, meta = load_checkpoint(path)
    assert meta == {"formulation": formulation}
    assert m2.kind == m.kind and m2.spec == m.spec and m2.pressure_spec == m.pressure_spec
    assert np.array_equal(m2.flat(), m.flat())
    x = jnp.array([0.4, 0.1])
    assert np.array_equal(np.asarray(m2.velocity(x)), np.asarray(m.velocity(x)))


def test_checkpoint_layout(tmp_path):
    m = FieldModel.init(FieldModelSpec(3, 1, outputs="velocity"))
    raw = save_checkpoint(tmp_path / "a.ckpt", m).read_bytes()
    assert raw[:8] == MAGIC
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n])
    assert header["n_params"] == m.n_params == (len(raw) - 12 - n) // 8
    theta = np.frombuffer(raw[12 + n:], dtype="<f8")
    w0 = np.asarray(m.params["trunk"][0][0])
    np.testing.assert_array_equal(theta[: w0.size], w0.ravel())


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")
    good = save_checkpoint(tmp_path / "g.ckpt", FieldModel.init(FieldModelSpec(2, 1)))
    (tmp_path / "t").write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "t")


# configuration

def test_config_from_yaml(tmp_path):
    text = """
case: {name: example2, params: {Ra: 100}}
grid: {k: 2, r: 3}
formulations: [cpinn_pr]
loss: {gamma: 1.5, tau: 1.8, weights: {boundary_l2: 10}}
arch: {width: 8, depth: 2, activation: sin}
optimizer: {iterations: 50, schedule: cosine}
seeds: [7]
outputs: OUTDIR
"""
    (tmp_path / "c.yaml").write_text(text.replace("OUTDIR", str(tmp_path / "o")))
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.case == "example2" and cfg.case_params == {"Ra": 100.0}
    assert cfg.grids == (GridSpec(k=2, r=3),) and cfg.grids[0].label == 9
    assert cfg.grids[0].build().m_interior == 49
    assert cfg.loss_for("cpinn_pr").gamma == 1.5 and cfg.loss.tau == 1.8
    assert cfg.loss.weight("boundary_l2") == 10.0
    assert cfg.arch.activation == "sin" and cfg.optimizer.iterations == 50
    assert cfg.seeds == (7,) and cfg.outputs == tmp_path / "o"


def test_config_validation():
    with pytest.raises(ValueError, match="unknown configuration keys"):
        config_from_dict({"learning_rate": 1})
    with pytest.raises(ValueError):
        config_from_dict({"seeds": []})
    with pytest.raises(ValueError):
        config_from_dict({"formulations": ["galerkin"]})
    with pytest.raises(ValueError):
        config_from_dict({"optimizer": {"iterations": 0}})


def test_config_hash_ignores_outputs():
    a = config_from_dict({**TINY, "outputs": "x"})
    b = config_from_dict({**TINY, "outputs": "y"})
    c = config_from_dict({**TINY, "seeds": [5]})
    assert a.config_hash() == b.config_hash() != c.config_hash()


def test_output_root_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("OSEEN_CPINN_OUT", str(tmp_path))
    assert default_output_root() == tmp_path
    assert config_from_dict({}).outputs == tmp_path


def test_grid_spec_independent_counts():
    g = GridSpec(n_interior=6, n_boundary=9)
    assert g.build().m_interior == 16 and g.build().m_boundary == 32
    with pytest.raises(ValueError):
        GridSpec().build()


def test_family_and_method_names():
    assert [family(f) for f in FORMULATIONS] == ["primal", "primal", "divfree", "divfree", "pr", "pr", "pr"]
    assert method("cpinn_pr_unconstrained") == "CPINN" and method("pinn_divfree") == "PINN"


# experiment drivers and files

def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_table_experiment_rows_and_files(tmp_path):
    cfg = config_from_dict({**TINY, "outputs": str(tmp_path)})
    rows = run_table_experiment(cfg, save_models=True)
    assert len(rows) == 2 * 2 * 2
    table = _read(tmp_path / "table.csv")
    assert tuple(table[0]) == TABLE_COLUMNS
    assert len(table) == 9
    assert (tmp_path / "loss_primal.png").stat().st_size > 0
    hist = _read(tmp_path / "histories" / "cpinn_primal_N5_seed1.csv")
    assert hist[0] == ["iteration", "loss"] and len(hist) == 1 + 21
    for row in rows:
        assert row["status"] == "ok" and row["vel_err_l2_pct"] >= 0 and row["div_linf"] >= 0
    m, meta = load_checkpoint(tmp_path / "models" / "pinn_primal_N4_seed0.ckpt")
    assert meta["formulation"] == "pinn_primal" and meta["grid"] == {"N": 4}


@pytest.mark.parametrize("formulation", FORMULATIONS)
def test_final_loss_not_above_initial(formulation):
    cfg = config_from_dict({**TINY, "grid": {"N": 5}, "seeds": [0], "optimizer": {"iterations": 60}})
    res = run_single(cfg, formulation, cfg.grids[0], 0)
    assert res.status == "ok"
    assert res.history[-1] <= res.history[0]
    if family(formulation) == "pr":
        assert res.pressure_model is not None and res.report.pressure_err_pct is not None


def test_csv_bytes_deterministic(tmp_path):
    def run(out):
        cfg = config_from_dict({**TINY, "grid": {"N": 4}, "seeds": [0], "outputs": str(out)})
        run_table_experiment(cfg)
        rows = _read(out / "table.csv")
        wall = rows[0].index("wall_s")
        return [[v for i, v in enumerate(r) if i != wall] for r in rows], \
            (out / "histories" / "pinn_primal_N4_seed0.csv").read_bytes()

    a, b = run(tmp_path / "a"), run(tmp_path / "b")
    assert a == b


def test_write_csv_format(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b", "c"), [{"a": 0.1, "b": None, "c": "z"}])
    assert path.read_bytes() == b"a,b,c\n0.1,,z\n"
    assert not list(tmp_path.glob(".tmp-*"))


def test_ra_sweep_rows(tmp_path):
    cfg = config_from_dict({**TINY, "case": {"name": "example2"}, "grid": {"N": 5},
                            "formulations": ["pinn_primal", "cpinn_pr"], "seeds": [0],
                            "ra_list": [1, 100], "outputs": str(tmp_path)})
    rows = run_ra_sweep(cfg)
    assert len(rows) == 4
    assert tuple(_read(tmp_path / "ra_sweep.csv")[0]) == RA_COLUMNS
    assert (tmp_path / "ra_sweep.png").exists()
    pinn = {r["Ra"]: r for r in rows if r["formulation"] == "pinn_primal"}
    pr = {r["Ra"]: r for r in rows if r["formulation"] == "cpinn_pr"}
    # initial loss: Ra-independent for the curl loss, growing like Ra^2 for the PINN loss
    assert pr[1.0]["loss_initial"] == pytest.approx(pr[100.0]["loss_initial"], rel=1e-12)
    assert pinn[100.0]["loss_initial"] > 100 * pinn[1.0]["loss_initial"]
    assert pr[1.0]["grad_u_l2"] == pytest.approx(pr[100.0]["grad_u_l2"], rel=1e-8)


# command line

def test_cli_rate_study(tmp_path, capsys):
    assert main(["rate-study", "--k-max", "4", "--k-min", "2", "--degree", "2", "--out-dir", str(tmp_path)]) == 0
    rows = _read(tmp_path / "rate_study_r2.csv")
    assert rows[0] == ["k", "m", "error", "fitted_slope"] and len(rows) == 4
    assert "fitted slope" in capsys.readouterr().out


def test_cli_run_train_and_recover(tmp_path):
    cfg_path = tmp_path / "tiny.yaml"
    cfg_path.write_text(yaml.safe_dump({**TINY, "grid": {"N": 4}, "formulations": ["cpinn_pr"],
                                        "case": {"name": "example1"}}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--seed", "1", "--out-dir", str(out), "--save-models"]) == 0
    rows = _read(out / "table.csv")
    assert len(rows) == 2 and rows[1][TABLE_COLUMNS.index("seed")] == "1"
    ckpt = out / "models" / "cpinn_pr_N4_seed1.ckpt"
    assert ckpt.exists() and (out / "models" / "cpinn_pr_N4_seed1_pressure.ckpt").exists()

    assert main(["train", "--config", str(cfg_path), "--out-dir", str(out), "--output", str(tmp_path / "v.ckpt")]) == 0
    assert main(["recover-pressure", "--from", str(tmp_path / "v.ckpt"), "--config", str(cfg_path),
                 "--out-dir", str(out), "--iterations", "5"]) == 0
    rec = _read(out / "pressure_recovery.csv")
    assert rec[0] == ["formulation", "N", "seed", "p_err_pct", "loss_final"] and float(rec[1][3]) >= 0


def test_cli_ra_sweep(tmp_path):
    assert main(["ra-sweep", "--out-dir", str(tmp_path), "--seed", "0", "--config",
                 str(_write_cfg(tmp_path, {**TINY, "case": {"name": "example2"}, "grid": {"N": 4},
                                           "formulations": ["pinn_primal"], "ra_list": [1, 10]}))]) == 0
    assert len(_read(tmp_path / "ra_sweep.csv")) == 3


def _write_cfg(tmp_path, raw) -> Path:
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def test_cli_rejects_missing_config(capsys):
    with pytest.raises(SystemExit):
        main(["run"])


def test_build_model_architectures():
    arch, parch = FieldModelSpec(4, 1), FieldModelSpec(3, 1, outputs="pressure")
    primal = build_model("pinn_primal", arch, parch, 0)
    assert primal.kind == "generic" and primal.spec.outputs == "velocity_pressure"
    df = build_model("cpinn_divfree", arch, parch, 0)
    assert df.kind == "divergence_free" and df.has_pressure
    pr = build_model("cpinn_pr", arch, parch, 0)
    assert pr.kind == "divergence_free" and not pr.has_pressure
    unc = build_model("cpinn_pr_unconstrained", arch, parch, 0)
    assert unc.kind == "generic" and unc.spec.outputs == "velocity"
