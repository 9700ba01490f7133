"""Experiment drivers: single runs, table sweeps, the Ra sweep and pressure recovery."""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np

from ..fields import ClosureField, FieldModel, FieldModelSpec
from ..losses import LossConfig, forcing_residual, formulation_loss, pressure_loss
from ..problem import OseenCase, make_case, make_example2
from ..sampling import CollocationSet
from .checkpoint import save_checkpoint
from .config import ExperimentConfig, GridSpec
from .plots import plot_loss_histories, plot_ra_sweep
from .reporting import ErrorReport, error_report
from .training import OptimizerConfig, TrainingDiverged, train

log = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "formulation", "method", "N", "seed", "vel_err_l2_pct", "vel_err_h1_pct",
    "p_err_pct", "div_linf", "loss_final", "wall_s", "status",
)
RA_COLUMNS = ("formulation", "method", "Ra", "seed", "grad_u_l2", "loss_initial", "loss_final", "wall_s", "status")
PRESSURE_SEED_OFFSET = 1000


def family(formulation: str) -> str:
    """``"primal"``, ``"divfree"`` or ``"pr"`` (the unconstrained variant counts as ``"pr"``)."""
    return formulation.split("_", 1)[1].replace("_unconstrained", "")


def method(formulation: str) -> str:
    return "CPINN" if formulation.startswith("cpinn") else "PINN"


def build_model(formulation: str, arch: FieldModelSpec, pressure_arch: FieldModelSpec, seed: int) -> FieldModel:
    """Fresh model with the architecture each formulation expects."""
    fam = family(formulation)
    pspec = replace(pressure_arch, outputs="pressure", seed=seed + PRESSURE_SEED_OFFSET)
    if fam == "primal":
        return FieldModel.init(replace(arch, outputs="velocity_pressure", seed=seed))
    if fam == "divfree":
        return FieldModel.init(replace(arch, outputs="stream", seed=seed), "divergence_free", pspec)
    if formulation == "cpinn_pr_unconstrained":
        return FieldModel.init(replace(arch, outputs="velocity", seed=seed))
    return FieldModel.init(replace(arch, outputs="stream", seed=seed), "divergence_free")


@dataclass
class RunResult:
    formulation: str
    grid: GridSpec
    seed: int
    model: FieldModel | None
    pressure_model: FieldModel | None
    report: ErrorReport | None
    history: np.ndarray
    pressure_history: np.ndarray | None
    wall_s: float
    status: str = "ok"


def recover_pressure(velocity_model, case: OseenCase, colloc: CollocationSet,
                     pressure_spec: FieldModelSpec, opt: OptimizerConfig,
                     loss_cfg: LossConfig | None = None, n_eval: int = 101):
    """Fit a pressure network to ``grad q = f - (-nu Lap u + (beta.grad) u + sigma u)``.

    The network output is scaled by the RMS of that target, so training
    behaves the same whatever the forcing magnitude. After training the
    output is shifted to zero mean over the collocation sites. Returns
    ``(pressure_model, history, report)``; ``report`` is ``None`` when the
    case has no exact solution.
    """
    pts = colloc.interior
    fbar = forcing_residual(velocity_model, case, pts)
    scale = float(jnp.sqrt(jnp.mean(jnp.sum(fbar**2, axis=-1))))
    spec = replace(pressure_spec, outputs="pressure", output_scale=scale)
    model = FieldModel.init(spec)

    def loss_fn(m):
        return pressure_loss(m, fbar, pts, loss_cfg)[0]

    model, hist = train(model, loss_fn, opt)
    model = _recenter(model, pts)
    hist[-1] = float(loss_fn(model))
    report = None
    if case.exact is not None:
        report = error_report(velocity_model, case, model, n_eval=n_eval, loss_history=hist)
    return model, hist, report


def _recenter(model: FieldModel, points) -> FieldModel:
    """Shift the final bias so the discrete mean over ``points`` vanishes."""
    scale = model.spec.output_scale
    if scale == 0.0:
        return model
    mean = float(jnp.mean(jax.vmap(model.pressure)(jnp.asarray(points, dtype=jnp.float64))))
    layers = list(model.params["trunk"])
    w, b = layers[-1]
    layers[-1] = (w, b - mean / scale)
    return FieldModel(model.spec, {**model.params, "trunk": layers}, model.kind, model.pressure_spec)


def oracle_velocity(case: OseenCase) -> ClosureField:
    """The exact velocity as a field, for pressure recovery in oracle mode."""
    if case.exact is None:
        raise ValueError("oracle mode needs an exact solution")
    return ClosureField.from_exact(case.exact, with_pressure=False)


def run_single(cfg: ExperimentConfig, formulation: str, grid: GridSpec, seed: int,
               case: OseenCase | None = None, with_pressure: bool = True) -> RunResult:
    """Train one model; pressure-robust runs also recover a pressure unless ``with_pressure`` is off."""
    case = case or make_case(cfg.case, **cfg.case_params)
    colloc = grid.build()
    lcfg = cfg.loss_for(formulation)
    model = build_model(formulation, cfg.arch, cfg.pressure_arch, seed)

    def loss_fn(m):
        return formulation_loss(m, case, colloc, lcfg).total

    t0 = time.perf_counter()
    try:
        model, hist = train(model, loss_fn, cfg.optimizer)
        pmodel = phist = None
        if with_pressure and family(formulation) == "pr" and case.exact is not None:
            pcfg = lcfg if method(formulation) == "CPINN" else replace(lcfg, tau=2.0)
            pmodel, phist, _ = recover_pressure(
                model, case, colloc, replace(cfg.pressure_arch, seed=seed + PRESSURE_SEED_OFFSET),
                cfg.pressure_optimizer, pcfg, cfg.eval_grid,
            )
    except TrainingDiverged as exc:
        log.warning("%s N=%s seed=%s diverged: %s", formulation, grid.label, seed, exc)
        return RunResult(formulation, grid, seed, None, None, None, np.array([]), None,
                         time.perf_counter() - t0, f"diverged@{exc.iteration}")
    wall = time.perf_counter() - t0
    meta = {"config_hash": cfg.config_hash(), "seed": seed, "wall_s": wall,
            "formulation": formulation, "N": grid.label, "case": case.label}
    report = None
    if case.exact is not None:
        report = error_report(model, case, pmodel, n_eval=cfg.eval_grid, loss_history=hist, metadata=meta)
    return RunResult(formulation, grid, seed, model, pmodel, report, hist, phist, wall)


# file output

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows) -> Path:
    """Write rows atomically: a temporary file in the target directory is renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)
    return path


def write_history(path, history) -> Path:
    rows = [{"iteration": i, "loss": float(v)} for i, v in enumerate(history)]
    return write_csv(path, ("iteration", "loss"), rows)


def table_row(res: RunResult) -> dict:
    row = {
        "formulation": family(res.formulation), "method": method(res.formulation),
        "N": res.grid.label, "seed": res.seed, "wall_s": round(res.wall_s, 3), "status": res.status,
    }
    rep = res.report
    if rep is None:
        row.update({c: float("nan") for c in TABLE_COLUMNS[4:9]})
        if len(res.history):
            row["loss_final"] = float(res.history[-1])
        return row
    row.update({
        "vel_err_l2_pct": rep.velocity_err_pct,
        "vel_err_h1_pct": rep.velocity_err_h1_pct,
        "p_err_pct": rep.pressure_err_pct,
        "div_linf": rep.div_linf,
        "loss_final": rep.loss_final,
    })
    return row


def checkpoint_meta(cfg: ExperimentConfig, formulation: str, grid: GridSpec, seed: int) -> dict:
    return {
        "case": cfg.case, "case_params": cfg.case_params, "formulation": formulation,
        "grid": {k: v for k, v in vars(grid).items() if v is not None},
        "seed": seed, "config_hash": cfg.config_hash(),
    }


def checkpoint_path(cfg: ExperimentConfig, formulation: str, grid: GridSpec, seed: int) -> Path:
    return Path(cfg.outputs) / "models" / f"{formulation}_N{grid.label}_seed{seed}.ckpt"


def run_table_experiment(cfg: ExperimentConfig, write: bool = True, save_models: bool = False) -> list[dict]:
    """Train every (grid, formulation, seed) combination and collect one row per run.

    With ``save_models`` each trained model (and a recovered pressure network,
    if any) is checkpointed under ``outputs/models``.
    """
    case = make_case(cfg.case, **cfg.case_params)
    if case.exact is None:
        raise ValueError("table experiments need a case with an exact solution")
    rows, curves = [], {}
    out = Path(cfg.outputs)
    for grid in cfg.grids:
        for form in cfg.formulations:
            for seed in cfg.seeds:
                res = run_single(cfg, form, grid, seed, case)
                row = table_row(res)
                rows.append(row)
                log.info("%s", row)
                if write and len(res.history):
                    write_history(out / "histories" / f"{form}_N{grid.label}_seed{seed}.csv", res.history)
                    if res.pressure_history is not None:
                        write_history(out / "histories" / f"{form}_N{grid.label}_seed{seed}_pressure.csv",
                                      res.pressure_history)
                    curves.setdefault(family(form), {}).setdefault(method(form), {})[
                        f"N={grid.label} seed={seed}"] = res.history
                if save_models and res.model is not None:
                    path = checkpoint_path(cfg, form, grid, seed)
                    meta = checkpoint_meta(cfg, form, grid, seed)
                    save_checkpoint(path, res.model, meta)
                    if res.pressure_model is not None:
                        save_checkpoint(path.with_name(path.stem + "_pressure.ckpt"), res.pressure_model,
                                        {**meta, "role": "pressure"})
        if write:
            write_csv(out / "table.csv", TABLE_COLUMNS, rows)
    if write:
        for fam, panels in curves.items():
            plot_loss_histories(panels, out / f"loss_{fam}.png", title=f"{cfg.case}: {fam} formulation")
    return rows


def run_ra_sweep(cfg: ExperimentConfig, write: bool = True) -> list[dict]:
    """No-flow benchmark over ``cfg.ra_list``: velocity gradient norm per (formulation, Ra, seed)."""
    rows = []
    out = Path(cfg.outputs)
    for grid in cfg.grids:
        for form in cfg.formulations:
            for ra in cfg.ra_list:
                case = make_example2(ra)
                for seed in cfg.seeds:
                    colloc = grid.build()
                    lcfg = cfg.loss_for(form)
                    init = build_model(form, cfg.arch, cfg.pressure_arch, seed)
                    loss0 = float(formulation_loss(init, case, colloc, lcfg).total)
                    res = run_single(cfg, form, grid, seed, case, with_pressure=False)
                    rows.append({
                        "formulation": form, "method": method(form), "Ra": ra, "seed": seed,
                        "grad_u_l2": res.report.grad_u_l2 if res.report else float("nan"),
                        "loss_initial": loss0,
                        "loss_final": float(res.history[-1]) if len(res.history) else float("nan"),
                        "wall_s": round(res.wall_s, 3), "status": res.status,
                    })
                    log.info("%s", rows[-1])
                    if write and len(res.history):
                        write_history(out / "histories" / f"ra_{form}_Ra{ra:g}_seed{seed}.csv", res.history)
            if write:
                write_csv(out / "ra_sweep.csv", RA_COLUMNS, rows)
    if write:
        plot_ra_sweep(rows, out / "ra_sweep.png")
    return rows
