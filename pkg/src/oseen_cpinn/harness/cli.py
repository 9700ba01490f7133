"""Command line entry point: ``oseen-cpinn <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..problem import make_case
from ..recovery_baseline import rate_study
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, GridSpec, config_from_dict, default_output_root, load_config
from .experiments import (
    RA_COLUMNS,
    PRESSURE_SEED_OFFSET,
    TABLE_COLUMNS,
    checkpoint_meta,
    checkpoint_path,
    recover_pressure,
    run_ra_sweep,
    run_single,
    run_table_experiment,
    write_csv,
)
from .training import OptimizerConfig


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.out_dir:
        cfg = replace(cfg, outputs=Path(args.out_dir))
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    rows = run_table_experiment(cfg, save_models=args.save_models)
    print(f"wrote {len(rows)} rows to {Path(cfg.outputs) / 'table.csv'}")
    if args.save_models:
        print(f"checkpoints in {Path(cfg.outputs) / 'models'}")
    return 0


def cmd_train(args) -> int:
    """Train one model and write its checkpoint (input for ``recover-pressure``)."""
    cfg = _config(args)
    form = args.formulation or cfg.formulations[0]
    grid = cfg.grids[0]
    seed = cfg.seeds[0]
    res = run_single(cfg, form, grid, seed)
    if res.model is None:
        print(f"training failed: {res.status}", file=sys.stderr)
        return 1
    path = Path(args.output) if args.output else checkpoint_path(cfg, form, grid, seed)
    save_checkpoint(path, res.model, checkpoint_meta(cfg, form, grid, seed))
    print(f"saved {path}")
    if res.report is not None:
        print(f"velocity error {res.report.velocity_err_pct:.4g} ({res.report.velocity_metric}), "
              f"div_linf {res.report.div_linf:.3e}")
    return 0


def cmd_ra_sweep(args) -> int:
    cfg = _config(args)
    if cfg.formulations == ("pinn_primal", "cpinn_primal") and not args.config:
        cfg = replace(cfg, formulations=("pinn_primal", "cpinn_pr"))
    rows = run_ra_sweep(cfg)
    print(f"wrote {len(rows)} rows to {Path(cfg.outputs) / 'ra_sweep.csv'}")
    return 0


def cmd_rate_study(args) -> int:
    def f(p):
        return np.sin(2 * np.pi * p[:, 0]) * np.sin(2 * np.pi * p[:, 1])

    def grad_f(p):
        a, b = 2 * np.pi * p[:, 0], 2 * np.pi * p[:, 1]
        return 2 * np.pi * np.column_stack([np.cos(a) * np.sin(b), np.sin(a) * np.cos(b)])

    rows, slope = rate_study(f, grad_f, args.degree, range(args.k_min, args.k_max + 1))
    for row in rows:
        row["fitted_slope"] = slope
    out = Path(args.out_dir) if args.out_dir else default_output_root()
    path = write_csv(out / f"rate_study_r{args.degree}.csv", ("k", "m", "error", "fitted_slope"), rows)
    for row in rows:
        print(f"k={row['k']} m={row['m']} H1 error={row['error']:.4e}")
    print(f"fitted slope against 2^k: {slope:.3f} (expected {-(args.degree - 1)}); wrote {path}")
    return 0


def cmd_recover_pressure(args) -> int:
    model, meta = load_checkpoint(args.from_)
    if model.pressure_spec is not None or model.spec.outputs == "velocity_pressure":
        print("note: checkpoint carries its own pressure; recovering from the velocity only", file=sys.stderr)
    cfg = _config(args)
    case = make_case(meta.get("case", cfg.case), **meta.get("case_params", cfg.case_params))
    grid = GridSpec(**meta["grid"]) if "grid" in meta else cfg.grids[0]
    seed = meta.get("seed", cfg.seeds[0])
    opt = cfg.pressure_optimizer if args.iterations is None else OptimizerConfig(iterations=args.iterations)
    pmodel, hist, report = recover_pressure(
        model, case, grid.build(), replace(cfg.pressure_arch, seed=seed + PRESSURE_SEED_OFFSET), opt, cfg.loss, cfg.eval_grid,
    )
    out = Path(cfg.outputs)
    save_checkpoint(out / "models" / (Path(args.from_).stem + "_pressure.ckpt"), pmodel, {**meta, "role": "pressure"})
    row = {"formulation": meta.get("formulation", ""), "N": grid.label, "seed": seed, "loss_final": float(hist[-1])}
    if report is not None:
        row["p_err_pct"] = report.pressure_err_pct
        print(f"pressure error {report.pressure_err_pct:.3f}%  loss {hist[-1]:.3e}")
    write_csv(out / "pressure_recovery.csv", ("formulation", "N", "seed", "p_err_pct", "loss_final"), [row])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oseen-cpinn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required: bool):
        sp.add_argument("--config", required=config_required, help="YAML experiment configuration")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        sp.add_argument("--out-dir", help="output directory (default: $OSEEN_CPINN_OUT or ./results)")

    sp = sub.add_parser("run", help=f"table experiment; CSV columns {', '.join(TABLE_COLUMNS)}")
    common(sp, True)
    sp.add_argument("--save-models", action="store_true", help="also checkpoint every trained model")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("train", help="train one model and save a checkpoint")
    common(sp, False)
    sp.add_argument("--formulation")
    sp.add_argument("--output", help="checkpoint path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("ra-sweep", help=f"no-flow Ra sweep; CSV columns {', '.join(RA_COLUMNS)}")
    common(sp, False)
    sp.set_defaults(func=cmd_ra_sweep)

    sp = sub.add_parser("rate-study", help="H1 interpolation error of the dyadic Lagrange baseline")
    sp.add_argument("--k-max", type=int, required=True)
    sp.add_argument("--k-min", type=int, default=1)
    sp.add_argument("--degree", type=int, required=True, help="r: polynomials of total degree < r")
    sp.add_argument("--out-dir")
    sp.set_defaults(func=cmd_rate_study)

    sp = sub.add_parser("recover-pressure", help="fit a pressure network to a trained velocity")
    common(sp, False)
    sp.add_argument("--from", dest="from_", required=True, help="velocity checkpoint")
    sp.add_argument("--iterations", type=int)
    sp.set_defaults(func=cmd_recover_pressure)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
