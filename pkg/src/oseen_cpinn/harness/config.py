"""Experiment configuration files (YAML).

Example::

    case: {name: example1}            # example2 takes params: {Ra: 100.0}
    grid: {N: [5, 10, 20]}            # or {k: 2, r: 3}, or {n_interior: 20, n_boundary: 40}
    formulations: [pinn_primal, cpinn_primal]
    loss: {gamma: 1.0, tau: 2.0, include_div_penalty: false, weights: {boundary_l2: 1.0}}
    arch: {width: 32, depth: 3, activation: tanh}
    pressure_arch: {width: 32, depth: 3, activation: tanh}
    optimizer: {name: adam, learning_rate: 1.0e-3, iterations: 10000, schedule: constant}
    pressure_optimizer: {iterations: 5000}
    seeds: [0, 1, 2]
    eval_grid: 101
    ra_list: [1, 100, 10000, 1000000]   # ra-sweep only
    outputs: results/example1           # defaults to $OSEEN_CPINN_OUT or ./results
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..fields import FieldModelSpec
from ..losses import FORMULATIONS, LossConfig
from ..sampling import CollocationSet, dyadic_grid, tensor_grid
from .training import OptimizerConfig

OUT_ENV = "OSEEN_CPINN_OUT"


def default_output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "results"))


@dataclass(frozen=True)
class GridSpec:
    """One collocation layout: a shared tensor grid ``N``, a dyadic grid ``(k, r)``,
    or independent interior/boundary tensor grids."""

    N: int | None = None
    k: int | None = None
    r: int | None = None
    n_interior: int | None = None
    n_boundary: int | None = None

    def build(self) -> CollocationSet:
        if self.N is not None:
            return tensor_grid(self.N)
        if self.k is not None and self.r is not None:
            return tensor_grid(int(round(len(dyadic_grid(self.k, self.r)) ** 0.5)))
        if self.n_interior is not None and self.n_boundary is not None:
            return CollocationSet.from_grids(self.n_interior, self.n_boundary)
        raise ValueError("grid needs N, (k, r) or (n_interior, n_boundary)")

    @property
    def label(self) -> int:
        """Per-axis node count used in the ``N`` column of result tables."""
        if self.N is not None:
            return self.N
        if self.k is not None:
            return 2**self.k * (self.r - 1) + 1
        return self.n_interior


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "example1"
    case_params: dict = field(default_factory=dict)
    grids: tuple = (GridSpec(N=20),)
    formulations: tuple = ("pinn_primal", "cpinn_primal")
    loss: LossConfig = field(default_factory=LossConfig)
    arch: FieldModelSpec = field(default_factory=FieldModelSpec)
    pressure_arch: FieldModelSpec = field(default_factory=lambda: FieldModelSpec(outputs="pressure"))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    pressure_optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(iterations=5000))
    seeds: tuple = (0, 1, 2)
    eval_grid: int = 101
    ra_list: tuple = (1.0, 1e2, 1e4, 1e6)
    outputs: Path = field(default_factory=default_output_root)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        bad = [f for f in self.formulations if f not in FORMULATIONS]
        if bad:
            raise ValueError(f"unknown formulations {bad}")
        if not self.grids:
            raise ValueError("at least one grid is required")

    def loss_for(self, formulation: str) -> LossConfig:
        return replace(self.loss, formulation=formulation)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = {
            "gamma": self.loss.gamma,
            "tau": self.loss.tau,
            "include_div_penalty": self.loss.include_div_penalty,
            "weights": dict(self.loss.term_weights),
        }
        d["grids"] = [{k: v for k, v in asdict(g).items() if v is not None} for g in self.grids]
        d["outputs"] = str(self.outputs)
        for key in ("formulations", "seeds", "ra_list"):
            d[key] = list(d[key])
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("outputs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


def _grids(raw: dict) -> tuple:
    raw = dict(raw or {"N": 20})
    if "N" in raw:
        ns = raw["N"] if isinstance(raw["N"], (list, tuple)) else [raw["N"]]
        return tuple(GridSpec(N=int(n)) for n in ns)
    if "k" in raw:
        ks = raw["k"] if isinstance(raw["k"], (list, tuple)) else [raw["k"]]
        return tuple(GridSpec(k=int(k), r=int(raw.get("r", 2))) for k in ks)
    return (GridSpec(n_interior=int(raw["n_interior"]), n_boundary=int(raw["n_boundary"])),)


def config_from_dict(raw: dict, **overrides) -> ExperimentConfig:
    raw = dict(raw or {})
    unknown = set(raw) - {
        "case", "grid", "formulations", "loss", "arch", "pressure_arch", "optimizer",
        "pressure_optimizer", "seeds", "eval_grid", "ra_list", "outputs",
    }
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    case = raw.get("case", {"name": "example1"})
    if isinstance(case, str):
        case = {"name": case}
    loss = dict(raw.get("loss", {}))
    formulations = raw.get("formulations")
    if formulations is None:
        formulations = [loss["formulation"]] if "formulation" in loss else ["pinn_primal", "cpinn_primal"]
    loss_cfg = LossConfig(
        formulation=formulations[0],
        gamma=float(loss.get("gamma", 1.0)),
        tau=float(loss.get("tau", 2.0)),
        include_div_penalty=bool(loss.get("include_div_penalty", False)),
        term_weights={k: float(v) for k, v in (loss.get("weights") or {}).items()},
    )
    arch = dict(raw.get("arch", {}))
    arch.pop("outputs", None)
    parch = dict(raw.get("pressure_arch", {}))
    parch["outputs"] = "pressure"
    kwargs = dict(
        case=case["name"],
        case_params={k: float(v) for k, v in (case.get("params") or {}).items()},
        grids=_grids(raw.get("grid")),
        formulations=tuple(formulations),
        loss=loss_cfg,
        arch=FieldModelSpec(**arch),
        pressure_arch=FieldModelSpec(**parch),
        optimizer=OptimizerConfig(**raw.get("optimizer", {})),
        pressure_optimizer=OptimizerConfig(**{"iterations": 5000, **raw.get("pressure_optimizer", {})}),
        seeds=tuple(int(s) for s in raw.get("seeds", (0, 1, 2))),
        eval_grid=int(raw.get("eval_grid", 101)),
        ra_list=tuple(float(r) for r in raw.get("ra_list", (1.0, 1e2, 1e4, 1e6))),
        outputs=Path(raw["outputs"]) if raw.get("outputs") else default_output_root(),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kwargs)


def load_config(path, **overrides) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return config_from_dict(raw, **overrides)
