"""Discrete loss functionals for PINN, consistent-PINN and pressure-robust training.

Every loss returns a :class:`LossBreakdown`; its ``total`` is what gets
minimized. Terms are plain ``jax`` scalars so the breakdown can be returned
from jitted and differentiated code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .fields import curl_residual, divergence, momentum_residual, oseen_velocity_operator
from .problem import OseenCase
from .sampling import CollocationSet

FORMULATIONS = (
    "pinn_primal",
    "cpinn_primal",
    "pinn_divfree",
    "cpinn_divfree",
    "pinn_pr",
    "cpinn_pr",
    "cpinn_pr_unconstrained",
)
TERMS = ("interior", "divergence", "boundary_l2", "boundary_gagliardo", "pressure")


@dataclass(frozen=True)
class LossConfig:
    formulation: str = "cpinn_primal"
    # smallest gamma with L^gamma embedded in H^-1: 1/gamma = 1/2 + 1/d, so 1 for d=2
    gamma: float = 1.0
    tau: float = 2.0
    include_div_penalty: bool = False
    term_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}")
        if not 1.0 <= self.gamma <= 2.0:
            raise ValueError(f"gamma must lie in [1, 2], got {self.gamma}")
        if not 1.0 < self.tau <= 2.0:
            raise ValueError(f"tau must lie in (1, 2], got {self.tau}")
        unknown = set(self.term_weights) - set(TERMS)
        if unknown:
            raise ValueError(f"unknown loss terms in weights: {sorted(unknown)}")
        if any(w < 0 for w in self.term_weights.values()):
            raise ValueError("term weights must be non-negative")
        if self.formulation == "cpinn_pr_unconstrained":
            object.__setattr__(self, "include_div_penalty", True)
        # freeze a private copy so configs stay hashable-by-value in practice
        object.__setattr__(self, "term_weights", dict(self.term_weights))

    def weight(self, term: str) -> float:
        return float(self.term_weights.get(term, 1.0))

    @property
    def consistent(self) -> bool:
        return self.formulation.startswith("cpinn")

    def __hash__(self):
        return hash((self.formulation, self.gamma, self.tau, self.include_div_penalty,
                     tuple(sorted(self.term_weights.items()))))


class LossBreakdown(NamedTuple):
    total: jnp.ndarray
    interior_residual_term: jnp.ndarray
    divergence_term: jnp.ndarray
    boundary_l2_term: jnp.ndarray
    boundary_gagliardo_term: jnp.ndarray
    pressure_term: Optional[jnp.ndarray] = None

    def as_floats(self) -> dict:
        return {k: (None if v is None else float(v)) for k, v in self._asdict().items()}


# discrete norms

def discrete_lgamma_term(values, gamma: float):
    """``sum_l [ mean_i |r_l(x_i)|^gamma ]^(2/gamma)`` for ``values`` of shape ``(m, L)``.

    A 1-d input is treated as a single component.
    """
    v = jnp.asarray(values)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] == 0:
        raise ValueError("empty point set")
    if gamma == 2.0:
        return jnp.sum(jnp.mean(v**2, axis=0))
    return jnp.sum(jnp.mean(jnp.abs(v) ** gamma, axis=0) ** (2.0 / gamma))


def _inverse_square_kernel(boundary_dist) -> np.ndarray:
    dist = np.asarray(boundary_dist, dtype=np.float64)
    off = ~np.eye(dist.shape[0], dtype=bool)
    if np.any(dist[off] <= 0.0):
        raise ValueError("boundary distance matrix has a zero off-diagonal entry")
    kernel = np.zeros_like(dist)
    # exponent is the ambient dimension d = 2
    kernel[off] = 1.0 / dist[off] ** 2
    return kernel


def boundary_l2_term(e):
    e = jnp.asarray(e)
    if e.ndim == 1:
        e = e[:, None]
    return jnp.sum(e**2) / e.shape[0]


def boundary_gagliardo_term(e, kernel):
    """``(1/m^2) sum_l sum_{i != j} |e_l(z_i) - e_l(z_j)|^2 / |z_i - z_j|^2``."""
    e = jnp.asarray(e)
    if e.ndim == 1:
        e = e[:, None]
    m = e.shape[0]
    diff2 = jnp.sum((e[:, None, :] - e[None, :, :]) ** 2, axis=-1)
    return jnp.sum(diff2 * kernel) / m**2


def discrete_h12_error(e, boundary_dist):
    """Discrete ``H^{1/2}`` boundary error: mean square plus Gagliardo double sum."""
    e = jnp.asarray(e)
    if e.shape[0] == 0:
        raise ValueError("empty boundary point set")
    kernel = _inverse_square_kernel(boundary_dist)
    return boundary_l2_term(e) + boundary_gagliardo_term(e, kernel)


# pieces shared by the formulations

def _pts(a):
    return jnp.asarray(a, dtype=jnp.float64)


def _boundary_error(model, case: OseenCase, colloc: CollocationSet):
    z = _pts(colloc.boundary)
    return jax.vmap(case.boundary_data)(z) - jax.vmap(model.velocity)(z)


def _divergence_values(model, colloc: CollocationSet):
    return jax.vmap(lambda x: divergence(model, x))(_pts(colloc.interior))


def _assemble(config: LossConfig, interior, div, b_l2, b_gag, div_in_total: bool,
              gag_in_total: bool, pressure=None) -> LossBreakdown:
    w = config.weight
    total = w("interior") * interior + w("boundary_l2") * b_l2
    if div_in_total:
        total = total + w("divergence") * div
    if gag_in_total:
        total = total + w("boundary_gagliardo") * b_gag
    if pressure is not None:
        total = total + w("pressure") * pressure
    return LossBreakdown(total, interior, div, b_l2, b_gag, pressure)


def _boundary_terms(model, case, colloc, with_gagliardo: bool):
    e = _boundary_error(model, case, colloc)
    b_l2 = boundary_l2_term(e)
    if with_gagliardo:
        b_gag = boundary_gagliardo_term(e, _inverse_square_kernel(colloc.boundary_dist))
    else:
        b_gag = jnp.zeros((), dtype=jnp.float64)
    return b_l2, b_gag


# formulations

def pinn_loss(model, case: OseenCase, colloc: CollocationSet,
              config: LossConfig | None = None) -> LossBreakdown:
    """Plain least-squares PINN loss: momentum, divergence and boundary mean squares."""
    config = config or LossConfig("pinn_primal")
    res = jax.vmap(lambda x: momentum_residual(model, case, x))(_pts(colloc.interior))
    interior = discrete_lgamma_term(res, 2.0)
    div = jnp.mean(_divergence_values(model, colloc) ** 2)
    b_l2, b_gag = _boundary_terms(model, case, colloc, with_gagliardo=False)
    return _assemble(config, interior, div, b_l2, b_gag, True, False)


def cpinn_loss(model, case: OseenCase, colloc: CollocationSet, config: LossConfig) -> LossBreakdown:
    """Consistent loss: ``L^gamma`` interior norm and discrete ``H^{1/2}`` boundary norm."""
    res = jax.vmap(lambda x: momentum_residual(model, case, x))(_pts(colloc.interior))
    interior = discrete_lgamma_term(res, config.gamma)
    div = jnp.mean(_divergence_values(model, colloc) ** 2)
    b_l2, b_gag = _boundary_terms(model, case, colloc, with_gagliardo=True)
    return _assemble(config, interior, div, b_l2, b_gag, True, True)


def divfree_loss(model, case: OseenCase, colloc: CollocationSet, config: LossConfig,
                 consistent: bool) -> LossBreakdown:
    """Momentum and boundary terms for a stream-function velocity.

    The divergence is reported as a diagnostic but never enters the total.
    """
    if getattr(model, "kind", None) != "divergence_free":
        raise ValueError("divfree_loss needs a divergence-free (stream function) model")
    res = jax.vmap(lambda x: momentum_residual(model, case, x))(_pts(colloc.interior))
    interior = discrete_lgamma_term(res, config.gamma if consistent else 2.0)
    div = jnp.mean(_divergence_values(model, colloc) ** 2)
    b_l2, b_gag = _boundary_terms(model, case, colloc, with_gagliardo=consistent)
    return _assemble(config, interior, div, b_l2, b_gag, False, consistent)


def pr_loss(model, case: OseenCase, colloc: CollocationSet, config: LossConfig,
            consistent: bool) -> LossBreakdown:
    """Pressure-robust loss built on the curl of the pressure-free momentum residual.

    Gradient parts of the forcing are annihilated by the curl, so the loss
    (and hence the learned velocity) does not see them.
    """
    curls = jax.vmap(lambda x: curl_residual(model, case, x))(_pts(colloc.interior))
    interior = discrete_lgamma_term(curls, config.gamma if consistent else 2.0)
    div = jnp.mean(_divergence_values(model, colloc) ** 2)
    b_l2, b_gag = _boundary_terms(model, case, colloc, with_gagliardo=consistent)
    return _assemble(config, interior, div, b_l2, b_gag, config.include_div_penalty, consistent)


def forcing_residual(velocity_model, case: OseenCase, points):
    """``f - (-nu Lap u + (beta.grad) u + sigma u)`` at ``points``: the pressure-gradient target."""
    pts = _pts(points)
    return jax.vmap(lambda x: case.forcing(x) - oseen_velocity_operator(velocity_model, case, x))(pts)


def pressure_loss(pressure_model, fbar, points, config: LossConfig | None = None):
    """Pressure recovery loss ``[mean |grad q - fbar|^tau]^(2/tau) + (mean q)^2``.

    Returns ``(total, gradient_term, mean_penalty)``.
    """
    tau = (config or LossConfig()).tau
    if not tau > 1.0:
        raise ValueError(f"tau must exceed 1, got {tau}")
    pts = _pts(points)
    grad_q = jax.vmap(jax.grad(pressure_model.pressure))(pts)
    sq = jnp.sum((grad_q - jnp.asarray(fbar)) ** 2, axis=-1)
    if tau == 2.0:
        grad_term = jnp.mean(sq)
    else:
        # keep the gradient finite where the mismatch vanishes
        safe = jnp.where(sq > 0, sq, 1.0)
        grad_term = jnp.mean(jnp.where(sq > 0, safe ** (tau / 2.0), 0.0)) ** (2.0 / tau)
    mean_pen = jnp.mean(jax.vmap(pressure_model.pressure)(pts)) ** 2
    return grad_term + mean_pen, grad_term, mean_pen


def formulation_loss(model, case: OseenCase, colloc: CollocationSet, config: LossConfig) -> LossBreakdown:
    """Dispatch on ``config.formulation``."""
    f = config.formulation
    if f == "pinn_primal":
        return pinn_loss(model, case, colloc, config)
    if f == "cpinn_primal":
        return cpinn_loss(model, case, colloc, config)
    if f in ("pinn_divfree", "cpinn_divfree"):
        return divfree_loss(model, case, colloc, config, consistent=f.startswith("cpinn"))
    return pr_loss(model, case, colloc, config, consistent=f.startswith("cpinn"))
