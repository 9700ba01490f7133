"""Error metrics of trained fields against manufactured solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from ..fields import velocity_jacobian
from ..problem import OseenCase
from ..sampling import uniform_grid


@dataclass
class ErrorReport:
    """Table quantities for one trained model.

    ``velocity_err_pct`` is the relative discrete L2 error in percent, except
    when the exact velocity vanishes on the grid (no-flow benchmark); it then
    holds the absolute discrete norm of the velocity gradient and
    ``velocity_metric`` says ``"grad_l2_abs"``.
    """

    velocity_err_pct: float
    velocity_err_h1_pct: float
    pressure_err_pct: float | None
    div_linf: float
    grad_u_l2: float
    loss_final: float
    loss_history: np.ndarray
    velocity_metric: str = "rel_l2_pct"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        hist = np.asarray(self.loss_history, dtype=np.float64)
        if hist.size == 0:
            hist = np.array([self.loss_final])
        self.loss_history = hist


def _rms(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum(a.reshape(len(a), -1) ** 2, axis=1))))


def velocity_fields(model, points):
    pts = jnp.asarray(points, dtype=jnp.float64)
    u = jax.vmap(model.velocity)(pts)
    jac = jax.vmap(lambda x: velocity_jacobian(model, x))(pts)
    return np.asarray(u), np.asarray(jac)


def relative_pressure_error_pct(p_model: np.ndarray, p_exact: np.ndarray) -> float:
    """Relative discrete L2 error after removing both discrete means.

    A constant exact pressure leaves no scale; the absolute RMS error is returned instead.
    """
    pm = p_model - np.mean(p_model)
    pe = p_exact - np.mean(p_exact)
    norm = _rms(pe)
    if norm == 0.0:
        return _rms(pm)
    return 100.0 * _rms(pm - pe) / norm


def error_report(model, case: OseenCase, pressure_model=None, n_eval: int = 101,
                 loss_history=None, metadata: dict | None = None, points=None) -> ErrorReport:
    """Compare ``model`` (and a pressure field) with ``case.exact`` on an ``n_eval``-square grid.

    The pressure comes from ``pressure_model`` when given, otherwise from
    ``model`` when it carries one. ``points`` replaces the uniform grid.
    """
    if case.exact is None:
        raise ValueError(f"case {case.label!r} has no exact solution")
    ex = case.exact
    pts = uniform_grid(n_eval) if points is None else np.asarray(points, dtype=np.float64)
    jpts = jnp.asarray(pts)
    u, jac = velocity_fields(model, pts)
    ue = np.asarray(jax.vmap(ex.u)(jpts))
    je = np.asarray(jax.vmap(ex.u_jac)(jpts))

    div = np.abs(jac[:, 0, 0] + jac[:, 1, 1])
    grad_err = _rms(jac - je)
    u_norm, h1_norm = _rms(ue), np.hypot(_rms(ue), _rms(je))
    if u_norm > 0:
        vel = 100.0 * _rms(u - ue) / u_norm
        vel_h1 = 100.0 * np.hypot(_rms(u - ue), grad_err) / h1_norm
        metric = "rel_l2_pct"
    else:
        vel = vel_h1 = grad_err
        metric = "grad_l2_abs"

    p_err = None
    pfield = pressure_model if pressure_model is not None else (model if model.has_pressure else None)
    if pfield is not None:
        p = np.asarray(jax.vmap(pfield.pressure)(jpts))
        p_err = relative_pressure_error_pct(p, np.asarray(jax.vmap(ex.p)(jpts)))

    hist = np.asarray([] if loss_history is None else loss_history, dtype=np.float64)
    return ErrorReport(
        velocity_err_pct=float(vel),
        velocity_err_h1_pct=float(vel_h1),
        pressure_err_pct=p_err,
        div_linf=float(div.max()),
        grad_u_l2=float(_rms(jac)),
        loss_final=float(hist[-1]) if hist.size else float("nan"),
        loss_history=hist,
        velocity_metric=metric,
        metadata=dict(metadata or {}),
    )
