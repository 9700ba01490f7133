"""Oseen problem instances on the unit square.

Every closure here maps a single point ``x`` of shape ``(2,)`` to a value and
is written with ``jax.numpy`` so it can be vmapped over point sets and
differentiated (the pressure-robust loss needs the curl of the forcing).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

ScalarField = Callable[[jnp.ndarray], jnp.ndarray]
VectorField = Callable[[jnp.ndarray], jnp.ndarray]


class MissingDerivativeError(ValueError):
    """Raised when an exact solution lacks a closure an operation needs."""


class NoHelmholtzSplitError(LookupError):
    """Raised when a case carries no analytic Helmholtz-Hodge split."""


def constant_scalar(value: float) -> ScalarField:
    return lambda x: jnp.asarray(value, dtype=x.dtype)


def constant_vector(value) -> VectorField:
    value = tuple(float(v) for v in value)
    return lambda x: jnp.asarray(value, dtype=x.dtype)


def on_points(fn: Callable, points) -> np.ndarray:
    """Evaluate a pointwise closure on an ``(n, 2)`` array of points."""
    return np.asarray(jax.vmap(fn)(jnp.asarray(points, dtype=jnp.float64)))


@dataclass(frozen=True)
class OseenCoefficients:
    """Viscosity ``nu``, convection ``beta`` and reaction ``sigma`` as closures."""

    nu: ScalarField
    beta: VectorField
    sigma: ScalarField

    @classmethod
    def constant(cls, nu: float, beta, sigma: float) -> "OseenCoefficients":
        return cls(constant_scalar(nu), constant_vector(beta), constant_scalar(sigma))

    def bounds(self, points) -> dict:
        """Sampled ``nu`` range and ``kappa = min(sigma - div(beta)/2)``."""
        pts = jnp.asarray(points, dtype=jnp.float64)
        nu = np.asarray(jax.vmap(self.nu)(pts))
        div_beta = jax.vmap(lambda x: jnp.trace(jax.jacfwd(self.beta)(x)))(pts)
        kappa = np.asarray(jax.vmap(self.sigma)(pts) - 0.5 * div_beta)
        return {"nu0": float(nu.min()), "nu1": float(nu.max()), "kappa": float(kappa.min())}

    def check(self, points, *, require_positive_kappa: bool = True) -> dict:
        """Validate the well-posedness bounds on sample points.

        ``require_positive_kappa=False`` accepts ``kappa == 0``, which is the
        situation of the no-flow benchmark (sigma = 0, constant beta); the
        Dirichlet problem stays coercive through the viscous term there.
        """
        b = self.bounds(points)
        if not b["nu0"] > 0:
            raise ValueError(f"viscosity must be positive, got min {b['nu0']}")
        if require_positive_kappa and not b["kappa"] > 0:
            raise ValueError(f"sigma - div(beta)/2 must be positive, got {b['kappa']}")
        if b["kappa"] < 0:
            raise ValueError(f"sigma - div(beta)/2 is negative: {b['kappa']}")
        return b


@dataclass(frozen=True)
class ExactSolution:
    """Manufactured velocity/pressure pair with hand-derived derivatives.

    ``u_jac(x)[l, k]`` is the derivative of component ``l`` in direction ``k``.
    """

    u: VectorField
    p: ScalarField
    u_jac: Optional[Callable] = None
    u_lap: Optional[VectorField] = None
    p_grad: Optional[VectorField] = None
    stream: Optional[ScalarField] = None
    helmholtz_grad_part: Optional[VectorField] = None
    helmholtz_divfree_part: Optional[VectorField] = None


@dataclass(frozen=True)
class OseenCase:
    coeffs: OseenCoefficients
    forcing: VectorField
    boundary_data: VectorField
    exact: Optional[ExactSolution] = None
    label: str = ""
    params: dict = field(default_factory=dict)

    def operator(self, x, u_val, u_jac, u_lap, p_grad=None):
        """Apply ``-nu Lap u + (beta.grad) u + sigma u (+ grad p)`` at one point."""
        out = -self.coeffs.nu(x) * u_lap + u_jac @ self.coeffs.beta(x) + self.coeffs.sigma(x) * u_val
        if p_grad is not None:
            out = out + p_grad
        return out


def synthesize_forcing(exact: ExactSolution, coeffs: OseenCoefficients, x):
    """Momentum operator applied to the exact solution at ``x``."""
    missing = [n for n in ("u_jac", "u_lap", "p_grad") if getattr(exact, n) is None]
    if missing:
        raise MissingDerivativeError(f"exact solution lacks {', '.join(missing)}")
    return (
        -coeffs.nu(x) * exact.u_lap(x)
        + exact.u_jac(x) @ coeffs.beta(x)
        + exact.p_grad(x)
        + coeffs.sigma(x) * exact.u(x)
    )


def helmholtz_parts(case: OseenCase):
    """Return ``(grad_part, divfree_part)`` closures of the case forcing."""
    ex = case.exact
    if ex is None or ex.helmholtz_grad_part is None or ex.helmholtz_divfree_part is None:
        raise NoHelmholtzSplitError(f"no analytic Helmholtz split for case {case.label!r}")
    return ex.helmholtz_grad_part, ex.helmholtz_divfree_part


# Example 1: psi = sin^2(x) sin(y) cos(y), p = sin(pi x) cos(pi y)

def _ex1_stream(x):
    return jnp.sin(x[0]) ** 2 * jnp.sin(x[1]) * jnp.cos(x[1])


def _ex1_u(x):
    s2x, s2y, c2y = jnp.sin(2 * x[0]), jnp.sin(2 * x[1]), jnp.cos(2 * x[1])
    return jnp.stack([jnp.sin(x[0]) ** 2 * c2y, -0.5 * s2x * s2y])


def _ex1_u_jac(x):
    s2x, c2x = jnp.sin(2 * x[0]), jnp.cos(2 * x[0])
    s2y, c2y = jnp.sin(2 * x[1]), jnp.cos(2 * x[1])
    sx2 = jnp.sin(x[0]) ** 2
    return jnp.array([[s2x * c2y, -2.0 * sx2 * s2y], [-c2x * s2y, -s2x * c2y]])


def _ex1_u_lap(x):
    s2x, c2x = jnp.sin(2 * x[0]), jnp.cos(2 * x[0])
    s2y, c2y = jnp.sin(2 * x[1]), jnp.cos(2 * x[1])
    return jnp.stack([c2y * (4.0 * c2x - 2.0), 4.0 * s2x * s2y])


def _ex1_p(x):
    return jnp.sin(jnp.pi * x[0]) * jnp.cos(jnp.pi * x[1])


def _ex1_p_grad(x):
    px, py = jnp.pi * x[0], jnp.pi * x[1]
    return jnp.pi * jnp.stack([jnp.cos(px) * jnp.cos(py), -jnp.sin(px) * jnp.sin(py)])


def make_example1() -> OseenCase:
    """Smooth divergence-free flow with nu = 1, beta = (1, 1), sigma = 1."""
    coeffs = OseenCoefficients.constant(1.0, (1.0, 1.0), 1.0)
    partial = ExactSolution(
        u=_ex1_u, p=_ex1_p, u_jac=_ex1_u_jac, u_lap=_ex1_u_lap, p_grad=_ex1_p_grad, stream=_ex1_stream
    )

    def forcing(x):
        return synthesize_forcing(partial, coeffs, x)

    # constant coefficients map divergence-free u to divergence-free fields,
    # so f - grad p is the solenoidal part
    exact = ExactSolution(
        u=_ex1_u,
        p=_ex1_p,
        u_jac=_ex1_u_jac,
        u_lap=_ex1_u_lap,
        p_grad=_ex1_p_grad,
        stream=_ex1_stream,
        helmholtz_grad_part=_ex1_p_grad,
        helmholtz_divfree_part=lambda x: forcing(x) - _ex1_p_grad(x),
    )
    return OseenCase(coeffs, forcing, _ex1_u, exact, label="example1")


def make_example2(Ra: float) -> OseenCase:
    """No-flow benchmark: gradient forcing scaled by ``Ra``, exact u = 0."""
    if not Ra > 0:
        raise ValueError(f"Ra must be positive, got {Ra}")
    Ra = float(Ra)
    coeffs = OseenCoefficients.constant(1.0, (1.0, 1.0), 0.0)

    def forcing(x):
        y = x[1]
        return jnp.stack([jnp.zeros_like(y), Ra * (1.0 - y + 3.0 * y**2)])

    def zero_vec(x):
        return jnp.zeros(2, dtype=x.dtype)

    def p(x):
        y = x[1]
        return Ra * (y**3 - y**2 / 2.0 + y - 7.0 / 12.0)

    exact = ExactSolution(
        u=zero_vec,
        p=p,
        u_jac=lambda x: jnp.zeros((2, 2), dtype=x.dtype),
        u_lap=zero_vec,
        p_grad=forcing,
        stream=lambda x: jnp.zeros((), dtype=x.dtype),
        helmholtz_grad_part=forcing,
        helmholtz_divfree_part=zero_vec,
    )
    return OseenCase(coeffs, forcing, zero_vec, exact, label="example2", params={"Ra": Ra})


CASES = {"example1": make_example1, "example2": make_example2}


def make_case(name: str, **params) -> OseenCase:
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; available: {', '.join(CASES)}") from None
    return factory(**params)
