"""Neural velocity/pressure fields and the differential operators of the residuals.

A *field* is anything exposing pointwise ``velocity(x)`` and, optionally,
``pressure(x)`` for a single point ``x`` of shape ``(2,)``. Trainable
:class:`FieldModel` instances are registered JAX pytrees whose leaves are the
network weights, so ``jax.grad`` and ``optax`` act on them directly.
:class:`ClosureField` wraps analytic closures (exact solutions) behind the same
interface. All spatial derivatives are exact, obtained by nested automatic
differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np
from jax.flatten_util import ravel_pytree

from .problem import OseenCase

# Residuals need up to four derivatives of the network, so only smooth
# activations are accepted.
ACTIVATIONS: dict[str, Callable] = {
    "tanh": jnp.tanh,
    "sin": jnp.sin,
    "sigmoid": jax.nn.sigmoid,
    "softplus": jax.nn.softplus,
    "silu": jax.nn.silu,
    "gelu": lambda z: jax.nn.gelu(z, approximate=False),
}
NON_SMOOTH = {"relu", "leaky_relu", "elu", "relu6", "hard_tanh", "abs"}

OUTPUT_SIZES = {"velocity_pressure": 3, "velocity": 2, "stream": 1, "pressure": 1}
KINDS = ("generic", "divergence_free")


@dataclass(frozen=True)
class FieldModelSpec:
    width: int = 32
    depth: int = 3
    activation: str = "tanh"
    outputs: str = "velocity_pressure"
    seed: int = 0
    output_scale: float = 1.0

    def __post_init__(self):
        if self.activation in NON_SMOOTH:
            raise ValueError(
                f"activation {self.activation!r} is not smooth; residuals need "
                "third and fourth derivatives"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")
        if self.outputs not in OUTPUT_SIZES:
            raise ValueError(f"unknown outputs {self.outputs!r}")
        if self.width < 1 or self.depth < 1:
            raise ValueError("width and depth must be positive")

    @property
    def n_out(self) -> int:
        return OUTPUT_SIZES[self.outputs]


def init_mlp(spec: FieldModelSpec, key) -> list:
    """Fan-in scaled normal weights, zero biases."""
    sizes = [2] + [spec.width] * spec.depth + [spec.n_out]
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        key, sub = jax.random.split(key)
        w = jax.random.normal(sub, (fan_in, fan_out), dtype=jnp.float64) / np.sqrt(fan_in)
        layers.append((w, jnp.zeros(fan_out, dtype=jnp.float64)))
    return layers


def apply_mlp(layers, x, activation: str):
    act = ACTIVATIONS[activation]
    h = x
    for w, b in layers[:-1]:
        h = act(h @ w + b)
    w, b = layers[-1]
    return h @ w + b


@jax.tree_util.register_pytree_node_class
class FieldModel:
    """Parameterized velocity and/or pressure field.

    ``kind="generic"`` reads velocity (and pressure, for three outputs) from
    one trunk. ``kind="divergence_free"`` uses a scalar stream network and sets
    ``u = (d psi/dy, -d psi/dx)``. ``pressure_spec`` adds an independent
    pressure network.
    """

    def __init__(self, spec: FieldModelSpec, params: dict, kind: str = "generic",
                 pressure_spec: Optional[FieldModelSpec] = None):
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if kind == "divergence_free" and spec.outputs != "stream":
            raise ValueError("divergence-free models need a stream network (outputs='stream')")
        if pressure_spec is not None and pressure_spec.outputs != "pressure":
            raise ValueError("pressure_spec must have outputs='pressure'")
        self.spec = spec
        self.params = params
        self.kind = kind
        self.pressure_spec = pressure_spec

    @classmethod
    def init(cls, spec: FieldModelSpec, kind: str = "generic",
             pressure_spec: Optional[FieldModelSpec] = None) -> "FieldModel":
        params = {"trunk": init_mlp(spec, jax.random.PRNGKey(spec.seed))}
        if pressure_spec is not None:
            params["pressure"] = init_mlp(pressure_spec, jax.random.PRNGKey(pressure_spec.seed))
        return cls(spec, params, kind, pressure_spec)

    def tree_flatten(self):
        return (self.params,), (self.spec, self.kind, self.pressure_spec)

    @classmethod
    def tree_unflatten(cls, aux, children):
        spec, kind, pressure_spec = aux
        obj = object.__new__(cls)
        obj.spec, obj.kind, obj.pressure_spec = spec, kind, pressure_spec
        obj.params = children[0]
        return obj

    def __repr__(self):
        return f"FieldModel(kind={self.kind!r}, spec={self.spec}, pressure_spec={self.pressure_spec})"

    # flat parameter vector

    def flat(self) -> np.ndarray:
        return np.asarray(ravel_pytree(self.params)[0])

    def with_flat(self, theta) -> "FieldModel":
        _, unravel = ravel_pytree(self.params)
        theta = jnp.asarray(theta, dtype=jnp.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        return FieldModel(self.spec, unravel(theta), self.kind, self.pressure_spec)

    @property
    def n_params(self) -> int:
        return int(ravel_pytree(self.params)[0].size)

    # pointwise evaluation

    def _trunk(self, x):
        return apply_mlp(self.params["trunk"], x, self.spec.activation) * self.spec.output_scale

    @property
    def has_velocity(self) -> bool:
        return self.spec.outputs != "pressure"

    @property
    def has_pressure(self) -> bool:
        return self.pressure_spec is not None or self.spec.outputs in ("velocity_pressure", "pressure")

    def stream(self, x):
        if self.kind != "divergence_free":
            raise ValueError("only divergence-free models carry a stream function")
        return self._trunk(x)[0]

    def velocity(self, x):
        if self.kind == "divergence_free":
            g = jax.grad(self.stream)(x)
            return jnp.stack([g[1], -g[0]])
        if not self.has_velocity:
            raise ValueError("model carries no velocity output")
        return self._trunk(x)[:2]

    def pressure(self, x):
        if self.pressure_spec is not None:
            ps = self.pressure_spec
            return apply_mlp(self.params["pressure"], x, ps.activation)[0] * ps.output_scale
        if self.spec.outputs == "velocity_pressure":
            return self._trunk(x)[2]
        if self.spec.outputs == "pressure":
            return self._trunk(x)[0]
        raise ValueError("model carries no pressure output")


@dataclass(frozen=True)
class ClosureField:
    """Analytic closures behind the field interface.

    With ``stream`` given and ``kind="divergence_free"`` the velocity is taken
    as the rotated gradient of the stream closure, exactly like a
    divergence-free network.
    """

    velocity_fn: Optional[Callable] = None
    pressure_fn: Optional[Callable] = None
    stream_fn: Optional[Callable] = None
    kind: str = "generic"

    @classmethod
    def from_exact(cls, exact, kind: str = "generic", with_pressure: bool = True) -> "ClosureField":
        if kind == "divergence_free" and exact.stream is None:
            raise ValueError("exact solution has no stream function")
        return cls(
            velocity_fn=exact.u,
            pressure_fn=exact.p if with_pressure else None,
            stream_fn=exact.stream,
            kind=kind,
        )

    @classmethod
    def zero(cls, with_pressure: bool = True, kind: str = "generic") -> "ClosureField":
        zv = lambda x: jnp.zeros(2, dtype=x.dtype)  # noqa: E731
        zs = lambda x: jnp.zeros((), dtype=x.dtype)  # noqa: E731
        return cls(zv, zs if with_pressure else None, zs, kind)

    @property
    def has_velocity(self) -> bool:
        return self.velocity_fn is not None or self.stream_fn is not None

    @property
    def has_pressure(self) -> bool:
        return self.pressure_fn is not None

    def stream(self, x):
        if self.stream_fn is None:
            raise ValueError("no stream closure")
        return self.stream_fn(x)

    def velocity(self, x):
        if self.kind == "divergence_free":
            g = jax.grad(self.stream)(x)
            return jnp.stack([g[1], -g[0]])
        if self.velocity_fn is None:
            raise ValueError("no velocity closure")
        return self.velocity_fn(x)

    def pressure(self, x):
        if self.pressure_fn is None:
            raise ValueError("no pressure closure")
        return self.pressure_fn(x)

    def without_pressure(self) -> "ClosureField":
        return replace(self, pressure_fn=None)


# differential operators at a single point

def velocity_jacobian(field, x):
    """``J[l, k] = d v_l / d x_k``."""
    return jax.jacfwd(field.velocity)(x)


def velocity_laplacian(field, x):
    hess = jax.jacfwd(jax.jacfwd(field.velocity))(x)
    return jnp.trace(hess, axis1=1, axis2=2)


def divergence(field, x):
    return jnp.trace(velocity_jacobian(field, x))


def oseen_velocity_operator(field, case: OseenCase, x):
    """``-nu Lap v + (beta.grad) v + sigma v`` at ``x`` (pressure excluded)."""
    c = case.coeffs
    return (
        -c.nu(x) * velocity_laplacian(field, x)
        + velocity_jacobian(field, x) @ c.beta(x)
        + c.sigma(x) * field.velocity(x)
    )


def momentum_residual(field, case: OseenCase, x, include_pressure: bool = True):
    """``-nu Lap v + (beta.grad) v + grad q + sigma v - f`` at ``x``."""
    r = oseen_velocity_operator(field, case, x) - case.forcing(x)
    if include_pressure:
        if not field.has_pressure:
            raise ValueError("pressure gradient requested but the field has no pressure")
        r = r + jax.grad(field.pressure)(x)
    return r


def curl_residual(field, case: OseenCase, x):
    """Scalar 2D curl of the pressure-free momentum residual at ``x``."""
    jac = jax.jacfwd(lambda y: momentum_residual(field, case, y, include_pressure=False))(x)
    return jac[1, 0] - jac[0, 1]


def on_points(fn: Callable, points):
    """Vectorize a pointwise operator over an ``(n, 2)`` array."""
    return jax.vmap(fn)(jnp.asarray(points, dtype=jnp.float64))


def evaluate(field, points, pressure: bool | None = None):
    """Velocity ``(n, 2)`` and pressure ``(n,)`` (or ``None``) at ``points``.

    ``pressure=True`` demands a pressure output; ``None`` returns it when present.
    """
    if pressure and not field.has_pressure:
        raise ValueError("pressure requested from a velocity-only field")
    if not field.has_velocity:
        raise ValueError("field carries no velocity; evaluate its pressure directly")
    pts = jnp.asarray(points, dtype=jnp.float64)
    u = jax.vmap(field.velocity)(pts)
    want_p = field.has_pressure if pressure is None else pressure
    p = jax.vmap(field.pressure)(pts) if want_p else None
    return u, p
