"""Gradient-based training of field models."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
import optax

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite loss {value} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    learning_rate: float = 1e-3
    iterations: int = 10_000
    # "constant", "cosine" (to lr * final_lr_ratio) or "exponential"
    schedule: str = "constant"
    final_lr_ratio: float = 1e-2

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iteration budget must be at least 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.name not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.name!r}; choose from {sorted(OPTIMIZERS)}")
        if self.schedule not in ("constant", "cosine", "exponential"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


OPTIMIZERS = {"adam": optax.adam, "adamw": optax.adamw, "sgd": optax.sgd, "rmsprop": optax.rmsprop}


def make_optimizer(cfg: OptimizerConfig) -> optax.GradientTransformation:
    lr = cfg.learning_rate
    if cfg.schedule == "cosine":
        lr = optax.cosine_decay_schedule(lr, cfg.iterations, alpha=cfg.final_lr_ratio)
    elif cfg.schedule == "exponential":
        lr = optax.exponential_decay(lr, cfg.iterations, cfg.final_lr_ratio)
    return OPTIMIZERS[cfg.name](lr)


def train(model, loss_fn: Callable, cfg: OptimizerConfig, chunk: int = 500, log_every: int = 0):
    """Minimize ``loss_fn(model)`` for ``cfg.iterations`` steps.

    Returns ``(trained_model, history)`` where ``history[i]`` is the loss at
    the parameters after ``i`` updates, so ``history[-1]`` is the final loss.
    Raises :class:`TrainingDiverged` on the first non-finite loss.
    """
    opt = make_optimizer(cfg)
    state = opt.init(model)
    value_and_grad = jax.value_and_grad(loss_fn)

    def step(carry, _):
        m, s = carry
        loss, grads = value_and_grad(m)
        updates, s = opt.update(grads, s, m)
        return (optax.apply_updates(m, updates), s), loss

    @jax.jit
    def run(m, s, n_dummy):
        return jax.lax.scan(step, (m, s), n_dummy)

    history = []
    done = 0
    while done < cfg.iterations:
        n = min(chunk, cfg.iterations - done)
        (model, state), losses = run(model, state, jnp.zeros(n))
        losses = np.asarray(losses)
        bad = np.flatnonzero(~np.isfinite(losses))
        if bad.size:
            raise TrainingDiverged(done + int(bad[0]), float(losses[bad[0]]))
        history.extend(losses.tolist())
        done += n
        if log_every and (done % log_every == 0 or done == cfg.iterations):
            log.info("iteration %d loss %.3e", done, losses[-1])
    final = float(jax.jit(loss_fn)(model))
    if not np.isfinite(final):
        raise TrainingDiverged(cfg.iterations, final)
    history.append(final)
    return model, np.asarray(history)
