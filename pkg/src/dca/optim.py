"""Cross-entropy loss against target transformations and gradient descent on rule weights."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .binary import BinaryRule, binary_grad_run, binary_run
from .core import (
    DiscreteRule,
    RuleTable,
    Topology,
    check_configuration,
    dca_run,
)
from .grad import grad_run

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
INIT_STD = 0.1

Rule = Union[RuleTable, BinaryRule]


class TrainingError(ArithmeticError):
    """Loss or gradient became non-finite during training."""

    def __init__(self, message: str, iteration: int, weight_index=None):
        super().__init__(message)
        self.iteration = iteration
        self.weight_index = weight_index


@dataclass(frozen=True)
class TargetSpec:
    """What the configuration should look like after ``n`` steps.

    ``kind`` is ``fixed_configuration`` (``configuration`` holds the target),
    ``majority``, or ``discrete_rule_after_n_steps`` (``rule`` holds the CA
    whose ``n``-step image is the target).
    """

    kind: str
    configuration: np.ndarray | None = None
    rule: DiscreteRule | None = None

    KINDS = ("fixed_configuration", "majority", "discrete_rule_after_n_steps")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "fixed_configuration" and self.configuration is None:
            raise ValueError("fixed_configuration target needs a configuration")
        if self.kind == "discrete_rule_after_n_steps" and self.rule is None:
            raise ValueError("discrete_rule_after_n_steps target needs a rule")

    @classmethod
    def majority(cls) -> TargetSpec:
        return cls("majority")

    @classmethod
    def fixed(cls, configuration) -> TargetSpec:
        return cls("fixed_configuration", configuration=np.asarray(configuration, dtype=float))

    @classmethod
    def after_steps(cls, rule: DiscreteRule) -> TargetSpec:
        return cls("discrete_rule_after_n_steps", rule=rule)

    def resolve(self, initial, steps: int, topology: Topology) -> np.ndarray:
        """Target configuration for ``initial``.

        ``initial`` of shape ``(n,)`` is treated as P(■) per cell and the
        result has the same shape; otherwise both are ``(n, k)``.
        """
        initial = np.asarray(initial, dtype=float)
        binary = initial.ndim == 1
        if self.kind == "fixed_configuration":
            target = np.asarray(self.configuration, dtype=float)
            if target.shape != initial.shape:
                raise ValueError(
                    f"target has shape {target.shape}, initial has {initial.shape}"
                )
            return target
        if self.kind == "majority":
            return majority_target_binary(initial) if binary else majority_target(initial)
        if binary:
            return binary_run(BinaryRule.from_discrete(self.rule), initial, topology, steps)[-1]
        return dca_run(RuleTable.from_discrete(self.rule), initial, topology, steps)[-1]


def majority_target(config) -> np.ndarray:
    x = check_configuration(config)
    winner = int(np.argmax(x.sum(axis=0)))  # argmax returns the first maximum
    target = np.zeros_like(x)
    target[:, winner] = 1.0
    return target


def majority_target_binary(p_black) -> np.ndarray:
    p = np.asarray(p_black, dtype=float)
    black = p.sum() > (1.0 - p).sum()
    return np.full_like(p, 1.0 if black else 0.0)


def cross_entropy(target, actual) -> float:
    target = np.asarray(target, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if target.shape != actual.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {actual.shape}")
    mask = target != 0
    return float(-np.sum(target[mask] * np.log(np.maximum(actual[mask], LOG_CLAMP))))


def binary_cross_entropy(target, actual) -> float:
    target = np.asarray(target, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if target.shape != actual.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {actual.shape}")
    return cross_entropy(
        np.stack([1 - target, target], axis=-1), np.stack([1 - actual, actual], axis=-1)
    )


def loss_gradient(rule: Rule, initial, steps: int, target_spec: TargetSpec,
                  topology: Topology):
    """Loss after ``steps`` steps from ``initial`` and its gradient w.r.t. the rule weights.

    The gradient has the same shape as ``rule.weights``.
    """
    if steps < 1:
        raise ValueError("loss needs at least one step")
    if isinstance(rule, BinaryRule):
        trajectory, grad = binary_grad_run(rule, initial, topology, steps)
        final = trajectory[-1]
        target = target_spec.resolve(initial, steps, topology)
        q1 = np.maximum(final, LOG_CLAMP)
        q0 = np.maximum(1 - final, LOG_CLAMP)
        loss = binary_cross_entropy(target, final)
        coeff = -(target / q1 - (1 - target) / q0)
        return loss, coeff @ grad

    trajectory, grad = grad_run(rule, initial, topology, steps)
    final = trajectory[-1]
    target = target_spec.resolve(initial, steps, topology)
    loss = cross_entropy(target, final)
    coeff = -target / np.maximum(final, LOG_CLAMP)
    return loss, np.einsum("ga,gayb->yb", coeff, grad)


def loss_value(rule: Rule, initial, steps: int, target_spec: TargetSpec,
               topology: Topology) -> float:
    """Loss computed through the plain simulators only (no gradient propagation)."""
    target = target_spec.resolve(initial, steps, topology)
    if isinstance(rule, BinaryRule):
        return binary_cross_entropy(target, binary_run(rule, initial, topology, steps)[-1])
    return cross_entropy(target, dca_run(rule, initial, topology, steps)[-1])


def batch_loss_gradient(rule: Rule, batch: Sequence[np.ndarray], steps: int,
                        target_spec: TargetSpec, topology: Topology):
    """Sum of losses and gradients over the batch, accumulated in batch order."""
    total = 0.0
    grad = np.zeros_like(rule.require_weights())
    for initial in batch:
        loss, g = loss_gradient(rule, initial, steps, target_spec, topology)
        total += loss
        grad = grad + g
    return total, grad


@dataclass(frozen=True)
class TrainState:
    rule: Rule
    batch: tuple[np.ndarray, ...]
    rate: float = 0.5
    momentum: float = 0.0
    velocity: np.ndarray | None = None
    step_count: int = 0
    seed: int | None = None

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"descent rate must be > 0, got {self.rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        w = self.rule.require_weights()
        object.__setattr__(self, "batch", tuple(self.batch))
        if self.velocity is None:
            object.__setattr__(self, "velocity", np.zeros_like(w))
        elif np.shape(self.velocity) != w.shape:
            raise ValueError("velocity shape must match weights")


def train(state: TrainState, steps: int, target_spec: TargetSpec, iterations: int,
          topology: Topology,
          callbacks: Sequence[Callable[[int, float, TrainState], None]] = ()):
    """Gradient descent with classical momentum: ``v <- beta v + dE``, ``w <- w - eps v``.

    Returns ``(final_state, history)`` where ``history[i]`` is the batch loss
    at the weights used in iteration ``i``.
    """
    if not state.batch:
        raise ValueError("training batch is empty")
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    history: list[float] = []
    for i in range(iterations):
        loss, grad = batch_loss_gradient(state.rule, state.batch, steps, target_spec, topology)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at iteration {i}", i)
        bad = np.argwhere(~np.isfinite(grad))
        if bad.size:
            idx = tuple(int(j) for j in bad[0])
            raise TrainingError(f"non-finite gradient at weight {idx}, iteration {i}", i, idx)
        with np.errstate(over="ignore", invalid="ignore"):  # checked just below
            velocity = state.momentum * state.velocity + grad
            weights = state.rule.require_weights() - state.rate * velocity
        bad = np.argwhere(~np.isfinite(weights))
        if bad.size:
            idx = tuple(int(j) for j in bad[0])
            raise TrainingError(f"non-finite weight {idx} at iteration {i}", i, idx)
        history.append(loss)
        state = dataclasses.replace(
            state,
            rule=state.rule.with_weights(weights),
            velocity=velocity,
            step_count=state.step_count + 1,
        )
        for cb in callbacks:
            cb(i, loss, state)
        if i % 100 == 0:
            log.debug("iteration %d loss %.6g", i, loss)
    return state, history


def initial_weights(shape, seed=None, mode: str = "normal", scale: float = INIT_STD) -> np.ndarray:
    if mode == "zeros":
        return np.zeros(shape)
    if mode == "normal":
        return np.random.default_rng(seed).normal(0.0, scale, size=shape)
    raise ValueError(f"unknown init mode {mode!r}")


def random_states(count: int, n: int, k: int = 2, seed=None) -> list[np.ndarray]:
    """Uniformly random discrete states (the batch stand-in for all of ``A^G``)."""
    rng = np.random.default_rng(seed)
    return [rng.integers(0, k, size=n) for _ in range(count)]
