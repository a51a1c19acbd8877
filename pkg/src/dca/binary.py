"""Two-symbol DCAs with one P(■) per cell and one sigmoid weight per pattern."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteRule, RuleTable, Topology, pattern_table

RANGE_SLACK = 1e-12


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class BinaryRule:
    probs: np.ndarray
    arity: int
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (2**self.arity,):
            raise ValueError(f"expected {2 ** self.arity} probabilities, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, weights) -> BinaryRule:
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("binary weights must be a vector")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        return cls(sigmoid(w), arity=_binary_arity(w.size), weights=w)

    @classmethod
    def from_probs(cls, probs) -> BinaryRule:
        p = np.asarray(probs, dtype=float)
        return cls(p, arity=_binary_arity(p.size))

    @classmethod
    def from_discrete(cls, rule: DiscreteRule) -> BinaryRule:
        if rule.k != 2:
            raise ValueError("binary rules need a two-symbol alphabet")
        return cls.from_probs(np.asarray(rule.outputs, dtype=float))

    @property
    def n_patterns(self) -> int:
        return 2**self.arity

    @property
    def differentiable(self) -> bool:
        return self.weights is not None

    def with_weights(self, weights) -> BinaryRule:
        return BinaryRule.from_weights(weights)

    def require_weights(self) -> np.ndarray:
        if self.weights is None:
            raise ValueError("rule is given by probabilities, not weights")
        return self.weights

    def to_discrete(self) -> DiscreteRule:
        """Threshold at 0.5: ρ(y) >= 0.5 maps to ■."""
        return DiscreteRule(tuple(int(p >= 0.5) for p in self.probs), k=2, arity=self.arity)

    def to_general(self) -> RuleTable:
        """Equivalent softmax rule with the □ logit pinned to 0."""
        if self.weights is not None:
            return RuleTable.from_weights(general_weights(self.weights))
        return RuleTable.from_distributions(np.stack([1.0 - self.probs, self.probs], axis=1))


def _binary_arity(n: int) -> int:
    arity = n.bit_length() - 1
    if n < 2 or 2**arity != n:
        raise ValueError(f"{n} weights is not a power of two")
    return arity


def general_weights(binary_weights) -> np.ndarray:
    w = np.asarray(binary_weights, dtype=float)
    return np.stack([np.zeros_like(w), w], axis=1)


def binary_weights(general) -> np.ndarray:
    """Inverse bridge; softmax is shift invariant so only the logit gap matters."""
    w = np.asarray(general, dtype=float)
    return w[:, 1] - w[:, 0]


def pair(x, y):
    """``<x, y> = x*y + (1-x)*(1-y)``: P(■) if the bit is set, else P(□)."""
    return x * y + (1 - x) * (1 - y)


def _check(rule: BinaryRule, config, topology: Topology) -> np.ndarray:
    if rule.arity != topology.arity:
        raise ValueError(f"rule arity {rule.arity} != |S| = {topology.arity}")
    p = np.asarray(config, dtype=float)
    if p.shape != (topology.ring_size,):
        raise ValueError(f"config has shape {p.shape}, expected ({topology.ring_size},)")
    return p


def _pair_factors(p: np.ndarray, topology: Topology):
    bits = pattern_table(2, topology.arity)  # (P, m)
    nbr = p[topology.neighbor_index()]  # (n, m)
    factors = pair(nbr[:, None, :], bits[None, :, :])  # (n, P, m)
    full = factors[:, :, 0].copy()
    for j in range(1, topology.arity):
        full *= factors[:, :, j]
    return bits, factors, full


def _assert_range(p: np.ndarray) -> None:
    if not np.all(np.isfinite(p)) or p.min() < -RANGE_SLACK or p.max() > 1 + RANGE_SLACK:
        raise ArithmeticError("binary configuration left [0, 1]")


def binary_step(rule: BinaryRule, config, topology: Topology) -> np.ndarray:
    p = _check(rule, config, topology)
    _, _, full = _pair_factors(p, topology)
    out = full @ rule.probs
    _assert_range(out)
    return out


def binary_run(rule: BinaryRule, config, topology: Topology, steps: int) -> list[np.ndarray]:
    trajectory = [_check(rule, config, topology)]
    for _ in range(steps):
        trajectory.append(binary_step(rule, trajectory[-1], topology))
    return trajectory


def binary_grad_step(rule: BinaryRule, config, grad, topology: Topology):
    """Advance ``(p, dp/dw)`` one step; ``grad`` has shape ``(n, 2**|S|)``."""
    p = _check(rule, config, topology)
    rho = rule.probs
    rule.require_weights()
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (topology.ring_size, rule.n_patterns):
        raise ValueError(
            f"gradient has shape {grad.shape}, expected "
            f"{(topology.ring_size, rule.n_patterns)}"
        )
    bits, factors, full = _pair_factors(p, topology)
    out = full @ rho
    _assert_range(out)

    direct = full * (rho * (1 - rho))[None, :]

    m = topology.arity
    others = np.ones_like(factors)
    for j in range(m):
        for i in range(m):
            if i != j:
                others[..., j] *= factors[..., i]
    sign = 2 * bits - 1  # d<x, y>/dx
    nbr_grad = grad[topology.neighbor_index()]  # (n, m, P')
    # sum_y rho(y) sum_j sign(y_j) * prod_{i != j} <x_i, y_i> * d x_j / d w(y')
    coeff = np.einsum("y,yj,gyj->gj", rho, sign, others)
    indirect = np.einsum("gj,gjz->gz", coeff, nbr_grad)
    return out, direct + indirect


def binary_grad_run(rule: BinaryRule, config, topology: Topology, steps: int):
    p = _check(rule, config, topology)
    g = np.zeros((topology.ring_size, rule.n_patterns))
    trajectory = [p]
    for _ in range(steps):
        p, g = binary_grad_step(rule, p, g, topology)
        trajectory.append(p)
    return trajectory, g
