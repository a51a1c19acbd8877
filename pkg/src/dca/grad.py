"""Forward-mode propagation of configuration gradients w.r.t. rule weights.

A configuration gradient is a dense array ``G`` of shape ``(n, k, P, k)``
with ``G[g, a, y, b] = d x(g)(a) / d w(y)(b)`` where ``P = k**|S|``. Each step
needs only the previous configuration and the previous gradient.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import (
    RuleTable,
    Topology,
    _settle,
    _check_rule_topology,
    _local_value,
    check_configuration,
    dca_run,
)

ZERO_SUM_TOL = 1e-9


def softmax_jacobian(rho_row) -> np.ndarray:
    """``J[a, b] = rho(a) * (delta(a, b) - rho(b))``."""
    p = np.asarray(rho_row, dtype=float)
    return np.diag(p) - np.outer(p, p)


def zero_gradient(rule: RuleTable, topology: Topology) -> np.ndarray:
    return np.zeros((topology.ring_size, rule.k, rule.n_patterns, rule.k))


def leave_one_out(factors: np.ndarray) -> np.ndarray:
    """``out[..., j]`` = product of ``factors[..., i]`` over ``i != j``.

    Built by re-multiplication rather than division so zero factors (delta
    configurations) are handled exactly.
    """
    m = factors.shape[-1]
    out = np.ones_like(factors)
    for j in range(m):
        for i in range(m):
            if i != j:
                out[..., j] *= factors[..., i]
    return out


def grad_step(rule: RuleTable, config, grad, topology: Topology):
    """One step of the (configuration, gradient) recursion.

    Returns the same configuration ``dca_step`` would produce together with
    the gradient of that new configuration with respect to every weight.
    """
    _check_rule_topology(rule, topology)
    rule.require_weights()
    x = check_configuration(config, k=rule.k, n=topology.ring_size)
    grad = np.asarray(grad, dtype=float)
    expected = (topology.ring_size, rule.k, rule.n_patterns, rule.k)
    if grad.shape != expected:
        raise ValueError(f"gradient has shape {grad.shape}, expected {expected}")

    new_x, factors, full, patterns = _local_value(rule, x, topology)
    new_x = _settle(new_x)
    rho = rule.distributions
    n, k, P, m = topology.ring_size, rule.k, rule.n_patterns, rule.arity

    # direct term: dρ(y')(a)/dw(y')(a') times the probability of seeing y'
    jac = np.stack([softmax_jacobian(row) for row in rho])  # (P, a, a')
    direct = np.einsum("gy,yab->gayb", full, jac)

    # indirect term through the neighbors' own gradients
    nbr = topology.neighbor_index()  # (n, m)
    # dfactor[g, y, j, y', a'] = d x(g + s_j)(y(s_j)) / d w(y')(a')
    dfactor = grad[nbr[:, None, :], patterns[None, :, :]]  # (n, P, m, P, k)
    others = leave_one_out(factors)  # (n, P, m)
    dprod = np.einsum("gyj,gyjzb->gyzb", others, dfactor)
    indirect = np.einsum("ya,gyzb->gazb", rho, dprod)

    new_grad = direct + indirect
    assert new_grad.shape == (n, k, P, k)
    return new_x, new_grad


def grad_run(rule: RuleTable, config, topology: Topology, steps: int,
             on_step: Callable[[int, np.ndarray, np.ndarray], None] | None = None):
    """Run ``steps`` steps from a zero gradient.

    Returns ``(trajectory, final_gradient)``. ``on_step(t, x_t, grad_t)`` is
    called for every ``t`` including 0 when given.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    x = check_configuration(config, k=rule.k, n=topology.ring_size)
    g = zero_gradient(rule, topology)
    trajectory = [x]
    if on_step is not None:
        on_step(0, x, g)
    for t in range(1, steps + 1):
        x, g = grad_step(rule, x, g, topology)
        trajectory.append(x)
        if on_step is not None:
            on_step(t, x, g)
    return trajectory, g


def zero_sum_violation(grad: np.ndarray) -> float:
    """Largest ``|sum_a d x(g)(a) / d w(y)(b)|`` over ``(g, y, b)``."""
    return float(np.abs(np.asarray(grad).sum(axis=1)).max(initial=0.0))


def central_difference(func: Callable[[np.ndarray], np.ndarray], weights,
                       h: float = 1e-6) -> np.ndarray:
    """Central differences of ``func`` with respect to every weight entry.

    The result has shape ``func(w).shape + weights.shape``.
    """
    w0 = np.array(weights, dtype=float)
    base = np.asarray(func(w0))
    out = np.zeros(base.shape + w0.shape)
    for idx in np.ndindex(*w0.shape):
        wp = w0.copy()
        wm = w0.copy()
        wp[idx] += h
        wm[idx] -= h
        out[(...,) + idx] = (np.asarray(func(wp)) - np.asarray(func(wm))) / (2 * h)
    return out


def fd_config_gradient(rule: RuleTable, config, topology: Topology, steps: int,
                       h: float = 1e-6) -> np.ndarray:
    """Finite-difference oracle for ``grad_run``, going only through ``dca_run``."""
    weights = rule.require_weights()

    def final(w):
        return dca_run(RuleTable.from_weights(w), config, topology, steps)[-1]

    return central_difference(final, weights, h)


def max_relative_error(actual, expected, rel: float = 1e-5, floor: float = 1e-8) -> float:
    """Error normalized so that a value <= ``rel`` means
    ``|actual - expected| <= max(rel * |expected|, floor)`` everywhere."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.maximum(np.abs(expected), floor / rel)
    return float((np.abs(actual - expected) / scale).max(initial=0.0))
