"""Discrete CAs, distribution-valued (differentiable) CAs and PCA sampling on rings.

Conventions used throughout the package:

* A configuration is a float array of shape ``(n, k)``; row ``g`` is the
  distribution over the alphabet at cell ``g``.
* A neighborhood pattern ``y`` in ``A^S`` is identified with its mixed-radix
  code, first offset most significant. For the binary alphabet with
  ``□ = 0`` and ``■ = 1`` this makes Wolfram numbering fall out directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-9
ROW_TOL = 1e-12


class SimplexError(ArithmeticError):
    """A distribution left the probability simplex beyond tolerance."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        symbols = tuple(str(s) for s in self.symbols)
        if len(symbols) < 2:
            raise ValueError("alphabet needs at least two symbols")
        if len(set(symbols)) != len(symbols):
            raise ValueError(f"alphabet symbols must be distinct: {symbols}")
        object.__setattr__(self, "symbols", symbols)

    @property
    def k(self) -> int:
        return len(self.symbols)

    def index(self, label: str) -> int:
        try:
            return self.symbols.index(label)
        except ValueError:
            raise ValueError(f"unknown symbol {label!r}") from None


BINARY = Alphabet(("0", "1"))


@dataclass(frozen=True)
class Topology:
    """Ring ``Z/nZ`` with a memory set of integer offsets."""

    ring_size: int
    offsets: tuple[int, ...] = (-1, 0, 1)

    def __post_init__(self):
        offsets = tuple(int(s) for s in self.offsets)
        if int(self.ring_size) < 1:
            raise ValueError(f"ring_size must be >= 1, got {self.ring_size}")
        if not offsets:
            raise ValueError("memory set must contain at least one offset")
        if len(set(offsets)) != len(offsets):
            raise ValueError(f"offsets must be distinct: {offsets}")
        object.__setattr__(self, "ring_size", int(self.ring_size))
        object.__setattr__(self, "offsets", offsets)

    @property
    def arity(self) -> int:
        return len(self.offsets)

    def neighbor(self, g: int, s: int) -> int:
        return (g + s) % self.ring_size

    def neighbor_index(self) -> np.ndarray:
        """``idx[g, j]`` is the cell read at offset ``offsets[j]`` from ``g``."""
        return self._neighbor_index

    @cached_property
    def _neighbor_index(self) -> np.ndarray:
        cells = np.arange(self.ring_size)[:, None]
        idx = (cells + np.asarray(self.offsets)[None, :]) % self.ring_size
        idx.setflags(write=False)
        return idx


def encode_pattern(symbols: Sequence[int], k: int) -> int:
    code = 0
    for a in symbols:
        a = int(a)
        if not 0 <= a < k:
            raise ValueError(f"symbol index {a} out of range for k={k}")
        code = code * k + a
    return code


def decode_pattern(code: int, k: int, arity: int) -> list[int]:
    if not 0 <= code < k**arity:
        raise ValueError(f"pattern code {code} out of range 0..{k**arity - 1}")
    out = [0] * arity
    for j in range(arity - 1, -1, -1):
        code, out[j] = divmod(code, k)
    return out


@lru_cache(maxsize=None)
def pattern_table(k: int, arity: int) -> np.ndarray:
    """All patterns as an ``(k**arity, arity)`` int array, row ``c`` = decode(c)."""
    codes = np.arange(k**arity)
    powers = k ** np.arange(arity - 1, -1, -1)
    table = (codes[:, None] // powers[None, :]) % k
    table.setflags(write=False)
    return table


def _neighborhood_codes(state: np.ndarray, topology: Topology, k: int) -> np.ndarray:
    digits = state[topology.neighbor_index()]
    powers = k ** np.arange(topology.arity - 1, -1, -1)
    return digits @ powers


@dataclass(frozen=True)
class DiscreteRule:
    """Local map ``A^S -> A`` stored as one output symbol per pattern code."""

    outputs: tuple[int, ...]
    k: int = 2
    arity: int = 3

    def __post_init__(self):
        outputs = tuple(int(a) for a in self.outputs)
        if len(outputs) != self.k**self.arity:
            raise ValueError(
                f"rule must define {self.k ** self.arity} outputs, got {len(outputs)}"
            )
        if any(not 0 <= a < self.k for a in outputs):
            raise ValueError("rule output outside alphabet")
        object.__setattr__(self, "outputs", outputs)

    def __call__(self, pattern: Sequence[int]) -> int:
        return self.outputs[encode_pattern(pattern, self.k)]


def wolfram_to_rule(number: int) -> DiscreteRule:
    if not 0 <= int(number) <= 255:
        raise ValueError(f"Wolfram rule number must be in 0..255, got {number}")
    return DiscreteRule(tuple((int(number) >> c) & 1 for c in range(8)), k=2, arity=3)


def rule_to_wolfram(rule: DiscreteRule) -> int:
    if rule.k != 2 or rule.arity != 3:
        raise ValueError("Wolfram numbering needs k=2 and three offsets")
    return sum(bit << c for c, bit in enumerate(rule.outputs))


def discrete_step(rule: DiscreteRule, state, topology: Topology) -> np.ndarray:
    state = np.asarray(state, dtype=np.int64)
    if state.shape != (topology.ring_size,):
        raise ValueError(
            f"state has shape {state.shape}, expected ({topology.ring_size},)"
        )
    if rule.arity != topology.arity:
        raise ValueError(f"rule arity {rule.arity} != |S| = {topology.arity}")
    codes = _neighborhood_codes(state, topology, rule.k)
    return np.asarray(rule.outputs, dtype=np.int64)[codes]


def discrete_run(rule: DiscreteRule, state, topology: Topology, steps: int) -> np.ndarray:
    """Space-time diagram of shape ``(steps + 1, n)``, row 0 = ``state``."""
    rows = [np.asarray(state, dtype=np.int64)]
    for _ in range(steps):
        rows.append(discrete_step(rule, rows[-1], topology))
    return np.stack(rows)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class RuleTable:
    """Stochastic local map ``rho : A^S -> simplex(A)``.

    Built either from real weights (``rho`` is their row-wise softmax) or
    directly from probability rows, which is how exact deterministic rules and
    hand-written tables containing 0/1 entries are represented. Only
    weight-parameterized tables can be differentiated.
    """

    distributions: np.ndarray
    k: int
    arity: int
    weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        rho = np.array(self.distributions, dtype=float)
        rho.setflags(write=False)
        if rho.shape != (self.k**self.arity, self.k):
            raise ValueError(
                f"distributions must have shape {(self.k ** self.arity, self.k)}, "
                f"got {rho.shape}"
            )
        if np.any(rho < 0) or np.any(rho > 1):
            raise ValueError("rule probabilities must lie in [0, 1]")
        if np.max(np.abs(rho.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValueError("each rule row must sum to 1")
        object.__setattr__(self, "distributions", rho)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, weights, k: int | None = None) -> RuleTable:
        w = np.asarray(weights, dtype=float)
        if w.ndim != 2:
            raise ValueError("weights must be a (patterns, k) matrix")
        k = w.shape[1] if k is None else k
        arity = _arity_for(w.shape[0], k)
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        return cls(softmax(w), k=k, arity=arity, weights=w)

    @classmethod
    def from_distributions(cls, rho) -> RuleTable:
        rho = np.asarray(rho, dtype=float)
        return cls(rho, k=rho.shape[1], arity=_arity_for(rho.shape[0], rho.shape[1]))

    @classmethod
    def from_discrete(cls, rule: DiscreteRule) -> RuleTable:
        rho = np.zeros((rule.k**rule.arity, rule.k))
        rho[np.arange(len(rule.outputs)), rule.outputs] = 1.0
        return cls(rho, k=rule.k, arity=rule.arity)

    @property
    def n_patterns(self) -> int:
        return self.k**self.arity

    @property
    def differentiable(self) -> bool:
        return self.weights is not None

    def with_weights(self, weights) -> RuleTable:
        return RuleTable.from_weights(weights, k=self.k)

    def require_weights(self) -> np.ndarray:
        if self.weights is None:
            raise ValueError("rule is given by probabilities, not weights")
        return self.weights

    def to_discrete(self) -> DiscreteRule:
        """Most probable output per pattern (ties to the lowest symbol)."""
        return DiscreteRule(
            tuple(int(a) for a in self.distributions.argmax(axis=1)),
            k=self.k,
            arity=self.arity,
        )


def _arity_for(n_patterns: int, k: int) -> int:
    arity, size = 0, 1
    while size < n_patterns:
        size *= k
        arity += 1
    if size != n_patterns or arity == 0:
        raise ValueError(f"{n_patterns} rows is not a power of k={k}")
    return arity


def delta_configuration(state, k: int = 2) -> np.ndarray:
    state = np.asarray(state, dtype=np.int64)
    if state.ndim != 1:
        raise ValueError("state must be one-dimensional")
    if np.any(state < 0) or np.any(state >= k):
        raise ValueError(f"state symbols must be in 0..{k - 1}")
    config = np.zeros((state.size, k))
    config[np.arange(state.size), state] = 1.0
    return config


def uniform_configuration(n: int, k: int = 2) -> np.ndarray:
    return np.full((n, k), 1.0 / k)


def from_black_probabilities(p_black) -> np.ndarray:
    """Two-symbol configuration from P(■) per cell."""
    p = np.asarray(p_black, dtype=float)
    return np.stack([1.0 - p, p], axis=-1)


def check_configuration(config, k: int | None = None, n: int | None = None,
                        tol: float = SIMPLEX_TOL) -> np.ndarray:
    x = np.asarray(config, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"configuration must be 2-D (cells, symbols), got {x.shape}")
    if k is not None and x.shape[1] != k:
        raise ValueError(f"configuration has {x.shape[1]} symbols, expected {k}")
    if n is not None and x.shape[0] != n:
        raise ValueError(f"configuration has {x.shape[0]} cells, expected {n}")
    _assert_simplex(x, tol)
    return x


def _assert_simplex(x: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    if not np.all(np.isfinite(x)):
        raise SimplexError("non-finite probability")
    if x.min(initial=0.0) < -tol or x.max(initial=0.0) > 1.0 + tol:
        raise SimplexError("probability outside [0, 1]")
    drift = np.abs(x.sum(axis=-1) - 1.0)
    if drift.size and drift.max() > tol:
        g = int(np.argmax(drift.reshape(-1)))
        raise SimplexError(f"cell {g} sums to {1.0 + drift.reshape(-1)[g]!r}")


def neighborhood_products(config: np.ndarray, topology: Topology, patterns: np.ndarray):
    """Per-cell factors of the independence product.

    Returns ``(factors, full)`` with ``factors[g, y, j] = x(g + s_j)(y(s_j))``
    and ``full[g, y]`` their product over ``j``.
    """
    gathered = config[topology.neighbor_index()]  # (n, m, k)
    m = topology.arity
    factors = gathered[:, np.arange(m)[None, :], patterns]  # (n, P, m)
    full = factors[:, :, 0].copy()
    for j in range(1, m):
        full *= factors[:, :, j]
    return factors, full


def _local_value(rule: RuleTable, config: np.ndarray, topology: Topology):
    patterns = pattern_table(rule.k, rule.arity)
    factors, full = neighborhood_products(config, topology, patterns)
    return full @ rule.distributions, factors, full, patterns


def _settle(out: np.ndarray) -> np.ndarray:
    """Check the simplex tolerance, then remove float rounding from the row sums.

    The row-sum error of the update is amplified roughly |S|-fold per step,
    so unchecked rounding grows geometrically over long runs. Anything
    beyond the tolerance still raises.
    """
    _assert_simplex(out)
    return out / out.sum(axis=1, keepdims=True)


def _check_rule_topology(rule: RuleTable, topology: Topology) -> None:
    if rule.arity != topology.arity:
        raise ValueError(f"rule arity {rule.arity} != |S| = {topology.arity}")


def dca_local(rule: RuleTable, neighborhood) -> np.ndarray:
    """New distribution for one cell given the distributions at its offsets."""
    x = np.asarray(neighborhood, dtype=float)
    if x.shape != (rule.arity, rule.k):
        raise ValueError(
            f"neighborhood must have shape {(rule.arity, rule.k)}, got {x.shape}"
        )
    patterns = pattern_table(rule.k, rule.arity)
    weight = np.prod(x[np.arange(rule.arity)[None, :], patterns], axis=1)
    out = weight @ rule.distributions
    _assert_simplex(out)
    return out


def dca_step(rule: RuleTable, config, topology: Topology) -> np.ndarray:
    _check_rule_topology(rule, topology)
    x = check_configuration(config, k=rule.k, n=topology.ring_size)
    out, *_ = _local_value(rule, x, topology)
    return _settle(out)


def dca_run(rule: RuleTable, config, topology: Topology, steps: int) -> list[np.ndarray]:
    if steps < 0:
        raise ValueError("steps must be non-negative")
    trajectory = [check_configuration(config, k=rule.k, n=topology.ring_size)]
    for _ in range(steps):
        trajectory.append(dca_step(rule, trajectory[-1], topology))
    return trajectory


def argmax_states(config) -> np.ndarray:
    return np.asarray(config).argmax(axis=-1)


def pca_sample(rule: RuleTable, state, topology: Topology, rng_seed=None,
               size: int | None = None) -> np.ndarray:
    """Sample the next state of a probabilistic CA from a discrete state.

    Each cell is drawn independently from ``rho`` at its neighborhood
    pattern. With ``size`` given, returns ``size`` independent draws stacked
    as ``(size, n)``.
    """
    _check_rule_topology(rule, topology)
    state = np.asarray(state, dtype=np.int64)
    if state.shape != (topology.ring_size,):
        raise ValueError(
            f"state has shape {state.shape}, expected ({topology.ring_size},)"
        )
    rng = np.random.default_rng(rng_seed)
    codes = _neighborhood_codes(state, topology, rule.k)
    cdf = np.cumsum(rule.distributions[codes], axis=1)  # (n, k)
    shape = (topology.ring_size,) if size is None else (size, topology.ring_size)
    u = rng.random(shape)
    # symbols whose cumulative mass is <= u are skipped
    drawn = (cdf[..., :-1] <= u[..., None]).sum(axis=-1)
    return drawn.astype(np.int64)
