"""File formats: PGM space-time diagrams, rule files, configurations and loss logs."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .binary import BinaryRule
from .core import BINARY, Alphabet, DiscreteRule, RuleTable, Topology

LOGIT_CAP = 30.0
RULE_FORMAT = "dca-rule/1"
PARAMETERIZATIONS = ("softmax", "sigmoid")

Rule = Union[RuleTable, BinaryRule]


@dataclass(frozen=True)
class SpaceTimeDiagram:
    """Time-major stack of configurations, shape ``(steps + 1, n, k)``."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 3:
            raise ValueError(f"diagram must be (time, cells, symbols), got {rows.shape}")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_trajectory(cls, trajectory: Sequence[np.ndarray]) -> SpaceTimeDiagram:
        rows = [np.asarray(r, dtype=float) for r in trajectory]
        if rows and rows[0].ndim == 1:
            rows = [np.stack([1.0 - r, r], axis=-1) for r in rows]
        widths = {r.shape[0] for r in rows}
        if len(widths) > 1:
            raise ValueError(f"rows have different widths: {sorted(widths)}")
        return cls(np.stack(rows))

    @classmethod
    def from_states(cls, states, k: int = 2) -> SpaceTimeDiagram:
        states = np.asarray(states, dtype=np.int64)
        return cls(np.eye(k)[states])

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    @property
    def height(self) -> int:
        return self.rows.shape[0]


def pixel_values(diagram: SpaceTimeDiagram, black_symbol: int = 1) -> np.ndarray:
    """Gray levels: P(black) = 1 maps to 0, P(black) = 0 to 255."""
    v = 255.0 * (1.0 - diagram.rows[:, :, black_symbol])
    # v >= 0 up to float noise, so floor(v + 0.5) rounds half away from zero
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def render_pgm(diagram: SpaceTimeDiagram, black_symbol: int = 1) -> bytes:
    pixels = pixel_values(diagram, black_symbol)
    header = f"P5\n{diagram.width} {diagram.height}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def parse_pgm(data: bytes) -> np.ndarray:
    """Parse a binary PGM with maxval 255 into a ``(height, width)`` uint8 array."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise ValueError("truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    magic, width, height, maxval = tokens
    if magic != b"P5":
        raise ValueError(f"not a binary PGM: magic {magic!r}")
    if int(maxval) != 255:
        raise ValueError(f"unsupported maxval {int(maxval)}")
    width, height = int(width), int(height)
    body = data[pos + 1:]  # exactly one whitespace byte after maxval
    if len(body) != width * height:
        raise ValueError(f"expected {width * height} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def write_pgm(path, diagram: SpaceTimeDiagram, black_symbol: int = 1) -> None:
    with open(path, "wb") as fh:
        fh.write(render_pgm(diagram, black_symbol))


class RuleFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RuleFile:
    rule: Rule
    alphabet: Alphabet
    offsets: tuple[int, ...]


def _num(x: float) -> str:
    return format(float(x), ".17g")


def save_rule(rule: Rule, offsets: Sequence[int] = (-1, 0, 1),
              alphabet: Alphabet | None = None) -> str:
    """Serialize a rule as JSON text, one table row per line."""
    k = 2 if isinstance(rule, BinaryRule) else rule.k
    alphabet = alphabet or (BINARY if k == 2 else Alphabet(tuple(str(i) for i in range(k))))
    if alphabet.k != k:
        raise ValueError(f"alphabet has {alphabet.k} symbols, rule has {k}")
    if len(offsets) != rule.arity:
        raise ValueError(f"{len(offsets)} offsets for a rule of arity {rule.arity}")
    param = "sigmoid" if isinstance(rule, BinaryRule) else "softmax"
    head = [
        f'  "format": "{RULE_FORMAT}"',
        f'  "parameterization": "{param}"',
        f'  "alphabet": {json.dumps(list(alphabet.symbols))}',
        f'  "offsets": {json.dumps([int(s) for s in offsets])}',
    ]
    if rule.differentiable:
        w = rule.require_weights()
        if isinstance(rule, BinaryRule):
            lines = [f"    {_num(v)}" for v in w]
        else:
            lines = ["    [" + ", ".join(_num(v) for v in row) + "]" for row in w]
        head.append('  "deterministic": false')
        head.append('  "weights": [\n' + ",\n".join(lines) + "\n  ]")
    else:
        discrete = rule.to_discrete()
        rebuilt = (BinaryRule.from_discrete(discrete) if isinstance(rule, BinaryRule)
                   else RuleTable.from_discrete(discrete))
        own = rule.probs if isinstance(rule, BinaryRule) else rule.distributions
        other = rebuilt.probs if isinstance(rule, BinaryRule) else rebuilt.distributions
        if not np.array_equal(own, other):
            raise ValueError("only weight-parameterized or exactly deterministic rules can be saved")
        head.append('  "deterministic": true')
        head.append(f'  "outputs": {json.dumps(list(discrete.outputs))}')
    return "{\n" + ",\n".join(head) + "\n}\n"


def _line_of(text: str, key: str) -> int | None:
    m = re.search(rf'"{re.escape(key)}"', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_rule(text: str) -> RuleFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleFileError(exc.msg, exc.lineno) from None
    if not isinstance(doc, dict):
        raise RuleFileError("rule file must hold a JSON object", 1)

    def need(key):
        if key not in doc:
            raise RuleFileError(f"missing key {key!r}", 1)
        return doc[key]

    def fail(key, message):
        raise RuleFileError(message, _line_of(text, key))

    if need("format") != RULE_FORMAT:
        fail("format", f"unsupported format {doc['format']!r}")
    param = need("parameterization")
    if param not in PARAMETERIZATIONS:
        fail("parameterization", f"unknown parameterization {param!r}")
    try:
        alphabet = Alphabet(tuple(need("alphabet")))
        topology = Topology(1, tuple(need("offsets")))
    except (TypeError, ValueError) as exc:
        raise RuleFileError(str(exc), _line_of(text, "alphabet")) from None
    arity, k = topology.arity, alphabet.k
    if param == "sigmoid" and k != 2:
        fail("parameterization", "sigmoid rules need a two-symbol alphabet")
    deterministic = need("deterministic")
    if not isinstance(deterministic, bool):
        fail("deterministic", "'deterministic' must be true or false")

    try:
        if deterministic:
            discrete = DiscreteRule(tuple(need("outputs")), k=k, arity=arity)
            rule = (BinaryRule.from_discrete(discrete) if param == "sigmoid"
                    else RuleTable.from_discrete(discrete))
        else:
            w = np.asarray(need("weights"), dtype=float)
            expected = (k**arity,) if param == "sigmoid" else (k**arity, k)
            if w.shape != expected:
                fail("weights", f"weights have shape {w.shape}, expected {expected}")
            rule = BinaryRule.from_weights(w) if param == "sigmoid" else RuleTable.from_weights(w)
    except RuleFileError:
        raise
    except (TypeError, ValueError) as exc:
        key = "outputs" if deterministic else "weights"
        raise RuleFileError(str(exc), _line_of(text, key)) from None
    return RuleFile(rule, alphabet, topology.offsets)


def capped_weights(rule: DiscreteRule, parameterization: str = "sigmoid",
                   cap: float = LOGIT_CAP) -> np.ndarray:
    """Finite weights whose rule saturates to ``rule`` (±cap logits)."""
    out = np.asarray(rule.outputs)
    if parameterization == "sigmoid":
        return np.where(out == 1, cap, -cap).astype(float)
    if parameterization == "softmax":
        w = np.full((len(out), rule.k), -cap)
        w[np.arange(len(out)), out] = cap
        return w
    raise ValueError(f"unknown parameterization {parameterization!r}")


def save_configuration(config) -> str:
    x = np.asarray(config, dtype=float)
    rows = ["  [" + ", ".join(_num(v) for v in row) + "]" for row in x]
    return '{"cells": [\n' + ",\n".join(rows) + "\n]}\n"


def load_configuration(text: str) -> np.ndarray:
    """Read a configuration from JSON ``{"cells": [[...], ...]}`` or a bit string."""
    stripped = text.strip()
    if stripped and set(stripped) <= set("01"):
        return np.eye(2)[[int(c) for c in stripped]]
    try:
        doc = json.loads(text)
        cells = np.asarray(doc["cells"], dtype=float)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"unreadable configuration: {exc}") from None
    if cells.ndim != 2:
        raise ValueError("configuration cells must be a list of distributions")
    return cells


def write_loss_csv(history: Sequence[float]) -> bytes:
    lines = ["iteration,loss"] + [f"{i},{_num(v)}" for i, v in enumerate(history)]
    return ("\n".join(lines) + "\n").encode("ascii")


def read_loss_csv(data: bytes) -> list[float]:
    lines = data.decode("ascii").splitlines()
    if not lines or lines[0] != "iteration,loss":
        raise ValueError("missing 'iteration,loss' header")
    history = []
    for i, line in enumerate(lines[1:]):
        it, loss = line.split(",")
        if int(it) != i:
            raise ValueError(f"iteration {it} out of order at row {i + 1}")
        history.append(float(loss))
    return history
