"""Rule tables that blend two ECAs differing in a single output.

Each table lists P(■) per neighborhood code with ``None`` marking the
blended entry; ``alpha`` fills it in. ``alpha = 0`` and ``alpha = 1`` give
the two endpoint ECAs exactly.
"""

from __future__ import annotations

from .binary import BinaryRule
from .core import RuleTable

# index = pattern code (■ = 1, left neighbor most significant)
TABLES: dict[str, tuple[float | None, ...]] = {
    # ■■□ blended between rule 30 and rule 94
    "first": (0.0, 1.0, 1.0, 1.0, 1.0, 0.0, None, 0.0),
    # □□■ blended between rule 172 and rule 174
    "second": (0.0, None, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0),
}

ENDPOINTS = {"first": (30, 94), "second": (172, 174)}

ALPHAS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def interpolated_probs(table, alpha: float) -> list[float]:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if isinstance(table, str):
        try:
            table = TABLES[table]
        except KeyError:
            raise ValueError(f"unknown table {table!r}; known: {sorted(TABLES)}") from None
    if sum(v is None for v in table) != 1:
        raise ValueError("table must contain exactly one blended (null) entry")
    return [float(alpha) if v is None else float(v) for v in table]


def interpolated_rule(table, alpha: float) -> BinaryRule:
    return BinaryRule.from_probs(interpolated_probs(table, alpha))


def interpolated_table(table, alpha: float) -> RuleTable:
    return interpolated_rule(table, alpha).to_general()
