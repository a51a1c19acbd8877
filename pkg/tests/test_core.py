import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dca.core import (
    Alphabet,
    DiscreteRule,
    RuleTable,
    SimplexError,
    Topology,
    dca_local,
    dca_run,
    dca_step,
    decode_pattern,
    delta_configuration,
    discrete_run,
    discrete_step,
    encode_pattern,
    from_black_probabilities,
    pca_sample,
    rule_to_wolfram,
    softmax,
    uniform_configuration,
    wolfram_to_rule,
)
from dca.interpolation import interpolated_table

B, W = 1, 0  # ■, □

# rule 30 written out case by case
RULE30_TABLE = {
    (B, B, B): W, (B, B, W): W, (B, W, B): W, (B, W, W): B,
    (W, B, B): B, (W, B, W): B, (W, W, B): B, (W, W, W): W,
}


def brute_step(table, state):
    n = len(state)
    return [table[(state[(g - 1) % n], state[g], state[(g + 1) % n])] for g in range(n)]


def bits(s):
    return np.array([int(c) for c in s])


def random_simplex(rng, shape):
    x = rng.random(shape)
    return x / x.sum(axis=-1, keepdims=True)


# -- types ------------------------------------------------------------------

def test_alphabet_invariants():
    a = Alphabet(("a", "b", "c"))
    assert a.k == 3
    assert [a.index(s) for s in a.symbols] == [0, 1, 2]
    with pytest.raises(ValueError):
        Alphabet(("a",))
    with pytest.raises(ValueError):
        Alphabet(("a", "a"))


def test_topology_invariants():
    t = Topology(5, (-1, 0, 1))
    assert t.neighbor(0, -1) == 4
    assert t.neighbor(4, 1) == 0
    assert t.neighbor_index()[0].tolist() == [4, 0, 1]
    for bad in [dict(ring_size=0), dict(ring_size=3, offsets=()),
                dict(ring_size=3, offsets=(1, 1))]:
        with pytest.raises(ValueError):
            Topology(**bad)


# -- pattern codes ----------------------------------------------------------

@pytest.mark.parametrize("symbols,k,code", [
    ([B, B, W], 2, 6),
    ([W, W, W], 2, 0),
    ([2, 0, 1], 3, 19),
])
def test_encode_examples(symbols, k, code):
    assert encode_pattern(symbols, k) == code
    assert decode_pattern(code, k, len(symbols)) == symbols


@given(st.integers(2, 4), st.integers(1, 4), st.data())
def test_decode_encode_roundtrip(k, arity, data):
    code = data.draw(st.integers(0, k**arity - 1))
    assert encode_pattern(decode_pattern(code, k, arity), k) == code


def test_codes_cover_range_exactly():
    codes = sorted(encode_pattern(p, 3) for p in itertools.product(range(3), repeat=3))
    assert codes == list(range(27))


@pytest.mark.parametrize("call", [
    lambda: encode_pattern([2], 2),
    lambda: encode_pattern([-1], 2),
    lambda: decode_pattern(8, 2, 3),
    lambda: decode_pattern(-1, 2, 3),
])
def test_pattern_range_errors(call):
    with pytest.raises(ValueError):
        call()


# -- Wolfram rules and the discrete simulator -------------------------------

def test_wolfram_30_matches_table():
    rule = wolfram_to_rule(30)
    for pattern, out in RULE30_TABLE.items():
        assert rule(pattern) == out
    assert rule_to_wolfram(rule) == 30


def test_wolfram_extremes():
    assert set(wolfram_to_rule(0).outputs) == {0}
    assert set(wolfram_to_rule(255).outputs) == {1}
    for bad in (-1, 256):
        with pytest.raises(ValueError):
            wolfram_to_rule(bad)


def test_discrete_step_rule30_hand_example():
    out = discrete_step(wolfram_to_rule(30), bits("00010000"), Topology(8))
    assert "".join(map(str, out)) == "00111000"


def test_rule30_triangle_matches_brute_force():
    n, steps = 31, 15
    state = [0] * n
    state[n // 2] = 1
    expected = [state]
    for _ in range(steps):
        expected.append(brute_step(RULE30_TABLE, expected[-1]))
    got = discrete_run(wolfram_to_rule(30), state, Topology(n), steps)
    assert got.tolist() == expected
    # the light cone grows one cell per side per step
    for t in range(steps + 1):
        on = np.flatnonzero(got[t])
        assert on.min() == n // 2 - t and on.max() == n // 2 + t


def test_identity_rule():
    identity = DiscreteRule(tuple((c >> 1) & 1 for c in range(8)))
    state = bits("0110100111")
    assert discrete_step(identity, state, Topology(10)).tolist() == state.tolist()


def test_discrete_step_length_mismatch():
    with pytest.raises(ValueError):
        discrete_step(wolfram_to_rule(30), bits("0101"), Topology(5))


# -- rule tables ------------------------------------------------------------

def test_rule_table_softmax_rows():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(8, 2))
    rule = RuleTable.from_weights(w)
    assert np.all(rule.distributions > 0)
    assert np.abs(rule.distributions.sum(axis=1) - 1).max() <= 1e-12
    assert np.allclose(rule.with_weights(w + 1).distributions, rule.distributions)
    moved = rule.with_weights(w * 2)
    assert not np.allclose(moved.distributions, rule.distributions)
    assert not rule.distributions.flags.writeable


def test_rule_table_rejects_bad_rows():
    with pytest.raises(ValueError):
        RuleTable.from_distributions(np.full((8, 2), 0.6))
    with pytest.raises(ValueError):
        RuleTable.from_weights(np.zeros((6, 2)))


# -- DCA local map -----------------------------------------------------------

def test_dca_local_deterministic_inputs_pick_rule_output():
    rule30 = wolfram_to_rule(30)
    table = RuleTable.from_discrete(rule30)
    for pattern in itertools.product((0, 1), repeat=3):
        out = dca_local(table, delta_configuration(pattern))
        assert out.tolist() == np.eye(2)[rule30(pattern)].tolist()


def test_dca_local_uniform_inputs():
    rng = np.random.default_rng(1)
    rule = RuleTable.from_weights(rng.normal(size=(27, 3)))
    out = dca_local(rule, uniform_configuration(3, 3))
    assert np.allclose(out, (1 / 3) ** 3 * rule.distributions.sum(axis=0), atol=1e-15)


def test_dca_local_interpolation_table_all_black():
    rule = interpolated_table("first", 0.5)
    out = dca_local(rule, from_black_probabilities([1.0, 1.0, 1.0]))
    assert out[1] == 0.0


def test_dca_local_arity_mismatch():
    with pytest.raises(ValueError):
        dca_local(RuleTable.from_discrete(wolfram_to_rule(30)), uniform_configuration(2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.floats(0, 1))
def test_dca_local_affine_in_each_cell(seed, j, lam):
    rng = np.random.default_rng(seed)
    rule = RuleTable.from_weights(rng.normal(size=(8, 2)))
    x = random_simplex(rng, (3, 2))
    p, q = random_simplex(rng, 2), random_simplex(rng, 2)
    xp, xq, xm = x.copy(), x.copy(), x.copy()
    xp[j], xq[j], xm[j] = p, q, lam * p + (1 - lam) * q
    mixed = dca_local(rule, xm)
    assert np.abs(mixed - (lam * dca_local(rule, xp) + (1 - lam) * dca_local(rule, xq))).max() <= 1e-12


# -- DCA global map -----------------------------------------------------------

def test_dca_step_deterministic_rule30():
    top = Topology(8)
    out = dca_step(RuleTable.from_discrete(wolfram_to_rule(30)), delta_configuration(bits("00010000")), top)
    assert out.tolist() == delta_configuration(bits("00111000")).tolist()


def test_dca_step_single_cell_ring():
    rng = np.random.default_rng(2)
    rule = RuleTable.from_weights(rng.normal(size=(2, 2)))
    p = 0.3
    out = dca_step(rule, [[p, 1 - p]], Topology(1, (0,)))
    assert np.allclose(out[0], p * rule.distributions[0] + (1 - p) * rule.distributions[1])


def test_dca_step_interpolation_endpoints():
    top = Topology(40)
    rng = np.random.default_rng(3)
    state = (rng.random(40) < 0.5).astype(int)
    for table, (lo, hi) in (("first", (30, 94)), ("second", (172, 174))):
        for alpha, number in ((0.0, lo), (1.0, hi)):
            got = dca_run(interpolated_table(table, alpha), delta_configuration(state), top, 20)
            want = discrete_run(wolfram_to_rule(number), state, top, 20)
            assert np.array_equal(np.stack(got), np.eye(2)[want])


def test_dca_step_length_mismatch():
    rule = RuleTable.from_discrete(wolfram_to_rule(30))
    with pytest.raises(ValueError):
        dca_step(rule, uniform_configuration(5), Topology(6))


def test_dca_step_rejects_off_simplex_input():
    rule = RuleTable.from_discrete(wolfram_to_rule(30))
    with pytest.raises(SimplexError):
        dca_step(rule, np.full((4, 2), 0.6), Topology(4))


def test_dca_run_lengths():
    rule = RuleTable.from_discrete(wolfram_to_rule(30))
    x = uniform_configuration(5)
    assert len(dca_run(rule, x, Topology(5), 0)) == 1
    assert np.array_equal(dca_run(rule, x, Topology(5), 0)[0], x)
    assert len(dca_run(rule, x, Topology(5), 7)) == 8


def test_dca_run_rule30_embedding_15_steps():
    n = 31
    state = np.zeros(n, dtype=int)
    state[n // 2] = 1
    got = dca_run(RuleTable.from_discrete(wolfram_to_rule(30)), delta_configuration(state), Topology(n), 15)
    want = discrete_run(wolfram_to_rule(30), state, Topology(n), 15)
    assert np.array_equal(np.stack(got), np.eye(2)[want])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 255), st.integers(0, 2**32 - 1), st.integers(3, 20))
def test_deterministic_embedding_property(number, seed, n):
    rng = np.random.default_rng(seed)
    state = rng.integers(0, 2, n)
    top = Topology(n)
    got = dca_run(RuleTable.from_discrete(wolfram_to_rule(number)), delta_configuration(state), top, 8)
    want = discrete_run(wolfram_to_rule(number), state, top, 8)
    assert np.array_equal(np.stack(got), np.eye(2)[want])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3), st.integers(1, 12))
def test_simplex_preserved(seed, k, n):
    rng = np.random.default_rng(seed)
    rule = RuleTable.from_weights(rng.normal(scale=3, size=(k**3, k)))
    x = random_simplex(rng, (n, k))
    for y in dca_run(rule, x, Topology(n), 5)[1:]:
        assert np.abs(y.sum(axis=1) - 1).max() <= 1e-9
        assert y.min() >= 0 and y.max() <= 1


def test_long_run_stays_on_simplex():
    # row-sum rounding would otherwise compound across steps
    rng = np.random.default_rng(3)
    state = (rng.random(64) < 0.5).astype(int)
    traj = dca_run(interpolated_table("second", 0.2), delta_configuration(state), Topology(64), 200)
    assert max(np.abs(x.sum(axis=1) - 1).max() for x in traj) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(0, 20))
def test_shift_equivariance(seed, n, r):
    rng = np.random.default_rng(seed)
    rule = RuleTable.from_weights(rng.normal(size=(8, 2)))
    top = Topology(n, (-1, 0, 2))
    x = random_simplex(rng, (n, 2))
    assert np.array_equal(dca_step(rule, np.roll(x, r, axis=0), top),
                          np.roll(dca_step(rule, x, top), r, axis=0))


def test_general_alphabet_and_offsets():
    # k=3, asymmetric memory set, compared against a direct sum over patterns
    rng = np.random.default_rng(4)
    top = Topology(7, (0, 2))
    rule = RuleTable.from_weights(rng.normal(size=(9, 3)))
    x = random_simplex(rng, (7, 3))
    out = dca_step(rule, x, top)
    for g in range(7):
        want = np.zeros(3)
        for y0, y1 in itertools.product(range(3), repeat=2):
            want += rule.distributions[3 * y0 + y1] * x[g, y0] * x[(g + 2) % 7, y1]
        assert np.allclose(out[g], want, atol=1e-15)


# -- probabilistic CA ---------------------------------------------------------

def test_pca_deterministic_rule_matches_discrete():
    rule = wolfram_to_rule(110)
    state = bits("0110100111010")
    for seed in range(5):
        got = pca_sample(RuleTable.from_discrete(rule), state, Topology(13), seed)
        assert got.tolist() == discrete_step(rule, state, Topology(13)).tolist()


def test_pca_reproducible():
    rule = RuleTable.from_weights(np.random.default_rng(0).normal(size=(8, 2)))
    state = bits("01101001")
    assert np.array_equal(pca_sample(rule, state, Topology(8), 7, size=10),
                          pca_sample(rule, state, Topology(8), 7, size=10))


def test_pca_uniform_rows_marginals():
    k, samples = 3, 60_000
    rule = RuleTable.from_weights(np.zeros((27, 3)))
    state = np.array([0, 1, 2, 2, 1])
    draws = pca_sample(rule, state, Topology(5), 11, size=samples)
    sigma = np.sqrt((1 / k) * (1 - 1 / k) / samples)
    for a in range(k):
        freq = (draws == a).mean(axis=0)
        assert np.all(np.abs(freq - 1 / k) <= 3 * sigma)


def test_pca_marginal_matches_dca_step():
    samples = 100_000
    rng = np.random.default_rng(5)
    rule = RuleTable.from_weights(rng.normal(size=(8, 2)))
    state = bits("01101001")
    top = Topology(8)
    exact = dca_step(rule, delta_configuration(state), top)[:, 1]
    freq = pca_sample(rule, state, top, 13, size=samples).mean(axis=0)
    sigma = np.sqrt(exact * (1 - exact) / samples)
    assert np.all(np.abs(freq - exact) <= 3 * sigma)


def test_softmax_is_shift_invariant_and_normalized():
    z = np.array([[1000.0, 999.0], [-5.0, 3.0]])
    s = softmax(z)
    assert np.allclose(s.sum(axis=1), 1)
    assert np.allclose(softmax(z - 7), s)
