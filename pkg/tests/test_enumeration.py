from collections import Counter
from itertools import product
from math import comb, e

import numpy as np
import pytest

from chaoslab.errors import BudgetExceeded, InvalidArgument
from chaoslab.lde import IndexTriple, Oracle, enumerate_survivors, oracle_field, paper_bound
from chaoslab.lde import oracle_vanishes, survives
from chaoslab.lde.enumeration import (binom, canonical_codes, check_budget, compositions,
                                      decode, iter_triples, restricted_count,
                                      restricted_count_paper, stars_and_bars, survives_batch)

FIELD = oracle_field(0)


def rule_by_hand(I, J, K):
    """Straight transcription of the two vanishing conditions."""
    count = Counter(I + J + K)
    isolated = any(count[i] == 1 for i in I)
    paired = any(j != k and count[j] == 1 and count[k] == 1 for j, k in zip(J, K))
    return not (isolated or paired)


# -- survives -------------------------------------------------------------------

def test_all_equal_triple_survives():
    t = IndexTriple((1, 1), (1, 1), (1, 1), 3)
    assert survives(t)
    assert not oracle_vanishes(t, FIELD)


def test_repeated_pairs_survive():
    assert survives(IndexTriple((1, 2), (1, 2), (1, 2), 3))


def test_distinct_blocks_survive():
    # 2 and 3 each occur twice, so no slot has two singletons
    assert survives(IndexTriple((1, 1), (2, 2), (3, 3), 3))


def test_isolated_i_is_rejected_and_vanishes():
    t = IndexTriple((1, 2), (3, 3), (3, 3), 3)
    assert not survives(t)
    assert oracle_vanishes(t, FIELD)


def test_singleton_pair_is_rejected_and_vanishes():
    t = IndexTriple((1, 1), (2, 1), (3, 1), 3)
    assert not survives(t)
    assert oracle_vanishes(t, FIELD)


def test_batch_rule_matches_transcription():
    rng = np.random.default_rng(0)
    for N, m in [(3, 1), (4, 2), (5, 3)]:
        T = rng.integers(0, N, (300, 3, 2 * m))
        got = survives_batch(T, N)
        want = [rule_by_hand(*(tuple(r) for r in t)) for t in T]
        assert got.tolist() == want


def test_triple_validation():
    with pytest.raises(InvalidArgument):
        IndexTriple((1,), (1,), (1,), 2)
    with pytest.raises(InvalidArgument):
        IndexTriple((1, 3), (1, 1), (1, 1), 2)
    with pytest.raises(InvalidArgument):
        IndexTriple((1, 1), (1, 1), (1, 1, 1, 1), 2)


def test_multiplicities():
    assert IndexTriple((1, 3, 3, 1), (1,) * 4, (1,) * 4, 3).multiplicities == (2, 0, 2)


# -- enumeration counts ------------------------------------------------------------

@pytest.mark.parametrize("N,m,count", [(2, 1, 60), (3, 1, 531), (4, 1, 2056), (2, 2, 4088)])
def test_frozen_survivor_counts(N, m, count):
    assert enumerate_survivors(N, m).survivors == count


def test_small_count_by_brute_force():
    n = sum(rule_by_hand(t[0:2], t[2:4], t[4:6]) for t in product(range(1, 4), repeat=6))
    assert n == 531


def test_iter_triples_covers_everything_once():
    rows = np.concatenate([b.reshape(len(b), -1) for b in iter_triples(3, 1)])
    assert len(rows) == 3**6
    assert len({r.tobytes() for r in rows}) == 3**6


def test_paper_bound_value():
    assert paper_bound(2, 1) == pytest.approx(256 * e, rel=1e-15)
    assert enumerate_survivors(2, 1).survivors <= paper_bound(2, 1)


def test_budget_refusal_explains_arithmetic():
    with pytest.raises(BudgetExceeded) as exc:
        check_budget(5, 2)
    assert "5^12" in str(exc.value)
    with pytest.raises(BudgetExceeded):
        enumerate_survivors(5, 2)


# -- counting identities --------------------------------------------------------

def test_stars_and_bars_small():
    sols = set(compositions(2, 3))
    assert sols == {(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)}
    assert stars_and_bars(2, 3) == 6


@pytest.mark.parametrize("total,parts", [(2, 1), (4, 2), (4, 5), (6, 3), (8, 4)])
def test_stars_and_bars_matches_direct(total, parts):
    assert sum(1 for _ in compositions(total, parts)) == stars_and_bars(total, parts) == comb(
        total + parts - 1, parts - 1)


def test_restricted_counts():
    assert list(compositions(4, 2, 2)) == [(2, 2)]
    assert restricted_count(4, 2) == 1
    # the displayed formula gives C(-1, 1) = 0 here
    assert restricted_count_paper(4, 2) == 0
    for two_m in range(2, 13, 2):
        for s in range(1, two_m // 2 + 1):
            assert sum(1 for _ in compositions(two_m, s, 2)) == restricted_count(two_m, s)


def test_binomial_convention():
    assert binom(-1, 1) == 0 and binom(2, 3) == 0 and binom(4, 2) == 6 and binom(0, 0) == 1


# -- oracle -------------------------------------------------------------------------

def test_canonical_codes_are_label_invariant():
    T = np.array([[[0, 1], [2, 2], [1, 0]]])
    swapped = np.array([[[1, 0], [2, 2], [0, 1]]])  # slots reordered
    relabel = np.array([[[2, 0], [1, 1], [0, 2]]])  # values permuted
    jk = np.array([[[0, 1], [1, 2], [2, 0]]])  # j and k exchanged in both slots
    codes = canonical_codes(np.concatenate([T, swapped, relabel, jk]), 3)
    assert len(set(codes.tolist())) == 1
    back = decode(codes[0], 3, 1)
    assert canonical_codes(back[None], 3)[0] == codes[0]


def test_oracle_requires_resolution():
    with pytest.raises(InvalidArgument):
        Oracle(FIELD, quad_n=16)


@pytest.mark.parametrize("N,m", [(2, 1), (3, 1), (4, 1), (2, 2)])
def test_rule_is_sound(N, m):
    rep = enumerate_survivors(N, m, field=FIELD)
    assert rep.oracle["rejected_nonvanishing"] == 0
    assert rep.sound and rep.identity_checks_passed


def test_report_flags_paper_restricted_mismatch():
    rep = enumerate_survivors(2, 2)
    assert rep.restricted_ok and not rep.paper_restricted_agrees
