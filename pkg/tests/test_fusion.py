from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from tracklet_fuse.fusion import (
    THETA, InvalidMass, MassFunction, TotalConflict, belief, combine_all, conflict, containing_digit,
    decide_number, dempster_combine, evidence_from_thumbnail, members, pignistic, plausibility, to_bits,
)
from tracklet_fuse.model import DigitDetection, ImageBox

BOX = ImageBox(128.0, 128.0, 60.0, 50.0)


def mass(*pairs):
    return MassFunction({(THETA if s == "T" else to_bits(s)): v for s, v in pairs})


# -- evidence ---------------------------------------------------------------------

def test_no_digits_is_vacuous():
    assert evidence_from_thumbnail([], BOX).is_vacuous


def test_two_digits_give_product_mass():
    m = evidence_from_thumbnail([DigitDetection(3, 140, 0.8), DigitDetection(2, 100, 0.9)], BOX, 0.9)
    assert m[{23}] == pytest.approx(0.648, abs=1e-12)
    assert m[THETA] == pytest.approx(0.352, abs=1e-12)


def test_single_digit_supports_numbers_containing_it():
    s7 = containing_digit(7)
    assert members(s7) == (7, 17, 27, 37, 47, 57, 67, 70, 71, 72, 73, 74, 75, 76, 77, 78, 79, 87, 97)
    m = evidence_from_thumbnail([DigitDetection(7, 128, 0.6)], BOX, 0.9)
    assert m[s7] == pytest.approx(0.54) and m[THETA] == pytest.approx(0.46)


def test_digits_outside_central_box_ignored():
    m = evidence_from_thumbnail([DigitDetection(7, 128, 0.6), DigitDetection(4, 30, 1.0)], BOX, 0.9)
    assert set(m) == {containing_digit(7), THETA}


def test_leading_zero_counts_as_single_digit():
    m = evidence_from_thumbnail([DigitDetection(0, 120, 0.9), DigitDetection(5, 136, 0.5)], BOX, 1.0)
    assert m == MassFunction({containing_digit(5): 0.5, THETA: 0.5})


def test_three_digits_keep_two_most_confident():
    digits = [DigitDetection(1, 110, 0.6), DigitDetection(2, 120, 0.9), DigitDetection(3, 136, 0.8)]
    m = evidence_from_thumbnail(digits, BOX, 1.0)
    assert m[{23}] == pytest.approx(0.72)


def test_discount_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        evidence_from_thumbnail([], BOX, 1.5)


def test_invalid_masses_rejected():
    with pytest.raises(InvalidMass):
        MassFunction({to_bits({7}): 0.5})
    with pytest.raises(InvalidMass):
        MassFunction({0: 0.5, THETA: 0.5})


# -- combination ------------------------------------------------------------------

def test_agreeing_evidence_reinforces():
    m, k = dempster_combine(mass(({7}, 0.6), ("T", 0.4)), mass(({7}, 0.5), ("T", 0.5)))
    assert k == 0
    assert m[{7}] == pytest.approx(0.8) and m[THETA] == pytest.approx(0.2)


def test_zadeh_case_exact():
    f = Fraction
    m1 = MassFunction({to_bits({1}): f(99, 100), to_bits({2}): f(1, 100)})
    m2 = MassFunction({to_bits({3}): f(99, 100), to_bits({2}): f(1, 100)})
    m, k = dempster_combine(m1, m2)
    assert k == f(9999, 10000)
    assert dict(m) == {to_bits({2}): 1}


def test_total_conflict_raises():
    with pytest.raises(TotalConflict):
        dempster_combine(mass(({7}, 1.0)), mass(({9}, 1.0)))
    assert conflict(mass(({7}, 1.0)), mass(({9}, 1.0))) == 1.0


def test_vacuous_identity_exact():
    m = mass(({7}, 0.3), ({7, 9}, 0.3), ("T", 0.4))
    assert dempster_combine(m, MassFunction.vacuous()) == (m, 0)
    assert dempster_combine(MassFunction.vacuous(), m) == (m, 0)


def test_fold_of_one_and_of_vacuous():
    m = mass(({5}, 0.4), ("T", 0.6))
    assert combine_all([m]) == (m, 0)
    assert combine_all([MassFunction.vacuous()] * 20)[0].is_vacuous
    with pytest.raises(ValueError):
        combine_all([])


def test_total_conflict_accumulates():
    a = mass(({7}, 0.5), ("T", 0.5))
    b = mass(({9}, 0.5), ("T", 0.5))
    _, k1 = dempster_combine(a, b)
    ab, _ = dempster_combine(a, b)
    _, k2 = dempster_combine(ab, a)
    assert combine_all([a, b, a])[1] == pytest.approx(1 - (1 - k1) * (1 - k2))


# random masses: focal sets drawn from a small universe so they often intersect
universe = st.frozensets(st.integers(1, 8), min_size=1, max_size=6)


@st.composite
def masses(draw, max_focal=6):
    sets = draw(st.lists(universe, min_size=1, max_size=max_focal, unique=True))
    if draw(st.booleans()):
        sets.append(frozenset(range(1, 100)))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=len(sets), max_size=len(sets))))
    w = w / w.sum()
    if len(sets) == 1:
        w[0] = 1.0
    return MassFunction({to_bits(s): float(v) for s, v in zip(sets, w)})


def combine_or_none(a, b):
    try:
        return dempster_combine(a, b)[0]
    except TotalConflict:
        return None


@given(masses(), masses())
def test_combination_commutes(a, b):
    ab, ba = combine_or_none(a, b), combine_or_none(b, a)
    assume(ab is not None)
    assert ab.close_to(ba, 1e-9)


@given(masses(), masses(), masses())
def test_combination_associates(a, b, c):
    ab = combine_or_none(a, b)
    bc = combine_or_none(b, c)
    assume(ab is not None and bc is not None)
    left, right = combine_or_none(ab, c), combine_or_none(a, bc)
    assume(left is not None and right is not None)
    assert left.close_to(right, 1e-9)


@given(masses(), masses())
def test_combination_is_normalized(a, b):
    m = combine_or_none(a, b)
    assume(m is not None)
    assert abs(sum(m.values()) - 1) <= 1e-9
    assert all(v > 0 for v in m.values()) and 0 not in m


@given(masses(), universe)
def test_belief_below_plausibility(m, subset):
    bel, pl = belief(m, subset), plausibility(m, subset)
    assert 0 <= bel <= pl + 1e-12 and pl <= 1 + 1e-12
    assert belief(m, THETA) == pytest.approx(1.0)
    assert plausibility(m, 0) == 0


@settings(max_examples=100)
@given(st.lists(masses(max_focal=3), min_size=5, max_size=5))
def test_fold_is_permutation_invariant(ms):
    try:
        ref = combine_all(ms)[0]
    except TotalConflict:
        assume(False)
    for order in list(permutations(range(5)))[::17]:
        try:
            got = combine_all([ms[i] for i in order])[0]
        except TotalConflict:
            continue
        assert got.close_to(ref, 1e-9)
        assert np.argmax(pignistic(got)) == np.argmax(pignistic(ref))


@given(st.integers(1, 99), st.floats(0.01, 0.99))
def test_repeated_evidence_is_monotone(k, c):
    m = MassFunction({to_bits({k}): c, THETA: 1 - c})
    acc = m
    prev = pignistic(acc)[k]
    for _ in range(6):
        acc, _ = dempster_combine(acc, m)
        cur = pignistic(acc)[k]
        assert cur > prev or cur == pytest.approx(1.0)
        prev = cur


# -- queries and decisions --------------------------------------------------------

def test_belief_and_plausibility_examples():
    m = mass(({7}, 0.8), ("T", 0.2))
    assert belief(m, {7}) == pytest.approx(0.8) and plausibility(m, {7}) == pytest.approx(1.0)
    s = MassFunction({containing_digit(7): 0.54, THETA: 0.46})
    assert belief(s, {7}) == 0 and plausibility(s, {7}) == pytest.approx(1.0)


def test_pignistic_examples():
    assert np.allclose(pignistic(MassFunction.vacuous())[1:], 1 / 99)
    assert pignistic(mass(({7}, 0.8), ("T", 0.2)))[7] == pytest.approx(0.8 + 0.2 / 99)
    assert round(float(pignistic(mass(({7}, 0.8), ("T", 0.2)))[7]), 5) == 0.80202
    assert pignistic(mass(({23}, 1.0)))[23] == 1


@given(masses())
def test_pignistic_sums_to_one(m):
    assert abs(pignistic(m).sum() - 1) <= 1e-9


def test_decision_examples():
    v = decide_number(mass(({23}, 0.648), ("T", 0.352)))
    assert v.outcome == 23 and v.confidence == pytest.approx(0.6516, abs=1e-4)
    assert decide_number(MassFunction.vacuous()).outcome is None
    assert decide_number(mass(({7}, 0.5), ({9}, 0.5))).outcome is None
    low = decide_number(mass(({7}, 0.4), ("T", 0.6)))
    assert low.outcome is None and low.confidence == pytest.approx(0.4 + 0.6 / 99)


def test_serialized_pairs_round_trip():
    m = mass(({23}, 0.648), ({2, 12}, 0.1), ("T", 0.252))
    assert MassFunction.from_pairs(m.to_pairs()) == m
    assert [ms for ms, _ in m.to_pairs()] == [list(range(1, 100)), [2, 12], [23]]
