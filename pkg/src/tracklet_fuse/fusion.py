"""
Jersey-number identification by Dempster-Shafer evidence fusion.

The frame of discernment is the set of shirt numbers 1..99.  A subset is an
``int`` bitset with bit ``n`` set for number ``n``; bit 0 is never used.

Every thumbnail contributes one mass function built from the digits the
detector found inside the central player's box:

* no digit       -> vacuous mass, all weight on the whole frame
* one digit d    -> weight on "numbers containing d" (the other digit may
                    have been missed)
* two digits     -> weight on the single number they spell

Masses from many thumbnails are combined with Dempster's rule and the final
number is read off the pignistic distribution.

Mass values may be ``float`` or ``fractions.Fraction``; the combination code
never coerces, so rational inputs give exact results.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .model import DigitDetection, ImageBox, NumberVerdict, TrackletEntry

MIN_NUMBER, MAX_NUMBER = 1, 99
THETA = sum(1 << n for n in range(MIN_NUMBER, MAX_NUMBER + 1))
EMPTY = 0
MASS_TOL = 1e-9
TOTAL_CONFLICT_TOL = 1e-9
DEFAULT_DISCOUNT = 0.9
DEFAULT_THRESHOLD = 0.5

SubsetLike = Union[int, Iterable[int]]


class TotalConflict(ArithmeticError):
    """Two bodies of evidence share no compatible hypothesis."""

    def __init__(self, conflict):
        super().__init__(f"total conflict (K = {conflict})")
        self.conflict = conflict


class InvalidMass(ValueError):
    pass


def to_bits(subset: SubsetLike) -> int:
    if isinstance(subset, int):
        if subset & ~THETA:
            raise ValueError("subset has members outside 1..99")
        return subset
    bits = 0
    for n in subset:
        if not MIN_NUMBER <= n <= MAX_NUMBER:
            raise ValueError(f"{n} is not a shirt number")
        bits |= 1 << n
    return bits


@lru_cache(maxsize=4096)
def members(bits: int) -> tuple[int, ...]:
    out = []
    n = 0
    while bits:
        if bits & 1:
            out.append(n)
        bits >>= 1
        n += 1
    return tuple(out)


@lru_cache(maxsize=None)
def containing_digit(d: int) -> int:
    """Bitset of the numbers 1..99 whose decimal form contains digit ``d``."""
    return to_bits(n for n in range(MIN_NUMBER, MAX_NUMBER + 1) if str(d) in str(n))


class MassFunction(Mapping):
    """Immutable normalized mass function over subsets of 1..99.

    Keys are bitsets; ``MassFunction({frozenset({7}): 0.6, THETA: 0.4})``
    also accepts iterables of numbers as keys.
    """

    __slots__ = ("_m",)

    def __init__(self, focal: Mapping, *, check: bool = True):
        m = {}
        for k, v in focal.items():
            bits = to_bits(k)
            m[bits] = m.get(bits, 0) + v
        self._m = m
        if check:
            self._validate()

    @classmethod
    def _trusted(cls, m: dict) -> "MassFunction":
        obj = cls.__new__(cls)
        obj._m = m
        return obj

    @classmethod
    def vacuous(cls) -> "MassFunction":
        return cls._trusted({THETA: 1.0})

    def _validate(self):
        if not self._m:
            raise InvalidMass("no focal sets")
        for k, v in self._m.items():
            if k == EMPTY:
                raise InvalidMass("mass on the empty set")
            if not 0 < v <= 1:
                raise InvalidMass(f"focal mass {v} outside (0, 1]")
        total = sum(self._m.values())
        if abs(total - 1) > MASS_TOL:
            raise InvalidMass(f"masses sum to {total}")

    def __getitem__(self, key):
        return self._m[to_bits(key)]

    def get(self, key, default=0):
        return self._m.get(to_bits(key), default)

    def __iter__(self):
        return iter(self._m)

    def __len__(self):
        return len(self._m)

    def __eq__(self, other):
        if isinstance(other, MassFunction):
            return self._m == other._m
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._m.items()))

    def __repr__(self):
        parts = ", ".join(f"{_fmt_set(k)}: {v}" for k, v in sorted(self._m.items()))
        return f"MassFunction({{{parts}}})"

    @property
    def is_vacuous(self) -> bool:
        return len(self._m) == 1 and THETA in self._m

    def close_to(self, other: "MassFunction", tol: float = MASS_TOL) -> bool:
        keys = set(self._m) | set(other._m)
        return all(abs(self._m.get(k, 0) - other._m.get(k, 0)) <= tol for k in keys)

    def to_pairs(self) -> list[tuple[list[int], float]]:
        """Serializable form: ``(sorted member list, mass)`` pairs in canonical order."""
        return [(list(members(k)), v) for k, v in sorted(self._m.items(), key=lambda kv: members(kv[0]))]

    @classmethod
    def from_pairs(cls, pairs) -> "MassFunction":
        return cls({to_bits(ms): v for ms, v in pairs})


def _fmt_set(bits: int) -> str:
    if bits == THETA:
        return "Θ"
    ms = members(bits)
    return "{" + ",".join(map(str, ms)) + "}"


# -- evidence -----------------------------------------------------------------

def _layout_deviation(x: float, box: ImageBox) -> float:
    dx = abs(x - box.cx)
    return min(dx, abs(dx - 8.0))


def evidence_from_thumbnail(digits: Sequence[DigitDetection], central_box: ImageBox,
                            discount: float = DEFAULT_DISCOUNT) -> MassFunction:
    """Mass function carried by one thumbnail's digit detections.

    Only digits horizontally inside ``central_box`` count; bystanders' shirts
    elsewhere in the crop are ignored.  With more than two digits in the box,
    the two most confident are kept (ties go to the digit sitting closest to
    a printed-digit position, then to the leftmost).
    """
    if not 0.0 <= discount <= 1.0:
        raise ValueError(f"discount {discount} outside [0, 1]")
    used = [d for d in digits if central_box.contains_x(d.x)]
    if len(used) > 2:
        used.sort(key=lambda d: (-d.confidence, _layout_deviation(d.x, central_box), d.x))
        used = used[:2]
    if not used:
        return MassFunction.vacuous()
    if len(used) == 2:
        first, second = sorted(used, key=lambda d: d.x)
        if first.digit == 0:
            used = [second]
        else:
            focal = to_bits([10 * first.digit + second.digit])
            return _simple(focal, discount * first.confidence * second.confidence)
    d = used[0]
    return _simple(containing_digit(d.digit), discount * d.confidence)


def _simple(focal: int, weight) -> MassFunction:
    if weight <= 0 or focal == THETA:
        return MassFunction.vacuous()
    if weight >= 1:
        return MassFunction._trusted({focal: 1.0})
    return MassFunction._trusted({focal: weight, THETA: 1 - weight})


# -- combination --------------------------------------------------------------

def dempster_combine(m1: MassFunction, m2: MassFunction):
    """Dempster's rule.  Returns ``(combined, K)`` with ``K`` the conflict mass.

    Raises ``TotalConflict`` when ``K >= 1 - 1e-9``.
    """
    if m2.is_vacuous:
        return m1, 0
    if m1.is_vacuous:
        return m2, 0
    acc: dict[int, object] = {}
    conflict = 0
    for a, wa in m1._m.items():
        for b, wb in m2._m.items():
            c = a & b
            p = wa * wb
            if c:
                acc[c] = acc.get(c, 0) + p
            else:
                conflict += p
    if conflict >= 1 - TOTAL_CONFLICT_TOL or not acc:
        raise TotalConflict(conflict)
    # normalizing by the surviving mass rather than 1 - K avoids cancellation near K = 1
    norm = sum(acc.values())
    out = {k: v / norm for k, v in acc.items() if v}
    return MassFunction._trusted(out), conflict


def combine_all(masses: Iterable[MassFunction]):
    """Left fold of Dempster's rule.  Returns ``(combined, total_conflict)``
    where ``total_conflict = 1 - prod(1 - K_step)``."""
    it = iter(masses)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("combine_all needs at least one mass function") from None
    survive = 1
    for m in it:
        acc, k = dempster_combine(acc, m)
        if k:
            survive = survive * (1 - k)
    return acc, 1 - survive


def conflict(m1: MassFunction, m2: MassFunction) -> float:
    """Conflict mass ``K`` between two bodies of evidence; 1.0 on total conflict."""
    k = 0.0
    for a, wa in m1._m.items():
        for b, wb in m2._m.items():
            if not a & b:
                k += wa * wb
    return min(k, 1.0)


# -- queries and decision ------------------------------------------------------

def belief(m: MassFunction, subset: SubsetLike) -> float:
    a = to_bits(subset)
    return sum(v for k, v in m._m.items() if k & ~a == 0)


def plausibility(m: MassFunction, subset: SubsetLike) -> float:
    a = to_bits(subset)
    return sum(v for k, v in m._m.items() if k & a)


def pignistic(m: MassFunction) -> np.ndarray:
    """Pignistic probabilities as an array indexed by shirt number (index 0 unused)."""
    p = np.zeros(MAX_NUMBER + 1)
    for k, v in m._m.items():
        ms = members(k)
        p[list(ms)] += float(v) / len(ms)
    return p


def decide_number(m: MassFunction, threshold: float = DEFAULT_THRESHOLD,
                  total_conflict: float = 0.0) -> NumberVerdict:
    p = pignistic(m)
    best = float(p.max())
    winners = np.flatnonzero(p == best)
    if len(winners) > 1 or best < threshold:
        return NumberVerdict(None, best, float(total_conflict))
    return NumberVerdict(int(winners[0]), best, float(total_conflict))


def entry_evidence(e: TrackletEntry, discount: float = DEFAULT_DISCOUNT) -> MassFunction:
    th = e.thumbnail
    return evidence_from_thumbnail(th.digit_detections, th.player_detections[e.det_index].box, discount)


def fuse_entries(entries: Iterable[TrackletEntry], discount: float = DEFAULT_DISCOUNT):
    """Combined number evidence of tracklet entries, in the given order.

    Returns ``(mass, total_conflict)``; a fold that hits total conflict
    yields the vacuous mass with ``total_conflict = 1``.
    """
    ev = [m for m in (entry_evidence(e, discount) for e in entries) if not m.is_vacuous]
    if not ev:
        return MassFunction.vacuous(), 0.0
    try:
        return combine_all(ev)
    except TotalConflict:
        return MassFunction.vacuous(), 1.0


def identify(entries: Iterable[TrackletEntry], discount: float = DEFAULT_DISCOUNT,
             threshold: float = DEFAULT_THRESHOLD) -> tuple[NumberVerdict, MassFunction]:
    mass, k = fuse_entries(entries, discount)
    if k >= 1.0:
        return NumberVerdict(None, 0.0, 1.0), mass
    return decide_number(mass, threshold, k), mass


@dataclass(frozen=True)
class FusionParams:
    discount: float = DEFAULT_DISCOUNT
    threshold: float = DEFAULT_THRESHOLD
