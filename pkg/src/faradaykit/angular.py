"""Exact angular-momentum algebra: Wigner 6j symbols on half-integers.

Angular momenta are carried as exact half-integers (twice-values stored as
ints) so triangle selection rules are decided without float comparisons.
The Racah single sum and triangle coefficients are evaluated in exact
rational arithmetic (the alternating sum cancels catastrophically in
floating point); the only rounding is the final square root, keeping every
value correct to well below 1e-14 relative. A small cache makes repeated
coupling-coefficient lookups cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache


@dataclass(frozen=True, order=True)
class HalfInt:
    """Exact half-integer angular momentum, stored as twice its value."""

    twice_value: int

    @classmethod
    def of(cls, j) -> "HalfInt":
        """Coerce an int, float or HalfInt to an exact half-integer.

        Raises ValueError if ``j`` is not within 1e-9 of a multiple of 1/2.
        """
        if isinstance(j, HalfInt):
            return j
        twice = 2 * j
        rounded = round(twice)
        if abs(twice - rounded) > 1e-9:
            raise ValueError(f"{j!r} is not a half-integer")
        return cls(int(rounded))

    def __float__(self) -> float:
        return self.twice_value / 2.0

    def __str__(self) -> str:
        if self.twice_value % 2 == 0:
            return str(self.twice_value // 2)
        return f"{self.twice_value}/2"


def _twice(j) -> int:
    return HalfInt.of(j).twice_value


def _triangle_ok(ta: int, tb: int, tc: int) -> bool:
    # args are twice-values; parity condition makes a+b+c integral
    if (ta + tb + tc) % 2 != 0:
        return False
    return abs(ta - tb) <= tc <= ta + tb


_FAC = math.factorial


def _delta_squared(ta: int, tb: int, tc: int) -> Fraction:
    # squared triangle coefficient Delta(a,b,c)^2; args are twice-values
    return Fraction(
        _FAC((ta + tb - tc) // 2) * _FAC((ta - tb + tc) // 2)
        * _FAC((-ta + tb + tc) // 2),
        _FAC((ta + tb + tc) // 2 + 1),
    )


@lru_cache(maxsize=100_000)
def _wigner6j_twice(t1: int, t2: int, t3: int, t4: int, t5: int, t6: int) -> float:
    triads = ((t1, t2, t3), (t1, t5, t6), (t4, t2, t6), (t4, t5, t3))
    for ta, tb, tc in triads:
        if not _triangle_ok(ta, tb, tc):
            return 0.0

    # Racah sum limits, in twice-value units
    tT = (t1 + t2 + t3, t1 + t5 + t6, t4 + t2 + t6, t4 + t5 + t3)
    tQ = (t1 + t2 + t4 + t5, t2 + t3 + t5 + t6, t3 + t1 + t6 + t4)

    total = Fraction(0)
    for tt in range(max(tT), min(tQ) + 2, 2):
        t = tt // 2
        den = 1
        for x in tT:
            den *= _FAC((tt - x) // 2)
        for x in tQ:
            den *= _FAC((x - tt) // 2)
        term = Fraction(_FAC(t + 1), den)
        total += -term if t % 2 else term

    value_sq = total * total
    for tri in triads:
        value_sq *= _delta_squared(*tri)
    magnitude = math.sqrt(value_sq)
    return -magnitude if total < 0 else magnitude


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6j symbol {j1 j2 j3; j4 j5 j6}.

    Arguments may be ints, floats on the half-integer grid, or HalfInt.
    Returns 0.0 when any triad violates a triangle condition (that is a
    valid value, not an error).
    """
    tj = tuple(_twice(j) for j in (j1, j2, j3, j4, j5, j6))
    for t in tj:
        if t < 0:
            raise ValueError("angular momenta must be >= 0")
    return _wigner6j_twice(*tj)


def sixj_orthogonality_defect(j1, j2, j3p, j3) -> float:
    """Deviation of the 6j orthogonality sum from delta(j3, j3p).

    Returns |sum_j (2j+1)(2j3+1) {j1 j2 j; j1 j2 j3}{j1 j2 j; j1 j2 j3p}
    - delta(j3, j3p)|.
    """
    t1, t2 = _twice(j1), _twice(j2)
    t3, t3p = _twice(j3), _twice(j3p)
    if not (_triangle_ok(t1, t2, t3) and _triangle_ok(t1, t2, t3p)):
        raise ValueError("j3 and j3p must each form a triangle with (j1, j2)")
    acc = 0.0
    for tj in range(abs(t1 - t2), t1 + t2 + 2, 2):
        j = HalfInt(tj)
        acc += (
            (tj + 1)
            * (t3 + 1)
            * wigner6j(j1, j2, j, j1, j2, j3)
            * wigner6j(j1, j2, j, j1, j2, j3p)
        )
    expected = 1.0 if t3 == t3p else 0.0
    return abs(acc - expected)
