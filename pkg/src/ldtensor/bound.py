"""The ``v_S`` recurrence and the low-degree lower-bound chain.

``v_S`` is the degree-free normalisation of ``w_U`` (``v_S = lambda^U r^(|S| falling) w_U``
for any generic ``U`` with ``cols(U) = S``).  It is computed here three ways:

* ``labeling``: sum over raw labelings ``ell`` in ``[r]^|S|``;
* ``patterns``: grouped by patterns with inclusion-exclusion weights;
* ``orbits``:   patterns grouped by column relabeling, for larger ``r``.

Path-sum forms live in :mod:`ldtensor.paths`.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterator, Sequence

from .combinat import (
    MultiIndex,
    injective_weight_sum,
    cols_of,
    enumerate_pattern_orbits,
    enumerate_patterns,
    even_cover,
    falling_factorial,
    in_L,
    lam_of_labeling,
    lam_of_support,
    labelings,
    multisets,
    xor_columns,
)
from .model import ModelParams, OmegaMode, OmegaSpec, ParameterError, parse_fraction
from .oracle import TARGET_SUPPORT

METHODS = ("patterns", "labeling", "orbits")


def _set_partitions(items: list[int]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


def c_value(S: MultiIndex, lam: Sequence[Fraction], method: str = "labeling") -> Fraction:
    """``c_S = sum_ell lambda^ell 1{S(ell) = {(1,1)}}``.

    ``method="partitions"`` groups labelings by the set partition they induce,
    which avoids the ``r^|S|`` enumeration.
    """
    if method != "partitions":
        return sum(
            (lam_of_labeling(lam, ell) for ell in labelings(len(lam), len(S)) if xor_columns(S, ell) == TARGET_SUPPORT),
            Fraction(0),
        )
    total = Fraction(0)
    idx = list(range(len(S)))
    for blocks in _set_partitions(idx):
        xors = []
        for b in blocks:
            x = 0
            for d in b:
                x ^= S[d]
            xors.append(x)
        lead = [i for i, x in enumerate(xors) if x == 1]
        if len(lead) != 1 or any(x != 0 for i, x in enumerate(xors) if i != lead[0]):
            continue
        rest = [len(b) for i, b in enumerate(blocks) if i != lead[0]]
        total += lam[0] ** len(blocks[lead[0]]) * injective_weight_sum(rest, lam[1:])
    return total


class VTable:
    """Memoised ``v_S`` for fixed ``(k, lambda)``.

    ``v_S`` does not depend on ``n`` or on the degree ``D``.
    """

    def __init__(self, params: ModelParams, method: str = "patterns"):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        self.params = params
        self.method = method
        self.values: dict[MultiIndex, Fraction] = {(): Fraction(0)}

    def __getitem__(self, S: MultiIndex) -> Fraction:
        return self.v(S)

    def v(self, S: MultiIndex) -> Fraction:
        S = tuple(S)
        if S not in self.values:
            self.values[S] = getattr(self, "_v_" + self.method)(S)
        return self.values[S]

    def _v_labeling(self, S: MultiIndex) -> Fraction:
        p = self.params
        total = c_value(S, p.lam)
        for ell in labelings(p.r, len(S)):
            if not in_L(S, ell, p.k):
                continue
            U = xor_columns(S, ell)
            Sp = cols_of(U, p.k)
            vp = self.v(Sp)
            if vp:
                total -= vp * lam_of_labeling(p.lam, ell) / (lam_of_support(p.lam, U) * falling_factorial(p.r, len(Sp)))
        return total

    def _v_patterns(self, S: MultiIndex) -> Fraction:
        p = self.params
        total = c_value(S, p.lam)
        for pi in enumerate_patterns(S, p.k, p.lam):
            vp = self.v(pi.target)
            if vp and pi.weight:
                total -= vp * pi.weight / falling_factorial(p.r, len(pi.target))
        return total

    def _v_orbits(self, S: MultiIndex) -> Fraction:
        p = self.params
        total = c_value(S, p.lam, method="partitions")
        for orbit in enumerate_pattern_orbits(S, p.k, p.lam):
            target = orbit.shape.target
            vp = self.v(target)
            if vp and orbit.weight:
                total -= vp * orbit.weight / falling_factorial(p.r, len(target))
        return total


def v_recurrence(params: ModelParams, S: MultiIndex, table: VTable | None = None) -> Fraction:
    if table is None:
        table = VTable(params)
    return table.v(S)


def even_cover_multisets(n: int, k: int, d: int) -> list[MultiIndex]:
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(n, k)
    return [tuple(S) for S in multisets(omega, d) if even_cover(S)]


def v_magnitude_bound(size: int) -> int:
    return (3 * size * size) ** size


def corr2_bound_v(params: ModelParams, D: int, table: VTable | None = None) -> Fraction:
    """``sum_{|S| <= D, P(S)} v_S^2 / (lambda_min^(2|S|) r^(|S| falling))``; other ``S`` have ``v_S = 0``."""
    if D > params.r:
        raise ParameterError(f"degree D={D} exceeds rank r={params.r}")
    if table is None:
        table = VTable(params)
    lmin2 = params.lambda_min**2
    total = Fraction(0)
    for d in range(1, D + 1):
        denom = lmin2**d * falling_factorial(params.r, d)
        for S in even_cover_multisets(params.n, params.k, d):
            v = table.v(S)
            total += v * v / denom
    return total


def corr_bound_v(params: ModelParams, D: int, table: VTable | None = None) -> float:
    """Square root of :func:`corr2_bound_v`, an upper bound on ``Corr``."""
    return math.sqrt(corr2_bound_v(params, D, table))


# -- theorem-scale evaluation ---------------------------------------------------


def _as_fraction(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(str(x))
    return parse_fraction(x)


def hard_assumption(n: int, k: int, D: int, r: int, lambda_min) -> bool:
    """``r >= 19 k^k D^(k+4) lambda_min^-2 n^(k/2)``, decided exactly by squaring."""
    lm = _as_fraction(lambda_min)
    lhs = Fraction(r) ** 2 * lm**4
    rhs = Fraction(19 * k**k * D ** (k + 4)) ** 2 * Fraction(n) ** k
    return lhs >= rhs


def hard_threshold_r(n: int, k: int, D: int, lambda_min) -> int:
    """Smallest integer ``r`` satisfying :func:`hard_assumption`."""
    lm = _as_fraction(lambda_min)
    X = Fraction(19 * k**k * D ** (k + 4)) ** 2 * Fraction(n) ** k / lm**4
    r = math.isqrt(X.numerator // X.denominator)
    while Fraction(r) ** 2 < X:
        r += 1
    return r


def theorem_series_terms(n: int, k: int, D: int, r: int, lambda_min) -> list[float]:
    """Terms ``n^((kd-1)/2) ((kd+3)/2)^(kd) (3d^2)^(2d) / (lambda_min^(2d) (r-d+1)^d)`` for ``d = 1..D``."""
    lm = float(_as_fraction(lambda_min))
    terms = []
    for d in range(1, D + 1):
        if r - d + 1 <= 0:
            terms.append(math.inf)
            continue
        log_t = (
            (k * d - 1) / 2 * math.log(n)
            + k * d * math.log((k * d + 3) / 2)
            + 2 * d * math.log(3 * d * d)
            - 2 * d * math.log(lm)
            - d * math.log(r - d + 1)
        )
        terms.append(math.exp(log_t) if log_t < 700 else math.inf)
    return terms


def theorem_bound(n: int, k: int, D: int, r: int, lambda_min) -> tuple[float, bool]:
    """Explicit ``Corr^2`` upper bound series and whether the rank assumption holds."""
    return math.fsum(theorem_series_terms(n, k, D, r, lambda_min)), hard_assumption(n, k, D, r, lambda_min)


def mmse_lower_bound(corr2_bound: float) -> float:
    return max(0.0, 1.0 - corr2_bound)


def even_cover_count_bound(n: int, k: int, d: int) -> float:
    return n ** ((k * d - 1) / 2) * ((k * d + 3) / 2) ** (k * d)


def even_cover_count_within_bound(n: int, k: int, d: int, count: int) -> bool:
    """``count <= n^((kd-1)/2) ((kd+3)/2)^(kd)`` decided exactly (both sides squared)."""
    rhs = Fraction(n) ** (k * d - 1) * Fraction(k * d + 3, 2) ** (2 * k * d)
    return Fraction(count) ** 2 <= rhs
