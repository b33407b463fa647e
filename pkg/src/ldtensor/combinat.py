"""Multiset, labeling and pattern combinatorics.

Conventions used throughout the package:

* a multi-index ``S`` is a tuple of subset bitmasks in canonical order
  (see :func:`ldtensor.model.subset_key`);
* a support set ``U`` of ``[n] x [r]`` is a tuple of ``(column, bitmask)`` pairs,
  sorted by column, holding only the nonempty columns;
* a labeling is a tuple of column labels in ``1..r`` aligned with ``S``;
* a pattern entry is either a label in ``1..r`` or :data:`STAR` (``0``).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Sequence

from .model import CapacityError, DomainError, elements_of, mask_of, subset_key

STAR = 0
TARGET_MASK = 1  # the set {1}

MAX_PATTERN_LENGTH = 6
MAX_PATTERN_RANK = 6

MultiIndex = tuple[int, ...]
Support = tuple[tuple[int, int], ...]


def canonical(masks: Iterable[int]) -> MultiIndex:
    return tuple(sorted(masks, key=subset_key))


def make_multi(sets: Iterable[Iterable[int]]) -> MultiIndex:
    """Build a canonical multi-index from 1-based element collections."""
    masks = [mask_of(s) for s in sets]
    if any(m == 0 for m in masks):
        raise DomainError("multi-index entries must be nonempty")
    return canonical(masks)


def make_support(columns: dict[int, Iterable[int]]) -> Support:
    out = []
    for j, elems in columns.items():
        m = elems if isinstance(elems, int) else mask_of(elems)
        if m:
            out.append((j, m))
    return tuple(sorted(out))


def multi_key(S: MultiIndex):
    return (len(S), tuple(subset_key(m) for m in S))


def support_key(U: Support):
    return (len(U), tuple((j, subset_key(m)) for j, m in U))


def xor_all(S: MultiIndex) -> int:
    x = 0
    for m in S:
        x ^= m
    return x


def even_cover(S: MultiIndex) -> bool:
    """P(S): under the all-ones labeling the single column XORs to exactly ``{1}``."""
    return xor_all(S) == TARGET_MASK


def xor_columns(S: MultiIndex, ell: Sequence[int]) -> Support:
    if len(S) != len(ell):
        raise DomainError(f"labeling length {len(ell)} != |S| = {len(S)}")
    cols: dict[int, int] = {}
    for I, j in zip(S, ell):
        cols[j] = cols.get(j, 0) ^ I
    return tuple(sorted((j, m) for j, m in cols.items() if m))


def is_generic(U: Support, k: int, D: int | None = None) -> bool:
    if any(m.bit_count() > k for _, m in U):
        return False
    return D is None or len(U) <= D


def cols_of(U: Support, k: int, D: int | None = None) -> MultiIndex:
    if not is_generic(U, k, D):
        raise DomainError(f"support set is not generic (k={k}, D={D})")
    return canonical(m for _, m in U)


@lru_cache(maxsize=None)
def falling_factorial(r: int, d: int) -> int:
    out = 1
    for i in range(d):
        out *= r - i
    return out


def lam_of_labeling(lam: Sequence[Fraction], ell: Sequence[int]) -> Fraction:
    out = Fraction(1)
    for j in ell:
        out *= lam[j - 1]
    return out


def lam_of_support(lam: Sequence[Fraction], U: Support) -> Fraction:
    out = Fraction(1)
    for j, _ in U:
        out *= lam[j - 1]
    return out


def labelings(r: int, length: int) -> Iterator[tuple[int, ...]]:
    return itertools.product(range(1, r + 1), repeat=length)


def multisets(omega: Sequence[int], d: int) -> Iterator[MultiIndex]:
    """All size-``d`` multisets over ``omega`` (which must be canonically sorted)."""
    return itertools.combinations_with_replacement(omega, d)


def in_L(S: MultiIndex, ell: Sequence[int], k: int) -> bool:
    """Whether ``ell`` contributes to the v-recurrence: ``S(ell)`` generic with fewer columns than ``|S|``."""
    U = xor_columns(S, ell)
    return is_generic(U, k) and len(U) < len(S)


# -- patterns --------------------------------------------------------------


@dataclass(frozen=True)
class Pattern:
    entries: tuple[int, ...]
    columns: tuple[tuple[int, int], ...]  # every concrete label j with S(pi)_j, empty included
    m: int
    r_pi: int
    s_pi: int
    lam: Fraction
    target: MultiIndex

    @property
    def weight(self) -> Fraction:
        """``m_pi * (r_pi falling s_pi) * lambda^(pi)``, the label-sum factor of one step."""
        return self.m * falling_factorial(self.r_pi, self.s_pi) * self.lam

    def column(self, j: int) -> int:
        for c, m in self.columns:
            if c == j:
                return m
        return 0

    def concrete_labels(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.columns)


def _pattern_columns(S: MultiIndex, entries: Sequence[int]) -> dict[int, int]:
    cols: dict[int, int] = {}
    for I, p in zip(S, entries):
        if p != STAR:
            cols[p] = cols.get(p, 0) ^ I
    return cols


def pattern_is_valid(S: MultiIndex, entries: Sequence[int], k: int) -> bool:
    counts: dict[int, int] = {}
    for p in entries:
        if p != STAR:
            counts[p] = counts.get(p, 0) + 1
    if not counts:
        return False
    if any(c < 2 for c in counts.values()):
        return False
    return all(m.bit_count() <= k for m in _pattern_columns(S, entries).values())


def build_pattern(S: MultiIndex, entries: Sequence[int], r: int, lam: Sequence[Fraction] | None) -> Pattern:
    entries = tuple(entries)
    cols = _pattern_columns(S, entries)
    m = 1
    for j, col in cols.items():
        mj = sum(1 for I, p in zip(S, entries) if p == j and I == col)
        m *= 1 - mj
    nonempty = [j for j, col in cols.items() if col]
    starred = [I for I, p in zip(S, entries) if p == STAR]
    if lam is None:
        lam_pi = Fraction(1)
    else:
        lam_pi = Fraction(1)
        for p in entries:
            if p != STAR:
                lam_pi *= lam[p - 1]
        for j in nonempty:
            lam_pi /= lam[j - 1]
    return Pattern(
        entries=entries,
        columns=tuple(sorted(cols.items())),
        m=m,
        r_pi=r - len(nonempty),
        s_pi=len(starred),
        lam=lam_pi,
        target=canonical(starred + [cols[j] for j in nonempty]),
    )


def _check_guard(S: MultiIndex, r: int | None, max_len: int, max_rank: int | None) -> None:
    if len(S) > max_len:
        raise CapacityError(f"|S| = {len(S)} exceeds pattern guard {max_len}")
    if r is not None and max_rank is not None and r > max_rank:
        raise CapacityError(f"r = {r} exceeds exhaustive-enumeration guard {max_rank}")


def enumerate_patterns(
    S: MultiIndex,
    k: int,
    lam: Sequence[Fraction],
    *,
    max_len: int = MAX_PATTERN_LENGTH,
    max_rank: int = MAX_PATTERN_RANK,
) -> list[Pattern]:
    """Every pattern of ``S`` over the full label set ``[r]`` with ``r = len(lam)``."""
    r = len(lam)
    _check_guard(S, r, max_len, max_rank)
    out = []
    for entries in itertools.product(range(r + 1), repeat=len(S)):
        if pattern_is_valid(S, entries, k):
            out.append(build_pattern(S, entries, r, lam))
    return out


@lru_cache(maxsize=None)
def _canonical_shapes(length: int, max_labels: int) -> tuple[tuple[int, ...], ...]:
    """Star/label sequences whose labels appear in first-appearance order 1, 2, ..."""
    shapes = []

    def extend(prefix: list[int], used: int):
        if len(prefix) == length:
            shapes.append(tuple(prefix))
            return
        for p in range(0, min(used + 1, max_labels) + 1):
            extend(prefix + [p], max(used, p))

    extend([], 0)
    return tuple(shapes)


def injective_weight_sum(exponents: Sequence[int], lam: Sequence[Fraction]) -> Fraction:
    """Sum over injective maps ``c -> j`` of ``prod_c lam_j ** e_c`` (subset DP over labels)."""
    c = len(exponents)
    full = (1 << c) - 1
    dp = {0: Fraction(1)}
    for lj in lam:
        powers = [lj**e for e in exponents]
        nxt = dict(dp)
        for mask, val in dp.items():
            for i in range(c):
                if not mask >> i & 1:
                    key = mask | 1 << i
                    nxt[key] = nxt.get(key, 0) + val * powers[i]
        dp = nxt
    return dp.get(full, Fraction(0))


@dataclass(frozen=True)
class PatternOrbit:
    shape: Pattern  # representative with labels 1..c in first-appearance order, lam unset
    lam_sum: Fraction  # sum of lambda^(pi) over all relabelings into [r]
    size: int  # number of relabelings, r falling c

    @property
    def weight(self) -> Fraction:
        return self.shape.m * falling_factorial(self.shape.r_pi, self.shape.s_pi) * self.lam_sum


def enumerate_pattern_orbits(
    S: MultiIndex, k: int, lam: Sequence[Fraction], *, max_len: int = MAX_PATTERN_LENGTH
) -> list[PatternOrbit]:
    """Patterns of ``S`` grouped by relabeling of their concrete columns.

    Every quantity of a pattern except ``lambda^(pi)`` is invariant under
    injective relabeling; the label-dependent factor is summed exactly.
    """
    r = len(lam)
    _check_guard(S, None, max_len, None)
    out = []
    for entries in _canonical_shapes(len(S), min(r, len(S) // 2)):
        if not pattern_is_valid(S, entries, k):
            continue
        shape = build_pattern(S, entries, r, None)
        c = len(shape.columns)
        exps = []
        for j, col in shape.columns:
            cnt = sum(1 for p in entries if p == j)
            exps.append(cnt - (1 if col else 0))
        out.append(PatternOrbit(shape, injective_weight_sum(exps, lam), falling_factorial(r, c)))
    return out


def pattern_matches(pi: Pattern | Sequence[int], ell: Sequence[int], S: MultiIndex) -> bool:
    entries = pi.entries if isinstance(pi, Pattern) else tuple(pi)
    if not len(entries) == len(ell) == len(S):
        raise DomainError("pattern, labeling and multi-index lengths differ")
    cols = _pattern_columns(S, entries)
    starred = []
    for p, l in zip(entries, ell):
        if p == STAR:
            starred.append(l)
        elif p != l:
            return False
    if len(set(starred)) != len(starred):
        return False
    return all(not cols.get(j, 0) for j in starred)


def step_target(S: MultiIndex, pi: Pattern | Sequence[int]) -> MultiIndex:
    """The multi-index ``cols(S(ell))`` shared by every ``ell`` matched by ``pi``."""
    entries = pi.entries if isinstance(pi, Pattern) else tuple(pi)
    cols = _pattern_columns(S, entries)
    starred = [I for I, p in zip(S, entries) if p == STAR]
    return canonical(starred + [m for m in cols.values() if m])


def step_predicate(S: MultiIndex, pi: Pattern | Sequence[int], Sprime: MultiIndex) -> bool:
    if len(Sprime) >= len(S):
        return False
    return step_target(S, pi) == canonical(Sprime)


def format_multi(S: MultiIndex) -> list[list[int]]:
    return [list(elements_of(m)) for m in S]


def dump_patterns(S: MultiIndex, patterns: Iterable[Pattern]) -> str:
    """JSON-lines debug dump of a pattern list, one pattern per line."""
    lines = []
    for p in patterns:
        lines.append(
            json.dumps(
                {
                    "S": format_multi(S),
                    "pi": ["*" if e == STAR else e for e in p.entries],
                    "m": p.m,
                    "r_pi": p.r_pi,
                    "s_pi": p.s_pi,
                    "lambda_pi": str(p.lam),
                    "target": format_multi(p.target),
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def inclusion_exclusion_sides(
    S: MultiIndex, k: int, lam: Sequence[Fraction], phi: Callable[[tuple[int, ...]], Fraction]
) -> tuple[Fraction, Fraction]:
    """Both sides of the pattern inclusion-exclusion identity for test function ``phi``."""
    r = len(lam)
    lhs = sum((phi(ell) for ell in labelings(r, len(S)) if in_L(S, ell, k)), Fraction(0))
    rhs = Fraction(0)
    for pi in enumerate_patterns(S, k, lam):
        inner = sum((phi(ell) for ell in labelings(r, len(S)) if pattern_matches(pi, ell, S)), Fraction(0))
        rhs += pi.m * inner
    return lhs, rhs
