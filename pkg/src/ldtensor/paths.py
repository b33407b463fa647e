"""Path expansion of the ``v_S`` recurrence, good/bad classification and the
promote/merge pairing under which bad paths cancel.

A path is ``S^0 -pi^0-> S^1 -> ... -> S^p -pi^p-> END`` where each ``pi^t`` (t < p)
is a pattern of ``S^t`` stepping to ``S^(t+1)`` and ``pi^p`` is a star-free
labeling with ``S^p(pi^p) = {(1,1)}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .combinat import (
    STAR,
    MultiIndex,
    build_pattern,
    enumerate_patterns,
    falling_factorial,
    lam_of_labeling,
    labelings,
    pattern_is_valid,
    xor_columns,
)
from .model import CapacityError, ModelParams
from .oracle import TARGET_SUPPORT

MAX_PATH_S = 3
MAX_PATH_R = 4


@dataclass(frozen=True)
class PathTerm:
    multis: tuple[MultiIndex, ...]  # S^0 .. S^p
    steps: tuple[tuple[int, ...], ...]  # pi^0 .. pi^p, the last one star-free
    value: Fraction

    @property
    def length(self) -> int:
        return len(self.steps) - 1

    @property
    def good(self) -> bool:
        return not bad_columns(self)

    def key(self):
        return (self.multis, self.steps)


def _column_xors(S: MultiIndex, entries) -> dict[int, int]:
    cols: dict[int, int] = {}
    for I, p in zip(S, entries):
        if p != STAR:
            cols[p] = cols.get(p, 0) ^ I
    return cols


def last_events(path: PathTerm) -> dict[int, tuple[int, bool]]:
    """Column -> (timestep of its last event, whether that event is a deletion)."""
    last: dict[int, tuple[int, bool]] = {}
    for t, (S, pi) in enumerate(zip(path.multis, path.steps)):
        for j, x in _column_xors(S, pi).items():
            last[j] = (t, x == 0)
    return last


def bad_columns(path: PathTerm) -> list[int]:
    return sorted(j for j, (_, deletion) in last_events(path).items() if deletion)


class PathEnumerator:
    """Depth-first path enumeration memoised on the canonical start ``S``."""

    def __init__(self, params: ModelParams, max_s: int = MAX_PATH_S, max_r: int = MAX_PATH_R):
        if params.r > max_r:
            raise CapacityError(f"path enumeration guard: r={params.r} > {max_r}")
        self.params = params
        self.max_s = max_s
        self._memo: dict[MultiIndex, list[PathTerm]] = {}

    def paths(self, S: MultiIndex) -> list[PathTerm]:
        S = tuple(S)
        if len(S) > self.max_s:
            raise CapacityError(f"path enumeration guard: |S|={len(S)} > {self.max_s}")
        if S in self._memo:
            return self._memo[S]
        p = self.params
        out = []
        for ell in labelings(p.r, len(S)):
            if xor_columns(S, ell) == TARGET_SUPPORT:
                out.append(PathTerm((S,), (ell,), lam_of_labeling(p.lam, ell)))
        for pi in enumerate_patterns(S, p.k, p.lam):
            ff = falling_factorial(p.r, len(pi.target))
            if ff == 0:
                # more columns than labels: no labeling realises this step
                continue
            factor = -pi.weight / ff
            for sub in self.paths(pi.target):
                out.append(PathTerm((S,) + sub.multis, (pi.entries,) + sub.steps, factor * sub.value))
        self._memo[S] = out
        return out


def path_value(path: PathTerm, params: ModelParams) -> Fraction:
    """Recompute a path's value from its steps alone."""
    val = Fraction(1)
    for t in range(path.length):
        pat = build_pattern(path.multis[t], path.steps[t], params.r, params.lam)
        val *= -pat.weight / falling_factorial(params.r, len(path.multis[t + 1]))
    return val * lam_of_labeling(params.lam, path.steps[-1])


def is_valid_path(path: PathTerm, params: ModelParams) -> bool:
    p = path.length
    if len(path.multis) != p + 1:
        return False
    for t in range(p):
        S, pi = path.multis[t], path.steps[t]
        if len(pi) != len(S) or not pattern_is_valid(S, pi, params.k):
            return False
        if build_pattern(S, pi, params.r, None).target != path.multis[t + 1]:
            return False
        if len(path.multis[t + 1]) >= len(S):
            return False
    last = path.steps[-1]
    if STAR in last or len(last) != len(path.multis[-1]):
        return False
    return xor_columns(path.multis[-1], last) == TARGET_SUPPORT


def partner(path: PathTerm, params: ModelParams) -> PathTerm:
    """Promote/merge pairing of bad paths.

    Take the largest column whose last event is a deletion. If other columns
    also have events at that timestep, split the deletion off into its own
    step (promote); otherwise fold it into the following step (merge).
    """
    last = last_events(path)
    bad = [j for j, (_, deletion) in last.items() if deletion]
    if not bad:
        raise ValueError("partner() is only defined on bad paths")
    jstar = max(bad)
    tstar = last[jstar][0]
    S, pi = path.multis[tstar], path.steps[tstar]
    multis, steps = list(path.multis), list(path.steps)
    if any(p != STAR and p != jstar for p in pi):
        tau = tuple(jstar if p == jstar else STAR for p in pi)
        Sp = tuple(I for I, p in zip(S, pi) if p != jstar)
        sigma = tuple(p for p in pi if p != jstar)
        multis[tstar + 1 : tstar + 1] = [Sp]
        steps[tstar : tstar + 1] = [tau, sigma]
    else:
        if tstar == path.length:
            raise AssertionError("merge requested at the final step")
        fill = iter(path.steps[tstar + 1])
        tau = tuple(jstar if p == jstar else next(fill) for p in pi)
        del multis[tstar + 1]
        steps[tstar : tstar + 2] = [tau]
    new = PathTerm(tuple(multis), tuple(steps), Fraction(0))
    return PathTerm(new.multis, new.steps, path_value(new, params))


def v_expanded(params: ModelParams, S: MultiIndex, enum: PathEnumerator | None = None) -> Fraction:
    enum = enum or PathEnumerator(params)
    return sum((t.value for t in enum.paths(S)), Fraction(0))


def v_good_paths(params: ModelParams, S: MultiIndex, enum: PathEnumerator | None = None) -> Fraction:
    enum = enum or PathEnumerator(params)
    return sum((t.value for t in enum.paths(S) if t.good), Fraction(0))


def check_pairing(params: ModelParams, S: MultiIndex, enum: PathEnumerator | None = None) -> list[str]:
    """Audit the bad-path pairing on every path from ``S``; returns failure descriptions."""
    enum = enum or PathEnumerator(params)
    all_paths = enum.paths(S)
    index = {t.key(): t for t in all_paths}
    failures = []
    for t in all_paths:
        if t.good:
            continue
        q = partner(t, params)
        if q.key() == t.key():
            failures.append(f"fixed point {t.steps}")
        elif q.key() not in index:
            failures.append(f"partner of {t.steps} not an enumerated path: {q.steps}")
        elif index[q.key()].good:
            failures.append(f"partner of {t.steps} is good")
        if q.value != -t.value:
            failures.append(f"values {t.value} vs {q.value} do not cancel for {t.steps}")
        if partner(q, params).key() != t.key():
            failures.append(f"pairing not an involution at {t.steps}")
    return failures
