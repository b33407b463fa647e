"""Monomial-to-Fourier transfer matrix ``M``, its explicit left inverse, and ``w = c^T M^+``.

Matrices are exact and sparse: ``dict[row_key, dict[col_key, Fraction]]``.
Row and column keys are the multi-index / support-set tuples themselves, and
the basis lists fix the block ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .combinat import (
    MultiIndex,
    Support,
    cols_of,
    even_cover,
    falling_factorial,
    format_multi,
    is_generic,
    lam_of_labeling,
    lam_of_support,
    labelings,
    multisets,
    support_key,
    xor_columns,
)
from .model import CapacityError, ModelParams, OmegaMode, OmegaSpec, ParameterError, elements_of

LABELING_GUARD = 10**6

Sparse = dict  # dict[row, dict[col, Fraction]]


class ConsistencyError(AssertionError):
    """Two independent computations of the same exact quantity disagree."""


@dataclass(frozen=True)
class BasisIndexing:
    params: ModelParams
    D: int
    s_basis: tuple[MultiIndex, ...]
    u_basis: tuple[Support, ...]  # generic, reachable, sorted by (|cols(U)|, canonical)
    u_other: tuple[Support, ...] = field(default=())  # reachable but not generic
    pruned: bool = False

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def r(self) -> int:
        return self.params.r

    def s_level(self, d: int) -> list[MultiIndex]:
        return [S for S in self.s_basis if len(S) == d]

    def u_level(self, d: int) -> list[Support]:
        return [U for U in self.u_basis if len(U) == d]


def _check_labeling_guard(r: int, D: int) -> None:
    if r**D > LABELING_GUARD:
        raise CapacityError(f"r^D = {r}^{D} exceeds labeling guard {LABELING_GUARD}")


def s_basis_for(n: int, k: int, D: int, prune: bool = False) -> list[MultiIndex]:
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(n, k)
    out = []
    for d in range(D + 1):
        for S in multisets(omega, d):
            if not prune or even_cover(S):
                out.append(tuple(S))
    return out


def build_basis(params: ModelParams, D: int, prune: bool = False) -> BasisIndexing:
    """Monomial basis ``|S| <= D`` and the support sets reachable from it."""
    if D < 0:
        raise ParameterError(f"degree must be non-negative, got {D}")
    _check_labeling_guard(params.r, D)
    s_basis = s_basis_for(params.n, params.k, D, prune)
    generic, other = set(), set()
    for S in s_basis:
        for ell in labelings(params.r, len(S)):
            U = xor_columns(S, ell)
            (generic if is_generic(U, params.k, D) else other).add(U)
    return BasisIndexing(
        params=params,
        D=D,
        s_basis=tuple(s_basis),
        u_basis=tuple(sorted(generic, key=support_key)),
        u_other=tuple(sorted(other, key=support_key)),
        pruned=prune,
    )


def build_M(params: ModelParams, D: int, basis: BasisIndexing | None = None) -> Sparse:
    """``M[U][S] = sum_ell lambda^ell 1{S(ell) = U}``, stored row-major by ``U``."""
    _check_labeling_guard(params.r, D)
    if basis is None:
        basis = build_basis(params, D)
    M: Sparse = {}
    for S in basis.s_basis:
        for ell in labelings(params.r, len(S)):
            U = xor_columns(S, ell)
            row = M.setdefault(U, {})
            row[S] = row.get(S, 0) + lam_of_labeling(params.lam, ell)
    for U in list(M):
        M[U] = {S: v for S, v in M[U].items() if v}
        if not M[U]:
            del M[U]
    return M


def _require_rank(basis: BasisIndexing, d: int) -> None:
    if d > basis.r:
        raise ParameterError(f"degree {d} exceeds rank r={basis.r}: no distinct-entry labelings exist")


def build_Qplus(basis: BasisIndexing, d: int) -> Sparse:
    """Left inverse of the diagonal block at level ``d``: ``1{cols(U)=S} / (lambda^U r^(d falling))``."""
    _require_rank(basis, d)
    ff = falling_factorial(basis.r, d)
    lam = basis.params.lam
    Qp: Sparse = {S: {} for S in basis.s_level(d)}
    for U in basis.u_level(d):
        S = cols_of(U, basis.k, basis.D)
        if S in Qp:
            Qp[S][U] = 1 / (lam_of_support(lam, U) * ff)
    return Qp


def matmul(A: Sparse, B: Sparse) -> Sparse:
    out: Sparse = {}
    for i, row in A.items():
        acc: dict = {}
        for j, a in row.items():
            brow = B.get(j)
            if not brow:
                continue
            for k, b in brow.items():
                acc[k] = acc.get(k, 0) + a * b
        acc = {k: v for k, v in acc.items() if v}
        if acc:
            out[i] = acc
    return out


def build_Mplus(basis: BasisIndexing, M: Sparse) -> Sparse:
    """Block-recursive left inverse ``G(D)^+``; columns at non-generic ``U`` are zero."""
    _require_rank(basis, basis.D)
    Gp: Sparse = {}
    for d in range(basis.D + 1):
        Qp = build_Qplus(basis, d)
        if d > 0 and Gp:
            lower = {U for U in basis.u_basis if len(U) < d}
            # Y = R(d) Q(d)^+ : Q^+ has one nonzero per column U_d, at S = cols(U_d).
            Y: Sparse = {}
            for Ud in basis.u_level(d):
                S = cols_of(Ud, basis.k, basis.D)
                q = Qp.get(S, {}).get(Ud)
                if q is None:
                    continue
                for Up in lower:
                    m = M.get(Up, {}).get(S)
                    if m:
                        Y.setdefault(Up, {})[Ud] = m * q
            X = matmul(Gp, Y)
            for S_low, row in X.items():
                target = Gp.setdefault(S_low, {})
                for Ud, v in row.items():
                    target[Ud] = target.get(Ud, 0) - v
        for S, row in Qp.items():
            Gp.setdefault(S, {}).update(row)
    return {S: {U: v for U, v in row.items() if v} for S, row in Gp.items()}


def left_inverse_defect(basis: BasisIndexing, Mplus: Sparse, M: Sparse) -> list[tuple]:
    """Entries where ``M^+ M`` differs from the identity (empty list means exact identity)."""
    MT: Sparse = {}
    for U, row in M.items():
        for S, v in row.items():
            MT.setdefault(S, {})[U] = v
    bad = []
    for S in basis.s_basis:
        prow = Mplus.get(S, {})
        for Sp in basis.s_basis:
            col = MT.get(Sp, {})
            if len(prow) < len(col):
                val = sum((a * col[U] for U, a in prow.items() if U in col), Fraction(0))
            else:
                val = sum((b * prow[U] for U, b in col.items() if U in prow), Fraction(0))
            want = 1 if S == Sp else 0
            if val != want:
                bad.append((S, Sp, val))
    return bad


def generic_block_zero(basis: BasisIndexing, M: Sparse) -> bool:
    """No entry of ``M`` with ``|cols(U)| > |S|`` (lower-left blocks of ``G`` vanish)."""
    generic = set(basis.u_basis)
    return all(len(U) <= len(S) for U, row in M.items() if U in generic for S in row)


def w_vector(c: Mapping[MultiIndex, Fraction], Mplus: Sparse) -> dict[Support, Fraction]:
    w: dict[Support, Fraction] = {}
    for S, row in Mplus.items():
        cS = c.get(S, 0)
        if not cS:
            continue
        for U, v in row.items():
            w[U] = w.get(U, 0) + cS * v
    return {U: v for U, v in w.items() if v}


def w_recurrence(basis: BasisIndexing, c: Mapping[MultiIndex, Fraction]) -> dict[Support, Fraction]:
    """``w_U`` computed level by level from the scalar recurrence, without forming ``M^+``."""
    p = basis.params
    w: dict[Support, Fraction] = {}
    for U in basis.u_basis:
        S = cols_of(U, p.k, basis.D)
        acc = Fraction(c.get(S, 0))
        for ell in labelings(p.r, len(S)):
            Up = xor_columns(S, ell)
            if len(Up) < len(S) and is_generic(Up, p.k, basis.D):
                wp = w.get(Up, 0)
                if wp:
                    acc -= wp * lam_of_labeling(p.lam, ell)
        val = acc / (lam_of_support(p.lam, U) * falling_factorial(p.r, len(S)))
        if val:
            w[U] = val
    return w


def w_checked(basis: BasisIndexing, c: Mapping[MultiIndex, Fraction], Mplus: Sparse) -> dict[Support, Fraction]:
    w = w_vector(c, Mplus)
    if w != w_recurrence(basis, c):
        raise ConsistencyError("c^T M^+ disagrees with the w recurrence")
    return w


def w_norm_squared(w: Mapping[Support, Fraction]) -> Fraction:
    return sum((v * v for v in w.values()), Fraction(0))


def corr_upper_from_w(w: Mapping[Support, Fraction]) -> float:
    return math.sqrt(w_norm_squared(w))


def v_from_w(basis: BasisIndexing, w: Mapping[Support, Fraction]) -> dict[MultiIndex, set[Fraction]]:
    """All values of ``lambda^U r^(|S| falling) w_U`` grouped by ``S = cols(U)``."""
    p = basis.params
    out: dict[MultiIndex, set[Fraction]] = {}
    for U in basis.u_basis:
        S = cols_of(U, p.k, basis.D)
        val = lam_of_support(p.lam, U) * falling_factorial(p.r, len(S)) * w.get(U, Fraction(0))
        out.setdefault(S, set()).add(val)
    return out


# -- auditing dumps -----------------------------------------------------------


def _fmt(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def dump_coo(matrix: Sparse, rows: Sequence, cols: Sequence) -> str:
    """Coordinate text: ``row_index col_index p/q`` per nonzero, 0-based indices into ``rows``/``cols``."""
    ri = {key: i for i, key in enumerate(rows)}
    ci = {key: j for j, key in enumerate(cols)}
    lines = []
    for rkey in rows:
        for ckey, v in sorted(matrix.get(rkey, {}).items(), key=lambda kv: ci[kv[0]]):
            if v:
                lines.append(f"{ri[rkey]} {ci[ckey]} {_fmt(v)}")
    return "\n".join(lines) + ("\n" if lines else "")


def basis_labels(basis: BasisIndexing) -> tuple[list[str], list[str]]:
    s = [str(format_multi(S)) for S in basis.s_basis]
    u = [
        ";".join(f"{j}:{list(elements_of(m))}" for j, m in U)
        for U in basis.u_basis + basis.u_other
    ]
    return s, u
