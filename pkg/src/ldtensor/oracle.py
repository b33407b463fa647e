"""Exact degree-D correlation and MMSE for tiny instances.

``Corr^2 = sup_f (c^T f)^2 / (f^T P f) = c^T P^+ c``.  Because ``c`` lies in the
column space of ``P`` (any null direction of ``P`` is a polynomial that vanishes
almost surely, hence is uncorrelated with ``a_11``), ``c^T P^+ c = c^T x`` for
any exact solution of ``P x = c``, so the value is computed in rationals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._seeding import derive_rng
from .coeffmap import BasisIndexing, Sparse, build_basis
from .combinat import MultiIndex, lam_of_labeling, labelings, xor_columns
from .model import ModelParams

TARGET_SUPPORT = ((1, 1),)  # the single entry (1, 1) of A
EIGEN_RANK_RTOL = 1e-10
CORR_TOLERANCE = 1e-9


class NumericalConsistencyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MomentData:
    basis: BasisIndexing
    c: dict[MultiIndex, Fraction]
    P: Sparse

    def dense(self) -> tuple[list[list[Fraction]], list[Fraction]]:
        order = self.basis.s_basis
        P = [[self.P.get(S, {}).get(T, Fraction(0)) for T in order] for S in order]
        return P, [self.c.get(S, Fraction(0)) for S in order]


def c_vector(params: ModelParams, basis: BasisIndexing) -> dict[MultiIndex, Fraction]:
    c = {}
    for S in basis.s_basis:
        total = Fraction(0)
        for ell in labelings(params.r, len(S)):
            if xor_columns(S, ell) == TARGET_SUPPORT:
                total += lam_of_labeling(params.lam, ell)
        c[S] = total
    return c


def _expansions(params: ModelParams, basis: BasisIndexing):
    return {
        S: [(xor_columns(S, ell), lam_of_labeling(params.lam, ell)) for ell in labelings(params.r, len(S))]
        for S in basis.s_basis
    }


def P_matrix(params: ModelParams, basis: BasisIndexing) -> Sparse:
    """``P[S][S'] = sum_{ell, ell'} lambda^ell lambda^ell' 1{S(ell) = S'(ell')}`` by direct pair enumeration."""
    exp = _expansions(params, basis)
    order = basis.s_basis
    P: Sparse = {}
    for a, S in enumerate(order):
        for T in order[a:]:
            total = Fraction(0)
            for U, x in exp[S]:
                for V, y in exp[T]:
                    if U == V:
                        total += x * y
            if total:
                P.setdefault(S, {})[T] = total
                P.setdefault(T, {})[S] = total
    return P


def P_from_M(M: Sparse) -> Sparse:
    """``M^T M`` (orthonormality of the characters ``A^U``)."""
    P: Sparse = {}
    for row in M.values():
        items = list(row.items())
        for S, x in items:
            target = P.setdefault(S, {})
            for T, y in items:
                target[T] = target.get(T, 0) + x * y
    return {S: {T: v for T, v in row.items() if v} for S, row in P.items()}


def moment_data(params: ModelParams, D: int, prune: bool = False, basis: BasisIndexing | None = None) -> MomentData:
    if basis is None:
        basis = build_basis(params, D, prune=prune)
    return MomentData(basis, c_vector(params, basis), P_matrix(params, basis))


def solve_consistent(A: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """One exact solution of ``A x = b``; raises if the system is inconsistent."""
    n = len(b)
    rows = [list(r) + [bb] for r, bb in zip(A, b)]
    m = len(A[0]) if A else 0
    pivots = []
    rank = 0
    for col in range(m):
        piv = next((i for i in range(rank, n) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pr = rows[rank]
        inv = 1 / pr[col]
        for j in range(col, m + 1):
            pr[j] *= inv
        for i in range(n):
            if i != rank and rows[i][col] != 0:
                f = rows[i][col]
                ri = rows[i]
                for j in range(col, m + 1):
                    if pr[j]:
                        ri[j] -= f * pr[j]
        pivots.append(col)
        rank += 1
        if rank == n:
            break
    for i in range(rank, n):
        if rows[i][m] != 0:
            raise NumericalConsistencyError("moment system P x = c is inconsistent")
    x = [Fraction(0)] * m
    for i, col in enumerate(pivots):
        x[col] = rows[i][m]
    return x


def corr2_exact(moments: MomentData) -> Fraction:
    P, c = moments.dense()
    if not any(c):
        return Fraction(0)
    x = solve_consistent(P, c)
    return sum((ci * xi for ci, xi in zip(c, x)), Fraction(0))


def corr2_eigen(moments: MomentData, rtol: float = EIGEN_RANK_RTOL) -> float:
    """``c^T P^+ c`` via symmetric eigendecomposition restricted to the span of ``P``."""
    P, c = moments.dense()
    if not c:
        return 0.0
    Pf = np.array([[float(x) for x in row] for row in P])
    cf = np.array([float(x) for x in c])
    mu, V = np.linalg.eigh(Pf)
    keep = mu > rtol * max(mu.max(), 0.0)
    proj = V[:, keep].T @ cf
    return float(np.sum(proj**2 / mu[keep]))


def corr_exact(moments: MomentData, method: str = "exact") -> float:
    if method == "exact":
        return math.sqrt(corr2_exact(moments))
    if method == "eigen":
        return math.sqrt(max(corr2_eigen(moments), 0.0))
    raise ValueError(f"unknown method {method!r}")


def mmse_exact(corr: float, tol: float = CORR_TOLERANCE) -> float:
    if corr < -tol or corr > 1 + tol:
        raise NumericalConsistencyError(f"correlation {corr} outside [0, 1]")
    return max(0.0, 1.0 - min(corr, 1.0) ** 2)


def monte_carlo_moments(
    params: ModelParams, pairs: Sequence[tuple[MultiIndex, MultiIndex]], samples: int, seed: int
) -> list[tuple[float, float]]:
    """Sample mean and standard error of ``T^S T^S'`` over independent instances."""
    rng = derive_rng(seed, 1)
    A = rng.choice(np.array([-1.0, 1.0]), size=(samples, params.n, params.r))
    lam = np.array([float(x) for x in params.lam])
    cache: dict[int, np.ndarray] = {}

    def T(I: int) -> np.ndarray:
        if I not in cache:
            rows = [i for i in range(params.n) if I >> i & 1]
            cache[I] = np.prod(A[:, rows, :], axis=1) @ lam
        return cache[I]

    out = []
    for S, Sp in pairs:
        prod = np.ones(samples)
        for I in S + Sp:
            prod = prod * T(I)
        out.append((float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(samples))))
    return out
