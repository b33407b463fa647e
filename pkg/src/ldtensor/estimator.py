"""Expander tensor-network estimator of ``a_11`` and of the whole vector ``a_1``.

``H`` is the certified k-regular graph ``G`` on ``N`` vertices plus a vertex ``u``
(attached to the endpoints of ``(k'-1)/2`` deleted matching edges) and a leaf
``root`` hanging off ``u``.  The estimator averages, over injective edge
labelings with the root edge pinned to the target coordinate, the product over
non-root vertices of the tensor entry indexed by the vertex's incident labels.

Exact evaluation scales the weights to integers by their common denominator
and accumulates in ``int64`` (object ints if a chunk could overflow), so the
result is an exact rational.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from ._seeding import derive_rng
from .combinat import falling_factorial
from .expander import RegularGraph
from .model import CapacityError, Instance, ModelParams, ParameterError, odd_order

EXACT_BUDGET = 10**8
EXACT_CHUNK = 1 << 18
MC_CHUNK_ELEMENTS = 10**7
MAGNITUDE_WARN = 1e300
SHUFFLE_SAMPLING_LABELS = 256
VERTEX_TABLE_LIMIT = 10**6
INT64_SAFE = 1 << 62


class ConstructionError(RuntimeError):
    pass


def choose_D(n: int, k: int, lambda2_abs: float, strict: bool = True) -> int:
    """Smallest odd ``D >= k log(n) / (1 - |lambda_2|)`` (natural log).

    With ``strict`` the hypothesis ``|lambda_2| <= 1 - n^(-1/52)`` is enforced.
    """
    lambda2_abs = abs(float(lambda2_abs))
    if lambda2_abs >= 1:
        raise ParameterError(f"|lambda_2| must be < 1, got {lambda2_abs}")
    if strict and lambda2_abs > 1 - n ** (-1 / 52):
        raise ParameterError(f"|lambda_2|={lambda2_abs} violates |lambda_2| <= 1 - n^(-1/52) at n={n}")
    x = k * math.log(n) / (1 - lambda2_abs)
    D = max(1, math.ceil(x - 1e-12))
    if D % 2 == 0:
        D += 1
    return D


@dataclass(frozen=True)
class TensorNetworkH:
    base: RegularGraph
    k: int
    kprime: int
    matching: tuple[tuple[int, int], ...]
    edges: tuple[tuple[int, int], ...]  # edges[0] is (root, u)

    @property
    def N(self) -> int:
        return self.base.N

    @property
    def u(self) -> int:
        return self.base.N

    @property
    def root(self) -> int:
        return self.base.N + 1

    @property
    def D(self) -> int:
        return self.base.N + 1

    @property
    def vertices(self) -> tuple[int, ...]:
        """Vertices other than the root: ``0..N-1`` then ``u``."""
        return tuple(range(self.base.N + 1))

    def incident(self, v: int) -> tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.edges) if v in e)

    def degree(self, v: int) -> int:
        return len(self.incident(v))

    def num_labelings(self, n: int) -> int:
        return falling_factorial(n - 1, len(self.edges) - 1)


def build_H(G: RegularGraph, k: int, seed: int = 0) -> TensorNetworkH:
    if G.k != k:
        raise ParameterError(f"base graph is {G.k}-regular, expected {k}")
    kp = odd_order(k)
    p = (kp - 1) // 2
    matching = _greedy_matching(G.edges, p)
    if matching is None:
        rng = derive_rng(seed, 6)
        for _ in range(100):
            order = [G.edges[i] for i in rng.permutation(len(G.edges))]
            matching = _greedy_matching(order, p)
            if matching is not None:
                break
    if matching is None:
        raise ConstructionError(f"no matching of size {p} found in the base graph")
    u, root = G.N, G.N + 1
    removed = set(matching)
    rest = [e for e in G.edges if e not in removed]
    for a, b in matching:
        rest += [(a, u), (b, u)]
    return TensorNetworkH(G, k, kp, tuple(sorted(matching)), ((root, u),) + tuple(sorted(rest)))


def _greedy_matching(edges, p: int):
    used, out = set(), []
    for a, b in edges:
        if len(out) == p:
            break
        if a not in used and b not in used:
            out.append((a, b))
            used |= {a, b}
    return tuple(out) if len(out) == p else None


# -- evaluation helpers -------------------------------------------------------


def _vertex_columns(H: TensorNetworkH) -> list[list[int]]:
    """For each non-root vertex, the free-edge columns (edge index - 1) it touches, plus -1 for the root edge."""
    out = []
    for v in H.vertices:
        out.append([i - 1 for i in H.incident(v)])
    return out


def _integer_weights(lam: Sequence[Fraction]) -> tuple[np.ndarray, int]:
    L = 1
    for x in lam:
        L = L * x.denominator // math.gcd(L, x.denominator)
    return np.array([int(x * L) for x in lam], dtype=np.int64), L


@lru_cache(maxsize=8)
def _injective_tuples(num_labels: int, m: int) -> np.ndarray:
    if m == 0:
        return np.zeros((1, 0), dtype=np.int16)
    return np.array(list(itertools.permutations(range(num_labels), m)), dtype=np.int16)


def _labeling_chunks(num_labels: int, m: int):
    count = falling_factorial(num_labels, m)
    if count * max(m, 1) <= 2 * 10**7:
        yield _injective_tuples(num_labels, m)
        return
    it = itertools.permutations(range(num_labels), m)
    while True:
        block = list(itertools.islice(it, EXACT_CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.int16)


def _vertex_signs(A: np.ndarray, trow: int, rows: np.ndarray, cols: list[list[int]]) -> list[list[np.ndarray]]:
    """``signs[v][j] = prod over v's incident edges of A[label, j]`` as int8 vectors."""
    out = []
    for vc in cols:
        pv = []
        for j in range(A.shape[1]):
            prod = np.ones(len(rows), dtype=np.int8)
            for c in vc:
                prod = prod * A[trow, j] if c < 0 else prod * A[rows[:, c], j]
            pv.append(prod)
        out.append(pv)
    return out


def _check_labels(H: TensorNetworkH, n: int) -> None:
    if n - 1 < len(H.edges) - 1:
        raise ParameterError(f"n={n} leaves too few labels for {len(H.edges)} edges to be labeled injectively")


def _target_row(target: int, n: int) -> int:
    if not 1 <= target <= n:
        raise ParameterError(f"target coordinate {target} outside [1, {n}]")
    return target - 1


def _sum_products(factors: list[np.ndarray], bound: int) -> int:
    """Exact ``sum(prod(factors))`` for integer vectors whose products are bounded by ``bound``."""
    length = len(factors[0])
    if bound * length < INT64_SAFE:
        prod = factors[0].astype(np.int64)
        for f in factors[1:]:
            prod = prod * f
        return int(prod.sum())
    if bound < INT64_SAFE:
        total = 0
        step = max(1, INT64_SAFE // bound)
        for s in range(0, length, step):
            prod = factors[0][s : s + step].astype(np.int64)
            for f in factors[1:]:
                prod = prod * f[s : s + step]
            total += int(prod.sum())
        return total
    prod = factors[0].astype(object)
    for f in factors[1:]:
        prod = prod * f.astype(object)
    return int(prod.sum())


def _free_columns(H: TensorNetworkH) -> list[tuple[list[int], bool]]:
    """Per non-root vertex: its free-edge columns and whether it touches the root edge."""
    return [([c for c in vc if c >= 0], -1 in vc) for vc in _vertex_columns(H)]


@lru_cache(maxsize=4)
def _flat_indices(H: TensorNetworkH, n: int, trow: int) -> tuple[np.ndarray, ...] | None:
    """Per vertex, the row-major index of its incident labels into an ``n^deg`` table, for every labeling."""
    m = len(H.edges) - 1
    if falling_factorial(n - 1, m) * m > 2 * 10**7:
        return None
    labels = np.array([i for i in range(n) if i != trow], dtype=np.int64)
    rows = labels[_injective_tuples(n - 1, m)]
    out = []
    for cs, _ in _free_columns(H):
        if n ** len(cs) > VERTEX_TABLE_LIMIT:
            return None
        idx = np.zeros(len(rows), dtype=np.int64)
        for c in cs:
            idx = idx * n + rows[:, c]
        out.append(idx.astype(np.int32))
    return tuple(out)


def _vertex_table(A: np.ndarray, lam_int: np.ndarray, trow: int, degree: int, rooted: bool) -> np.ndarray:
    """``table[i_1..i_d] = sum_j Lambda_j prod_c A[i_c, j]`` (times ``A[target, j]`` when rooted), flattened."""
    table = np.zeros(A.shape[0] ** degree, dtype=np.int64)
    for j in range(A.shape[1]):
        col = A[:, j].astype(np.int64)
        outer = np.array([lam_int[j] * (int(A[trow, j]) if rooted else 1)], dtype=np.int64)
        for _ in range(degree):
            outer = np.multiply.outer(outer, col).ravel()
        table += outer
    return table


def evaluate_exact(H: TensorNetworkH, inst: Instance, target: int = 1, budget: int = EXACT_BUDGET) -> Fraction:
    """Exact average over all injective edge labelings (root edge labeled ``target``).

    Uses cached per-vertex entry tables when they fit, otherwise enumerates
    labelings in chunks; both paths are exact.
    """
    n = inst.params.n
    _check_labels(H, n)
    trow = _target_row(target, n)
    count = H.num_labelings(n)
    if count > budget:
        raise CapacityError(f"|Phi| = {count} exceeds exact-evaluation budget {budget}")
    indices = _flat_indices(H, n, trow)
    if indices is None:
        return evaluate_exact_direct(H, inst, target, budget)
    lam_int, L = _integer_weights(inst.params.lam)
    cols = _free_columns(H)
    bound = int(np.abs(lam_int).sum()) ** len(cols)
    if bound * count >= INT64_SAFE:
        factors = [
            _vertex_table(inst.A, lam_int, trow, len(cs), rooted)[idx] for (cs, rooted), idx in zip(cols, indices)
        ]
        return Fraction(_sum_products(factors, bound), count * L ** len(cols))
    # narrowest dtype holding every partial product; the final sum is accumulated in int64
    dtype = next(t for t in (np.int8, np.int16, np.int32, np.int64) if bound <= np.iinfo(t).max)
    prod = None
    for (cs, rooted), idx in zip(cols, indices):
        vals = _vertex_table(inst.A, lam_int, trow, len(cs), rooted).astype(dtype)[idx]
        prod = vals if prod is None else np.multiply(prod, vals, out=prod)
    return Fraction(int(prod.sum(dtype=np.int64)), count * L ** len(cols))


def evaluate_exact_direct(
    H: TensorNetworkH, inst: Instance, target: int = 1, budget: int = EXACT_BUDGET
) -> Fraction:
    """Same value as :func:`evaluate_exact`, computed from per-labeling sign products."""
    n = inst.params.n
    _check_labels(H, n)
    trow = _target_row(target, n)
    m = len(H.edges) - 1
    count = H.num_labelings(n)
    if count > budget:
        raise CapacityError(f"|Phi| = {count} exceeds exact-evaluation budget {budget}")
    lam_int, L = _integer_weights(inst.params.lam)
    labels = np.array([i for i in range(n) if i != trow], dtype=np.int16)
    cols = _vertex_columns(H)
    bound = int(np.abs(lam_int).sum()) ** len(cols)
    total = 0
    for chunk in _labeling_chunks(n - 1, m):
        signs = _vertex_signs(inst.A, trow, labels[chunk], cols)
        factors = []
        for pv in signs:
            tv = np.zeros(len(chunk), dtype=np.int64)
            for j, sg in enumerate(pv):
                tv += lam_int[j] * sg.astype(np.int64)
            factors.append(tv)
        total += _sum_products(factors, bound)
    return Fraction(total, count * L ** len(cols))


def psi_class(psi: Sequence[int]) -> int:
    """1 for the all-ones vertex labeling, 2 for all-``j`` with ``j >= 2``, 3 otherwise."""
    first = psi[0]
    if all(x == first for x in psi):
        return 1 if first == 1 else 2
    return 3


def evaluate_decomposed(
    H: TensorNetworkH, inst: Instance, target: int = 1, budget: int = EXACT_BUDGET
) -> tuple[Fraction, Fraction, Fraction]:
    """``(f1, f2, f3)`` by the exhaustive double sum over edge and vertex labelings."""
    n, r = inst.params.n, inst.params.r
    _check_labels(H, n)
    trow = _target_row(target, n)
    m = len(H.edges) - 1
    cols = _vertex_columns(H)
    count = H.num_labelings(n)
    if count * r ** len(cols) > budget:
        raise CapacityError("double-sum enumeration exceeds budget")
    lam_int, L = _integer_weights(inst.params.lam)
    labels = np.array([i for i in range(n) if i != trow], dtype=np.int16)
    bound = int(np.abs(lam_int).max()) ** len(cols)
    parts = [0, 0, 0]
    for chunk in _labeling_chunks(n - 1, m):
        signs = _vertex_signs(inst.A, trow, labels[chunk], cols)
        per = [[lam_int[j] * sg.astype(np.int64) for j, sg in enumerate(pv)] for pv in signs]
        for psi in itertools.product(range(1, r + 1), repeat=len(cols)):
            val = _sum_products([per[v][j - 1] for v, j in enumerate(psi)], bound)
            parts[psi_class(psi) - 1] += val
    denom = count * L ** len(cols)
    return tuple(Fraction(x, denom) for x in parts)


def f2_closed_form(params: ModelParams, H: TensorNetworkH, inst: Instance, target: int = 1) -> Fraction:
    """``sum_{j >= 2} lambda_j^(N+1) (a_j)_target``."""
    e = H.N + 1
    return sum((params.lam[j] ** e * int(inst.A[target - 1, j]) for j in range(1, params.r)), Fraction(0))


def _sample_rows(rng: np.random.Generator, size: int, num_labels: int, m: int) -> np.ndarray:
    """``size`` uniform injective ``m``-tuples from ``range(num_labels)``."""
    if num_labels <= SHUFFLE_SAMPLING_LABELS:
        return rng.random((size, num_labels)).argsort(axis=1)[:, :m]
    # rejection: a uniform tuple conditioned on distinct entries is uniform over injective tuples
    rows = rng.integers(0, num_labels, size=(size, m))
    while True:
        s = np.sort(rows, axis=1)
        dup = np.any(s[:, 1:] == s[:, :-1], axis=1)
        if not dup.any():
            return rows
        rows[dup] = rng.integers(0, num_labels, size=(int(dup.sum()), m))


def evaluate_mc(
    H: TensorNetworkH, inst: Instance, samples: int, seed: int, target: int = 1
) -> tuple[float, float]:
    """Unbiased Monte Carlo estimate of the network average and its standard error."""
    if samples < 1:
        raise ParameterError("samples must be positive")
    n, r = inst.params.n, inst.params.r
    _check_labels(H, n)
    trow = _target_row(target, n)
    m = len(H.edges) - 1
    lam = np.array([float(x) for x in inst.params.lam])
    cols = _vertex_columns(H)
    if float(np.abs(lam).sum()) ** len(cols) > MAGNITUDE_WARN:
        warnings.warn("network products may exceed floating-point range", RuntimeWarning)
    labels = np.array([i for i in range(n) if i != trow], dtype=np.int64)
    A = inst.A.astype(np.float64)
    rng = derive_rng(seed, 5, target)
    chunk = max(1, MC_CHUNK_ELEMENTS // max(min(n - 1, SHUFFLE_SAMPLING_LABELS), m, 1))
    terms = np.empty(samples)
    for s in range(0, samples, chunk):
        size = min(chunk, samples - s)
        rows = labels[_sample_rows(rng, size, n - 1, m)]
        prod = np.ones(size)
        for vc in cols:
            tv = np.zeros(size)
            for j in range(r):
                p = np.full(size, lam[j])
                for c in vc:
                    p = p * (A[trow, j] if c < 0 else A[rows[:, c], j])
                tv += p
            prod *= tv
        terms[s : s + size] = prod
    mean = float(np.mean(terms))
    se = float(np.std(terms, ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return mean, se


def estimate_vector(
    H: TensorNetworkH, inst: Instance, samples: int | None, seed: int = 0, exact: bool = False
) -> np.ndarray:
    """Estimate every coordinate of ``a_1`` with the root edge pinned to that coordinate."""
    n = inst.params.n
    if exact:
        # coordinate i of A is coordinate 1 of A with rows 1 and i swapped, which reuses one index cache
        out = []
        for i in range(n):
            perm = list(range(n))
            perm[0], perm[i] = i, 0
            out.append(float(evaluate_exact(H, inst.permuted(perm), target=1)))
        return np.array(out)
    return np.array([evaluate_mc(H, inst, samples, seed, target=i)[0] for i in range(1, n + 1)])


def threshold_recover(estimates) -> np.ndarray:
    """Coordinate-wise sign; exact zeros map to ``+1``."""
    est = np.asarray(estimates, dtype=float)
    return np.where(est < 0, -1, 1).astype(np.int8)


# -- closed-form bounds ---------------------------------------------------------


@dataclass(frozen=True)
class EstimatorBounds:
    f2_exact: Fraction
    f2_bound: Fraction
    f3_bound: float
    mmse_bound: float
    lambda_hypothesis: bool
    rank_hypothesis: bool

    @property
    def assumption_easy_holds(self) -> bool:
        return self.lambda_hypothesis and self.rank_hypothesis


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


def f2_f3_bounds(params: ModelParams, H: TensorNetworkH) -> EstimatorBounds:
    return bounds_for_N(params, H.N)


def bounds_for_N(params: ModelParams, N: int) -> EstimatorBounds:
    """Closed-form bounds for a network on ``N`` base vertices (``D = N + 1``)."""
    n, r, k = params.n, params.r, params.k
    D = N + 1
    e = 2 * (N + 1)
    f2_exact = sum((x**e for x in params.lam[1:]), Fraction(0))
    f2_bound = (r - 1) * abs(params.lam[1]) ** e if r > 1 else Fraction(0)
    k_even = 1 if k % 2 == 0 else 0
    log_core = (k - 1) * math.log(k) + 52 * k * math.log(D) + math.log(r) - (k - 1 - k_even) * math.log(n)
    lam2 = float(abs(params.lam[1])) if r > 1 else 0.0
    rank_log_rhs = math.log(0.5) - (k / 2) * math.log(k) - 27 * k * math.log(D) + (k / 2) * math.log(n)
    return EstimatorBounds(
        f2_exact=f2_exact,
        f2_bound=f2_bound,
        f3_bound=_safe_exp(math.log(4) + log_core),
        mmse_bound=_safe_exp(math.log(10) + log_core),
        lambda_hypothesis=lam2 <= 1 - n ** (-1 / 52),
        rank_hypothesis=math.log(r) <= rank_log_rhs,
    )


def f3_second_moment(
    params: ModelParams, H: TensorNetworkH, instances: int, seed: int
) -> tuple[float, float]:
    """Mean and standard error of ``f3^2`` over sampled instances (exhaustive decomposition each)."""
    from .model import sample_instance

    vals = []
    for i in range(instances):
        sub = int(derive_rng(seed, 7, i).integers(0, 2**63))
        inst = sample_instance(ModelParams(params.n, params.r, params.k, params.lam, sub))
        _, _, f3 = evaluate_decomposed(H, inst)
        vals.append(float(f3) ** 2)
    arr = np.array(vals)
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.inf
    return float(arr.mean()), se
