"""Spiked rank-r hypercube tensor model.

Subsets of ``[n]`` are stored as Python ``int`` bitmasks: element ``i`` (1-based)
is bit ``i - 1``.  Symmetric difference is then plain ``^``.  The fixed ordering
on index sets is lexicographic on ``(|I|, sorted elements)``.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._seeding import derive_rng

MAX_EXACT_N = 64
MATERIALIZE_GUARD = 10**7


class ParameterError(ValueError):
    """Invalid model, graph or experiment parameters."""


class CapacityError(RuntimeError):
    """An enumeration or memory guard would be exceeded."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


# -- subsets ---------------------------------------------------------------


def mask_of(elements: Iterable[int]) -> int:
    m = 0
    for i in elements:
        if i < 1:
            raise DomainError(f"subset elements are 1-based, got {i}")
        m |= 1 << (i - 1)
    return m


@lru_cache(maxsize=None)
def elements_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@lru_cache(maxsize=None)
def subset_key(mask: int) -> tuple[int, tuple[int, ...]]:
    return (mask.bit_count(), elements_of(mask))


def format_subset(mask: int) -> str:
    return "{" + ",".join(map(str, elements_of(mask))) + "}"


def parse_fraction(text: str | int | Fraction) -> Fraction:
    """Parse ``"p/q"`` (or an int) into an exact rational."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        raise ParameterError(f"weights must be exact rationals, got float {text!r}")
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ParameterError(f"malformed fraction {text!r}") from exc


def format_fraction(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


# -- parameters ------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    n: int
    r: int
    k: int
    lam: tuple[Fraction, ...]
    seed: int = 0

    def __post_init__(self):
        lam = tuple(parse_fraction(x) for x in self.lam)
        object.__setattr__(self, "lam", lam)
        if self.n < 1 or self.r < 1:
            raise ParameterError(f"need n >= 1 and r >= 1, got n={self.n}, r={self.r}")
        if self.k < 3:
            raise ParameterError(f"tensor order k must be >= 3, got {self.k}")
        if len(lam) != self.r:
            raise ParameterError(f"expected {self.r} weights, got {len(lam)}")
        if lam[0] != 1:
            raise ParameterError(f"lambda_1 must equal 1, got {lam[0]}")
        for a, b in zip(lam, lam[1:]):
            if abs(b) > abs(a):
                raise ParameterError(f"weights must be non-increasing in magnitude: {lam}")
        if lam[-1] == 0:
            raise ParameterError("weights must be nonzero")
        if not 0 <= self.seed < 1 << 64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def lambda_min(self) -> Fraction:
        return abs(self.lam[-1])

    @classmethod
    def spiked(cls, n: int, r: int, k: int, delta, seed: int = 0) -> "ModelParams":
        """Largest-component form: one weight ``1 + delta`` normalised to 1, the rest ``1/(1+delta)``."""
        delta = parse_fraction(delta)
        rest = 1 / (1 + delta)
        return cls(n, r, k, (Fraction(1),) + (rest,) * (r - 1), seed)


class OmegaMode(enum.Enum):
    LOWER_BOUND_ALL = "LowerBoundAll"
    UPPER_BOUND_TOP = "UpperBoundTop"


@dataclass(frozen=True)
class OmegaSpec:
    mode: OmegaMode

    def size_range(self, k: int) -> tuple[int, int]:
        if self.mode is OmegaMode.LOWER_BOUND_ALL:
            return 1, k
        return odd_order(k), k

    def subsets(self, n: int, k: int) -> list[int]:
        lo, hi = self.size_range(k)
        return omega_subsets(n, lo, hi)

    def count(self, n: int, k: int) -> int:
        from math import comb

        lo, hi = self.size_range(k)
        return sum(comb(n, s) for s in range(lo, min(hi, n) + 1))


def odd_order(k: int) -> int:
    """The odd element of ``{k-1, k}``."""
    return k if k % 2 else k - 1


@lru_cache(maxsize=64)
def omega_subsets(n: int, lo: int, hi: int) -> list[int]:
    """All subsets of ``[n]`` with ``lo <= |I| <= hi`` in canonical order."""
    out = []
    for size in range(lo, min(hi, n) + 1):
        for combo in itertools.combinations(range(1, n + 1), size):
            out.append(mask_of(combo))
    return out


# -- instances -------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    params: ModelParams
    A: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=np.int8)
        if A.shape != (self.params.n, self.params.r):
            raise ParameterError(f"A has shape {A.shape}, expected {(self.params.n, self.params.r)}")
        if not np.all(np.abs(A) == 1):
            raise ParameterError("A must have entries in {-1, +1}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def negated(self) -> "Instance":
        return Instance(self.params, -self.A)

    def permuted(self, perm: Sequence[int]) -> "Instance":
        """Row permutation: new row ``i`` is old row ``perm[i]`` (0-based)."""
        return Instance(self.params, self.A[list(perm)])

    def to_json(self) -> str:
        p = self.params
        doc = {
            "n": p.n,
            "r": p.r,
            "k": p.k,
            "lambda": [format_fraction(x) for x in p.lam],
            "seed": p.seed,
            "A": [int(x) for x in self.A.reshape(-1)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str | Mapping) -> "Instance":
        doc = json.loads(text) if isinstance(text, str) else dict(text)
        params = ModelParams(doc["n"], doc["r"], doc["k"], tuple(doc["lambda"]), doc["seed"])
        A = np.asarray(doc["A"], dtype=np.int8).reshape(params.n, params.r)
        return cls(params, A)


def sample_instance(params: ModelParams) -> Instance:
    rng = derive_rng(params.seed, 0)
    A = rng.choice(np.array([-1, 1], dtype=np.int8), size=(params.n, params.r))
    return Instance(params, A)


def tensor_entry(inst: Instance, I: int | Iterable[int]) -> Fraction:
    """Exact ``T_I = sum_j lambda_j prod_{i in I} (a_j)_i``."""
    mask = I if isinstance(I, int) else mask_of(I)
    size = mask.bit_count()
    if size == 0 or size > inst.params.k:
        raise DomainError(f"need 0 < |I| <= k={inst.params.k}, got |I|={size}")
    rows = [i - 1 for i in elements_of(mask)]
    if rows[-1] >= inst.params.n:
        raise DomainError(f"I={format_subset(mask)} is not a subset of [{inst.params.n}]")
    total = Fraction(0)
    for j, lam in enumerate(inst.params.lam):
        sign = 1
        for i in rows:
            sign *= int(inst.A[i, j])
        total += lam * sign
    return total


def materialize(inst: Instance, omega: OmegaSpec) -> dict[int, Fraction]:
    p = inst.params
    if omega.count(p.n, p.k) > MATERIALIZE_GUARD:
        raise CapacityError(f"|Omega| exceeds {MATERIALIZE_GUARD}")
    return {I: tensor_entry(inst, I) for I in omega.subsets(p.n, p.k)}
