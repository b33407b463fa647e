import itertools
import math
from fractions import Fraction

import pytest

from ldtensor.bound import (
    VTable,
    c_value,
    corr2_bound_v,
    corr_bound_v,
    even_cover_count_bound,
    even_cover_count_within_bound,
    even_cover_multisets,
    hard_assumption,
    hard_threshold_r,
    mmse_lower_bound,
    theorem_bound,
    theorem_series_terms,
    v_magnitude_bound,
    v_recurrence,
)
from ldtensor.coeffmap import build_basis, build_M, build_Mplus, w_checked, w_norm_squared
from ldtensor.combinat import even_cover, make_multi, multisets
from ldtensor.model import ModelParams, OmegaMode, OmegaSpec, ParameterError
from ldtensor.oracle import c_vector, corr2_exact, moment_data

from conftest import GEOMETRIC, MIXED


def _multis(n, k, max_size):
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(n, k)
    for d in range(1, max_size + 1):
        yield from (tuple(S) for S in multisets(omega, d))


def test_v_small_examples():
    p = ModelParams(3, 3, 3, GEOMETRIC[:3])
    table = VTable(p)
    assert table.v(()) == 0
    assert v_recurrence(p, make_multi([{1}]), table) == 1
    assert table.v(make_multi([{2}])) == 0


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_three_methods_agree(r):
    p = ModelParams(4, r, 3, MIXED[:r])
    tables = [VTable(p, m) for m in ("labeling", "patterns", "orbits")]
    for S in _multis(4, 3, 3):
        vals = {t.v(S) for t in tables}
        assert len(vals) == 1, S


def test_v_laws():
    p = ModelParams(4, 4, 3, MIXED)
    table = VTable(p)
    nonzero = 0
    for S in _multis(4, 3, 3):
        v = table.v(S)
        assert abs(v) <= v_magnitude_bound(len(S))
        if not even_cover(S):
            assert v == 0
        nonzero += v != 0
    assert nonzero > 10


def test_c_value_methods_agree():
    for S in _multis(3, 3, 3):
        for r in (1, 2, 3, 4):
            assert c_value(S, MIXED[:r]) == c_value(S, MIXED[:r], method="partitions")


def test_unknown_method():
    with pytest.raises(ValueError):
        VTable(ModelParams(2, 1, 3, (1,)), "magic")


@pytest.mark.parametrize("n,r", list(itertools.product((2, 3, 4), (2, 3))))
@pytest.mark.parametrize("D", [1, 2])
def test_sandwich(n, r, D):
    p = ModelParams(n, r, 3, GEOMETRIC[:r])
    basis = build_basis(p, D)
    M = build_M(p, D, basis)
    w = w_checked(basis, c_vector(p, basis), build_Mplus(basis, M))
    corr2 = corr2_exact(moment_data(p, D, basis=basis))
    assert corr2 <= w_norm_squared(w) <= corr2_bound_v(p, D)


def test_bound_v_edge_cases():
    p = ModelParams(3, 2, 3, GEOMETRIC[:2])
    assert corr2_bound_v(p, 0) == 0
    with pytest.raises(ParameterError):
        corr2_bound_v(p, 3)
    assert corr_bound_v(p, 1) == pytest.approx(math.sqrt(float(corr2_bound_v(p, 1))))


def test_hard_assumption_threshold_is_tight():
    for n, k, D, lm in [(100, 3, 2, Fraction(1)), (10**4, 5, 7, Fraction(1, 2))]:
        r = hard_threshold_r(n, k, D, lm)
        assert hard_assumption(n, k, D, r, lm)
        assert not hard_assumption(n, k, D, r - 1, lm)


@pytest.mark.parametrize("n", [10**2, 10**4, 10**6])
@pytest.mark.parametrize("k", [3, 5])
@pytest.mark.parametrize("lm", [Fraction(1), Fraction(1, 2)])
def test_theorem_endpoint(n, k, lm):
    for D in range(2, 11):
        r = hard_threshold_r(n, k, D, lm)
        series, holds = theorem_bound(n, k, D, r, lm)
        assert holds
        assert series <= n ** -0.5 + 1e-12
        assert mmse_lower_bound(series) >= 1 - n ** -0.5 - 1e-12


def test_series_decreases_in_rank():
    prev = math.inf
    for r in (10, 100, 1000, 10**6):
        s, _ = theorem_bound(3, 3, 2, r, 1)
        assert s < prev
        prev = s
    assert theorem_series_terms(10, 3, 1, 10**30, 1)[0] < 1e-20
    assert theorem_series_terms(10, 3, 3, 2, 1)[2] == math.inf
    assert mmse_lower_bound(5.0) == 0.0


@pytest.mark.parametrize("n,d", [(n, d) for n in range(1, 6) for d in (1, 2)])
def test_even_cover_count(n, d):
    count = len(even_cover_multisets(n, 3, d))
    assert even_cover_count_within_bound(n, 3, d, count)
    assert count <= even_cover_count_bound(n, 3, d) + 1e-9
