import itertools
import random
from fractions import Fraction

import pytest

from ldtensor.coeffmap import (
    CapacityError,
    ConsistencyError,
    build_basis,
    build_M,
    build_Mplus,
    build_Qplus,
    corr_upper_from_w,
    dump_coo,
    generic_block_zero,
    left_inverse_defect,
    matmul,
    v_from_w,
    w_checked,
    w_recurrence,
    w_vector,
)
from ldtensor.combinat import elements_of, make_multi, make_support
from ldtensor.model import ModelParams, ParameterError, sample_instance, tensor_entry
from ldtensor.oracle import c_vector

from conftest import GEOMETRIC

GRID = [
    ModelParams(n, r, 3, GEOMETRIC[:r])
    for n, r in itertools.product((2, 3, 4), (2, 3))
]


def _setup(params, D):
    basis = build_basis(params, D)
    M = build_M(params, D, basis)
    return basis, M, build_Mplus(basis, M)


def test_degree_one_column():
    p = ModelParams(3, 3, 3, GEOMETRIC[:3])
    M = build_M(p, 1)
    S = make_multi([{1}])
    col = {U: row[S] for U, row in M.items() if S in row}
    assert col == {make_support({j: {1}}): GEOMETRIC[j - 1] for j in (1, 2, 3)}


def test_rank_one_single_nonzero_per_column():
    p = ModelParams(3, 1, 3, (1,))
    M = build_M(p, 1)
    basis = build_basis(p, 1)
    for S in basis.s_basis:
        entries = [row[S] for row in M.values() if S in row]
        assert entries == [1]


def test_transfer_matrix_dual_evaluation():
    p = ModelParams(3, 2, 3, (1, Fraction(-1, 2)))
    basis, M, _ = _setup(p, 2)
    rng = random.Random(4)
    fhat = {S: Fraction(rng.randint(-3, 3), rng.randint(1, 4)) for S in rng.sample(basis.s_basis, 6)}
    ghat: dict = {}
    for U, row in M.items():
        val = sum((row.get(S, 0) * f for S, f in fhat.items()), Fraction(0))
        if val:
            ghat[U] = val
    for seed in range(100):
        inst = sample_instance(ModelParams(3, 2, 3, p.lam, seed))
        f = Fraction(0)
        for S, coef in fhat.items():
            term = coef
            for I in S:
                term *= tensor_entry(inst, I)
            f += term
        g = Fraction(0)
        for U, coef in ghat.items():
            sign = 1
            for j, m in U:
                for i in elements_of(m):
                    sign *= int(inst.A[i - 1, j - 1])
            g += coef * sign
        assert f == g


@pytest.mark.parametrize("params", GRID, ids=lambda p: f"n{p.n}r{p.r}")
@pytest.mark.parametrize("D", [1, 2])
def test_left_inverse_exact(params, D):
    basis, M, Mplus = _setup(params, D)
    assert left_inverse_defect(basis, Mplus, M) == []
    assert generic_block_zero(basis, M)
    nongeneric = set(basis.u_other)
    assert all(not (set(row) & nongeneric) for row in Mplus.values())


def test_qplus_entries_and_identity():
    p = ModelParams(3, 3, 3, GEOMETRIC[:3])
    basis, M, _ = _setup(p, 2)
    Q1 = build_Qplus(basis, 1)
    S = make_multi([{1}])
    for j in (1, 2, 3):
        assert Q1[S][make_support({j: {1}})] == 1 / (GEOMETRIC[j - 1] * 3)
    for d in (1, 2):
        Qp = build_Qplus(basis, d)
        Q = {U: {S: v for S, v in M.get(U, {}).items() if len(S) == d} for U in basis.u_level(d)}
        prod = matmul(Qp, Q)
        for S in basis.s_level(d):
            assert prod.get(S, {}) == {S: 1}
        for S, row in Qp.items():
            for U in row:
                assert sorted(m for _, m in U) == sorted(S)


def test_degree_above_rank_rejected():
    p = ModelParams(3, 1, 3, (1,))
    basis = build_basis(p, 2)
    with pytest.raises(ParameterError):
        build_Qplus(basis, 2)
    with pytest.raises(ParameterError):
        build_Mplus(basis, build_M(p, 2, basis))


def test_labeling_guard(monkeypatch):
    import ldtensor.coeffmap as cm

    monkeypatch.setattr(cm, "LABELING_GUARD", 10)
    with pytest.raises(CapacityError):
        build_basis(ModelParams(2, 4, 3, GEOMETRIC), 2)


@pytest.mark.parametrize("params", GRID, ids=lambda p: f"n{p.n}r{p.r}")
def test_w_matrix_and_recurrence_agree(params):
    basis, M, Mplus = _setup(params, 2)
    c = c_vector(params, basis)
    w = w_checked(basis, c, Mplus)
    assert w == w_recurrence(basis, c)
    assert all(U in set(basis.u_basis) for U in w)


def test_w_consistency_error():
    p = ModelParams(2, 2, 3, GEOMETRIC[:2])
    basis, M, Mplus = _setup(p, 1)
    c = c_vector(p, basis)
    broken = {S: dict(row) for S, row in Mplus.items()}
    S = make_multi([{1}])
    U = next(iter(broken[S]))
    broken[S][U] += 1
    with pytest.raises(ConsistencyError):
        w_checked(basis, c, broken)


def test_w_independent_of_degree():
    p = ModelParams(3, 3, 3, GEOMETRIC[:3])
    b1, _, mp1 = _setup(p, 1)
    b2, _, mp2 = _setup(p, 2)
    w1 = w_vector(c_vector(p, b1), mp1)
    w2 = w_vector(c_vector(p, b2), mp2)
    assert all(w2.get(U, 0) == v for U, v in w1.items())
    assert all(w1.get(U, 0) == v for U, v in w2.items() if len(U) <= 1)


def test_rank_one_degree_one_w():
    p = ModelParams(2, 1, 3, (1,))
    basis, M, Mplus = _setup(p, 1)
    w = w_checked(basis, c_vector(p, basis), Mplus)
    assert w[make_support({1: {1}})] == 1
    assert corr_upper_from_w(w) >= 1


def test_corr_upper_zero():
    assert corr_upper_from_w({}) == 0


def test_v_constant_across_supports():
    p = ModelParams(4, 3, 3, GEOMETRIC[:3])
    basis, _, Mplus = _setup(p, 2)
    w = w_checked(basis, c_vector(p, basis), Mplus)
    groups = v_from_w(basis, w)
    assert all(len(vals) == 1 for vals in groups.values())


def test_coo_dump():
    p = ModelParams(2, 1, 3, (1,))
    basis, M, _ = _setup(p, 1)
    text = dump_coo(M, list(basis.u_basis), list(basis.s_basis))
    assert text.splitlines()
    for line in text.splitlines():
        i, j, v = line.split()
        assert int(i) >= 0 and int(j) >= 0 and "/" in v
