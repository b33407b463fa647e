import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldtensor.model import (
    CapacityError,
    DomainError,
    Instance,
    ModelParams,
    OmegaMode,
    OmegaSpec,
    ParameterError,
    format_fraction,
    mask_of,
    materialize,
    odd_order,
    parse_fraction,
    sample_instance,
    tensor_entry,
)


def test_sampling_is_deterministic():
    p = ModelParams(2, 1, 3, (1,), seed=12345)
    a, b = sample_instance(p), sample_instance(p)
    assert np.array_equal(a.A, b.A)
    assert set(np.unique(a.A)) <= {-1, 1}


def test_sample_mean_is_centered():
    A = np.stack([sample_instance(ModelParams(3, 2, 3, (1, Fraction(1, 2)), s)).A for s in range(10_000)])
    # 6 entries per instance, each Rademacher
    sigma = 1 / np.sqrt(A.size)
    assert abs(A.mean()) < 4 * sigma


@pytest.mark.parametrize(
    "lam",
    [(1, 2), (2, 1), (1, 0), (1, Fraction(1, 2), Fraction(3, 4))],
)
def test_invalid_weights_rejected(lam):
    with pytest.raises(ParameterError):
        ModelParams(3, len(lam), 3, lam)


def test_other_invariants():
    with pytest.raises(ParameterError):
        ModelParams(3, 1, 2, (1,))
    with pytest.raises(ParameterError):
        ModelParams(0, 1, 3, (1,))
    with pytest.raises(ParameterError):
        ModelParams(3, 2, 3, (1,))
    with pytest.raises(ParameterError):
        ModelParams(3, 1, 3, (1,), seed=-1)
    assert ModelParams(3, 2, 3, (1, Fraction(-1, 2))).lambda_min == Fraction(1, 2)


def test_spiked_normalisation():
    p = ModelParams.spiked(4, 3, 3, Fraction(1, 4))
    assert p.lam == (1, Fraction(4, 5), Fraction(4, 5))


def test_fraction_parsing():
    assert parse_fraction("3/4") == Fraction(3, 4)
    assert parse_fraction(" -2 ") == -2
    assert format_fraction(Fraction(-3, 6)) == "-1/2"
    for bad in ("1/0", "abc", "1/x", 0.5):
        with pytest.raises(ParameterError):
            parse_fraction(bad)


def test_all_ones_entries():
    inst = Instance(ModelParams(4, 1, 3, (1,)), np.ones((4, 1)))
    for I in ({1}, {2, 4}, {1, 2, 3}):
        assert tensor_entry(inst, I) == 1


def test_entry_matches_triple_sum():
    p = ModelParams(4, 3, 3, (1, Fraction(1, 2), Fraction(-1, 3)), seed=9)
    inst = sample_instance(p)
    a = inst.A
    direct = sum(p.lam[j] * int(a[0, j]) * int(a[1, j]) * int(a[2, j]) for j in range(3))
    assert tensor_entry(inst, {1, 2, 3}) == direct
    assert isinstance(tensor_entry(inst, {1, 2, 3}), Fraction)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), size=st.integers(1, 3))
def test_negation_parity(seed, size):
    inst = sample_instance(ModelParams(4, 3, 3, (1, Fraction(1, 2), Fraction(1, 3)), seed))
    neg = inst.negated()
    for I in itertools.combinations(range(1, 5), size):
        sign = -1 if size % 2 else 1
        assert tensor_entry(neg, I) == sign * tensor_entry(inst, I)


def test_entry_domain_errors():
    inst = sample_instance(ModelParams(5, 1, 3, (1,)))
    with pytest.raises(DomainError):
        tensor_entry(inst, set())
    with pytest.raises(DomainError):
        tensor_entry(inst, {1, 2, 3, 4})
    with pytest.raises(DomainError):
        tensor_entry(inst, {6})


@pytest.mark.parametrize(
    "n,mode,count",
    [(2, OmegaMode.LOWER_BOUND_ALL, 3), (4, OmegaMode.LOWER_BOUND_ALL, 14), (5, OmegaMode.UPPER_BOUND_TOP, 10)],
)
def test_materialize_counts(n, mode, count):
    inst = sample_instance(ModelParams(n, 2, 3, (1, Fraction(1, 2)), 1))
    table = materialize(inst, OmegaSpec(mode))
    assert len(table) == count == OmegaSpec(mode).count(n, 3)
    assert all(table[I] == tensor_entry(inst, I) for I in table)


def test_materialize_guard(monkeypatch):
    import ldtensor.model as model

    monkeypatch.setattr(model, "MATERIALIZE_GUARD", 5)
    with pytest.raises(CapacityError):
        materialize(sample_instance(ModelParams(4, 1, 3, (1,))), OmegaSpec(OmegaMode.LOWER_BOUND_ALL))


def test_omega_order_and_odd_order():
    assert odd_order(3) == 3 and odd_order(4) == 3 and odd_order(6) == 5
    assert OmegaSpec(OmegaMode.UPPER_BOUND_TOP).size_range(4) == (3, 4)
    subsets = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(3, 3)
    assert subsets[:4] == [mask_of({1}), mask_of({2}), mask_of({3}), mask_of({1, 2})]


def test_instance_json_round_trip():
    inst = sample_instance(ModelParams(3, 2, 3, (1, Fraction(-2, 3)), 77))
    doc = json.loads(inst.to_json())
    assert doc["lambda"] == ["1/1", "-2/3"]
    back = Instance.from_json(inst.to_json())
    assert back.params == inst.params and np.array_equal(back.A, inst.A)


def test_instance_rejects_bad_entries():
    with pytest.raises(ParameterError):
        Instance(ModelParams(2, 1, 3, (1,)), np.array([[1], [0]]))
    inst = sample_instance(ModelParams(2, 1, 3, (1,)))
    with pytest.raises(ValueError):
        inst.A[0, 0] = 1
