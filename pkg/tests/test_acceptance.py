"""Acceptance suite: one test per acceptance criterion, each printing a PASS/FAIL line.

Tolerances and grids are pinned here; every reference value comes from an
independent exact computation rather than a stored constant.
"""

import itertools
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest

from ldtensor.bound import (
    METHODS,
    VTable,
    corr2_bound_v,
    even_cover_count_bound,
    even_cover_multisets,
    hard_assumption,
    hard_threshold_r,
    mmse_lower_bound,
    theorem_bound,
    v_magnitude_bound,
)
from ldtensor.coeffmap import build_basis, build_M, build_Mplus, left_inverse_defect, w_checked, w_norm_squared
from ldtensor.combinat import enumerate_patterns, even_cover, multisets, xor_all
from ldtensor.estimator import build_H, estimate_vector, evaluate_exact, evaluate_mc, threshold_recover
from ldtensor.expander import (
    certify,
    complete_graph,
    edge_connectivity,
    generate_certified,
    is_certified,
    petersen_graph,
    second_eigenvalue,
)
from ldtensor.model import ModelParams, OmegaMode, OmegaSpec, sample_instance
from ldtensor.oracle import P_from_M, corr2_exact, mmse_exact, moment_data, monte_carlo_moments
from ldtensor.paths import PathEnumerator, check_pairing, v_expanded, v_good_paths

LAM = (Fraction(1), Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))
GRID = [(n, r, D) for n, r, D in itertools.product((2, 3, 4), (2, 3), (1, 2))]
SANDWICH_TOL = 1e-9
SERIES_SLACK = 1e-12
FIXTURE_TOL = 1e-9
MC_SIGMAS = 4


def _params(n, r, k=3, seed=0):
    return ModelParams(n, r, k, LAM[:r], seed)


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail="", elapsed=None):
        timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {number:>2} {title}: {detail}{timing}")
        return ok

    return emit


@pytest.fixture(scope="module")
def H_k4():
    return build_H(certify(complete_graph(4)), 3)


def test_01_left_inverse_identity(report):
    t0 = time.time()
    bad = []
    for n, r, D in GRID:
        p = _params(n, r)
        basis = build_basis(p, D)
        M = build_M(p, D, basis)
        if left_inverse_defect(basis, build_Mplus(basis, M), M):
            bad.append((n, r, D))
    elapsed = time.time() - t0
    ok = not bad and elapsed < 60
    assert report(1, "left inverse exact on grid", ok, f"{len(GRID)} points, failures={bad}", elapsed)


def test_02_correlation_sandwich(report):
    t0 = time.time()
    bad, worst = [], -math.inf
    for n, r, D in GRID:
        p = _params(n, r)
        basis = build_basis(p, D)
        mom = moment_data(p, D, basis=basis)
        w2 = w_norm_squared(w_checked(basis, mom.c, build_Mplus(basis, build_M(p, D, basis))))
        corr2, v2 = float(corr2_exact(mom)), float(corr2_bound_v(p, D))
        worst = max(worst, corr2 - float(w2), float(w2) - v2)
        if not (corr2 <= float(w2) + SANDWICH_TOL and float(w2) <= v2 + SANDWICH_TOL):
            bad.append((n, r, D))
    elapsed = time.time() - t0
    ok = not bad and elapsed < 120
    assert report(2, "corr^2 <= |w|^2 <= v-bound", ok, f"max violation {worst:.3g}, failures={bad}", elapsed)


def test_03_bad_path_cancellation(report):
    # every even-cover multiset of <= 3 sets of size <= 3 spans at most 5 elements up to relabeling
    t0 = time.time()
    n, failures, checked, paths = 5, [], 0, 0
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(n, 3)
    for r in range(1, 5):
        p = _params(n, r)
        enum, table = PathEnumerator(p), VTable(p)
        for d in range(1, 4):
            for S in multisets(omega, d):
                S = tuple(S)
                checked += 1
                paths += len(enum.paths(S))
                if not (v_expanded(p, S, enum) == v_good_paths(p, S, enum) == table.v(S)):
                    failures.append(("value", r, S))
                failures += [(msg, r, S) for msg in check_pairing(p, S, enum)]
    elapsed = time.time() - t0
    ok = not failures and elapsed < 300
    detail = f"{checked} multisets, {paths} paths, failures={failures[:3]}"
    assert report(3, "expanded = good paths = recurrence; pairing is an involution", ok, detail, elapsed)


@pytest.mark.parametrize("n,r", [(4, 2), (4, 3), (5, 4)])
def test_04_v_table_laws(report, n, r):
    p = _params(n, r)
    tables = {m: VTable(p, m) for m in METHODS}
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(n, 3)
    problems = [m for m, t in tables.items() if t.v(()) != 0]
    steps = 0
    for d in range(1, 4):
        for S in multisets(omega, d):
            S = tuple(S)
            vals = {t.v(S) for t in tables.values()}
            v = vals.pop()
            if vals:
                problems.append(("methods", S))
            if not even_cover(S) and v != 0:
                problems.append(("even cover", S))
            if abs(v) > v_magnitude_bound(len(S)):
                problems.append(("magnitude", S))
            for pi in enumerate_patterns(S, p.k, p.lam):
                steps += 1
                if abs(pi.m) > 2 ** (len(S) - len(pi.target)) or abs(pi.lam) > 1:
                    problems.append(("step", S, pi.entries))
    assert report(4, f"v-table laws n={n} r={r}", not problems, f"{steps} steps, problems={problems[:3]}")


def test_05_theorem_series_endpoint(report):
    t0 = time.time()
    bad, points, margin = [], 0, math.inf
    for n, k, D, lm in itertools.product((10**2, 10**4, 10**6), (3, 5), range(2, 11), (Fraction(1), Fraction(1, 2))):
        r = hard_threshold_r(n, k, D, lm)
        series, holds = theorem_bound(n, k, D, r, lm)
        target = n**-0.5
        points += 1
        margin = min(margin, target - series)
        if not holds or hard_assumption(n, k, D, r - 1, lm) or not series <= target + SERIES_SLACK:
            bad.append((n, k, D, lm))
        if mmse_lower_bound(series) < 1 - target - SERIES_SLACK:
            bad.append(("mmse", n, k, D, lm))
    elapsed = time.time() - t0
    ok = not bad
    assert report(5, "proof series <= n^-1/2 at the rank threshold", ok, f"{points} points, min margin {margin:.3g}, failures={bad[:3]}", elapsed)


def test_06_even_cover_counts(report):
    bad, counts = [], {}
    for n, d in itertools.product(range(1, 6), (1, 2)):
        count = len(even_cover_multisets(n, 3, d))
        counts[(n, d)] = count
        rhs = Fraction(n) ** (3 * d - 1) * Fraction(3 * d + 3, 2) ** (6 * d)
        if Fraction(count) ** 2 > rhs:
            bad.append((n, d, count, even_cover_count_bound(n, 3, d)))
    assert report(6, "even-cover counts within bound", not bad, f"counts={counts}, failures={bad}")


def test_07_rank_one_exact_estimator(report, H_k4):
    t0 = time.time()
    n, bad_scalar, bad_vector = 12, 0, 0
    for seed in range(100):
        inst = sample_instance(ModelParams(n, 1, 3, (1,), seed))
        if evaluate_exact(H_k4, inst) != inst.A[0, 0]:
            bad_scalar += 1
        if not np.array_equal(threshold_recover(estimate_vector(H_k4, inst, None, exact=True)), inst.A[:, 0]):
            bad_vector += 1
    elapsed = time.time() - t0
    ok = bad_scalar == 0 and bad_vector == 0 and elapsed < 60
    detail = f"100 instances, scalar failures={bad_scalar}, recovery failures={bad_vector}"
    assert report(7, "r=1 exact estimator returns a_11 and recovers a_1", ok, detail, elapsed)


def test_08_monte_carlo_unbiased(report, H_k4):
    t0 = time.time()
    inst = sample_instance(ModelParams(12, 3, 3, LAM[:3], 2024))
    exact = float(evaluate_exact(H_k4, inst))
    misses = []
    for seed in range(20):
        mean, se = evaluate_mc(H_k4, inst, 100_000, seed)
        if abs(mean - exact) > MC_SIGMAS * se:
            misses.append((seed, (mean - exact) / se))
    elapsed = time.time() - t0
    ok = len(misses) <= 1 and elapsed < 120
    assert report(8, "Monte Carlo within 4 SE of exact", ok, f"exact={exact:.6g}, misses={misses}", elapsed)


def test_09_moment_matrix(report):
    bad = []
    for n, r, D in GRID:
        p = _params(n, r)
        basis = build_basis(p, D)
        if P_from_M(build_M(p, D, basis)) != moment_data(p, D, basis=basis).P:
            bad.append((n, r, D))

    # pairs sharing the XOR of their members, so most chosen moments are nonzero
    p = _params(4, 3)
    P = moment_data(p, 2).P
    basis = build_basis(p, 2).s_basis
    classes = {}
    for S in basis:
        classes.setdefault(xor_all(S), []).append(S)
    pool = [c for c in classes.values() if len(c) >= 2]
    rng = random.Random(9)
    pairs = [tuple(rng.sample(rng.choice(pool), 2)) for _ in range(10)]
    misses, nonzero = [], 0
    for (S, T), (mean, se) in zip(pairs, monte_carlo_moments(p, pairs, 100_000, seed=9)):
        exact = float(P.get(S, {}).get(T, 0))
        nonzero += exact != 0
        if abs(mean - exact) > MC_SIGMAS * se + SERIES_SLACK:
            misses.append((S, T, mean, exact))
    ok = not bad and not misses
    detail = f"P=M^T M failures={bad}; {nonzero}/10 nonzero moments, MC misses={misses}"
    assert report(9, "moment matrix exact and sampled", ok, detail)


def test_10_mmse_range_and_monotone(report):
    bad = []
    for n, r in itertools.product((2, 3, 4), (2, 3)):
        p = _params(n, r)
        values = [mmse_exact(math.sqrt(corr2_exact(moment_data(p, D)))) for D in (1, 2)]
        if not all(0 <= x <= 1 for x in values) or values[1] > values[0] + SANDWICH_TOL:
            bad.append((n, r, values))
    assert report(10, "MMSE in [0,1] and non-increasing in D", not bad, f"failures={bad}")


def test_11_expander_certification(report):
    t0 = time.time()
    fixtures = {}
    for name, G, mu in (("K4", complete_graph(4), -1.0), ("Petersen", petersen_graph(), 1.0)):
        conn, mu2 = edge_connectivity(G), second_eigenvalue(G)
        fixtures[name] = conn == 3 and abs(mu2 - mu) <= FIXTURE_TOL
    failed = []
    for seed in range(20):
        G = generate_certified(10, 3, seed=seed, max_attempts=100)
        if not is_certified(G):
            failed.append(seed)
    elapsed = time.time() - t0
    ok = all(fixtures.values()) and not failed
    assert report(11, "expander fixtures and certified generation", ok, f"fixtures={fixtures}, failed seeds={failed}", elapsed)
