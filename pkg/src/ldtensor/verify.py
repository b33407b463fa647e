"""Cross-module identity checks used by the ``verify`` mode.

Each check returns a list of :class:`CheckResult`; a grid point contributes one
result per identity so that failures name both the identity and the point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from .bound import (
    METHODS,
    VTable,
    corr2_bound_v,
    even_cover_count_within_bound,
    even_cover_multisets,
    v_magnitude_bound,
)
from .coeffmap import (
    build_basis,
    build_M,
    build_Mplus,
    left_inverse_defect,
    v_from_w,
    w_checked,
    w_norm_squared,
    ConsistencyError,
)
from .combinat import enumerate_patterns, even_cover, multisets
from .estimator import build_H, evaluate_decomposed, evaluate_exact, f2_closed_form, threshold_recover
from .expander import certify, complete_graph, edge_connectivity, is_certified, petersen_graph, second_eigenvalue
from .model import ModelParams, OmegaMode, OmegaSpec, sample_instance
from .oracle import P_from_M, corr2_eigen, corr2_exact, mmse_exact, moment_data
from .paths import PathEnumerator, check_pairing, v_expanded, v_good_paths

SANDWICH_TOL = 1e-9
EIGEN_TOL = 1e-9
FIXTURE_TOL = 1e-9


@dataclass(frozen=True)
class CheckResult:
    identity: str
    point: str
    ok: bool
    detail: str = ""


def _point(p: ModelParams, D: int | None = None) -> str:
    s = f"n={p.n} r={p.r} k={p.k}"
    return s + (f" D={D}" if D is not None else "")


def check_grid_point(params: ModelParams, D: int) -> list[CheckResult]:
    """Linear-algebra identities and the correlation sandwich at one ``(params, D)``."""
    out = []
    pt = _point(params, D)
    basis = build_basis(params, D)
    M = build_M(params, D, basis)
    Mplus = build_Mplus(basis, M)
    defect = left_inverse_defect(basis, Mplus, M)
    out.append(CheckResult("left_inverse", pt, not defect, f"{len(defect)} bad entries"))

    mom = moment_data(params, D, basis=basis)
    out.append(CheckResult("P_equals_MtM", pt, P_from_M(M) == mom.P))

    try:
        w = w_checked(basis, mom.c, Mplus)
        out.append(CheckResult("w_recurrence", pt, True))
    except ConsistencyError as exc:
        out.append(CheckResult("w_recurrence", pt, False, str(exc)))
        return out

    corr2 = corr2_exact(mom)
    w2 = w_norm_squared(w)
    table = VTable(params)
    v2 = corr2_bound_v(params, D, table)
    ok = corr2 <= w2 <= v2
    out.append(CheckResult("sandwich", pt, ok, f"{float(corr2):.12g} <= {float(w2):.12g} <= {float(v2):.12g}"))

    eig = corr2_eigen(mom)
    out.append(CheckResult("corr_exact_vs_eigen", pt, abs(eig - float(corr2)) <= EIGEN_TOL, f"{eig} vs {float(corr2)}"))

    bad = [S for S, vals in v_from_w(basis, w).items() if vals != {table.v(S)}]
    out.append(CheckResult("v_from_w", pt, not bad, f"{len(bad)} mismatches"))
    return out


def check_mmse_monotone(params: ModelParams, D_max: int) -> CheckResult:
    values = []
    for D in range(1, min(D_max, params.r) + 1):
        values.append(mmse_exact(math.sqrt(corr2_exact(moment_data(params, D)))))
    ok = all(0 <= x <= 1 for x in values) and all(b <= a + SANDWICH_TOL for a, b in zip(values, values[1:]))
    return CheckResult("mmse_monotone", _point(params), ok, str(values))


def check_v_laws(params: ModelParams, max_size: int) -> list[CheckResult]:
    pt = _point(params)
    tables = {m: VTable(params, m) for m in METHODS}
    omega = OmegaSpec(OmegaMode.LOWER_BOUND_ALL).subsets(params.n, params.k)
    disagree, nonzero_odd, too_big, helper = [], [], [], []
    for d in range(1, max_size + 1):
        for S in multisets(omega, d):
            S = tuple(S)
            vals = {m: t.v(S) for m, t in tables.items()}
            if len(set(vals.values())) != 1:
                disagree.append(S)
            v = vals["patterns"]
            if not even_cover(S) and v != 0:
                nonzero_odd.append(S)
            if abs(v) > v_magnitude_bound(len(S)):
                too_big.append(S)
            for pi in enumerate_patterns(S, params.k, params.lam):
                if abs(pi.m) > 2 ** (len(S) - len(pi.target)) or abs(pi.lam) > 1:
                    helper.append((S, pi.entries))
    return [
        CheckResult("v_methods_agree", pt, not disagree, f"{len(disagree)} mismatches"),
        CheckResult("v_empty_zero", pt, all(t.v(()) == 0 for t in tables.values())),
        CheckResult("v_even_cover", pt, not nonzero_odd, f"{len(nonzero_odd)} violations"),
        CheckResult("v_magnitude", pt, not too_big, f"{len(too_big)} violations"),
        CheckResult("pattern_helper_bounds", pt, not helper, f"{len(helper)} violations"),
    ]


def check_paths(params: ModelParams, max_size: int) -> CheckResult:
    enum = PathEnumerator(params)
    table = VTable(params)
    failures = []
    for d in range(1, max_size + 1):
        for S in even_cover_multisets(params.n, params.k, d):
            v = table.v(S)
            if not (v_expanded(params, S, enum) == v_good_paths(params, S, enum) == v):
                failures.append(f"value mismatch at {S}")
            failures += check_pairing(params, S, enum)
    return CheckResult("path_cancellation", _point(params), not failures, "; ".join(failures[:3]))


def check_even_cover_counts(n: int, k: int, d: int) -> CheckResult:
    count = len(even_cover_multisets(n, k, d))
    return CheckResult(
        "even_cover_count", f"n={n} k={k} d={d}", even_cover_count_within_bound(n, k, d, count), f"count={count}"
    )


def check_expander_fixtures() -> list[CheckResult]:
    out = []
    for name, G, mu in (("K4", complete_graph(4), -1.0), ("Petersen", petersen_graph(), 1.0)):
        conn, mu2 = edge_connectivity(G), second_eigenvalue(G)
        ok = conn == 3 and abs(mu2 - mu) <= FIXTURE_TOL and is_certified(certify(G))
        out.append(CheckResult("expander_fixture", name, ok, f"connectivity={conn} mu2={mu2}"))
    return out


def check_estimator_identities(seed: int = 0) -> list[CheckResult]:
    """Exact estimator identities on the K4-based network at the smallest admissible ``n``."""
    H = build_H(certify(complete_graph(4)), 3)
    out = []
    n = len(H.edges)
    bad = 0
    for s in range(3):
        inst = sample_instance(ModelParams(n, 1, 3, (1,), seed + s))
        if evaluate_exact(H, inst) != inst.A[0, 0]:
            bad += 1
        est = [evaluate_exact(H, inst, target=i) for i in range(1, n + 1)]
        if (threshold_recover([float(x) for x in est]) != inst.A[:, 0]).any():
            bad += 1
    out.append(CheckResult("estimator_rank_one", f"n={n} N=4", bad == 0, f"{bad} failures"))

    inst = sample_instance(ModelParams(n, 2, 3, (1, Fraction(1, 2)), seed))
    f1, f2, f3 = evaluate_decomposed(H, inst)
    ok = f1 + f2 + f3 == evaluate_exact(H, inst) and f1 == inst.A[0, 0] and f2 == f2_closed_form(inst.params, H, inst)
    out.append(CheckResult("estimator_decomposition", f"n={n} r=2 N=4", ok, f"f=({f1}, {f2}, {f3})"))
    return out


def default_grid(lam: tuple[Fraction, ...] = (Fraction(1), Fraction(1, 2), Fraction(1, 4))):
    for n, r, D in itertools.product((2, 3, 4), (2, 3), (1, 2)):
        yield ModelParams(n, r, 3, lam[:r]), D
