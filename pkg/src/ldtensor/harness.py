"""Experiment configuration, grid runners and CSV emission.

A config is one JSON document::

    {"mode": "oracle", "n": [2, 3], "r": [2, 3], "k": [3], "D": [1, 2],
     "lambda": {"geometric": "1/2"}, "seeds": [0], "samples": 10000}

``lambda`` is one of ``{"values": [...]}`` (first ``r`` entries used),
``{"geometric": q}`` (``lambda_j = q^(j-1)``) or ``{"delta": d}`` (one spiked
component of weight ``1 + d``, normalised to ``lambda_1 = 1``).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import __version__
from ._seeding import derive_rng
from .bound import VTable, corr2_bound_v, mmse_lower_bound, theorem_bound
from .coeffmap import build_basis, build_M, build_Mplus, w_checked, w_norm_squared
from .estimator import (
    build_H,
    choose_D,
    bounds_for_N,
    estimate_vector,
    threshold_recover,
)
from .expander import generate_certified
from .model import CapacityError, ModelParams, ParameterError, format_fraction, odd_order, parse_fraction, sample_instance
from .oracle import corr2_exact, mmse_exact, moment_data
from .verify import (
    CheckResult,
    check_estimator_identities,
    check_even_cover_counts,
    check_expander_fixtures,
    check_grid_point,
    check_mmse_monotone,
    check_paths,
    check_v_laws,
)

MODES = ("oracle", "bound", "estimate", "verify", "sweep")
SEED_ENV = "LDTENSOR_SEED"
ORACLE_MAX_N = 5
MAX_ESTIMATOR_N = 64
MAX_MATERIALISED_R = 10**4
MAX_VECTOR_WORK = 10**9

COLUMNS = {
    "oracle": ["n", "r", "k", "D", "lambda_min", "corr_exact", "mmse_exact", "corr_w_bound", "corr_v_bound"],
    "bound": ["n", "r", "k", "D", "lambda_min", "assumption_holds", "corr2_bound", "mmse_lower_bound"],
    "estimate": [
        "n", "r", "k", "D", "N", "samples", "coord_mse_empirical", "vector_mse_empirical",
        "exact_recovery_rate", "f2_bound", "f3_bound", "assumption_easy_holds",
    ],
    "sweep": ["n", "r", "k", "D", "N", "coord_mse_empirical", "mmse_exact", "mmse_lower_bound"],
    "verify": ["identity", "point", "status", "detail"],
}


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    n: tuple[int, ...] = (2, 3, 4)
    r: tuple[int, ...] = (2, 3)
    k: tuple[int, ...] = (3,)
    D: tuple[int, ...] = (1, 2)
    lambda_spec: dict = field(default_factory=lambda: {"geometric": "1/2"})
    seeds: tuple[int, ...] = (0,)
    samples: int = 10000
    oracle_D: int = 2
    override_D: int | None = None
    output_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("n", "r", "k", "D", "seeds"):
            vals = getattr(self, name)
            if not vals or any(not isinstance(v, int) or isinstance(v, bool) or v < 0 for v in vals):
                raise UsageError(f"{name} must be a nonempty list of non-negative integers")
        if self.samples < 0:
            raise UsageError("samples must be non-negative (0 selects exact evaluation)")
        self.lambda_min(max(self.r))

    def lambda_min(self, r: int) -> Fraction:
        """``|lambda_r|`` without materialising all ``r`` weights (bound mode uses huge ``r``)."""
        spec = self.lambda_spec
        try:
            if "min" in spec:
                return abs(parse_fraction(spec["min"]))
            if "delta" in spec:
                return Fraction(1) if r == 1 else 1 / (1 + parse_fraction(spec["delta"]))
            if "geometric" in spec and r > MAX_MATERIALISED_R:
                raise UsageError(f"geometric weights with r={r} are not representable; use a min spec")
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
        return abs(self.weights(r)[-1])

    def weights(self, r: int) -> tuple[Fraction, ...]:
        spec = self.lambda_spec
        try:
            if "values" in spec:
                vals = tuple(parse_fraction(x) for x in spec["values"])
                if len(vals) < r:
                    raise UsageError(f"lambda values list has {len(vals)} entries, need {r}")
                return vals[:r]
            if "geometric" in spec:
                q = parse_fraction(spec["geometric"])
                return tuple(q**j for j in range(r))
            if "delta" in spec:
                d = parse_fraction(spec["delta"])
                return (Fraction(1),) + (1 / (1 + d),) * (r - 1)
            if "min" in spec:
                raise UsageError("a min-only lambda spec supports bound mode only")
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
        raise UsageError(f"lambda spec needs one of values/geometric/delta/min, got {spec!r}")

    def params(self, n: int, r: int, k: int, seed: int = 0) -> ModelParams:
        if r > MAX_MATERIALISED_R:
            raise UsageError(f"r={r} is only supported in bound mode")
        try:
            return ModelParams(n, r, k, self.weights(r), seed)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_spec")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, mode: str | None = None) -> "ExperimentConfig":
        d = dict(d)
        if mode is not None:
            d["mode"] = mode
        if "mode" not in d:
            raise UsageError("config has no mode")
        lam = d.pop("lambda", None)
        if lam is not None:
            d["lambda_spec"] = {"values": lam} if isinstance(lam, list) else lam
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key in ("n", "r", "k", "D", "seeds"):
            if key in d:
                v = d[key]
                d[key] = tuple(v) if isinstance(v, list) else (v,)
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                d["seeds"] = (int(env),)
            except ValueError as exc:
                raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
        return cls(**d)

    @classmethod
    def load(cls, path: str, mode: str | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, mode)


# -- formatting -----------------------------------------------------------


def _cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, Fraction):
        return format(float(x), ".17g")
    if isinstance(x, float):
        return format(x, ".17g")
    if x is None:
        return ""
    return str(x)


def render_csv(mode: str, config: ExperimentConfig, rows: Sequence[Sequence], notes: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    buf.write(f"# ldtensor {__version__}\n")
    buf.write(f"# config: {config.to_json()}\n")
    for note in notes:
        buf.write(f"# {note}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[mode])
    for row in rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


# -- per-point workers ------------------------------------------------------


def oracle_row(params: ModelParams, D: int) -> list:
    basis = build_basis(params, D)
    M = build_M(params, D, basis)
    mom = moment_data(params, D, basis=basis)
    w = w_checked(basis, mom.c, build_Mplus(basis, M))
    corr = math.sqrt(corr2_exact(mom))
    return [
        params.n, params.r, params.k, D, format_fraction(params.lambda_min),
        corr, mmse_exact(corr), math.sqrt(w_norm_squared(w)), math.sqrt(corr2_bound_v(params, D, VTable(params))),
    ]


def bound_row(n: int, r: int, k: int, D: int, lambda_min: Fraction) -> list:
    series, holds = theorem_bound(n, k, D, r, lambda_min)
    return [n, r, k, D, format_fraction(lambda_min), holds, series, mmse_lower_bound(series)]


@dataclass(frozen=True)
class EstimateResult:
    D: int
    N: int
    coord_mse: float
    vector_mse: float
    recovery_rate: float
    asymptotic: bool


def resolve_D(params: ModelParams, override: int | None) -> tuple[int, bool]:
    """Network degree ``D`` and whether it is outside desk reach."""
    if override is not None:
        if override % 2 == 0 or override < 5:
            raise UsageError(f"override D must be odd and >= 5 (N = D - 1 even, >= 4), got {override}")
        return override, False
    lam2 = float(abs(params.lam[1])) if params.r > 1 else 0.0
    D = choose_D(params.n, params.k, lam2)
    return D, D - 1 > MAX_ESTIMATOR_N


def network_edge_count(N: int, k: int) -> int:
    return k * N // 2 + (odd_order(k) - 1) // 2 + 1


def estimate_point(params: ModelParams, D: int, seeds: Sequence[int], samples: int) -> EstimateResult:
    """Empirical errors of the network estimator over ``seeds`` (graph and instance both reseeded)."""
    N = D - 1
    edges = network_edge_count(N, params.k)
    work = params.n * max(samples, 1) * edges * len(seeds)
    if work > MAX_VECTOR_WORK:
        raise CapacityError(f"vector estimate needs about {work:.2e} operations (limit {MAX_VECTOR_WORK:.0e})")
    coord, vec, hits = [], [], 0
    for seed in seeds:
        G = generate_certified(N, params.k, seed=seed)
        H = build_H(G, params.k, seed)
        inst_seed = int(derive_rng(seed, 8).integers(0, 2**63))
        inst = sample_instance(ModelParams(params.n, params.r, params.k, params.lam, inst_seed))
        est = estimate_vector(H, inst, samples or None, seed, exact=samples == 0)
        truth = inst.A[:, 0].astype(float)
        coord.append((est[0] - truth[0]) ** 2)
        vec.append(float(np.sum((est - truth) ** 2)))
        hits += bool(np.all(threshold_recover(est) == inst.A[:, 0]))
    return EstimateResult(D, N, float(np.mean(coord)), float(np.mean(vec)), hits / len(seeds), False)


def estimate_row(params: ModelParams, D_override: int | None, seeds: Sequence[int], samples: int) -> list:
    D, asymptotic = resolve_D(params, D_override)
    N = D - 1
    if asymptotic:
        res = EstimateResult(D, N, math.nan, math.nan, math.nan, True)
    else:
        res = estimate_point(params, D, seeds, samples)
    b = bounds_for_N(params, N)
    return [
        params.n, params.r, params.k, D, N, samples, res.coord_mse, res.vector_mse,
        res.recovery_rate, b.f2_bound, b.f3_bound, b.assumption_easy_holds,
    ]


def sweep_row(params: ModelParams, D_override: int | None, seeds: Sequence[int], samples: int, oracle_D: int) -> list:
    D, asymptotic = resolve_D(params, D_override)
    # too few labels for an injective edge labeling: no estimator at this n
    too_small = params.n < network_edge_count(D - 1, params.k)
    coord = math.nan if asymptotic or too_small else estimate_point(params, D, seeds, samples).coord_mse
    mmse = None
    if params.n <= ORACLE_MAX_N and oracle_D <= params.r:
        mmse = mmse_exact(math.sqrt(corr2_exact(moment_data(params, oracle_D))))
    series, _ = theorem_bound(params.n, params.k, oracle_D, params.r, params.lambda_min)
    return [params.n, params.r, params.k, D, D - 1, coord, mmse, mmse_lower_bound(series)]


# -- drivers ------------------------------------------------------------------


def _call(job):
    fn, args = job
    return fn(*args)


def run_jobs(jobs: list[tuple[Callable, tuple]], threads: int = 1) -> list:
    """Run jobs, returning results in submission order."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*args) for fn, args in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call, jobs))


def _grid(config: ExperimentConfig):
    for n, r, k in itertools.product(config.n, config.r, config.k):
        yield n, r, k


def verify_jobs(config: ExperimentConfig) -> list[tuple[Callable, tuple]]:
    jobs: list[tuple[Callable, tuple]] = []
    for n, r, k in _grid(config):
        p = config.params(n, r, k)
        for D in config.D:
            if D <= r:
                jobs.append((check_grid_point, (p, D)))
        jobs.append((_wrap, (check_mmse_monotone, p, max(config.D))))
        jobs.append((check_v_laws, (p, min(max(config.D), 3))))
        jobs.append((_wrap, (check_paths, p, min(max(config.D), 2))))
    for n in config.n:
        for k in config.k:
            for d in config.D:
                jobs.append((_wrap, (check_even_cover_counts, n, k, d)))
    jobs.append((check_expander_fixtures, ()))
    jobs.append((check_estimator_identities, (config.seeds[0],)))
    return jobs


def _wrap(fn, *args) -> list[CheckResult]:
    return [fn(*args)]


def run(config: ExperimentConfig, threads: int = 1) -> tuple[int, dict[str, str]]:
    """Execute ``config``; returns an exit status and CSV text keyed by file name."""
    mode = config.mode
    notes: list[str] = []
    if mode == "verify":
        results = [res for batch in run_jobs(verify_jobs(config), threads) for res in batch]
        rows = [[c.identity, c.point, "pass" if c.ok else "FAIL", c.detail] for c in results]
        failed = sorted({c.identity for c in results if not c.ok})
        if failed:
            notes.append("failed identities: " + ", ".join(failed))
        return (1 if failed else 0), {"verify.csv": render_csv(mode, config, rows, notes)}

    jobs = []
    for n, r, k in _grid(config):
        if mode == "bound":
            jobs += [(bound_row, (n, r, k, D, config.lambda_min(r))) for D in config.D]
            continue
        p = config.params(n, r, k)
        if mode == "oracle":
            jobs += [(oracle_row, (p, D)) for D in config.D if D <= r]
        elif mode in ("estimate", "sweep"):
            if mode == "estimate":
                jobs.append((estimate_row, (p, config.override_D, config.seeds, config.samples)))
            else:
                jobs.append((sweep_row, (p, config.override_D, config.seeds, config.samples, config.oracle_D)))
    rows = run_jobs(jobs, threads)
    if mode in ("estimate", "sweep") and any(isinstance(x, float) and math.isnan(x) for row in rows for x in row):
        notes.append("asymptotic regime: nan empirical columns mean the network is beyond desk reach or n is too small")
    return 0, {f"{mode}.csv": render_csv(mode, config, rows, notes)}


def phase_sweep(config: ExperimentConfig, threads: int = 1) -> str:
    """Phase-diagram CSV: empirical estimator MSE, exact MMSE where feasible, and the lower bound."""
    sweep = ExperimentConfig(**{**asdict(config), "mode": "sweep"})
    return run(sweep, threads)[1]["sweep.csv"]
