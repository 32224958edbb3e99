"""Seeded ensembles and the verification experiments.

Each experiment turns one inequality into a ratio-boundedness or decay
measurement over a deterministic ensemble and returns an
ExperimentReport: per-trial lhs/rhs/ratio rows, the max ratio with its
witness recipe, named invariant-violation counters, and fitted
exponents where the statement predicts a trend.

Reproducibility contract: every random draw derives from
SeedSequence((master_seed, trial_index[, salt])), so reports are
bit-for-bit functions of (seed, config) regardless of trial order or
thread count.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import variation
from .averages import (
    AvgStack,
    ScaleSet,
    avg_stack,
    ball_symm_diff,
    boundary_cube_count,
    frak_r,
    frak_rk,
    rk_operator,
    short_variation,
    square_function,
    sup_over_3q,
)
from .lattice import (
    CubeRef,
    Field,
    GridSpec,
    ball_runs,
    concentric_cube,
    cube_slices,
    dist2_point_to_cube,
    points_to_mask,
)
from .martingale import (
    cond_expect,
    cz_decompose,
    haar_atoms_from_diff,
    lq_height,
    mart_decompose,
)
from .weights import (
    Weight,
    lambda_grid,
    make_weight,
    sharp_maximal,
    weighted_lp_norm,
    weighted_measure,
)

GENERATORS = (
    "gaussian-field",
    "sparse-spikes",
    "lacunary",
    "haar-noise",
    "smooth-bump",
)

# relative slack for comparisons that are exact in real arithmetic but
# evaluated in floating point
FLOAT_SLACK = 1e-12


@dataclass(frozen=True)
class Ensemble:
    """Deterministic field ensemble: (seed, generator, grid) fix everything."""

    seed: int
    count: int
    generator: str
    grid: GridSpec
    family_size: int = 1

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.count < 1 or self.family_size < 1:
            raise ValueError("count and family_size must be positive")


def _trial_rng(ens: Ensemble, trial: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((ens.seed, trial, salt)))


def _component(rng: np.random.Generator, ens: Ensemble) -> np.ndarray:
    grid = ens.grid
    L = grid.side
    gen = ens.generator
    if gen == "gaussian-field":
        return rng.standard_normal(grid.shape)
    if gen == "sparse-spikes":
        out = np.zeros(grid.npoints)
        n_spikes = max(1, grid.npoints // 64)
        idx = rng.choice(grid.npoints, size=n_spikes, replace=False)
        out[idx] = rng.uniform(1.0, 8.0, size=n_spikes) * rng.choice((-1.0, 1.0), size=n_spikes)
        return out.reshape(grid.shape)
    if gen == "lacunary":
        out = np.zeros(grid.shape)
        x0 = tuple(int(c) for c in rng.integers(0, L, size=grid.d))
        signs = rng.choice((-1.0, 1.0), size=grid.K)
        for m in range(grid.K):
            s = 1 << m
            corner = tuple(c & ~(s - 1) for c in x0)
            sl = tuple(slice(c, c + s) for c in corner)
            out[sl] += signs[m] * 2.0 ** (-m / 2.0)
        return out
    if gen == "haar-noise":
        out = np.zeros(grid.shape)
        for k in range(grid.K):
            g = Field(grid, rng.standard_normal(grid.shape))
            out += cond_expect(g, k).values - cond_expect(g, k + 1).values
        return out
    if gen == "smooth-bump":
        out = np.zeros(grid.shape)
        half = L // 2
        coord = ((np.arange(L) + half) % L) - half
        for _ in range(int(rng.integers(1, 5))):
            center = rng.integers(0, L, size=grid.d)
            sigma = rng.uniform(L / 32.0, L / 8.0)
            amp = rng.uniform(0.5, 2.0) * rng.choice((-1.0, 1.0))
            if grid.d == 1:
                dx = ((np.arange(L) - center[0] + half) % L) - half
                out += amp * np.exp(-(dx * dx) / (2 * sigma * sigma))
            else:
                dx = ((np.arange(L) - center[0] + half) % L) - half
                dy = ((np.arange(L) - center[1] + half) % L) - half
                d2 = dx[:, None] ** 2 + dy[None, :] ** 2
                out += amp * np.exp(-d2 / (2 * sigma * sigma))
        return out
    raise AssertionError(gen)


def make_field(ens: Ensemble, trial: int) -> Field:
    rng = _trial_rng(ens, trial)
    if ens.family_size == 1:
        return Field(ens.grid, _component(rng, ens))
    comps = [_component(rng, ens) for _ in range(ens.family_size)]
    return Field(ens.grid, np.stack(comps))


def make_ensemble(ens: Ensemble) -> list[Field]:
    return [make_field(ens, i) for i in range(ens.count)]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class TrialRow:
    trial_id: str
    lhs: float
    rhs: float
    ratio: float
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            **({"extra": self.extra} if self.extra else {}),
        }


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    trials: list[TrialRow]
    max_ratio: float
    witness: dict
    checks: dict
    fits: dict
    degenerate: int
    runtime: float
    plot_columns: tuple[str, str]
    plot: list[tuple[float, float]]

    @property
    def violations(self) -> int:
        return int(sum(v for v in self.checks.values() if isinstance(v, (int, np.integer))))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "parameters": self.parameters,
            "max_ratio": self.max_ratio,
            "witness": self.witness,
            "checks": self.checks,
            "fits": self.fits,
            "degenerate_trials": self.degenerate,
            "runtime_seconds": self.runtime,
            "trials": [t.to_dict() for t in self.trials],
            "plot_columns": list(self.plot_columns),
            "plot": [list(p) for p in self.plot],
        }


def _finalize(name: str, params: dict, rows: list[TrialRow], checks: dict,
              fits: dict, degenerate: int, t0: float,
              plot_columns: tuple[str, str], plot: list[tuple[float, float]],
              witness_of: Optional[dict] = None) -> ExperimentReport:
    finite = [r for r in rows if math.isfinite(r.ratio)]
    max_ratio = max((r.ratio for r in finite), default=0.0)
    witness = dict(witness_of or {})
    for r in finite:
        if r.ratio == max_ratio:
            witness.update({"trial_id": r.trial_id, "lhs": r.lhs, "rhs": r.rhs})
            break
    return ExperimentReport(
        name=name,
        parameters=params,
        trials=rows,
        max_ratio=max_ratio,
        witness=witness,
        checks=checks,
        fits=fits,
        degenerate=degenerate,
        runtime=time.perf_counter() - t0,
        plot_columns=plot_columns,
        plot=plot,
    )


def _map_trials(count: int, fn: Callable[[int], object]) -> list:
    threads = int(os.environ.get("VARLAB_THREADS", "1") or "1")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, range(count)))
    return [fn(i) for i in range(count)]


def _ens_recipe(ens: Ensemble) -> dict:
    return {
        "seed": ens.seed,
        "count": ens.count,
        "generator": ens.generator,
        "grid": {"d": ens.grid.d, "K": ens.grid.K},
        "family_size": ens.family_size,
    }


def linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line y = a*x + b with R^2."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return float("nan"), float("nan"), float("nan")
    a, b = np.polyfit(x, y, 1)
    pred = a * x + b
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2


def standard_weight_sweep(grid: GridSpec, p: float, seed: int = 7) -> list[Weight]:
    """The documented weight sweep; decaying powers substitute for the
    p-scaled power exponent when the target class is A_1 (p = 1)."""
    if p > 1:
        alphas = [0.2, 0.45 * grid.d * (p - 1.0)]
    else:
        alphas = [-0.2, -0.45 * grid.d]
    out = [make_weight(grid, "flat")]
    out += [make_weight(grid, "power", alpha=a) for a in alphas]
    out.append(make_weight(grid, "two-value"))
    out.append(make_weight(grid, "random-ap", seed=seed))
    return out


# ---------------------------------------------------------------------------
# square function experiments
# ---------------------------------------------------------------------------


def verify_square_strong(ens: Ensemble, w: Weight, p: float, scales: ScaleSet) -> ExperimentReport:
    """Per-trial ||Sf||_{L^p(w)} / ||f||_{L^p(w)} for the smoothed
    square function; flat-weight runs carry the direct-summation
    unweighted ratio for the oracle cross-check."""
    if not 1 < p < math.inf:
        raise ValueError(f"need 1 < p < inf, got p={p}")
    if ens.family_size != 1:
        raise ValueError("square-function experiment is scalar-valued")
    scales.validate_for(ens.grid)
    t0 = time.perf_counter()
    ap = w.ap(p)

    def one(i: int):
        f = make_field(ens, i)
        den = weighted_lp_norm(f, w, p)
        if den == 0.0:
            return None
        sq = square_function(f, scales)
        num = weighted_lp_norm(sq, w, p)
        plain_num = float(np.sum(np.abs(sq.values) ** p) ** (1.0 / p))
        plain_den = float(np.sum(np.abs(f.values) ** p) ** (1.0 / p))
        extra = {"unweighted_ratio": plain_num / plain_den if plain_den else 0.0}
        return TrialRow(str(i), num, den, num / den, extra)

    results = _map_trials(ens.count, one)
    rows = [r for r in results if r is not None]
    degenerate = sum(1 for r in results if r is None)
    params = {
        "p": p, "weight": w.family, "ap_constant": ap,
        "scales": _scales_dict(scales), "ensemble": _ens_recipe(ens),
    }
    plot = [(float(i), r.ratio) for i, r in enumerate(rows)]
    return _finalize("verify_square_strong", params, rows, {}, {}, degenerate,
                     t0, ("trial", "ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


def verify_square_weak(ens: Ensemble, w: Weight, scales: ScaleSet) -> ExperimentReport:
    """Weak (1,1) ratio sup_lambda lambda w{Sf > lambda} / ||f||_{L^1(w)}."""
    if ens.family_size != 1:
        raise ValueError("square-function experiment is scalar-valued")
    scales.validate_for(ens.grid)
    t0 = time.perf_counter()

    def one(i: int):
        f = make_field(ens, i)
        den = weighted_lp_norm(f, w, 1.0)
        if den == 0.0:
            return None
        sq = square_function(f, scales)
        grid_l = lambda_grid(sq.values)
        num = 0.0
        plain = 0.0
        for lam in grid_l:
            mask = sq.values > lam
            num = max(num, lam * weighted_measure(mask, w))
            plain = max(plain, lam * float(np.count_nonzero(mask)))
        plain_den = float(np.sum(np.abs(f.values)))
        extra = {"unweighted_ratio": plain / plain_den if plain_den else 0.0}
        return TrialRow(str(i), num, den, num / den, extra)

    results = _map_trials(ens.count, one)
    rows = [r for r in results if r is not None]
    degenerate = sum(1 for r in results if r is None)
    params = {
        "weight": w.family, "a1_constant": w.a1(),
        "scales": _scales_dict(scales), "ensemble": _ens_recipe(ens),
    }
    plot = [(float(i), r.ratio) for i, r in enumerate(rows)]
    return _finalize("verify_square_weak", params, rows, {}, {}, degenerate,
                     t0, ("trial", "ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


# ---------------------------------------------------------------------------
# jump experiment
# ---------------------------------------------------------------------------


def verify_jump(ens: Ensemble, w: Weight, p: float, scales: ScaleSet,
                r_coupling: float = 2.0) -> ExperimentReport:
    """sup_lambda lambda ||sqrt(N_lambda(A_t f))||_{L^p(w)} / ||f||_{L^p(w)}
    plus the pointwise coupling lambda N_lambda^(1/r) <= hvar_r."""
    if not 1 < p < math.inf:
        raise ValueError(f"need 1 < p < inf, got p={p}")
    if ens.family_size != 1:
        raise ValueError("jump experiment is scalar-valued")
    scales.validate_for(ens.grid)
    t0 = time.perf_counter()
    coupling_violations = 0

    def one(i: int):
        f = make_field(ens, i)
        den = weighted_lp_norm(f, w, p)
        if den == 0.0:
            return None
        paths = avg_stack(f, scales).values
        osc = paths.max(axis=0) - paths.min(axis=0)
        grid_l = lambda_grid(osc)
        hv = variation.hvar_stack(paths, r_coupling)
        best, best_lam, bad = 0.0, float("nan"), 0
        plain_best = 0.0
        for lam in grid_l:
            counts = variation.jump_count_stack(paths, lam)
            bad += int(
                np.count_nonzero(
                    lam * counts ** (1.0 / r_coupling) > hv * (1.0 + FLOAT_SLACK) + 1e-300
                )
            )
            val = lam * weighted_lp_norm(np.sqrt(counts), w, p)
            plain = lam * float(np.sum(counts ** (p / 2.0)) ** (1.0 / p))
            if val > best:
                best, best_lam = val, lam
            plain_best = max(plain_best, plain)
        plain_den = float(np.sum(np.abs(f.values) ** p) ** (1.0 / p))
        extra = {
            "best_lambda": best_lam,
            "unweighted_ratio": plain_best / plain_den if plain_den else 0.0,
        }
        return TrialRow(str(i), best, den, best / den, extra), bad

    results = _map_trials(ens.count, one)
    rows = [r[0] for r in results if r is not None]
    coupling_violations = sum(r[1] for r in results if r is not None)
    degenerate = sum(1 for r in results if r is None)
    params = {
        "p": p, "r_coupling": r_coupling, "weight": w.family,
        "ap_constant": w.ap(p), "scales": _scales_dict(scales),
        "ensemble": _ens_recipe(ens),
    }
    checks = {"coupling_violations": coupling_violations}
    plot = [(float(i), r.ratio) for i, r in enumerate(rows)]
    return _finalize("verify_jump", params, rows, checks, {}, degenerate, t0,
                     ("trial", "ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


# ---------------------------------------------------------------------------
# vector-valued variation experiment
# ---------------------------------------------------------------------------


def verify_variation(ens: Ensemble, w: Weight, p: float, q: float,
                     scales: ScaleSet,
                     r_list: Sequence[float] = (2.1, 2.5, 3.0, 4.0)) -> ExperimentReport:
    """Vector-valued variation ratios across an r sweep, with the
    pointwise monotone-in-r check and the r/(r-2) growth fit."""
    if not (1 < p < math.inf and 1 < q < math.inf):
        raise ValueError(f"need 1 < p, q < inf, got p={p}, q={q}")
    if any(r <= 2 for r in r_list):
        raise ValueError("variation exponents must satisfy r > 2")
    scales.validate_for(ens.grid)
    r_list = sorted(r_list)
    t0 = time.perf_counter()

    def one(i: int):
        f = make_field(ens, i)
        den_field = lq_height(f, q).values
        den = weighted_lp_norm(den_field, w, p)
        if den == 0.0:
            return None
        paths = avg_stack(f, scales).values  # (T, [m,] spatial)
        rows_i, mono_bad = [], 0
        prev_v = None
        plain_ratios = {}
        for r in r_list:
            v = variation.var_inhom_stack(paths, r)
            if prev_v is not None:
                scale = np.maximum(np.abs(prev_v), 1.0)
                mono_bad += int(np.count_nonzero(v > prev_v + FLOAT_SLACK * scale))
            prev_v = v
            if ens.family_size == 1:
                num_field = v
            else:
                num_field = np.sum(v**q, axis=0) ** (1.0 / q)
            num = weighted_lp_norm(num_field, w, p)
            plain_num = float(np.sum(num_field**p) ** (1.0 / p))
            plain_den = float(np.sum(den_field**p) ** (1.0 / p))
            plain_ratios[r] = plain_num / plain_den if plain_den else 0.0
            rows_i.append(
                TrialRow(f"{i}:r={r:g}", num, den, num / den,
                         {"r": r, "unweighted_ratio": plain_ratios[r]})
            )
        return rows_i, mono_bad

    results = _map_trials(ens.count, one)
    rows: list[TrialRow] = []
    mono_violations = 0
    degenerate = 0
    for res in results:
        if res is None:
            degenerate += 1
            continue
        rows.extend(res[0])
        mono_violations += res[1]

    max_by_r = {}
    for row in rows:
        r = row.extra["r"]
        max_by_r[r] = max(max_by_r.get(r, 0.0), row.ratio)
    profile = np.asarray([r / (r - 2.0) for r in r_list])
    ratios = np.asarray([max_by_r.get(r, 0.0) for r in r_list])
    slope, intercept, r2 = linfit(profile, ratios)
    fits = {
        "max_ratio_by_r": {f"{r:g}": max_by_r.get(r, 0.0) for r in r_list},
        "growth_fit": {"slope": slope, "intercept": intercept, "r_squared": r2,
                       "profile": "r/(r-2)"},
    }
    checks = {"r_monotonicity_violations": mono_violations}
    params = {
        "p": p, "q": q, "r_list": list(r_list), "weight": w.family,
        "ap_constant": w.ap(p), "scales": _scales_dict(scales),
        "ensemble": _ens_recipe(ens),
    }
    plot = [(float(r), max_by_r.get(r, 0.0)) for r in r_list]
    return _finalize("verify_variation", params, rows, checks, fits, degenerate,
                     t0, ("r", "max_ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


# ---------------------------------------------------------------------------
# weak (1,1) via the vector Calderon-Zygmund pipeline
# ---------------------------------------------------------------------------


def verify_weak11_vector(ens: Ensemble, w: Weight, q: float, scales: ScaleSet,
                         r: float = 1.5, enlarge: int = 5) -> ExperimentReport:
    """Runs the height-1 decomposition explicitly and checks every step:
    per-cube mass bound (Minkowski), good-part ceiling, cube packing,
    the w(5Q) chain (d=1), and the tail measure of the smoothed
    single-scale variation of the bad part off the enlarged cubes."""
    if not 1 < q < math.inf:
        raise ValueError(f"need 1 < q < inf, got q={q}")
    if not 1 < r <= q:
        raise ValueError(f"need 1 < r <= q, got r={r}")
    scales.validate_for(ens.grid)
    grid = ens.grid
    t0 = time.perf_counter()
    target_mean = 2.0 ** (-(grid.d + 1))
    a1 = w.a1()

    def one(i: int):
        f = make_field(ens, i)
        F0 = lq_height(f, q)
        m0 = float(F0.values.mean())
        if m0 == 0.0:
            return None
        f = Field(grid, f.values * (target_mean / m0))
        cz = cz_decompose(f, threshold=1.0, q=q)
        F = cz.height.values
        checks = {"minkowski": 0, "good_bound": 0, "packing": 0, "w5q_chain": 0}

        gv = cz.good.values if not cz.good.is_scalar else cz.good.values[None]
        G = np.sum(np.abs(gv) ** q, axis=0) ** (1.0 / q)
        ceiling = 2.0**grid.d
        checks["good_bound"] += int(np.count_nonzero(G > ceiling * (1 + FLOAT_SLACK)))

        total_q = sum(c.volume for c in cz.cubes)
        if total_q > (2.0**grid.d) * float(np.sum(F)) * (1 + FLOAT_SLACK):
            checks["packing"] += 1

        wq_sum = 0.0
        chain_max = 0.0
        emask = np.zeros(grid.shape, dtype=bool)
        for qr in cz.cubes:
            atom = cz.bad_atom(qr)
            atom2 = atom if atom.ndim == grid.d + 1 else atom[None]
            lhs_m = float(np.sum(np.sum(np.abs(atom2), axis=tuple(range(1, atom2.ndim))) ** q))
            hgt = np.sum(np.abs(atom2) ** q, axis=0) ** (1.0 / q)
            rhs_m = float(np.sum(hgt)) ** q
            if lhs_m > rhs_m * (1 + FLOAT_SLACK):
                checks["minkowski"] += 1
            wq = weighted_measure(points_to_mask(grid, _cube_pts(grid, qr)), w)
            wq_sum += wq
            w5 = weighted_measure(points_to_mask(grid, concentric_cube(grid, qr, enlarge)), w)
            sl = cube_slices(grid, qr)
            fw = float(np.sum(F[sl] * w.values[sl]))
            if fw > 0:
                chain_max = max(chain_max, w5 / fw)
                if grid.d == 1 and w5 > (enlarge**grid.d) * a1 * fw * (1 + 1e-9):
                    checks["w5q_chain"] += 1
            emask |= points_to_mask(grid, concentric_cube(grid, qr, enlarge))

        if cz.cubes:
            bad_fr = frak_r(cz.bad, r, scales)
            bv = bad_fr.values if not cz.bad.is_scalar else bad_fr.values[None]
            tail = np.sum(bv**q, axis=0) ** (1.0 / q)
            num = weighted_measure(~emask & (tail > 1.0), w)
            ratio = num / wq_sum if wq_sum > 0 else 0.0
        else:
            num, ratio = 0.0, 0.0
        extra = {"n_cubes": len(cz.cubes), "chain_max": chain_max}
        return TrialRow(str(i), num, wq_sum if cz.cubes else 1.0, ratio, extra), checks

    results = _map_trials(ens.count, one)
    rows = [r_[0] for r_ in results if r_ is not None]
    degenerate = sum(1 for r_ in results if r_ is None)
    agg = {"minkowski": 0, "good_bound": 0, "packing": 0, "w5q_chain": 0}
    for r_ in results:
        if r_ is None:
            continue
        for key in agg:
            agg[key] += r_[1][key]
    params = {
        "q": q, "r": r, "enlarge": enlarge, "weight": w.family,
        "a1_constant": a1, "scales": _scales_dict(scales),
        "ensemble": _ens_recipe(ens),
    }
    plot = [(float(i), r_.ratio) for i, r_ in enumerate(rows)]
    return _finalize("verify_weak11_vector", params, rows, agg, {}, degenerate,
                     t0, ("trial", "tail_ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


def _cube_pts(grid: GridSpec, q: CubeRef) -> np.ndarray:
    from .lattice import cube_points

    return cube_points(grid, q)


# ---------------------------------------------------------------------------
# reverse Holder experiments
# ---------------------------------------------------------------------------


def _place_atoms(grid: GridSpec, rng: np.random.Generator, n_atoms: int,
                 level_lo: int, level_hi: int) -> list[tuple[CubeRef, np.ndarray]]:
    """Disjoint dyadic cubes with mean-zero random data on each."""
    occupied = np.zeros(grid.shape, dtype=bool)
    atoms = []
    for _ in range(n_atoms):
        placed = False
        for _attempt in range(200):
            lev = int(rng.integers(level_lo, level_hi + 1))
            s = 1 << lev
            corner = tuple(int(c) * s for c in rng.integers(0, grid.side >> lev, size=grid.d))
            qr = CubeRef(lev, corner)
            sl = cube_slices(grid, qr)
            if occupied[sl].any():
                continue
            occupied[sl] = True
            patch = rng.standard_normal((s,) * grid.d)
            patch -= patch.mean()
            patch *= rng.uniform(0.5, 2.0)
            atoms.append((qr, patch))
            placed = True
            break
        if not placed:
            break
    return atoms


def verify_reverse_holder(grid: GridSpec, k: int, r: float, alpha: float,
                          seed: int = 0, count: int = 8, n_atoms: int = 16,
                          M: int = 8, c_dist: float = 7.0,
                          n_sample: int = 64,
                          level_lo: Optional[int] = None) -> ExperimentReport:
    """Single-scale reverse Holder ratio for mean-zero atoms on disjoint
    cubes, and its corollary with the distance-localized L^1 right-hand
    side; reports the max ratio over sampled points."""
    rp = r / (r - 1.0)
    lo_a, hi_a = (grid.d - 1) / rp, grid.d / rp
    if not lo_a < alpha < hi_a:
        raise ValueError(f"alpha must lie in ({lo_a:g}, {hi_a:g}), got {alpha}")
    scales = ScaleSet(k, k, M)
    scales.validate_for(grid)
    if level_lo is None:
        level_lo = max(0, k - 3)
    t0 = time.perf_counter()
    two_k = float(1 << k)
    coverage_misses = 0

    def one(i: int):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        atoms = _place_atoms(grid, rng, n_atoms, level_lo, k)
        if not atoms:
            return None
        total = np.zeros(grid.shape)
        per_atom_rk = []
        l1_norms = []
        for qr, patch in atoms:
            fv = np.zeros(grid.shape)
            fv[cube_slices(grid, qr)] = patch
            total += fv
            fld = Field(grid, fv)
            per_atom_rk.append(rk_operator(fld, k, r, scales=scales).values)
            l1_norms.append(float(np.sum(np.abs(patch))))
        total_f = Field(grid, total)
        rk_total = rk_operator(total_f, k, r, scales=scales).values
        frk_total = sup_over_3q(rk_total, grid, k)

        if grid.d == 1:
            xs = [(int(a),) for a in np.linspace(0, grid.side - 1, n_sample, dtype=int)]
        else:
            side_pts = max(2, int(math.isqrt(n_sample)))
            ax = np.linspace(0, grid.side - 1, side_pts, dtype=int)
            xs = [(int(a), int(b)) for a in ax for b in ax]

        lem_max, cor_max, misses = 0.0, 0.0, 0
        cutoff2 = Fraction(c_dist * two_k).limit_denominator(10**6) ** 2
        for x in xs:
            lhs = float(rk_total[x]) ** r
            rhs = sum(
                two_k**(alpha * r) * qr.side ** (-alpha * r) * float(av[x]) ** r
                for (qr, _), av in zip(atoms, per_atom_rk)
            )
            if rhs > 0:
                lem_max = max(lem_max, lhs / rhs)
            elif lhs > 0:
                misses += 1
            clhs = float(frk_total[x]) ** r
            crhs = two_k ** (alpha * r - grid.d * r) * sum(
                qr.side ** (-alpha * r) * l1**r
                for (qr, _), l1 in zip(atoms, l1_norms)
                if Fraction(dist2_point_to_cube(grid, x, qr)) <= cutoff2
            )
            if crhs > 0:
                cor_max = max(cor_max, clhs / crhs)
            elif clhs > 0:
                misses += 1
        return TrialRow(str(i), lem_max, cor_max, lem_max,
                        {"corollary_max": cor_max, "n_atoms": len(atoms)}), misses

    results = _map_trials(count, one)
    rows = [r_[0] for r_ in results if r_ is not None]
    coverage_misses = sum(r_[1] for r_ in results if r_ is not None)
    degenerate = sum(1 for r_ in results if r_ is None)
    cor_max = max((r_.extra["corollary_max"] for r_ in rows), default=0.0)
    params = {
        "k": k, "r": r, "alpha": alpha, "M": M, "c_dist": c_dist,
        "n_atoms": n_atoms, "seed": seed, "count": count,
        "grid": {"d": grid.d, "K": grid.K},
    }
    checks = {"coverage_misses": coverage_misses}
    fits = {"corollary_max_ratio": cor_max}
    plot = [(float(i), r_.ratio) for i, r_ in enumerate(rows)]
    return _finalize("verify_reverse_holder", params, rows, checks, fits,
                     degenerate, t0, ("trial", "lemma_ratio"), plot,
                     witness_of={"seed": seed})


# ---------------------------------------------------------------------------
# short-scale decay experiment
# ---------------------------------------------------------------------------


def verify_short_scale_decay(ens: Ensemble, w: Weight, p: float, k: int,
                             j_list: Sequence[int] = (-1, -2, -3, -4, -5, -6),
                             M: int = 8) -> ExperimentReport:
    """Feeds Haar-atom inputs at offset j below scale k into the
    smoothed short variation and fits log2(ratio) against j; a positive
    slope is the decay predicted for the single-scale estimate."""
    if not 1 < p < math.inf:
        raise ValueError(f"need 1 < p < inf, got p={p}")
    if ens.family_size != 1:
        raise ValueError("decay experiment is scalar-valued")
    grid = ens.grid
    if min(j_list) + k < 0:
        raise ValueError(f"offsets {list(j_list)} reach below level 0 at k={k}")
    scales = ScaleSet(k, k, M)
    scales.validate_for(grid)
    t0 = time.perf_counter()
    j_list = sorted(j_list, reverse=True)  # -1 first

    def one(i: int):
        f = make_field(ens, i)
        den = weighted_lp_norm(f, w, p)
        if den == 0.0:
            return None
        dec = mart_decompose(f)
        out = {}
        for j in j_list:
            atoms = haar_atoms_from_diff(dec, k, j)
            carrier_avg = cond_expect(f, k + j + 1).values
            g = Field(grid, atoms.atom_field.values * carrier_avg)
            sv = short_variation(avg_stack(g, scales), g, k)
            tilde = sup_over_3q(sv.values, grid, k)
            out[j] = weighted_lp_norm(tilde, w, p) / den
        return out

    results = _map_trials(ens.count, one)
    per_j: dict[int, list[float]] = {j: [] for j in j_list}
    degenerate = 0
    rows = []
    for i, res in enumerate(results):
        if res is None:
            degenerate += 1
            continue
        for j, ratio in res.items():
            per_j[j].append(ratio)
            rows.append(TrialRow(f"{i}:j={j}", ratio, 1.0, ratio, {"j": j}))

    mean_by_j = {j: (float(np.mean(v)) if v else 0.0) for j, v in per_j.items()}
    max_by_j = {j: (float(np.max(v)) if v else 0.0) for j, v in per_j.items()}
    js = [j for j in j_list if mean_by_j[j] > 0]
    slope, intercept, r2 = linfit(
        np.asarray(js, dtype=float), np.log2([mean_by_j[j] for j in js])
    ) if len(js) >= 2 else (float("nan"),) * 3
    fits = {
        "mean_ratio_by_j": {str(j): mean_by_j[j] for j in j_list},
        "max_ratio_by_j": {str(j): max_by_j[j] for j in j_list},
        "decay_fit": {"slope": slope, "intercept": intercept, "r_squared": r2},
    }
    params = {
        "p": p, "k": k, "M": M, "j_list": list(j_list), "weight": w.family,
        "ap_constant": w.ap(p), "ensemble": _ens_recipe(ens),
    }
    plot = [(float(j), math.log2(mean_by_j[j]) if mean_by_j[j] > 0 else float("nan"))
            for j in j_list]
    return _finalize("verify_short_scale_decay", params, rows, {}, fits,
                     degenerate, t0, ("j", "log2_mean_ratio"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


# ---------------------------------------------------------------------------
# BMO experiment
# ---------------------------------------------------------------------------


def verify_bmo(ens: Ensemble, q: float, r: float, scales: ScaleSet,
               n_cubes: int = 6, symm_diff_constant: float = 8.0) -> ExperimentReport:
    """Mean oscillation of the averaged family over test cubes, with the
    far-part centering; also asserts the two geometric ingredients
    (support separation at small radius, symmetric-difference growth)."""
    if not (1 < q < math.inf and r > 1):
        raise ValueError(f"need 1 < q < inf and r > 1, got q={q}, r={r}")
    grid = ens.grid
    scales.validate_for(grid)
    lev_lo = scales.k_min + 2
    lev_hi = max(lev_lo, scales.k_max - 1)
    t0 = time.perf_counter()
    radii = scales.all_radii()

    def one(i: int):
        f = make_field(ens, i)
        sup_h = float(lq_height(f, q).values.max())
        if sup_h == 0.0:
            return None
        f = Field(grid, f.values / sup_h)
        stack_f = avg_stack(f, scales)
        rng = _trial_rng(ens, i, salt=0xB0)
        rows_i = []
        vanish_bad = 0
        for c in range(n_cubes):
            lev = int(rng.integers(lev_lo, lev_hi + 1))
            s = 1 << lev
            corner = tuple(int(v) * s for v in rng.integers(0, grid.side >> lev, size=grid.d))
            qr = CubeRef(lev, corner)
            mask3 = points_to_mask(grid, concentric_cube(grid, qr, 3))
            b = Field(grid, f.values * np.where(mask3, 0.0, 1.0))
            stack_b = avg_stack(b, scales)
            sl = cube_slices(grid, qr)
            take = (slice(None),) * (stack_b.values.ndim - grid.d) + sl
            sub_b = stack_b.values[take]
            spatial = tuple(range(sub_b.ndim - grid.d, sub_b.ndim))
            c_t = sub_b.mean(axis=spatial)

            small = [idx for idx, t in enumerate(radii) if 2 * t < s]
            if small:
                vanish_bad += int(np.count_nonzero(sub_b[small] != 0.0))

            sub_f = stack_f.values[take]
            flat = sub_f.reshape(sub_f.shape[: sub_f.ndim - grid.d] + (-1,))
            centered = flat - c_t.reshape(c_t.shape + (1,))
            v = variation.var_inhom_stack(centered, r)
            if ens.family_size == 1:
                osc = v
            else:
                osc = np.sum(v**q, axis=0) ** (1.0 / q)
            rows_i.append(TrialRow(f"{i}:c={c}", float(osc.mean()), 1.0,
                                   float(osc.mean()), {"cube_level": lev}))
        return rows_i, vanish_bad

    results = _map_trials(ens.count, one)
    rows = []
    vanish_bad = 0
    degenerate = 0
    for res in results:
        if res is None:
            degenerate += 1
            continue
        rows.extend(res[0])
        vanish_bad += res[1]

    # symmetric-difference growth on a deterministic sweep
    sym_bad = 0
    for t in (4.0, 8.0, float(1 << (grid.K - 2))):
        for dx in (1, 2, 4, 8):
            x = (0,) * grid.d
            y = (dx,) + (0,) * (grid.d - 1)
            sd = ball_symm_diff(grid, x, y, t)
            if sd > symm_diff_constant * dx * t ** (grid.d - 1):
                sym_bad += 1

    checks = {"vanishing_violations": vanish_bad, "symm_diff_violations": sym_bad}
    params = {
        "q": q, "r": r, "n_cubes": n_cubes, "scales": _scales_dict(scales),
        "symm_diff_constant": symm_diff_constant, "ensemble": _ens_recipe(ens),
    }
    plot = [(float(i), r_.ratio) for i, r_ in enumerate(rows)]
    return _finalize("verify_bmo", params, rows, checks, {}, degenerate, t0,
                     ("trial_cube", "oscillation"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


# ---------------------------------------------------------------------------
# good-lambda experiment
# ---------------------------------------------------------------------------


def verify_good_lambda(ens: Ensemble, w: Weight, p: float, scales: ScaleSet,
                       a_list: Sequence[float] = (1.5, 2.0, 4.0),
                       gamma_list: Sequence[float] = tuple(2.0 ** np.arange(-6, 3)),
                       quantiles: Sequence[float] = (0.5, 0.75, 0.9)) -> ExperimentReport:
    """Distributional comparison rho(gamma, A, lambda) =
    w{Sf > A lambda, Msharp_p f <= gamma lambda} / w{Sf > lambda} with
    exact set-inclusion monotonicity checks and the gamma-exponent fit."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    if any(a <= 1 for a in a_list):
        raise ValueError("good-lambda requires A > 1")
    if ens.family_size != 1:
        raise ValueError("good-lambda experiment is scalar-valued")
    scales.validate_for(ens.grid)
    t0 = time.perf_counter()
    gamma_list = sorted(gamma_list)
    a_list = sorted(a_list)
    head_a = a_list[min(1, len(a_list) - 1)]
    head_q = quantiles[len(quantiles) // 2]

    def one(i: int):
        f = make_field(ens, i)
        sq = square_function(f, scales).values
        pos = sq[sq > 0]
        if pos.size == 0:
            return None
        msharp = sharp_maximal(f, p).values
        rows_i = []
        mono_g = mono_a = cap_bad = 0
        head_pts = []
        for quant in quantiles:
            lam = float(np.quantile(pos, quant))
            if lam <= 0:
                continue
            den = weighted_measure(sq > lam, w)
            if den == 0.0:
                continue
            rho_table = {}
            for a in a_list:
                upper = weighted_measure(sq > a * lam, w)
                if upper > den * (1 + FLOAT_SLACK):
                    cap_bad += 1
                prev = -1.0
                for g in gamma_list:
                    num = weighted_measure((sq > a * lam) & (msharp <= g * lam), w)
                    rho = num / den
                    rho_table[(a, g)] = rho
                    if rho < prev - FLOAT_SLACK:
                        mono_g += 1
                    prev = max(prev, rho)
                    if rho > 1 + FLOAT_SLACK:
                        cap_bad += 1
                    rows_i.append(TrialRow(
                        f"{i}:q={quant:g}:A={a:g}:g={g:g}", num, den, rho,
                        {"A": a, "gamma": g, "quantile": quant}))
                    if a == head_a and quant == head_q:
                        head_pts.append((g, rho))
            for g in gamma_list:
                prev_a = None
                for a in a_list:
                    cur = rho_table[(a, g)]
                    if prev_a is not None and cur > prev_a + FLOAT_SLACK:
                        mono_a += 1
                    prev_a = cur
        return rows_i, mono_g, mono_a, cap_bad, head_pts

    results = _map_trials(ens.count, one)
    rows = []
    mono_gamma = mono_a = cap_bad = 0
    degenerate = 0
    head: dict[float, list[float]] = {}
    for res in results:
        if res is None:
            degenerate += 1
            continue
        rows.extend(res[0])
        mono_gamma += res[1]
        mono_a += res[2]
        cap_bad += res[3]
        for g, rho in res[4]:
            head.setdefault(g, []).append(rho)

    mean_rho = {g: float(np.mean(v)) for g, v in head.items()}
    plateau = max(mean_rho.values(), default=0.0)
    fit_pts = [(g, rho) for g, rho in sorted(mean_rho.items())
               if 0.0 < rho < 0.9 * plateau]
    if len(fit_pts) >= 3:
        gx = np.log([g for g, _ in fit_pts])
        gy = np.log([rho for _, rho in fit_pts])
        slope, intercept, r2 = linfit(gx, gy)
    else:
        slope = intercept = r2 = float("nan")
    delta = w.ainfty().delta
    fits = {
        "gamma_exponent": {"slope": slope, "r_squared": r2,
                           "target_p_delta": p * delta,
                           "head_A": head_a, "head_quantile": head_q},
        "mean_rho_by_gamma": {f"{g:g}": mean_rho[g] for g in sorted(mean_rho)},
    }
    checks = {
        "gamma_monotonicity_violations": mono_gamma,
        "A_monotonicity_violations": mono_a,
        "rho_cap_violations": cap_bad,
    }
    params = {
        "p": p, "A_list": list(a_list), "gamma_list": [float(g) for g in gamma_list],
        "quantiles": list(quantiles), "weight": w.family,
        "scales": _scales_dict(scales), "ensemble": _ens_recipe(ens),
    }
    plot = [(float(g), mean_rho[g]) for g in sorted(mean_rho)]
    return _finalize("verify_good_lambda", params, rows, checks, fits,
                     degenerate, t0, ("gamma", "mean_rho"), plot,
                     witness_of={"ensemble": _ens_recipe(ens)})


def _scales_dict(scales: ScaleSet) -> dict:
    return {"k_min": scales.k_min, "k_max": scales.k_max, "M": scales.M,
            "kernel": scales.kernel}
