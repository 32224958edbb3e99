"""Muckenhoupt weight diagnostics, maximal functions, weighted norms.

Cube families for the suprema: in d=1 every grid-aligned periodic
interval (exhaustive); in d=2 the dyadic cubes of all levels together
with the half-shifted dyadic grids, which approximate the full
supremum within a dimensional constant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter1d

from .lattice import Field, GridSpec, block_expand, block_reduce, block_view
from .martingale import cond_expect

FAMILIES = ("intervals", "shifted-dyadic")


def default_cube_family(grid: GridSpec) -> str:
    return "intervals" if grid.d == 1 else "shifted-dyadic"


def _check_family(grid: GridSpec, family: Optional[str]) -> str:
    if family is None:
        family = default_cube_family(grid)
    if family not in FAMILIES:
        raise ValueError(f"cube family must be one of {FAMILIES}, got {family}")
    if family == "intervals" and grid.d != 1:
        raise ValueError("exhaustive interval family is d=1 only")
    return family


def _scalar_values(f) -> np.ndarray:
    if isinstance(f, Field):
        if not f.is_scalar:
            raise ValueError("expected a scalar field")
        return f.values
    return np.asarray(f, dtype=np.float64)


# ---------------------------------------------------------------------------
# interval family (d=1, exhaustive)
# ---------------------------------------------------------------------------


def _interval_means(x: np.ndarray, ell: int, prefix: np.ndarray) -> np.ndarray:
    """Mean over [s, s+ell) for every start s (periodic)."""
    L = x.size
    return (prefix[ell : ell + L] - prefix[:L]) / ell


def _cover_max(per_start: np.ndarray, ell: int) -> np.ndarray:
    """max over starts s in [x-ell+1, x] of per_start[s], per point x."""
    origin = (ell // 2) - ell + 1
    return maximum_filter1d(per_start, size=ell, mode="wrap", origin=origin)


def _doubled_prefix(x: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.concatenate([x, x]))])


def _interval_windows(x: np.ndarray, ell: int) -> np.ndarray:
    """(L, ell) matrix whose row s is the interval [s, s+ell)."""
    ext = np.concatenate([x, x[: ell - 1]])
    return np.lib.stride_tricks.sliding_window_view(ext, ell)


def maximal(f, p: float = 1.0, family: Optional[str] = None,
            grid: Optional[GridSpec] = None) -> Field:
    """M_p f: sup over family cubes containing x of (mean |f|^p)^(1/p)."""
    if p < 1:
        raise ValueError(f"maximal exponent must satisfy p >= 1, got {p}")
    if isinstance(f, Field):
        grid = f.grid
    if grid is None:
        raise ValueError("grid required when passing a bare array")
    family = _check_family(grid, family)
    xp = np.abs(_scalar_values(f)) ** p
    if family == "intervals":
        L = grid.side
        prefix = _doubled_prefix(xp)
        best = xp.copy()
        for ell in range(2, L + 1):
            best = np.maximum(best, _cover_max(_interval_means(xp, ell, prefix), ell))
    else:
        best = xp.copy()
        for k, shift in _shifted_dyadic_iter(grid):
            s = 1 << k
            axes = tuple(range(-grid.d, 0))
            rolled = np.roll(xp, tuple(-sh for sh in shift), axis=axes)
            bm = block_reduce(rolled, grid.d, s, "mean")
            cover = np.roll(block_expand(bm, grid.d, s), shift, axis=axes)
            best = np.maximum(best, cover)
    return Field(grid, best ** (1.0 / p))


def _shifted_dyadic_iter(grid: GridSpec):
    for k in range(1, grid.K + 1):
        s = 1 << k
        shift_vals = (0, s // 2)
        for shift in itertools.product(shift_vals, repeat=grid.d):
            yield k, shift


def sharp_maximal(f, p: float = 1.0, family: Optional[str] = None,
                  grid: Optional[GridSpec] = None) -> Field:
    """M^sharp_p f with the centered inf evaluated at the cube mean and
    the cube median (the smaller of the two; a factor-2 overshoot of the
    true inf at p=1)."""
    if p < 1:
        raise ValueError(f"sharp maximal exponent must satisfy p >= 1, got {p}")
    if isinstance(f, Field):
        grid = f.grid
    if grid is None:
        raise ValueError("grid required when passing a bare array")
    family = _check_family(grid, family)
    x = _scalar_values(f)
    if family == "intervals":
        L = grid.side
        best = np.zeros(L)
        for ell in range(2, L + 1):
            W = _interval_windows(x, ell)
            mu = W.mean(axis=1)
            med = np.median(W, axis=1)
            osc = np.minimum(
                (np.abs(W - mu[:, None]) ** p).mean(axis=1),
                (np.abs(W - med[:, None]) ** p).mean(axis=1),
            )
            best = np.maximum(best, _cover_max(osc, ell))
    else:
        best = np.zeros(grid.shape)
        axes = tuple(range(-grid.d, 0))
        for k, shift in _shifted_dyadic_iter(grid):
            s = 1 << k
            rolled = np.roll(x, tuple(-sh for sh in shift), axis=axes)
            blocks = _blocks_as_rows(rolled, grid.d, s)
            mu = blocks.mean(axis=-1)
            med = np.median(blocks, axis=-1)
            osc = np.minimum(
                (np.abs(blocks - mu[..., None]) ** p).mean(axis=-1),
                (np.abs(blocks - med[..., None]) ** p).mean(axis=-1),
            )
            cover = np.roll(block_expand(osc, grid.d, s), shift, axis=axes)
            best = np.maximum(best, cover)
    return Field(grid, best ** (1.0 / p))


def _blocks_as_rows(arr: np.ndarray, d: int, s: int) -> np.ndarray:
    """Rearrange side-s blocks into rows of s**d samples."""
    v = block_view(arr, d, s)
    if d == 1:
        return v
    return v.transpose(tuple(range(v.ndim - 4)) + (-4, -2, -3, -1)).reshape(
        v.shape[:-4] + (v.shape[-4], v.shape[-2], s * s)
    )


def bmo_norm(f, family: Optional[str] = None, grid: Optional[GridSpec] = None) -> float:
    """sup over family cubes of the mean oscillation around the cube mean."""
    if isinstance(f, Field):
        grid = f.grid
    if grid is None:
        raise ValueError("grid required when passing a bare array")
    family = _check_family(grid, family)
    x = _scalar_values(f)
    best = 0.0
    if family == "intervals":
        L = grid.side
        for ell in range(2, L + 1):
            W = _interval_windows(x, ell)
            osc = np.abs(W - W.mean(axis=1)[:, None]).mean(axis=1)
            best = max(best, float(osc.max()))
    else:
        axes = tuple(range(-grid.d, 0))
        for k, shift in _shifted_dyadic_iter(grid):
            s = 1 << k
            rolled = np.roll(x, tuple(-sh for sh in shift), axis=axes)
            blocks = _blocks_as_rows(rolled, grid.d, s)
            osc = np.abs(blocks - blocks.mean(axis=-1)[..., None]).mean(axis=-1)
            best = max(best, float(osc.max()))
    return best


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AinftyFit:
    """Sampled measure-comparison envelope: w(E)/w(Q) <= C (|E|/|Q|)^delta."""

    c_w: float
    delta: float
    n_samples: int
    seed: int


@dataclass(frozen=True)
class WeightConstants:
    a1: float
    ap: dict
    ainfty: AinftyFit
    cube_family: str


class Weight:
    """Strictly positive field with cached Muckenhoupt diagnostics."""

    def __init__(self, field: Field, family: str = "custom",
                 cube_family: Optional[str] = None) -> None:
        if not field.is_scalar:
            raise ValueError("weights are scalar fields")
        if float(field.values.min()) <= 0.0:
            raise ValueError("weight must be strictly positive")
        self.field = field
        self.family = family
        self.cube_family = _check_family(field.grid, cube_family)
        self._a1: Optional[float] = None
        self._ap: dict = {}
        self._ainfty: Optional[AinftyFit] = None

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def a1(self) -> float:
        if self._a1 is None:
            self._a1 = a1_constant(self)
        return self._a1

    def ap(self, p: float) -> float:
        if p not in self._ap:
            self._ap[p] = ap_constant(self, p)
        return self._ap[p]

    def ainfty(self, seed: int = 0) -> AinftyFit:
        if self._ainfty is None:
            self._ainfty = ainfty_fit(self, seed=seed)
        return self._ainfty

    def constants(self, p_values=(1.5, 2.0, 3.0, 4.0)) -> WeightConstants:
        return WeightConstants(
            self.a1(), {p: self.ap(p) for p in p_values}, self.ainfty(),
            self.cube_family,
        )

    def __repr__(self) -> str:
        return f"Weight({self.family}, d={self.grid.d}, K={self.grid.K})"


def make_weight(grid: GridSpec, kind: str, alpha: float = 0.3, seed: int = 0,
                hi: float = 4.0, beta: float = 0.8,
                cube_family: Optional[str] = None) -> Weight:
    """Standard weight families: flat, power(alpha), two-value,
    random-ap(seed).

    Power weights live on the fundamental domain centered at the
    origin, w(x) = (1 + |x|)^alpha with |x| the wrapped distance.
    """
    L = grid.side
    if kind == "flat":
        vals = np.ones(grid.shape)
        label = "flat"
    elif kind == "power":
        half = L // 2
        coord = ((np.arange(L) + half) % L) - half
        if grid.d == 1:
            dist = np.abs(coord).astype(np.float64)
        else:
            dist = np.sqrt(coord[:, None] ** 2 + coord[None, :] ** 2)
        vals = (1.0 + dist) ** alpha
        label = f"power({alpha:g})"
    elif kind == "two-value":
        vals = np.ones(grid.shape)
        if grid.d == 1:
            vals[L // 2 :] = hi
        else:
            vals[L // 2 :, :] = hi
        label = f"two-value({hi:g})"
    elif kind == "random-ap":
        rng = np.random.default_rng(np.random.SeedSequence((0xA9, seed)))
        g = Field(grid, rng.standard_normal(grid.shape))
        level = max(2, grid.K // 2)
        vals = np.exp(beta * cond_expect(g, level).values)
        label = f"random-ap({seed})"
    else:
        raise ValueError(f"unknown weight kind {kind!r}")
    return Weight(Field(grid, vals), family=label, cube_family=cube_family)


def a1_constant(w: Weight) -> float:
    """[w]_{A_1} = sup_x M w(x) / w(x) over the configured cube family."""
    mw = maximal(w.field, 1.0, family=w.cube_family)
    return float(np.max(mw.values / w.values))


def ap_constant(w: Weight, p: float) -> float:
    """[w]_{A_p} = sup_Q (mean_Q w) (mean_Q w^(-1/(p-1)))^(p-1)."""
    if not 1 < p < math.inf:
        raise ValueError(f"A_p exponent must satisfy 1 < p < inf, got {p}")
    grid = w.grid
    x = w.values
    dual = x ** (-1.0 / (p - 1.0))
    best = 1.0  # single-cell cubes contribute exactly 1
    if w.cube_family == "intervals":
        L = grid.side
        p1 = _doubled_prefix(x)
        p2 = _doubled_prefix(dual)
        for ell in range(2, L + 1):
            m1 = _interval_means(x, ell, p1)
            m2 = _interval_means(dual, ell, p2)
            best = max(best, float(np.max(m1 * m2 ** (p - 1.0))))
    else:
        for k, shift in _shifted_dyadic_iter(grid):
            s = 1 << k
            axes = tuple(range(-grid.d, 0))
            r1 = np.roll(x, tuple(-sh for sh in shift), axis=axes)
            r2 = np.roll(dual, tuple(-sh for sh in shift), axis=axes)
            m1 = block_reduce(r1, grid.d, s, "mean")
            m2 = block_reduce(r2, grid.d, s, "mean")
            best = max(best, float(np.max(m1 * m2 ** (p - 1.0))))
    return best


def ainfty_fit(w: Weight, seed: int = 0, depths=(1, 2, 3), n_unions: int = 50,
               max_cubes_per_level: int = 64) -> AinftyFit:
    """Envelope fit of w(E)/w(Q) <= C (|E|/|Q|)^delta over sampled pairs.

    Q ranges over dyadic cubes; E over single dyadic subcubes at the
    given depths plus seeded random proper unions of subcubes.  delta is
    the smallest sampled log-log slope (largest exponent with finite C
    over the sample), clipped to (0, 1].
    """
    grid = w.grid
    rng = np.random.default_rng(np.random.SeedSequence((0xAE, seed)))
    sums = {k: block_reduce(w.values, grid.d, 1 << k, "sum") for k in range(grid.K + 1)}
    us, vs = [], []
    for k in range(min(depths) + 1, grid.K + 1):
        nb = grid.side >> k
        idxs = list(np.ndindex((nb,) * grid.d))
        if len(idxs) > max_cubes_per_level:
            pick = rng.choice(len(idxs), size=max_cubes_per_level, replace=False)
            idxs = [idxs[int(i)] for i in pick]
        for qi in idxs:
            wq = float(sums[k][qi])
            for depth in depths:
                if k - depth < 0:
                    continue
                child = _children_sums(sums[k - depth], grid.d, qi, depth)
                nch = child.size
                frac = 1.0 / nch
                for c in child:
                    us.append(-math.log(frac))
                    vs.append(-math.log(float(c) / wq))
                for _ in range(n_unions // len(depths)):
                    mask = rng.random(nch) < rng.uniform(0.2, 0.8)
                    if not mask.any():
                        mask[int(rng.integers(nch))] = True
                    if mask.all():
                        mask[int(rng.integers(nch))] = False
                    if not mask.any():
                        continue
                    us.append(-math.log(mask.sum() / nch))
                    vs.append(-math.log(float(child[mask].sum()) / wq))
    u = np.asarray(us)
    v = np.asarray(vs)
    ok = u > 1e-12
    u, v = u[ok], v[ok]
    if u.size == 0:
        raise ValueError("no nondegenerate (Q, E) samples")
    delta = float(min(1.0, np.min(v / u)))
    c_w = float(max(1.0, np.exp(np.max(delta * u - v))))
    return AinftyFit(c_w, delta, int(u.size), seed)


def _children_sums(child_sums: np.ndarray, d: int, qi, depth: int) -> np.ndarray:
    step = 1 << depth
    if d == 1:
        (i,) = qi
        return child_sums[i * step : (i + 1) * step]
    i, j = qi
    return child_sums[i * step : (i + 1) * step, j * step : (j + 1) * step].ravel()


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------


def weighted_lp_norm(f, w: Weight, p: float) -> float:
    """(sum |f|^p w)^(1/p) with unit lattice spacing."""
    if p < 1:
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")
    x = _scalar_values(f)
    return float(np.sum(np.abs(x) ** p * w.values) ** (1.0 / p))


def weighted_measure(E, w: Weight) -> float:
    """w(E) for a boolean mask or a point array."""
    E = np.asarray(E)
    if E.dtype == bool:
        return float(w.values[E].sum())
    pts = np.atleast_2d(E) % w.grid.side
    return float(w.values[tuple(pts[:, a] for a in range(w.grid.d))].sum())


def lambda_grid(values: np.ndarray, lo_pct: float = 1.0, hi_pct: float = 99.0,
                max_points: int = 60) -> np.ndarray:
    """Dyadic grid spanning the positive data range (percentile-trimmed)."""
    pos = values[values > 0]
    if pos.size == 0:
        return np.empty(0)
    lo = float(np.percentile(pos, lo_pct))
    hi = float(np.percentile(pos, hi_pct))
    lo = max(lo, hi * 2.0 ** (-max_points))
    j0 = math.floor(math.log2(lo))
    j1 = math.ceil(math.log2(hi))
    return 2.0 ** np.arange(j0, j1 + 1)


def weak_quasinorm(f, w: Weight, p: float) -> float:
    """sup over a dyadic lambda grid of lambda * w{|f| > lambda}^(1/p)."""
    if p < 1:
        raise ValueError(f"norm exponent must satisfy p >= 1, got {p}")
    x = np.abs(_scalar_values(f))
    grid = lambda_grid(x, lo_pct=0.0, hi_pct=100.0)
    if grid.size == 0:
        return 0.0
    best = 0.0
    for lam in grid:
        m = weighted_measure(x > lam, w)
        if m > 0:
            best = max(best, lam * m ** (1.0 / p))
    return best
