"""Ergodic averages over balls and cubes, short variations, smoothed
square functions, single-scale variation operators, and the discrete
geometry counts feeding the single-scale estimates.

Averages are computed by run-length decomposition of the kernel plus
periodic prefix sums: ball membership per row is an exact integer
half-width (decided by rational comparison at precompute time), so no
floating-point geometry happens at query time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import variation
from .lattice import (
    CubeRef,
    Field,
    GridSpec,
    ball_card,
    ball_mask,
    ball_runs,
    block_expand,
    block_reduce,
    dist2_point_to_cube,
    radius_sq_floor,
)
from .martingale import cond_expect

_KERNELS = ("ball", "cube")


@dataclass(frozen=True)
class ScaleSet:
    """Dyadic scale range with intra-scale refinement.

    Level k carries the radii 2**k * (1 + m/M) for m = 0..M, so
    consecutive levels share an endpoint; radii are exact rationals.
    """

    k_min: int
    k_max: int
    M: int = 8
    kernel: str = "ball"

    def __post_init__(self) -> None:
        if self.k_min < 0 or self.k_max < self.k_min:
            raise ValueError(f"bad level range [{self.k_min}, {self.k_max}]")
        if self.M < 4:
            raise ValueError(f"refinement M must be >= 4, got {self.M}")
        if self.kernel not in _KERNELS:
            raise ValueError(f"kernel must be one of {_KERNELS}, got {self.kernel}")

    @property
    def levels(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def level_radii(self, k: int) -> tuple[Fraction, ...]:
        if k not in self.levels:
            raise ValueError(f"level {k} outside [{self.k_min}, {self.k_max}]")
        base = Fraction(1 << k)
        return tuple(base * (self.M + m) / self.M for m in range(self.M + 1))

    def all_radii(self) -> tuple[Fraction, ...]:
        out: set[Fraction] = set()
        for k in self.levels:
            out.update(self.level_radii(k))
        return tuple(sorted(out))

    def validate_for(self, grid: GridSpec) -> None:
        if Fraction(1 << (self.k_max + 1)) > grid.max_radius:
            raise ValueError(
                f"scale range reaches 2**{self.k_max + 1}, beyond the torus "
                f"bound 2**(K-2) = {grid.max_radius}"
            )


def _window_sum(arr: np.ndarray, h: int, axis: int = -1) -> np.ndarray:
    """Periodic sum over windows [x-h, x+h] along one axis (prefix sums)."""
    if h == 0:
        return arr.copy()
    arr = np.moveaxis(arr, axis, -1)
    L = arr.shape[-1]
    ext = np.concatenate([arr[..., L - h :], arr, arr[..., :h]], axis=-1)
    P = np.cumsum(ext, axis=-1)
    P = np.concatenate([np.zeros(P.shape[:-1] + (1,)), P], axis=-1)
    out = P[..., 2 * h + 1 :] - P[..., : L]
    return np.moveaxis(out, -1, axis)


class _RowSumCache:
    """Window sums along the last axis, shared across radii of a stack."""

    def __init__(self, values: np.ndarray) -> None:
        self.values = values
        self._cache: dict[int, np.ndarray] = {}

    def get(self, h: int) -> np.ndarray:
        if h not in self._cache:
            self._cache[h] = _window_sum(self.values, h, axis=-1)
        return self._cache[h]


def _ball_sum(grid: GridSpec, cache: _RowSumCache, t) -> tuple[np.ndarray, int]:
    runs = ball_runs(grid.d, t)
    if grid.d == 1:
        h = runs[0]
        return cache.get(h), 2 * h + 1
    h = (len(runs) - 1) // 2
    acc = np.zeros_like(cache.values)
    for dy in range(-h, h + 1):
        acc += np.roll(cache.get(runs[dy + h]), -dy, axis=-2)
    return acc, ball_card(grid.d, t)


def _cube_sum(grid: GridSpec, cache: _RowSumCache, t) -> tuple[np.ndarray, int]:
    h = math.isqrt(radius_sq_floor(t))
    rows = cache.get(h)
    if grid.d == 1:
        return rows, 2 * h + 1
    return _window_sum(rows, h, axis=-2), (2 * h + 1) ** 2


def ergodic_avg(f: Field, t, kernel: str = "ball") -> Field:
    """Pointwise mean of f over the radius-t ball (or cube) around x."""
    if kernel not in _KERNELS:
        raise ValueError(f"kernel must be one of {_KERNELS}, got {kernel}")
    if Fraction(t) > f.grid.max_radius:
        raise ValueError(f"radius {t} beyond torus bound {f.grid.max_radius}")
    cache = _RowSumCache(f.values)
    summer = _ball_sum if kernel == "ball" else _cube_sum
    total, count = summer(f.grid, cache, t)
    return Field(f.grid, total / count)


@dataclass
class AvgStack:
    """A_t f for every radius of a ScaleSet, stacked along axis 0."""

    scales: ScaleSet
    source: Field
    radii: tuple[Fraction, ...]
    values: np.ndarray  # (n_radii,) + source.values.shape

    def __post_init__(self) -> None:
        self._index = {t: i for i, t in enumerate(self.radii)}

    def slice_at(self, t) -> Field:
        t = Fraction(t)
        if t not in self._index:
            raise KeyError(f"radius {t} not in stack")
        return Field(self.source.grid, self.values[self._index[t]])

    def level_block(self, k: int) -> np.ndarray:
        """Slices of one dyadic level, shape (M+1,) + field shape."""
        idx = [self._index[t] for t in self.scales.level_radii(k)]
        return self.values[idx]


def avg_stack(f: Field, scales: ScaleSet) -> AvgStack:
    scales.validate_for(f.grid)
    cache = _RowSumCache(f.values)
    summer = _ball_sum if scales.kernel == "ball" else _cube_sum
    radii = scales.all_radii()
    out = np.empty((len(radii),) + f.values.shape)
    for i, t in enumerate(radii):
        total, count = summer(f.grid, cache, t)
        out[i] = total / count
    return AvgStack(scales, f, radii, out)


def short_variation(stack: AvgStack, f: Field, k: int) -> Field:
    """Inhomogeneous 2-variation of t -> A_t f(x) - E_k f(x) over the
    radii of level k (both endpoints included)."""
    block = stack.level_block(k)
    ek = cond_expect(f, k).values
    return Field(f.grid, variation.var_inhom_stack(block - ek[None], 2.0))


def sup_over_3q(values: np.ndarray, grid: GridSpec, k: int) -> np.ndarray:
    """Per point, max over the concentric tripled level-k cube."""
    s = 1 << k
    bm = block_reduce(values, grid.d, s, "max")
    if grid.d == 1:
        sm = np.maximum(np.maximum(np.roll(bm, 1, -1), bm), np.roll(bm, -1, -1))
    else:
        sm = bm.copy()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == dj == 0:
                    continue
                sm = np.maximum(sm, np.roll(bm, (di, dj), axis=(-2, -1)))
    return block_expand(sm, grid.d, s)


def smoothed_short_variation(sv: Field, k: int) -> Field:
    return Field(sv.grid, sup_over_3q(sv.values, sv.grid, k))


def square_function(f: Field, scales: ScaleSet, stack: Optional[AvgStack] = None) -> Field:
    """ell^2 over levels of the smoothed short variations."""
    if stack is None:
        stack = avg_stack(f, scales)
    acc = np.zeros_like(f.values)
    for k in scales.levels:
        sv = short_variation(stack, f, k)
        tilde = sup_over_3q(sv.values, f.grid, k)
        acc += tilde * tilde
    return Field(f.grid, np.sqrt(acc))


def rk_operator(b: Field, k: int, r: float, stack: Optional[AvgStack] = None,
                scales: Optional[ScaleSet] = None) -> Field:
    """Single-scale inhomogeneous r-variation of t -> A_t b(x)."""
    if r <= 1:
        raise ValueError(f"variation exponent must satisfy r > 1, got {r}")
    if stack is None:
        if scales is None:
            raise ValueError("need either a stack or a ScaleSet")
        stack = avg_stack(b, scales)
    return Field(b.grid, variation.var_inhom_stack(stack.level_block(k), r))


def frak_r(b: Field, r: float, scales: ScaleSet, stack: Optional[AvgStack] = None) -> Field:
    """ell^r over levels of the 3Q-smoothed single-scale variations."""
    if r <= 1:
        raise ValueError(f"variation exponent must satisfy r > 1, got {r}")
    if stack is None:
        stack = avg_stack(b, scales)
    acc = np.zeros_like(b.values)
    for k in scales.levels:
        rk = rk_operator(b, k, r, stack=stack)
        smooth = sup_over_3q(rk.values, b.grid, k)
        acc += smooth**r
    return Field(b.grid, acc ** (1.0 / r))


def frak_rk(b: Field, k: int, r: float, stack: Optional[AvgStack] = None,
            scales: Optional[ScaleSet] = None) -> Field:
    """3Q-smoothed single-scale variation at one level."""
    rk = rk_operator(b, k, r, stack=stack, scales=scales)
    return Field(b.grid, sup_over_3q(rk.values, b.grid, k))


def boundary_cube_count(grid: GridSpec, x, t, k: int, i: int) -> int:
    """Number of level-(k+i) dyadic cubes meeting the discrete sphere
    boundary: cubes containing points both inside and outside the ball."""
    if i > 0:
        raise ValueError(f"offset i must be <= 0, got {i}")
    level = k + i
    if level < 0:
        raise ValueError(f"level k+i = {level} negative")
    inside = ball_mask(grid, x, t)
    s = 1 << level
    any_in = block_reduce(inside, grid.d, s, "any")
    all_in = block_reduce(inside, grid.d, s, "all")
    return int(np.count_nonzero(any_in & ~all_in))


def ball_symm_diff(grid: GridSpec, x, y, t) -> int:
    """Cardinality of B(x,t) symmetric-difference B(y,t)."""
    mx = ball_mask(grid, x, t)
    my = ball_mask(grid, y, t)
    return int(np.count_nonzero(mx ^ my))


@dataclass(frozen=True)
class ShellCheck:
    t_inner: float
    t_outer: float
    sum_inner: float
    sum_outer: float
    sum_shell: float
    residual: float
    nested: bool


@dataclass
class ShellReport:
    checks: list[ShellCheck]

    @property
    def max_residual(self) -> float:
        return max((c.residual for c in self.checks), default=0.0)

    @property
    def all_nested(self) -> bool:
        return all(c.nested for c in self.checks)


def shell_derivative_check(b: Field, x, k: int, scales: ScaleSet) -> ShellReport:
    """Discrete derivative identity over consecutive level-k radii:
    the ball-sum increment equals the sum over the shell (set difference
    of the nested closed balls)."""
    if not b.is_scalar:
        raise ValueError("shell check expects a scalar field")
    radii = scales.level_radii(k)
    vals = b.values
    checks = []
    for t0, t1 in zip(radii[:-1], radii[1:]):
        m0 = ball_mask(b.grid, x, t0)
        m1 = ball_mask(b.grid, x, t1)
        nested = bool(np.all(m1[m0]))
        shell = m1 & ~m0
        s0 = math.fsum(vals[m0])
        s1 = math.fsum(vals[m1])
        ss = math.fsum(vals[shell])
        checks.append(
            ShellCheck(float(t0), float(t1), s0, s1, ss, abs(s1 - s0 - ss), nested)
        )
    return ShellReport(checks)


def cubes_within(grid: GridSpec, x, dist, cubes: list[CubeRef]) -> list[CubeRef]:
    """Cubes whose torus distance to x is at most dist (exact rational)."""
    d2 = Fraction(dist) ** 2
    return [q for q in cubes if Fraction(dist2_point_to_cube(grid, x, q)) <= d2]
