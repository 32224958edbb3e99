"""Periodic lattice geometry: grids, dyadic cubes, discrete balls.

Everything downstream (averages, martingales, weights) consumes the
primitives here.  Conventions:

* the grid is a torus with 2**K points per axis and unit spacing,
* dyadic level k means cubes of side 2**k whose corners are multiples
  of 2**k (level 0 = single points, level K = the whole grid),
* ball membership is decided by exact integer/rational comparison of
  squared distances, never by floating-point geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Periodic d-dimensional lattice box with 2**K points per axis."""

    d: int
    K: int
    periodic: bool = True

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.d}")
        if self.K < 4:
            raise ValueError(f"need 2**K >= 16 points per axis, got K={self.K}")
        if not self.periodic:
            raise ValueError("only periodic grids are supported")

    @property
    def side(self) -> int:
        return 1 << self.K

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.d

    @property
    def npoints(self) -> int:
        return self.side**self.d

    @property
    def max_radius(self) -> Fraction:
        """Largest usable ball radius, 2**(K-2)."""
        return Fraction(1 << (self.K - 2))

    def wrap_point(self, x) -> tuple[int, ...]:
        """Normalize a point to a tuple of coordinates reduced mod 2**K."""
        if np.isscalar(x):
            x = (int(x),)
        x = tuple(int(c) % self.side for c in x)
        if len(x) != self.d:
            raise ValueError(f"point {x} does not match dimension {self.d}")
        return x


@dataclass(frozen=True)
class CubeRef:
    """Dyadic cube of side 2**k anchored at an aligned corner."""

    k: int
    corner: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError(f"negative dyadic level {self.k}")
        side = 1 << self.k
        if any(c % side != 0 for c in self.corner):
            raise ValueError(f"corner {self.corner} not aligned to side {side}")

    @property
    def side(self) -> int:
        return 1 << self.k

    @property
    def volume(self) -> int:
        return self.side ** len(self.corner)


class Field:
    """Real-valued function on a grid, optionally a finite family.

    ``values`` has shape ``grid.shape`` for a scalar field or
    ``(family_size,) + grid.shape`` for a family; the spatial axes are
    always the trailing ones, so numpy broadcasting handles both cases
    uniformly.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape == grid.shape:
            pass
        elif arr.ndim == grid.d + 1 and arr.shape[1:] == grid.shape:
            pass
        else:
            raise ValueError(
                f"values shape {arr.shape} incompatible with grid shape {grid.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = arr

    @property
    def family_size(self) -> int:
        return 1 if self.values.ndim == self.grid.d else self.values.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.values.ndim == self.grid.d

    def component(self, i: int) -> "Field":
        if self.is_scalar:
            if i != 0:
                raise IndexError("scalar field has a single component")
            return self
        return Field(self.grid, self.values[i])

    def components(self):
        return [self.component(i) for i in range(self.family_size)]

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __repr__(self) -> str:
        return (
            f"Field(d={self.grid.d}, K={self.grid.K}, "
            f"family_size={self.family_size})"
        )

    @staticmethod
    def constant(grid: GridSpec, c: float) -> "Field":
        return Field(grid, np.full(grid.shape, float(c)))

    @staticmethod
    def delta(grid: GridSpec, x, mass: float = 1.0) -> "Field":
        v = np.zeros(grid.shape)
        v[grid.wrap_point(x)] = mass
        return Field(grid, v)


def block_view(arr: np.ndarray, d: int, s: int) -> np.ndarray:
    """Reshape trailing spatial axes into (blocks, s) pairs."""
    lead = arr.shape[: arr.ndim - d]
    L = arr.shape[-1]
    nb = L // s
    if d == 1:
        return arr.reshape(lead + (nb, s))
    return arr.reshape(lead + (nb, s, nb, s))


def block_reduce(arr: np.ndarray, d: int, s: int, op: str) -> np.ndarray:
    """Per-cube reduction over side-s dyadic blocks of the trailing axes."""
    v = block_view(arr, d, s)
    axes = (-1,) if d == 1 else (-3, -1)
    if op == "mean":
        return v.mean(axis=axes)
    if op == "max":
        return v.max(axis=axes)
    if op == "min":
        return v.min(axis=axes)
    if op == "any":
        return v.any(axis=axes)
    if op == "all":
        return v.all(axis=axes)
    if op == "sum":
        return v.sum(axis=axes)
    raise ValueError(f"unknown block reduction {op}")


def block_expand(blocks: np.ndarray, d: int, s: int) -> np.ndarray:
    """Broadcast per-cube values back to the full grid."""
    out = np.repeat(blocks, s, axis=-1)
    if d == 2:
        out = np.repeat(out, s, axis=-2)
    return out


def dyadic_cube_of(grid: GridSpec, x, k: int) -> CubeRef:
    """Unique level-k dyadic cube containing x (low k bits of x cleared)."""
    if not 0 <= k <= grid.K:
        raise ValueError(f"level {k} outside [0, {grid.K}]")
    pt = grid.wrap_point(x)
    mask = ~((1 << k) - 1)
    return CubeRef(k, tuple(c & mask for c in pt))


def cube_slices(grid: GridSpec, q: CubeRef) -> tuple[slice, ...]:
    """Index slices selecting the cube in the trailing spatial axes.

    Aligned dyadic cubes never wrap, so plain slices suffice.
    """
    if q.k > grid.K:
        raise ValueError(f"cube level {q.k} exceeds grid level {grid.K}")
    return tuple(slice(c, c + q.side) for c in q.corner)


def cube_points(grid: GridSpec, q: CubeRef) -> np.ndarray:
    """All lattice points of the cube, shape (volume, d)."""
    axes = [np.arange(c, c + q.side) for c in q.corner]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def concentric_cube(grid: GridSpec, q: CubeRef, scale: int = 3) -> np.ndarray:
    """Concentric scale-times-larger cube as wrapped points, shape (n, d).

    For odd ``scale`` = 2m+1 this is the union of the (2m+1)**d
    level-k neighbors of q, which is exactly the concentric cube with
    scale times the side length on the dyadic lattice.
    """
    if scale < 1 or scale % 2 == 0:
        raise ValueError(f"scale must be odd and positive, got {scale}")
    m = scale // 2
    s = q.side
    axes = [
        (np.arange(c - m * s, c + (m + 1) * s)) % grid.side for c in q.corner
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def concentric_3q(grid: GridSpec, q: CubeRef) -> np.ndarray:
    """Points of the concentric cube with three times the side length."""
    return concentric_cube(grid, q, scale=3)


def points_to_mask(grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """Boolean indicator array of a point set."""
    mask = np.zeros(grid.shape, dtype=bool)
    pts = np.atleast_2d(np.asarray(points, dtype=np.int64)) % grid.side
    mask[tuple(pts[:, a] for a in range(grid.d))] = True
    return mask


def radius_sq_floor(t) -> int:
    """floor(t**2) computed exactly (Fraction arithmetic, no rounding)."""
    tf = Fraction(t)
    if tf <= 0:
        raise ValueError(f"radius must be positive, got {t}")
    t2 = tf * tf
    return t2.numerator // t2.denominator


@lru_cache(maxsize=512)
def _ball_offset_cache(d: int, r2: int) -> np.ndarray:
    h = math.isqrt(r2)
    if d == 1:
        off = np.arange(-h, h + 1).reshape(-1, 1)
    else:
        rows = []
        for dy in range(-h, h + 1):
            rx = math.isqrt(r2 - dy * dy)
            dx = np.arange(-rx, rx + 1)
            rows.append(np.stack([np.full_like(dx, dy), dx], axis=-1))
        off = np.concatenate(rows, axis=0)
    off.setflags(write=False)
    return off


def ball_offsets(d: int, t) -> np.ndarray:
    """Integer offsets o with |o| <= t (exact comparison), shape (n, d)."""
    return _ball_offset_cache(d, radius_sq_floor(t))


@lru_cache(maxsize=512)
def _ball_runs_cache(d: int, r2: int) -> tuple[int, ...]:
    h = math.isqrt(r2)
    if d == 1:
        return (h,)
    return tuple(math.isqrt(r2 - dy * dy) for dy in range(-h, h + 1))


def ball_runs(d: int, t) -> tuple[int, ...]:
    """Per-row half-widths of the ball: row dy spans [-rx(dy), rx(dy)].

    d=1 returns a single half-width; d=2 one half-width per dy from
    -floor(t) to floor(t).  Used by the prefix-sum averaging kernels.
    """
    return _ball_runs_cache(d, radius_sq_floor(t))


def ball_card(d: int, t) -> int:
    """Number of lattice points in a ball of radius t."""
    runs = ball_runs(d, t)
    if d == 1:
        return 2 * runs[0] + 1
    return int(sum(2 * r + 1 for r in runs))


def _check_radius(grid: GridSpec, t) -> None:
    if Fraction(t) > grid.max_radius:
        raise ValueError(
            f"radius {t} exceeds torus bound 2**(K-2) = {grid.max_radius}"
        )


def ball_points(grid: GridSpec, x, t) -> np.ndarray:
    """Wrapped lattice points y with |y - x| <= t, shape (n, d)."""
    _check_radius(grid, t)
    pt = grid.wrap_point(x)
    return (ball_offsets(grid.d, t) + np.asarray(pt)) % grid.side


def ball_mask(grid: GridSpec, x, t) -> np.ndarray:
    """Boolean indicator of the ball around x."""
    return points_to_mask(grid, ball_points(grid, x, t))


def torus_delta(grid: GridSpec, x, y) -> tuple[int, ...]:
    """Coordinatewise displacement y - x reduced to (-side/2, side/2]."""
    px, py = grid.wrap_point(x), grid.wrap_point(y)
    half = grid.side // 2
    return tuple(((b - a + half - 1) % grid.side) - half + 1 for a, b in zip(px, py))


def torus_dist2(grid: GridSpec, x, y) -> int:
    """Squared Euclidean distance on the torus (exact integer)."""
    return sum(c * c for c in torus_delta(grid, x, y))


def dist2_point_to_cube(grid: GridSpec, x, q: CubeRef) -> int:
    """Squared torus distance from x to the nearest point of the cube."""
    pt = grid.wrap_point(x)
    total = 0
    for a, c in zip(pt, q.corner):
        side = grid.side
        lo, hi = c, c + q.side - 1
        # distance from coordinate a to the wrapped interval [lo, hi]
        rel = (a - lo) % side
        if rel <= hi - lo:
            d1 = 0
        else:
            d1 = min(rel - (hi - lo), side - rel)
        total += d1 * d1
    return total
