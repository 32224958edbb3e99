"""Dyadic martingale machinery on periodic grids.

Level convention: E_k averages over cubes of side 2**k, so larger k is
coarser (level 0 is the identity, level K the global mean).  Results
stated in the opposite scale convention are translated at the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .lattice import (
    CubeRef,
    Field,
    GridSpec,
    block_expand as _block_expand,
    block_reduce as _block_reduce,
    block_view as _block_view,
    cube_slices,
)


def _check_level(grid: GridSpec, k: int) -> None:
    if not 0 <= k <= grid.K:
        raise ValueError(f"dyadic level {k} outside [0, {grid.K}]")


def cond_expect(f: Field, k: int) -> Field:
    """Conditional expectation onto level-k dyadic cubes (block means)."""
    _check_level(f.grid, k)
    if k == 0:
        return Field(f.grid, f.values.copy())
    s = 1 << k
    means = _block_reduce(f.values, f.grid.d, s, "mean")
    return Field(f.grid, _block_expand(means, f.grid.d, s))


@dataclass
class MartingaleDecomposition:
    """f = top + sum_k diffs[k] with diffs[k] = E_k f - E_{k+1} f."""

    diffs: list[Field]
    top: Field
    source: Field

    @property
    def levels(self) -> range:
        return range(len(self.diffs))

    def reconstruct(self) -> Field:
        total = self.top.values.copy()
        for d in self.diffs:
            total += d.values
        return Field(self.source.grid, total)


def mart_decompose(f: Field) -> MartingaleDecomposition:
    grid = f.grid
    prev = f.values
    diffs = []
    for k in range(1, grid.K + 1):
        cur = cond_expect(f, k).values
        diffs.append(Field(grid, prev - cur))
        prev = cur
    return MartingaleDecomposition(diffs, Field(grid, prev), f)


def mart_square_function(f: Field) -> Field:
    dec = mart_decompose(f)
    acc = np.zeros_like(f.values)
    for d in dec.diffs:
        acc += d.values * d.values
    return Field(f.grid, np.sqrt(acc))


def is_cube_constant(grid: GridSpec, arr: np.ndarray, k: int) -> bool:
    """True when arr is constant on every level-k cube."""
    if k == 0:
        return True
    s = 1 << k
    v = _block_view(arr, grid.d, s)
    if grid.d == 1:
        return bool(np.all(v == v[..., :1]))
    return bool(np.all(v == v[..., :1, :, :1]))


def _coerce_sign_fields(grid: GridSpec, signs: Sequence, K: int) -> list[np.ndarray]:
    if len(signs) != K:
        raise ValueError(f"need one sign field per level 0..{K - 1}, got {len(signs)}")
    out = []
    for k, s in enumerate(signs):
        arr = s.values if isinstance(s, Field) else np.asarray(s, dtype=np.float64)
        if arr.ndim == 0:
            arr = np.full(grid.shape, float(arr))
        if arr.shape != grid.shape:
            raise ValueError(f"sign field at level {k} has shape {arr.shape}")
        if not np.all(np.abs(arr) == 1.0):
            raise ValueError(f"sign field at level {k} must be +-1 valued")
        if not is_cube_constant(grid, arr, k):
            raise ValueError(f"sign field at level {k} is not constant on level-{k} cubes")
        out.append(arr)
    return out


def haar_multiplier(f: Field, signs: Sequence) -> Field:
    """top + sum_k eps_k * d_k for cube-constant sign fields eps_k.

    ``signs`` is one entry per level 0..K-1: a Field, an array, or a
    scalar +-1 (meaning a globally constant sign at that level).
    """
    dec = mart_decompose(f)
    eps = _coerce_sign_fields(f.grid, signs, f.grid.K)
    total = dec.top.values.copy()
    for k, d in enumerate(dec.diffs):
        total += eps[k] * d.values
    return Field(f.grid, total)


def random_sign_fields(grid: GridSpec, seed: int) -> list[Field]:
    """Seeded +-1 fields, one independent draw per (level, cube)."""
    rng = np.random.default_rng(np.random.SeedSequence((0x5167, seed)))
    out = []
    for k in range(grid.K):
        s = 1 << k
        nb = grid.side // s
        shape = (nb,) * grid.d
        draws = rng.integers(0, 2, size=shape) * 2.0 - 1.0
        out.append(Field(grid, _block_expand(draws, grid.d, s)))
    return out


@dataclass(frozen=True)
class HaarAtom:
    """L-infinity normalized Haar function supported on one dyadic cube."""

    cube: CubeRef
    patch: np.ndarray  # values on the cube, shape (side,)*d

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.patch)))


@dataclass
class HaarAtomSystem:
    """All level-(k+j+1) atoms of one martingale difference plus carrier.

    atom_field is sum_Q h_Q (supports are disjoint); carrier holds
    ||d 1_Q||_inf on each cube, so atom_field * carrier reconstructs the
    difference exactly.
    """

    level: int
    atom_field: Field
    carrier: Field

    def atoms(self) -> Iterator[HaarAtom]:
        grid = self.atom_field.grid
        s = 1 << self.level
        for corner in _iter_corners(grid, self.level):
            q = CubeRef(self.level, corner)
            yield HaarAtom(q, self.atom_field.values[cube_slices(grid, q)].copy())

    def reconstruct(self) -> Field:
        return Field(
            self.atom_field.grid, self.atom_field.values * self.carrier.values
        )


def _iter_corners(grid: GridSpec, k: int) -> Iterator[tuple[int, ...]]:
    s = 1 << k
    rng = range(0, grid.side, s)
    if grid.d == 1:
        for a in rng:
            yield (a,)
    else:
        for a in rng:
            for b in rng:
                yield (a, b)


def haar_atoms_from_diff(dec: MartingaleDecomposition, k: int, j: int) -> HaarAtomSystem:
    """Rewrite d_{k+j} as sum_Q h_Q * carrier over level-(k+j+1) cubes.

    h_Q = d 1_Q / ||d 1_Q||_inf (zero where the difference vanishes);
    the per-cube sup norms form the carrier field.
    """
    grid = dec.source.grid
    m = k + j
    if not 0 <= m <= grid.K - 1:
        raise ValueError(f"difference index k+j={m} outside [0, {grid.K - 1}]")
    level = m + 1
    d = dec.diffs[m].values
    s = 1 << level
    sup = _block_reduce(np.abs(d), grid.d, s, "max")
    carrier = _block_expand(sup, grid.d, s)
    with np.errstate(invalid="ignore", divide="ignore"):
        atom = np.where(carrier > 0, d / np.where(carrier > 0, carrier, 1.0), 0.0)
    return HaarAtomSystem(level, Field(grid, atom), Field(grid, carrier))


@dataclass
class CZResult:
    """Calderon-Zygmund decomposition at a height threshold.

    cubes are the maximal dyadic cubes where the running mean of
    F = (sum_i |f_i|^q)^(1/q) exceeds the threshold; good/bad split f
    into a bounded part and mean-zero atoms on those cubes.
    """

    cubes: list[CubeRef]
    good: Field
    bad: Field
    threshold: float
    q: float
    source: Field
    height: Field  # F

    def bad_atom(self, qref: CubeRef) -> np.ndarray:
        """Values of b^Q on the cube, shape (family,) + (side,)*d."""
        sl = cube_slices(self.source.grid, qref)
        v = self.bad.values
        if self.source.is_scalar:
            return v[sl]
        return v[(slice(None),) + sl]

    @property
    def selected_mask(self) -> np.ndarray:
        grid = self.source.grid
        mask = np.zeros(grid.shape, dtype=bool)
        for q in self.cubes:
            mask[cube_slices(grid, q)] = True
        return mask


def lq_height(f: Field, q: float) -> Field:
    """(sum_i |f_i|^q)^(1/q) across the family (|f| for scalars)."""
    if q <= 0:
        raise ValueError(f"q must be positive, got {q}")
    v = np.abs(f.values)
    if f.is_scalar:
        return Field(f.grid, v)
    return Field(f.grid, np.sum(v**q, axis=0) ** (1.0 / q))


def cz_decompose(f: Field, threshold: float = 1.0, q: float = 2.0) -> CZResult:
    """Select maximal dyadic cubes with mean of F above the threshold,
    coarse to fine, then split f into good and bad parts.

    Off the union, F <= threshold pointwise (level-0 cubes are single
    points); on each selected cube the mean of F is <= 2**d * threshold
    because the parent was not selected.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    grid = f.grid
    F = lq_height(f, q)

    cubes: list[CubeRef] = []
    covered = np.zeros(grid.shape, dtype=bool)
    good = f.values.copy()
    for k in range(grid.K, -1, -1):
        s = 1 << k
        means = _block_reduce(F.values, grid.d, s, "mean")
        taken = _block_reduce(covered, grid.d, s, "any")
        new = (means > threshold) & ~taken
        if not new.any():
            continue
        fmeans = _block_reduce(f.values, grid.d, s, "mean")
        sel = _block_expand(new, grid.d, s)
        covered |= sel
        good = np.where(sel, _block_expand(fmeans, grid.d, s), good)
        for idx in np.argwhere(new):
            cubes.append(CubeRef(k, tuple(int(c) * s for c in idx)))

    cubes.sort(key=lambda c: (-c.k, c.corner))
    good_f = Field(grid, good)
    bad_f = Field(grid, f.values - good)
    return CZResult(cubes, good_f, bad_f, float(threshold), float(q), f, F)


@dataclass
class StoppingTimes:
    """Greedy jump levels of the average chain k -> E_k f(x), per point.

    The scan anchors at the coarsest average E_K f and walks toward
    level 0, recording each level where the average chain moves more
    than lam from the current anchor; this ordering is what makes each
    recorded level a stopping time (constant on cubes of its own level).
    levels[j] holds the j-th recorded level per point (-1 sentinel).
    """

    grid: GridSpec
    lam: float
    levels: np.ndarray  # (max_count, *grid.shape) int64
    counts: np.ndarray  # grid.shape int64

    def count_field(self) -> Field:
        return Field(self.grid, self.counts.astype(np.float64))

    def validate(self) -> None:
        """Assert the stopping-time property: {x : t_j(x) = m} is a
        union of level-m cubes, for every slot j and level m."""
        for j in range(self.levels.shape[0]):
            lev = self.levels[j]
            for m in np.unique(lev):
                if m < 0:
                    continue
                mask = lev == int(m)
                s = 1 << int(m)
                per_cube_any = _block_reduce(mask, self.grid.d, s, "any")
                per_cube_all = _block_reduce(mask, self.grid.d, s, "all")
                if not np.array_equal(per_cube_any, per_cube_all):
                    raise AssertionError(
                        f"stopping time slot {j} not constant on level-{int(m)} cubes"
                    )


def greedy_stopping_times(f: Field, lam: float) -> StoppingTimes:
    if lam <= 0:
        raise ValueError(f"jump threshold must be positive, got {lam}")
    if not f.is_scalar:
        raise ValueError("stopping times are defined for scalar fields")
    grid = f.grid
    ek = [cond_expect(f, k).values for k in range(grid.K + 1)]
    anchor = ek[grid.K].copy()
    counts = np.zeros(grid.shape, dtype=np.int64)
    hits: list[tuple[int, np.ndarray]] = []
    for k in range(grid.K - 1, -1, -1):
        jump = np.abs(ek[k] - anchor) > lam
        if jump.any():
            hits.append((k, jump))
            anchor = np.where(jump, ek[k], anchor)
            counts += jump
    max_count = int(counts.max()) if counts.size else 0
    levels = np.full((max_count,) + grid.shape, -1, dtype=np.int64)
    running = np.zeros(grid.shape, dtype=np.int64)
    for k, jump in hits:
        slot = running[jump]
        idx = np.nonzero(jump)
        levels[(slot,) + idx] = k
        running[jump] += 1
    return StoppingTimes(grid, float(lam), levels, counts)
