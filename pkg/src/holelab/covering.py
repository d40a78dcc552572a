"""Mesoscopic coverings: deterministic cube tilings and their randomized
modification that keeps every charged sphere strictly inside one cell.

Cells have side k*epsilon.  For the random modification each retained point
gets an axis cube of half-side twice its trimmed minimal distance; a cell
absorbs the cubes of its own points and cedes the cubes of foreign points,
so a sphere of radius up to twice the trimmed distance never straddles a
cell boundary.  Trimming shrinks the distance dyadically near cell faces,
which keeps all cell volumes within (k +- eps^kappa)^d eps^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .index import SpatialIndex
from .process import MarkedConfiguration, thin_configuration


def mesoscale_parameters(d: int, epsilon: float):
    """Mesoscale multiplier k = floor(eps^(-2/(d+2))) and trimming exponent kappa."""
    if d < 3 or not 0 < epsilon < 1:
        raise ValueError("need d >= 3 and epsilon in (0, 1)")
    k = int(math.floor(epsilon ** (-2.0 / (d + 2))))
    if k < 1:
        raise ValueError(f"epsilon={epsilon} too large for the mesoscopic regime (k = 0)")
    kappa = 2.0 / ((d - 1) * (d + 2))
    return k, kappa


@dataclass
class CubeCovering:
    """Tiling of the domain by cubes of side k*epsilon with integer anchors.

    For even k the tiles are [k*eps*m, k*eps*(m+1)) per axis (anchors on the
    half-cell shift, so the default cube domain is tiled exactly); for odd k
    they are centred at multiples of k*eps.  Boundary points go to the cell
    with the lexicographically smallest anchor.
    """

    k: int
    epsilon: float
    m_lo: np.ndarray           # (d,) first per-axis tile index
    m_count: np.ndarray        # (d,)
    anchors: np.ndarray        # (n_cells, d) integer anchor coordinates
    lo: np.ndarray             # (n_cells, d) physical lower corners
    hi: np.ndarray             # (n_cells, d)
    interior: np.ndarray       # (n_cells,) bool
    meets_domain: np.ndarray   # (n_cells,) bool
    point_cell: np.ndarray     # (n_points,) flat cell index of every config point

    @property
    def cell_size(self) -> float:
        return self.k * self.epsilon

    @property
    def n_cells(self) -> int:
        return self.anchors.shape[0]

    @property
    def shift(self) -> float:
        """Tile-index offset: x/(k*eps) + shift falls in [m, m+1) on tile m."""
        return 0.0 if self.k % 2 == 0 else 0.5

    def cell_of_points(self, x: np.ndarray) -> np.ndarray:
        """Flat cell index for physical points (n, d), with tie-break and clamping.

        Points on a shared face belong to the smaller-anchor tile; the small
        tolerance makes that deterministic when the face coordinate is not
        exactly representable (lattice sites routinely sit on faces).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = x / self.cell_size + self.shift
        m = np.ceil(t - 1e-9).astype(np.int64) - 1
        m = np.clip(m, self.m_lo, self.m_lo + self.m_count - 1)
        return self.flat_index(m)

    def flat_index(self, m: np.ndarray) -> np.ndarray:
        rel = m - self.m_lo
        idx = rel[..., 0]
        for a in range(1, self.m_lo.size):
            idx = idx * self.m_count[a] + rel[..., a]
        return idx

    def points_in_cell(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.point_cell == cell)

    def csv_rows(self, volumes: Optional[np.ndarray] = None):
        counts = np.bincount(self.point_cell, minlength=self.n_cells)
        vols = np.full(self.n_cells, self.cell_size ** self.m_lo.size) if volumes is None else volumes
        for c in range(self.n_cells):
            yield (c, *self.anchors[c], vols[c], int(counts[c]), bool(self.interior[c]))


def build_cube_covering(config: MarkedConfiguration, k: int) -> CubeCovering:
    """Tile the domain with cubes of side k*epsilon and assign every point."""
    spec = config.spec
    d, eps = spec.d, spec.epsilon
    if k < 1:
        raise ValueError("k must be >= 1")
    s = k * eps
    if s > spec.domain.radius:
        raise ValueError(f"cell size k*eps = {s} exceeds the domain scale")
    w = spec.domain.radius
    shift = 0.0 if k % 2 == 0 else 0.5
    # per-axis tile indices whose open tile meets (-w, w)
    lo_edge = lambda m: s * (m - shift)
    m_min = math.floor(-w / s - 1 + shift) + 1
    m_max = math.ceil(w / s + shift) - 1
    rng = np.arange(m_min, m_max + 1, dtype=np.int64)
    m_lo = np.full(d, m_min, dtype=np.int64)
    m_count = np.full(d, rng.size, dtype=np.int64)

    grids = np.meshgrid(*([rng] * d), indexing="ij")
    m = np.stack([g.ravel() for g in grids], axis=1)
    lo = s * (m - shift)
    hi = lo + s
    if k % 2 == 0:
        anchors = k * m + k // 2
    else:
        anchors = k * m
    meets = np.array([spec.domain.box_intersects(lo[c], hi[c]) for c in range(m.shape[0])])
    interior = np.array([spec.domain.inner_margin(lo[c], hi[c], eps) for c in range(m.shape[0])])

    cov = CubeCovering(k=k, epsilon=eps, m_lo=m_lo, m_count=m_count,
                       anchors=anchors, lo=lo, hi=hi,
                       interior=interior, meets_domain=meets,
                       point_cell=np.empty(0, dtype=np.int64))
    cov.point_cell = cov.cell_of_points(config.centers())
    return cov


# ----------------------------------------------------------------------
# trimmed minimal distance and the randomized covering
# ----------------------------------------------------------------------

def trimmed_min_distances(config: MarkedConfiguration, covering: CubeCovering,
                          idx: np.ndarray, kappa: float) -> np.ndarray:
    """Minimal distances trimmed dyadically near the boundary of the own cell.

    Full distance deep inside the cell; capped at eps^(1+kappa) within that
    distance of the cell boundary; capped at 2^(n-1) eps^(1+kappa) on the
    n-th dyadic shell.  The face-distance cases take priority in the listed
    order, so a tie at the shell edges resolves to the smaller cap.
    """
    eps = config.spec.epsilon
    x = config.centers()[np.asarray(idx)]
    cells = covering.point_cell[np.asarray(idx)]
    lo = covering.lo[cells]
    hi = covering.hi[cells]
    dist = np.minimum(x - lo, hi - x).min(axis=1)
    dist = np.maximum(dist, 0.0)
    r = config.minimal_distances()[np.asarray(idx)]
    base = eps ** (1.0 + kappa)
    with np.errstate(divide="ignore"):
        shell = np.ceil(np.log2(np.maximum(dist, 1e-300) / base))
    cap = base * 2.0 ** (np.maximum(shell, 1.0) - 1.0)
    out = np.where(dist >= eps / 2.0, r,
                   np.where(dist <= base, np.minimum(base, r), np.minimum(cap, r)))
    return out


def trimmed_min_distance(config: MarkedConfiguration, covering: CubeCovering, w: int) -> float:
    """Scalar trimmed distance for one point (see trimmed_min_distances)."""
    _, kappa = mesoscale_parameters(config.spec.d, config.spec.epsilon)
    return float(trimmed_min_distances(config, covering, np.array([w]), kappa)[0])


@dataclass
class RandomCovering:
    base: CubeCovering
    delta: float
    kappa: float
    thinned: np.ndarray        # config indices carrying cubes
    tilde_r: np.ndarray
    cube_lo: np.ndarray        # (t, d)
    cube_hi: np.ndarray
    cell_of: np.ndarray        # (t,) flat cell of each thinned point
    volumes: np.ndarray        # (n_cells,)
    inc_cell: np.ndarray       # incidence: cell index
    inc_point: np.ndarray      # incidence: position into `thinned`
    inc_overlap: np.ndarray    # cube/tile overlap volume
    inc_own: np.ndarray        # bool: point assigned to this cell

    @property
    def epsilon(self) -> float:
        return self.base.epsilon

    def csv_rows(self):
        counts = np.bincount(self.cell_of, minlength=self.base.n_cells)
        for c in range(self.base.n_cells):
            yield (c, *self.base.anchors[c], self.volumes[c], int(counts[c]),
                   bool(self.base.interior[c]))


def build_random_covering(config: MarkedConfiguration, k: int,
                          delta: Optional[float] = None) -> RandomCovering:
    """Randomized covering with exact cell volumes.

    The retained points are the thinned set for ``delta`` (default: the
    rate-optimal exponent for the configured marks).  Volumes come from
    box arithmetic; a violated volume bound raises, since it indicates a
    construction bug rather than unlucky data.
    """
    spec = config.spec
    d, eps = spec.d, spec.epsilon
    if delta is None:
        from .rates import theoretical_exponents
        delta = theoretical_exponents(d, spec.marks.beta_eff).delta
    _, kappa = mesoscale_parameters(d, eps)
    base = build_cube_covering(config, k)
    thinned = thin_configuration(config, delta)
    tr = trimmed_min_distances(config, base, thinned, kappa)
    x = config.centers()[thinned]
    half = 2.0 * tr
    cube_lo = x - half[:, None]
    cube_hi = x + half[:, None]
    cell_of = base.point_cell[thinned]

    s = base.cell_size
    shift = base.shift
    n_cells = base.n_cells
    volumes = np.full(n_cells, s ** d)

    inc_cell, inc_point, inc_overlap, inc_own = [], [], [], []
    if thinned.size:
        # per-axis tile ranges met by each cube (at most two tiles per axis)
        m_a = np.floor(cube_lo / s + shift).astype(np.int64)
        m_b = np.ceil(cube_hi / s + shift).astype(np.int64) - 1
        span = m_b - m_a
        if np.any(span > 1):
            raise RuntimeError("a point cube spans more than two tiles per axis")
        combos = np.stack(np.meshgrid(*([np.arange(2)] * d), indexing="ij"),
                          axis=-1).reshape(-1, d)
        for combo in combos:
            # a combo enumerates a distinct tile only along axes it spans
            sel = np.all(combo[None, :] <= span, axis=1)
            idx = np.flatnonzero(sel)
            if idx.size == 0:
                continue
            m = m_a[idx] + combo[None, :]
            inside = np.all((m >= base.m_lo) & (m < base.m_lo + base.m_count), axis=1)
            idx = idx[inside]
            if idx.size == 0:
                continue
            m = m[inside]
            cells = base.flat_index(m)
            tile_lo = base.lo[cells]
            tile_hi = base.hi[cells]
            over = np.prod(np.maximum(
                np.minimum(cube_hi[idx], tile_hi) - np.maximum(cube_lo[idx], tile_lo), 0.0),
                axis=1)
            own = cells == cell_of[idx]
            inc_cell.append(cells)
            inc_point.append(idx)
            inc_overlap.append(over)
            inc_own.append(own)

    if inc_cell:
        inc_cell = np.concatenate(inc_cell)
        inc_point = np.concatenate(inc_point)
        inc_overlap = np.concatenate(inc_overlap)
        inc_own = np.concatenate(inc_own)
        cube_vol = (2.0 * half) ** d
        np.add.at(volumes, inc_cell[inc_own], cube_vol[inc_point[inc_own]] - inc_overlap[inc_own])
        np.subtract.at(volumes, inc_cell[~inc_own], inc_overlap[~inc_own])
    else:
        inc_cell = np.empty(0, dtype=np.int64)
        inc_point = np.empty(0, dtype=np.int64)
        inc_overlap = np.empty(0)
        inc_own = np.empty(0, dtype=bool)

    cov = RandomCovering(base=base, delta=delta, kappa=kappa, thinned=thinned,
                         tilde_r=tr, cube_lo=cube_lo, cube_hi=cube_hi,
                         cell_of=cell_of, volumes=volumes,
                         inc_cell=inc_cell, inc_point=inc_point,
                         inc_overlap=inc_overlap, inc_own=inc_own)
    lo_b, hi_b = volume_bounds(k, eps, kappa, d)
    live = base.meets_domain
    if np.any(volumes[live] < lo_b - 1e-12) or np.any(volumes[live] > hi_b + 1e-12):
        worst = int(np.argmin(volumes[live]))
        raise RuntimeError(
            f"cell volume outside [(k-eps^kappa)^d, (k+eps^kappa)^d] eps^d: "
            f"{volumes[live][worst]:.6g} vs [{lo_b:.6g}, {hi_b:.6g}]")
    return cov


def volume_bounds(k: int, epsilon: float, kappa: float, d: int):
    return ((k - epsilon ** kappa) ** d * epsilon ** d,
            (k + epsilon ** kappa) ** d * epsilon ** d)


# ----------------------------------------------------------------------
# verification
# ----------------------------------------------------------------------

@dataclass
class CoveringReport:
    volume_violations: int
    overlap_violations: int
    dichotomy_violations: int
    n_cells: int
    n_points: int
    detail: str = ""

    @property
    def ok(self) -> bool:
        return (self.volume_violations | self.overlap_violations
                | self.dichotomy_violations) == 0


def verify_random_covering(cov: RandomCovering) -> CoveringReport:
    """Geometric verification from the raw boxes: cube disjointness, volume
    bounds, and the ball-in/ball-out dichotomy for every (point, cell) pair."""
    base = cov.base
    d = base.m_lo.size
    eps = cov.epsilon
    detail = ""

    lo_b, hi_b = volume_bounds(base.k, eps, cov.kappa, d)
    live = base.meets_domain
    vol_bad = int(np.count_nonzero((cov.volumes[live] < lo_b - 1e-12)
                                   | (cov.volumes[live] > hi_b + 1e-12)))

    overlap_bad = 0
    if cov.thinned.size > 1:
        # cube centres are the thinned points themselves; half-sides are at
        # most eps/2, so overlapping cubes sit within rescaled distance one
        centers = (cov.cube_lo + cov.cube_hi) / 2.0
        sub = SpatialIndex(centers / eps, cell_size=1.0)
        i, j = sub.close_pairs(1.0, norm="chebyshev")
        if i.size:
            gap = np.minimum(cov.cube_hi[i], cov.cube_hi[j]) - np.maximum(cov.cube_lo[i], cov.cube_lo[j])
            bad = np.all(gap > 1e-12, axis=1)
            overlap_bad = int(np.count_nonzero(bad))
            if overlap_bad:
                k0 = int(np.argmax(bad))
                detail = f"cubes of thinned points {i[k0]} and {j[k0]} overlap"

    # dichotomy: an own cube must not be bitten by a foreign cube of the same
    # cell (then B_{2r} sits inside the kept cube); the subtracted side can
    # never intersect the cell again, so it needs no separate test
    dich_bad = 0
    if cov.inc_cell.size:
        order = np.argsort(cov.inc_cell, kind="stable")
        cells_sorted = cov.inc_cell[order]
        bounds = np.flatnonzero(np.diff(cells_sorted)) + 1
        starts = np.concatenate(([0], bounds, [cells_sorted.size]))
        for b in range(starts.size - 1):
            seg = order[starts[b]:starts[b + 1]]
            own = seg[cov.inc_own[seg]]
            foreign = seg[~cov.inc_own[seg]]
            if own.size == 0 or foreign.size == 0:
                continue
            po = cov.inc_point[own]
            pf = cov.inc_point[foreign]
            gap = (np.minimum(cov.cube_hi[po][:, None, :], cov.cube_hi[pf][None, :, :])
                   - np.maximum(cov.cube_lo[po][:, None, :], cov.cube_lo[pf][None, :, :]))
            bad = np.all(gap > 1e-12, axis=2)
            dich_bad += int(np.count_nonzero(bad))

    return CoveringReport(vol_bad, overlap_bad, dich_bad,
                          int(np.count_nonzero(live)), int(cov.thinned.size), detail)


def montecarlo_cell_volume(cov: RandomCovering, cell: int,
                           rng: np.random.Generator, samples: int = 20000) -> float:
    """Independent hit-or-miss estimate of one cell volume."""
    base = cov.base
    eps = cov.epsilon
    pad = eps / 2.0
    lo = base.lo[cell] - pad
    hi = base.hi[cell] + pad
    x = rng.uniform(lo, hi, size=(samples, lo.size))
    inside_tile = np.all((x >= base.lo[cell]) & (x < base.hi[cell]), axis=1)
    mask = inside_tile.copy()
    rel = np.flatnonzero(cov.inc_cell == cell)
    for r in rel:
        p = cov.inc_point[r]
        in_cube = np.all((x >= cov.cube_lo[p]) & (x < cov.cube_hi[p]), axis=1)
        if cov.inc_own[r]:
            mask |= in_cube
        else:
            mask &= ~in_cube
    box_vol = float(np.prod(hi - lo))
    return box_vol * float(np.count_nonzero(mask)) / samples
