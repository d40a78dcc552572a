"""Finite-difference backend on a uniform 3D grid.

Seven-point Laplacians with Dirichlet exterior, conjugate-gradient solves
with enforced relative residual, sphere-measure deposition by quasi-uniform
surface sampling with trilinear weights, the dual (negative-order) norm of
a deposited measure as the Dirichlet energy of its potential, per-cell
zero-mean Neumann energies, and solves of the perforated and homogenized
problems.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .corrector import CapacityMeasure, CorrectorField
from .covering import CubeCovering
from .domain import DomainDescriptor
from .partition import HolePartition
from .process import MarkedConfiguration

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass(frozen=True)
class Grid:
    """Uniform nodes over an axis-aligned box; three dimensions only."""

    n: int
    lo: tuple
    hi: tuple
    domain: Optional[DomainDescriptor] = None

    def __post_init__(self):
        if len(self.lo) != 3 or len(self.hi) != 3:
            raise ValueError("the gridded backend is three-dimensional")
        spans = [self.hi[a] - self.lo[a] for a in range(3)]
        if max(spans) - min(spans) > 1e-12 * max(spans):
            raise ValueError("grid box must be isotropic")

    @staticmethod
    def from_domain(domain: DomainDescriptor, n: int) -> "Grid":
        lo, hi = domain.bounding_box(3)
        return Grid(n, tuple(lo), tuple(hi), domain)

    @staticmethod
    def from_box(lo, hi, n: int) -> "Grid":
        return Grid(n, tuple(float(v) for v in lo), tuple(float(v) for v in hi), None)

    @property
    def h(self) -> float:
        return (self.hi[0] - self.lo[0]) / (self.n - 1)

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    def axes(self):
        return [np.linspace(self.lo[a], self.hi[a], self.n) for a in range(3)]

    def node_points(self) -> np.ndarray:
        ax = self.axes()
        g = np.meshgrid(*ax, indexing="ij")
        return np.stack([v.ravel() for v in g], axis=1)

    def inside_domain(self) -> np.ndarray:
        """Strict interior of the domain (Dirichlet nodes excluded)."""
        ax = self.axes()
        if self.domain is None or self.domain.shape == "axis_cube":
            r = self.domain.half_width if self.domain is not None else None
            masks = []
            for a in range(3):
                x = ax[a]
                if r is None:
                    m = (x > self.lo[a]) & (x < self.hi[a])
                else:
                    m = np.abs(x) < r - 1e-12 * max(1.0, r)
                masks.append(m)
            return masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]
        x, y, z = np.meshgrid(*ax, indexing="ij")
        return x * x + y * y + z * z < 1.0 - 1e-12

    def node_volumes(self) -> np.ndarray:
        """Trapezoid quadrature weights; they sum exactly to the box volume."""
        w = np.full(self.n, self.h)
        w[0] = w[-1] = self.h / 2.0
        vols = w[:, None, None] * w[None, :, None] * w[None, None, :]
        if self.domain is not None and self.domain.shape == "unit_ball":
            logger.warning("ball domain quadrature uses a staircase mask")
            pts = self.node_points()
            vols = vols * self.domain.contains(pts).reshape(self.shape)
        return vols


# ----------------------------------------------------------------------
# assembly and solves
# ----------------------------------------------------------------------

def _stiffness(active: np.ndarray, h: float, dirichlet: bool) -> sp.csr_matrix:
    """Energy form u^T A u = sum over faces of h^(d-2) (u_i - u_j)^2.

    Dirichlet mode adds the faces between active nodes and inactive (or
    out-of-grid) nodes, where the neighbour value is pinned to zero.
    """
    shape = active.shape
    m = int(np.count_nonzero(active))
    idx = -np.ones(shape, dtype=np.int64)
    idx[active] = np.arange(m)
    rows, cols, vals = [], [], []
    diag = np.zeros(m)
    for axis in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, shape[axis] - 1)
        sl_hi[axis] = slice(1, shape[axis])
        a_lo = active[tuple(sl_lo)]
        a_hi = active[tuple(sl_hi)]
        both = a_lo & a_hi
        i = idx[tuple(sl_lo)][both]
        j = idx[tuple(sl_hi)][both]
        rows.append(i); cols.append(j); vals.append(-np.ones(i.size))
        rows.append(j); cols.append(i); vals.append(-np.ones(i.size))
        np.add.at(diag, i, 1.0)
        np.add.at(diag, j, 1.0)
        if dirichlet:
            only_lo = a_lo & ~a_hi
            only_hi = a_hi & ~a_lo
            np.add.at(diag, idx[tuple(sl_lo)][only_lo], 1.0)
            np.add.at(diag, idx[tuple(sl_hi)][only_hi], 1.0)
            # grid edge counts as an inactive neighbour
            for side in (0, shape[axis] - 1):
                edge = [slice(None)] * 3
                edge[axis] = side
                np.add.at(diag, idx[tuple(edge)][active[tuple(edge)]], 1.0)
    rows.append(np.arange(m)); cols.append(np.arange(m)); vals.append(diag)
    a_mat = sp.coo_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(m, m)).tocsr()
    return h * a_mat  # h^(d-2) with d = 3


def _cg(a_mat, b, rtol: float = 1e-8, maxiter: int = 30000, label: str = "solve"):
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    x, info = cg(a_mat, b, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        history = []

        def track(xk):
            history.append(float(np.linalg.norm(b - a_mat @ xk)) / bnorm)

        cg(a_mat, b, rtol=rtol, atol=0.0, maxiter=min(maxiter, 500), callback=track)
        raise SolverError(f"{label}: CG did not reach rtol={rtol} in {maxiter} iterations",
                          residuals=history)
    res = float(np.linalg.norm(b - a_mat @ x)) / bnorm
    logger.debug("%s: relative residual %.3e", label, res)
    return x


# ----------------------------------------------------------------------
# measure deposition and the dual norm
# ----------------------------------------------------------------------

def fibonacci_sphere(m: int) -> np.ndarray:
    """Quasi-uniform points on the unit 2-sphere (golden-angle spiral)."""
    i = np.arange(m) + 0.5
    z = 1.0 - 2.0 * i / m
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([s * np.cos(theta), s * np.sin(theta), z], axis=1)


@dataclass
class GriddedMeasure:
    values: np.ndarray         # node weights (masses), shape (n, n, n)
    grid: Grid
    atom_mass: float           # total deposited sphere charge
    background_mass: float     # subtracted uniform (or cellwise) mass
    dropped_samples: int = 0

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())


def _trilinear_scatter(values: np.ndarray, grid: Grid, pts: np.ndarray,
                       weights: np.ndarray) -> int:
    """Scatter point masses with trilinear weights; returns dropped count."""
    n = grid.n
    h = grid.h
    rel = (pts - np.asarray(grid.lo)) / h
    inside = np.all((rel >= 0) & (rel <= n - 1), axis=1)
    dropped = int(np.count_nonzero(~inside))
    rel = rel[inside]
    w = weights[inside]
    base = np.minimum(np.floor(rel).astype(np.int64), n - 2)
    frac = rel - base
    flat = values.reshape(-1)
    for corner in range(8):
        off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        wt = np.ones(rel.shape[0])
        for a in range(3):
            wt = wt * (frac[:, a] if off[a] else 1.0 - frac[:, a])
        node = base + off
        lin = (node[:, 0] * n + node[:, 1]) * n + node[:, 2]
        np.add.at(flat, lin, w * wt)
    return dropped


def deposit_measure(mu: CapacityMeasure, c0, grid: Grid,
                    min_radius_factor: float = 2.0,
                    samples_per_atom: Optional[int] = None) -> GriddedMeasure:
    """Deposit the sphere charges minus a background density onto the grid.

    Each sphere is sampled at max(64, 4*pi*(R/h)^2) quasi-uniform surface
    points (trilinear deposition preserves the total charge exactly).  The
    background ``c0`` is a constant or a per-node density array, subtracted
    with trapezoid node volumes so that the signed node mass equals the atom
    total minus c0 times the domain volume.

    Spheres smaller than ``min_radius_factor`` grid spacings raise; pass a
    smaller factor explicitly to deposit under-resolved spheres anyway
    (their charge is still conserved, only its placement blurs to one cell).
    """
    h = grid.h
    values = np.zeros(grid.shape)
    dropped = 0
    if len(mu):
        bad = np.flatnonzero(mu.sphere_radii < min_radius_factor * h)
        if bad.size:
            k = int(bad[0])
            raise ValueError(
                f"sphere {k} at {mu.centers[k]} has radius {mu.sphere_radii[k]:.4g}"
                f" < {min_radius_factor} * h = {min_radius_factor * h:.4g}")
        for k in range(len(mu)):
            r = float(mu.sphere_radii[k])
            m = samples_per_atom or max(64, int(math.ceil(4.0 * math.pi * (r / h) ** 2)))
            pts = mu.centers[k] + r * fibonacci_sphere(m)
            w = np.full(m, mu.weights[k] / m)
            dropped += _trilinear_scatter(values, grid, pts, w)
    vols = grid.node_volumes()
    background = np.asarray(c0) * vols
    values -= background
    if dropped:
        logger.info("deposit: %d surface samples fell outside the grid box", dropped)
    return GriddedMeasure(values, grid, atom_mass=float(mu.weights.sum()) if len(mu) else 0.0,
                          background_mass=float(background.sum()), dropped_samples=dropped)


def hminus_norm(g: GriddedMeasure, grid: Grid, rtol: float = 1e-8) -> float:
    """Dual norm of the deposited measure over the domain.

    Solves the Dirichlet problem -lap(psi) = g on the interior nodes and
    returns the square root of the Dirichlet energy; node weights outside
    the interior never couple to test functions and are ignored.
    """
    active = grid.inside_domain()
    a_mat = _stiffness(active, grid.h, dirichlet=True)
    b = g.values[active]
    psi = _cg(a_mat, b, rtol=rtol, label="dual-norm potential")
    return math.sqrt(max(float(b @ psi), 0.0))


# ----------------------------------------------------------------------
# per-cell zero-mean Neumann energies
# ----------------------------------------------------------------------

def neumann_cell_energies(covering: CubeCovering, mu: CapacityMeasure, grid: Grid,
                          min_nodes: int = 9, rtol: float = 1e-10) -> np.ndarray:
    """Energy of the zero-mean Neumann potential of (atoms - cell average)
    on every covering cell; the root of the summed energies dominates the
    dual norm of the distance between the measure and its cell averages.

    Requires the deterministic cube covering with every charged sphere
    strictly inside its cell.
    """
    if not isinstance(covering, CubeCovering):
        raise TypeError("cell energies are computed on the deterministic cube covering")
    side = covering.cell_size
    m_nodes = max(min_nodes, int(round(side / grid.h)) + 1)
    cell_of = covering.cell_of_points(mu.centers) if len(mu) else np.empty(0, dtype=np.int64)
    energies = np.zeros(covering.n_cells)
    for c in range(covering.n_cells):
        atoms = np.flatnonzero(cell_of == c)
        if atoms.size == 0 or not covering.meets_domain[c]:
            continue
        lo, hi = covering.lo[c], covering.hi[c]
        inside = np.all(mu.centers[atoms] - mu.sphere_radii[atoms, None] >= lo - 1e-12, axis=1) & \
            np.all(mu.centers[atoms] + mu.sphere_radii[atoms, None] <= hi + 1e-12, axis=1)
        if not np.all(inside):
            k = int(atoms[np.argmin(inside)])
            raise ValueError(f"sphere {k} is not contained in its covering cell")
        local = Grid.from_box(lo, hi, m_nodes)
        values = np.zeros(local.shape)
        for k in atoms:
            r = float(mu.sphere_radii[k])
            m = max(64, int(math.ceil(4.0 * math.pi * (r / local.h) ** 2)))
            pts = mu.centers[k] + r * fibonacci_sphere(m)
            _trilinear_scatter(values, local, pts, np.full(m, mu.weights[k] / m))
        mass = float(mu.weights[atoms].sum())
        vols = local.node_volumes()
        cell_volume = float(np.prod(hi - lo))
        rhs = (values - (mass / cell_volume) * vols).ravel()
        imbalance = abs(float(rhs.sum())) / max(mass, 1e-300)
        if imbalance > 1e-8:
            raise SolverError(f"cell {c}: compatibility residual {imbalance:.2e}")
        rhs -= rhs.mean()   # remove rounding residue; solvability needs exact zero sum
        active = np.ones(local.shape, dtype=bool)
        a_mat = _stiffness(active, local.h, dirichlet=False)
        q = _cg(a_mat, rhs, rtol=rtol, label=f"neumann cell {c}")
        energies[c] = max(float(rhs @ q), 0.0)
    return energies


# ----------------------------------------------------------------------
# perforated and homogenized solves
# ----------------------------------------------------------------------

@dataclass
class PerforatedSolution:
    u: np.ndarray
    pinned_nodes: int
    omitted_holes: list = field(default_factory=list)


def _as_node_values(f, grid: Grid) -> np.ndarray:
    if callable(f):
        ax = grid.axes()
        x, y, z = np.meshgrid(*ax, indexing="ij")
        return np.asarray(f(x, y, z), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.shape, float(arr))
    return arr


def hole_mask(config: MarkedConfiguration, grid: Grid):
    """Mask of nodes strictly inside a hole; holes catching no node are
    reported back (they cannot be represented at this resolution)."""
    centers = config.centers()
    radii = config.hole_radii(truncate=True)
    n, h = grid.n, grid.h
    lo = np.asarray(grid.lo)
    mask = np.zeros(grid.shape, dtype=bool)
    omitted = []
    ax = grid.axes()
    for k in range(len(config)):
        c, r = centers[k], radii[k]
        lo_i = np.maximum(np.ceil((c - r - lo) / h).astype(int), 0)
        hi_i = np.minimum(np.floor((c + r - lo) / h).astype(int), n - 1)
        if np.any(lo_i > hi_i):
            omitted.append(k)
            continue
        segs = [ax[a][lo_i[a]:hi_i[a] + 1] - c[a] for a in range(3)]
        r2 = (segs[0][:, None, None] ** 2 + segs[1][None, :, None] ** 2
              + segs[2][None, None, :] ** 2)
        local = r2 < r * r
        if not local.any():
            omitted.append(k)
            continue
        view = mask[lo_i[0]:hi_i[0] + 1, lo_i[1]:hi_i[1] + 1, lo_i[2]:hi_i[2] + 1]
        view |= local
    return mask, omitted


def solve_perforated(config: MarkedConfiguration, partition: Optional[HolePartition],
                     f, grid: Grid, rtol: float = 1e-8) -> PerforatedSolution:
    """Dirichlet solve of -lap(u) = f outside the holes.

    All holes (good and bad) are rasterised; holes below the grid
    resolution are omitted from the mask and reported.
    """
    holes, omitted = hole_mask(config, grid)
    if omitted:
        logger.warning("%d of %d holes are below grid resolution and were omitted",
                       len(omitted), len(config))
    active = grid.inside_domain() & ~holes
    a_mat = _stiffness(active, grid.h, dirichlet=True)
    b = grid.h ** 3 * _as_node_values(f, grid)[active]
    x = _cg(a_mat, b, rtol=rtol, label="perforated solve")
    u = np.zeros(grid.shape)
    u[active] = x
    return PerforatedSolution(u, int(np.count_nonzero(holes)), omitted)


def homogenized_solve(c0: float, f, grid: Grid, rtol: float = 1e-8) -> np.ndarray:
    """Dirichlet solve of -lap(u) + c0 u = f on the domain."""
    if c0 < 0:
        raise ValueError("c0 must be >= 0")
    active = grid.inside_domain()
    a_mat = _stiffness(active, grid.h, dirichlet=True)
    m = int(np.count_nonzero(active))
    a_mat = a_mat + c0 * grid.h ** 3 * sp.identity(m, format="csr")
    b = grid.h ** 3 * _as_node_values(f, grid)[active]
    x = _cg(a_mat, b, rtol=rtol, label="homogenized solve")
    u = np.zeros(grid.shape)
    u[active] = x
    return u


def corrector_on_grid(corrector: CorrectorField, grid: Grid) -> np.ndarray:
    """Node values of the corrector, evaluated cell by cell (cells are
    disjoint, so scatter order does not matter)."""
    if corrector.d != 3:
        raise ValueError("grid evaluation needs a three-dimensional corrector")
    w = np.ones(grid.shape)
    n, h = grid.n, grid.h
    lo = np.asarray(grid.lo)
    ax = grid.axes()
    d = 3
    for k in range(len(corrector)):
        c = corrector.centers[k]
        a, big = float(corrector.inner[k]), float(corrector.outer[k])
        lo_i = np.maximum(np.ceil((c - big - lo) / h).astype(int), 0)
        hi_i = np.minimum(np.floor((c + big - lo) / h).astype(int), n - 1)
        if np.any(lo_i > hi_i):
            continue
        segs = [ax[axis][lo_i[axis]:hi_i[axis] + 1] - c[axis] for axis in range(3)]
        r2 = (segs[0][:, None, None] ** 2 + segs[1][None, :, None] ** 2
              + segs[2][None, None, :] ** 2)
        r = np.sqrt(r2)
        block = w[lo_i[0]:hi_i[0] + 1, lo_i[1]:hi_i[1] + 1, lo_i[2]:hi_i[2] + 1]
        inner = r <= a
        ann = (r > a) & (r < big)
        if inner.any():
            block[inner] = 0.0
        if ann.any():
            a2 = a ** (2 - d)
            big2 = big ** (2 - d)
            block[ann] = (a2 - r[ann] ** (2 - d)) / (a2 - big2)
    return w


def dirichlet_energy_central(g: np.ndarray, grid: Grid) -> float:
    """Central-difference Dirichlet energy over interior nodes."""
    h = grid.h
    total = 0.0
    for axis in range(3):
        up = [slice(1, -1)] * 3
        dn = [slice(1, -1)] * 3
        up[axis] = slice(2, None)
        dn[axis] = slice(0, -2)
        deriv = (g[tuple(up)] - g[tuple(dn)]) / (2.0 * h)
        total += float(np.sum(deriv ** 2))
    return total * h ** 3


def homogenization_error(u_eps: np.ndarray, corrector: CorrectorField,
                         u: np.ndarray, grid: Grid) -> float:
    """Discrete H1 seminorm of u_eps - W*u with the corrector evaluated
    analytically at the nodes and central differences on interior nodes."""
    w = corrector_on_grid(corrector, grid)
    g = u_eps - w * u
    return math.sqrt(dirichlet_energy_central(g, grid))
