"""Marked point process sampling and neighbour statistics.

A configuration is a finite set of points in the rescaled domain (the
domain blown up by 1/epsilon) together with i.i.d. marks.  Centres come
either from the integer lattice or from a homogeneous Poisson process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .domain import DomainDescriptor
from .index import SpatialIndex
from .marks import MarkDistribution
from .rng import coordinate_uniforms, replicate_generator


class ResourceLimitError(RuntimeError):
    """Raised instead of silently truncating an oversised sample."""


@dataclass(frozen=True)
class ProcessSpec:
    """Full description of the random geometry at one scale."""

    d: int
    epsilon: float
    process: str                           # "lattice" | "poisson"
    marks: MarkDistribution
    domain: DomainDescriptor = DomainDescriptor()
    intensity: Optional[float] = None      # Poisson intensity; None for lattice
    master_seed: int = 0

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("dimension must be >= 3")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.process not in ("lattice", "poisson"):
            raise ValueError(f"unknown process {self.process!r}")
        if self.process == "poisson":
            if self.intensity is None or self.intensity <= 0:
                raise ValueError("poisson process needs intensity > 0")
        if self.marks.kind == "pareto":
            alpha, x_min = self.marks.params
            if alpha <= self.d - 2:
                raise ValueError("pareto tail index must exceed d-2")
            if self.marks.beta_eff <= 0:
                raise ValueError("effective beta must be positive")

    @property
    def hole_scale(self) -> float:
        """Radius prefactor epsilon^(d/(d-2)) multiplying each mark."""
        return self.epsilon ** (self.d / (self.d - 2))

    def expected_points(self) -> float:
        vol = self.domain.volume(self.d) / self.epsilon ** self.d
        return vol if self.process == "lattice" else self.intensity * vol

    def with_epsilon(self, epsilon: float) -> "ProcessSpec":
        return replace(self, epsilon=epsilon)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "epsilon": self.epsilon,
            "process": self.process,
            "lambda": self.intensity,
            "marks": self.marks.to_json(),
            "domain": self.domain.to_json(),
            "master_seed": self.master_seed,
        }

    @staticmethod
    def from_json(obj: dict) -> "ProcessSpec":
        d = int(obj["d"])
        return ProcessSpec(
            d=d,
            epsilon=float(obj["epsilon"]),
            process=obj["process"],
            marks=MarkDistribution.from_json(obj["marks"], d),
            domain=DomainDescriptor.from_json(obj.get("domain", {"shape": "axis_cube", "half_width": 1.0})),
            intensity=obj.get("lambda"),
            master_seed=int(obj.get("master_seed", 0)),
        )


class MarkedConfiguration:
    """One sampled realization: rescaled centres, marks, and a spatial hash."""

    def __init__(self, spec: ProcessSpec, replicate: int, points: np.ndarray,
                 rho: np.ndarray, lattice_coords: Optional[np.ndarray] = None):
        self.spec = spec
        self.replicate = replicate
        self.points = points
        self.rho = rho
        self.lattice_coords = lattice_coords
        self._index: Optional[SpatialIndex] = None
        self._min_dist: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def is_lattice(self) -> bool:
        return self.spec.process == "lattice"

    @property
    def index(self) -> SpatialIndex:
        if self._index is None:
            self._index = SpatialIndex(self.points, cell_size=1.0)
        return self._index

    def hole_radii(self, truncate: bool = False) -> np.ndarray:
        """Physical hole radii epsilon^(d/(d-2)) * rho, optionally capped at 1."""
        a = self.spec.hole_scale * self.rho
        return np.minimum(a, 1.0) if truncate else a

    def centers(self) -> np.ndarray:
        """Physical hole centres (points scaled back by epsilon)."""
        return self.spec.epsilon * self.points

    def minimal_distances(self) -> np.ndarray:
        """Vector of minimal distances for every point (see minimal_distance)."""
        if self._min_dist is None:
            eps = self.spec.epsilon
            lattice_full_cube = (self.is_lattice
                                 and self.spec.domain.shape == "axis_cube"
                                 and math.floor(self.spec.domain.half_width / eps) >= 1)
            if lattice_full_cube:
                # every site of a cube-shaped lattice box has a neighbour at
                # unit distance, so the capped minimum is identically one
                self._min_dist = np.full(len(self), eps / 4.0)
            else:
                self._min_dist = (eps / 4.0) * self.index.nearest_neighbor_distances(cap=1.0)
        return self._min_dist

    def csv_rows(self):
        for i in range(len(self)):
            yield (self.replicate, *self.points[i], self.rho[i])


def sample_configuration(spec: ProcessSpec, replicate: int,
                         max_points: float = 5e7) -> MarkedConfiguration:
    """Draw one configuration; bit-reproducible in (master_seed, replicate)."""
    if replicate < 0:
        raise ValueError("replicate must be >= 0")
    expected = spec.expected_points()
    if expected > max_points:
        raise ResourceLimitError(
            f"expected point count {expected:.3g} exceeds the cap {max_points:.3g}; "
            "raise max_points explicitly to proceed")

    if spec.process == "lattice":
        m = int(math.floor(spec.domain.radius / spec.epsilon))
        axes = [np.arange(-m, m + 1, dtype=np.int64)] * spec.d
        grids = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1)
        if spec.domain.shape != "axis_cube":
            keep = spec.domain.contains(spec.epsilon * coords.astype(float))
            coords = coords[keep]
        u = coordinate_uniforms(spec.master_seed, replicate, coords)
        rho = spec.marks.quantile(u)
        return MarkedConfiguration(spec, replicate, coords.astype(float), rho, coords)

    gen = replicate_generator(spec.master_seed, replicate)
    mean = spec.intensity * spec.domain.volume(spec.d) / spec.epsilon ** spec.d
    n = int(gen.poisson(mean))
    r = spec.domain.radius / spec.epsilon
    if spec.domain.shape == "axis_cube":
        pts = gen.uniform(-r, r, size=(n, spec.d))
    else:
        pts = np.empty((0, spec.d))
        while pts.shape[0] < n:
            batch = gen.uniform(-r, r, size=(2 * (n - pts.shape[0]) + 16, spec.d))
            batch = batch[np.einsum("ij,ij->i", batch, batch) <= r * r]
            pts = np.vstack([pts, batch])
        pts = pts[:n]
    rho = spec.marks.quantile(gen.random(n))
    return MarkedConfiguration(spec, replicate, pts, rho)


def minimal_distance(config: MarkedConfiguration, i: int) -> float:
    """(eps/4) * min(distance to the nearest other point, 1) for point i.

    Distance is the maximum norm over coordinates in the rescaled domain.
    With no other point within distance one the cap is active and the value
    is eps/4, which is also the lattice value everywhere.
    """
    if not 0 <= i < len(config):
        raise IndexError("point index out of range")
    return float(config.minimal_distances()[i])


def thin_configuration(config: MarkedConfiguration, delta: float) -> np.ndarray:
    """Indices of points whose hole is both small and well separated.

    A point survives when its hole radius is at most eps^(1+delta) and the
    minimal distance is at least 2*sqrt(d) times the hole radius; these are
    exactly the points around which disjoint corrector annuli fit.
    """
    d = config.spec.d
    if not 0 < delta <= 2.0 / (d - 2):
        raise ValueError("delta must lie in (0, 2/(d-2)]")
    eps = config.spec.epsilon
    a = config.hole_radii()
    r = config.minimal_distances()
    keep = (a <= eps ** (1.0 + delta)) & (r >= 2.0 * math.sqrt(d) * a)
    return np.flatnonzero(keep)


def mark_moment(dist: MarkDistribution, p: float) -> float:
    """Closed-form E[rho^p] (math.inf when divergent)."""
    return dist.moment(p)


# ----------------------------------------------------------------------
# Mecke (exchange formula) self-test for the Poisson branch
# ----------------------------------------------------------------------

@dataclass
class MeckeReport:
    functional: str
    trials: int
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def z_score(self) -> float:
        se = math.hypot(self.lhs_se, self.rhs_se)
        return (self.lhs - self.rhs) / se if se > 0 else 0.0


MECKE_FUNCTIONALS = ("count", "truncated_mark", "isolated_mark")


def _window_points(spec, gen):
    """One Poisson draw on the rescaled domain window."""
    r = spec.domain.radius / spec.epsilon
    mean = spec.intensity * spec.domain.volume(spec.d) / spec.epsilon ** spec.d
    n = int(gen.poisson(mean))
    pts = gen.uniform(-r, r, size=(n, spec.d))
    rho = spec.marks.quantile(gen.random(n))
    return pts, rho


def _min_cheb_dist(pts: np.ndarray, x: np.ndarray, exclude: int = -1) -> float:
    if pts.shape[0] == 0:
        return np.inf
    d = np.max(np.abs(pts - x), axis=1)
    if exclude >= 0:
        d[exclude] = np.inf
    return float(d.min(initial=np.inf))


def mecke_check(spec: ProcessSpec, functional: str, trials: int,
                a_half_width: float = 0.5, trunc: float = 10.0) -> MeckeReport:
    """Monte Carlo test of the exchange formula for Poisson configurations.

    Compares E[sum over points in the window A of G(point; rest)] with
    lambda*|A|*E_rho[E[G((0, rho); fresh configuration)]].  The right-hand
    side is closed-form for the first two functionals and estimated by an
    independent second Monte Carlo for the neighbour-dependent one.
    """
    if spec.process != "poisson":
        raise ValueError("the exchange identity is specific to the poisson process")
    if functional not in MECKE_FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}; choose from {MECKE_FUNCTIONALS}")
    d, eps = spec.d, spec.epsilon
    window = spec.domain.radius / spec.epsilon
    if window < a_half_width + 1.0:
        raise ValueError("sampling window too small for an edge-free test region")
    vol_a = (2.0 * a_half_width) ** d

    gen = replicate_generator(spec.master_seed, 0xA11CE)
    samples = np.empty(trials)
    for t in range(trials):
        pts, rho = _window_points(spec, gen)
        in_a = np.flatnonzero(np.max(np.abs(pts), axis=1) <= a_half_width)
        if functional == "count":
            samples[t] = in_a.size
            continue
        total = 0.0
        for i in in_a:
            g = rho[i] ** (d - 2)
            if functional == "truncated_mark":
                total += g if rho[i] < trunc else 0.0
            else:
                r_i = (eps / 4.0) * min(_min_cheb_dist(pts, pts[i], exclude=i), 1.0)
                total += g if r_i >= eps ** 2 else 0.0
        samples[t] = total
    lhs = float(samples.mean())
    lhs_se = float(samples.std(ddof=1) / math.sqrt(trials))

    lam = spec.intensity
    if functional == "count":
        return MeckeReport(functional, trials, lhs, lhs_se, lam * vol_a, 0.0)
    if functional == "truncated_mark":
        rhs = lam * vol_a * spec.marks.truncated_moment(d - 2, trunc)
        return MeckeReport(functional, trials, lhs, lhs_se, rhs, 0.0)

    gen2 = replicate_generator(spec.master_seed, 0xB0B)
    origin = np.zeros(d)
    vals = np.empty(trials)
    for t in range(trials):
        pts, _ = _window_points(spec, gen2)
        rho0 = float(spec.marks.quantile(gen2.random(1))[0])
        r0 = (eps / 4.0) * min(_min_cheb_dist(pts, origin), 1.0)
        vals[t] = rho0 ** (d - 2) if r0 >= eps ** 2 else 0.0
    rhs = lam * vol_a * float(vals.mean())
    rhs_se = lam * vol_a * float(vals.std(ddof=1) / math.sqrt(trials))
    return MeckeReport(functional, trials, lhs, lhs_se, rhs, rhs_se)
