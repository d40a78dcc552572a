"""Good/bad decomposition of the holes.

Points whose hole is oversized, squeezed against a neighbour, or merely
close to such a hole are classed as bad; the rest are good and carry the
explicit corrector.  Safety balls of twice the (truncated) hole radius
around every bad point form the region that the good points must avoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .process import MarkedConfiguration


@dataclass
class HolePartition:
    delta: float
    good: np.ndarray
    bad_J: np.ndarray          # oversized marks
    bad_K: np.ndarray          # squeezed neighbour distance (poisson only)
    bad_C: np.ndarray          # hole radius comparable to neighbour distance (poisson only)
    bad_I_tilde: np.ndarray    # contagion: too close to a core bad hole
    safety_centers: np.ndarray  # (m, d) physical centres of the safety balls
    safety_radii: np.ndarray    # (m,) radii 2 * min(hole radius, 1)

    @property
    def bad(self) -> np.ndarray:
        return np.concatenate([self.bad_J, self.bad_K, self.bad_C, self.bad_I_tilde])

    def csv_rows(self, config: MarkedConfiguration):
        r = config.minimal_distances()
        labels = [(self.good, "good"), (self.bad_J, "J"), (self.bad_K, "K"),
                  (self.bad_C, "C"), (self.bad_I_tilde, "I")]
        for idx, name in labels:
            for i in idx:
                yield (int(i), name, config.rho[i], r[i])


def _core_partition(config: MarkedConfiguration, delta: float, poisson: bool):
    eps = config.spec.epsilon
    d = config.spec.d
    a = config.hole_radii()
    mask_j = a >= eps ** (1.0 + delta)
    if poisson:
        r = config.minimal_distances()
        mask_k = ~mask_j & (r <= eps ** 2)
        mask_c = ~mask_j & ~mask_k & (2.0 * math.sqrt(d) * a >= r)
    else:
        mask_k = np.zeros(len(config), dtype=bool)
        mask_c = np.zeros(len(config), dtype=bool)
    return a, mask_j, mask_k, mask_c


def _contagion(config: MarkedConfiguration, core: np.ndarray, a: np.ndarray,
               poisson: bool) -> np.ndarray:
    """Non-core points whose protection ball touches a doubled core hole."""
    eps = config.spec.epsilon
    if core.size == 0:
        return np.zeros(len(config), dtype=bool)
    if poisson:
        own = config.minimal_distances()
    else:
        own = np.full(len(config), eps / 4.0)
    hit = np.zeros(len(config), dtype=bool)
    trunc = np.minimum(a, 1.0)
    pts = config.points
    for w in core:
        # rescaled reach: own radius is at most eps/4
        reach = 0.25 + 2.0 * trunc[w] / eps
        cand = config.index.query(pts[w], reach + 1e-12, norm="chebyshev")
        cand = cand[cand != w]
        if cand.size == 0:
            continue
        diff = pts[cand] - pts[w]
        dist = eps * np.sqrt(np.einsum("ij,ij->i", diff, diff))
        hit_w = dist <= own[cand] + 2.0 * trunc[w]
        hit[cand[hit_w]] = True
    return hit


def _assemble(config, delta, a, mask_j, mask_k, mask_c, mask_i) -> HolePartition:
    bad_mask = mask_j | mask_k | mask_c | mask_i
    bad_idx = np.flatnonzero(bad_mask)
    centers = config.centers()[bad_idx]
    radii = 2.0 * np.minimum(a[bad_idx], 1.0)
    return HolePartition(
        delta=delta,
        good=np.flatnonzero(~bad_mask),
        bad_J=np.flatnonzero(mask_j),
        bad_K=np.flatnonzero(mask_k),
        bad_C=np.flatnonzero(mask_c),
        bad_I_tilde=np.flatnonzero(mask_i),
        safety_centers=centers,
        safety_radii=radii,
    )


def lattice_epsilon_threshold(delta: float) -> float:
    """Largest epsilon for which the lattice decomposition is valid (eps^delta < 1/4)."""
    return 0.25 ** (1.0 / delta)


def partition_lattice(config: MarkedConfiguration, delta: float) -> HolePartition:
    d = config.spec.d
    if not config.is_lattice:
        raise ValueError("configuration is not lattice mode")
    if not 0 < delta <= 2.0 / (d - 2):
        raise ValueError("delta must lie in (0, 2/(d-2)]")
    eps0 = lattice_epsilon_threshold(delta)
    if config.spec.epsilon ** delta >= 0.25:
        raise ValueError(
            f"epsilon={config.spec.epsilon} too large for delta={delta}; "
            f"the decomposition requires epsilon < {eps0:.6g}")
    a, mj, mk, mc = _core_partition(config, delta, poisson=False)
    mi = _contagion(config, np.flatnonzero(mj), a, poisson=False)
    mi &= ~mj
    return _assemble(config, delta, a, mj, mk, mc, mi)


def partition_poisson(config: MarkedConfiguration, delta: float) -> HolePartition:
    d = config.spec.d
    if config.is_lattice:
        raise ValueError("configuration is not poisson mode")
    if not 0 < delta <= 2.0 / (d - 2):
        raise ValueError("delta must lie in (0, 2/(d-2)]")
    a, mj, mk, mc = _core_partition(config, delta, poisson=True)
    core = mj | mk | mc
    mi = _contagion(config, np.flatnonzero(core), a, poisson=True)
    mi &= ~core
    return _assemble(config, delta, a, mj, mk, mc, mi)


def partition_configuration(config: MarkedConfiguration, delta: float) -> HolePartition:
    if config.is_lattice:
        return partition_lattice(config, delta)
    return partition_poisson(config, delta)


def bad_capacity_sum(config: MarkedConfiguration, partition: HolePartition) -> float:
    """eps^d * sum of rho^(d-2) over the bad points (monitored decay quantity)."""
    d = config.spec.d
    bad = partition.bad
    if bad.size == 0:
        return 0.0
    return float(config.spec.epsilon ** d * np.sum(config.rho[bad] ** (d - 2)))


def overlap_pairs(config: MarkedConfiguration) -> int:
    """Number of unordered pairs whose (truncated) holes intersect.

    Holes are Euclidean balls of radius min(eps^(d/(d-2)) rho, 1) around the
    physical centres; the count is exact.  Pairs of two small holes are
    scanned in bulk, pairs involving a large hole by individual range
    queries, so rare giant holes do not force a global quadratic pass.
    """
    eps = config.spec.epsilon
    n = len(config)
    if n < 2:
        return 0
    a = config.hole_radii(truncate=True)
    rescaled = a / eps
    pts = config.points
    b0 = 0.25
    big = np.flatnonzero(rescaled > b0)
    small = rescaled <= b0

    count = 0
    # small-small pairs need rescaled separation below 2*b0; lattice points
    # are at least unit distance apart, so only the poisson branch scans
    if config.is_lattice:
        i = j = np.empty(0, dtype=np.int64)
    else:
        i, j = config.index.close_pairs(2.0 * b0, norm="chebyshev")
    if i.size:
        keep = small[i] & small[j]
        i, j = i[keep], j[keep]
        if i.size:
            diff = pts[i] - pts[j]
            dist = eps * np.sqrt(np.einsum("ij,ij->i", diff, diff))
            count += int(np.count_nonzero(dist < a[i] + a[j]))

    seen = set()
    a_max = float(rescaled.max(initial=0.0))
    for b in big:
        reach = rescaled[b] + a_max
        cand = config.index.query(pts[b], reach + 1e-12, norm="chebyshev")
        cand = cand[cand != b]
        if cand.size == 0:
            continue
        diff = pts[cand] - pts[b]
        dist = eps * np.sqrt(np.einsum("ij,ij->i", diff, diff))
        for k in cand[dist < a[b] + a[cand]]:
            key = (min(int(b), int(k)), max(int(b), int(k)))
            if key not in seen:
                seen.add(key)
                count += 1
    return count


# ----------------------------------------------------------------------
# invariant verification
# ----------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class PartitionReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, detail=""):
        self.checks.append(CheckResult(name, bool(passed), detail))


def verify_partition(config: MarkedConfiguration, partition: HolePartition) -> PartitionReport:
    """Check every structural property of the decomposition; failures are data."""
    d = config.spec.d
    eps = config.spec.epsilon
    delta = partition.delta
    a = config.hole_radii()
    rep = PartitionReport()

    classes = [partition.good, partition.bad_J, partition.bad_K,
               partition.bad_C, partition.bad_I_tilde]
    combined = np.concatenate(classes)
    is_partition = combined.size == len(config) and np.unique(combined).size == len(config)
    rep.add("disjoint_cover", is_partition,
            "" if is_partition else f"{combined.size} labels for {len(config)} points")

    good = partition.good
    thr = eps ** (1.0 + delta)
    viol = good[a[good] > thr] if good.size else np.empty(0, int)
    rep.add("good_hole_size", viol.size == 0,
            "" if viol.size == 0 else f"point {viol[0]} has hole {a[viol[0]]:.3g} > {thr:.3g}")

    if not config.is_lattice:
        r = config.minimal_distances()
        v1 = good[r[good] < eps ** 2] if good.size else np.empty(0, int)
        rep.add("good_min_distance", v1.size == 0,
                "" if v1.size == 0 else f"point {v1[0]} has R {r[v1[0]]:.3g} < eps^2")
        v2 = good[2.0 * math.sqrt(d) * a[good] > r[good]] if good.size else np.empty(0, int)
        rep.add("good_separation", v2.size == 0,
                "" if v2.size == 0 else f"point {v2[0]} violates 2*sqrt(d)*a <= R")
        own = r
    else:
        own = np.full(len(config), eps / 4.0)

    # protection balls of good points avoid every safety ball
    ok = True
    detail = ""
    centers = config.centers()
    for w in range(partition.safety_centers.shape[0]):
        c, s = partition.safety_centers[w], partition.safety_radii[w]
        if good.size == 0:
            break
        diff = centers[good] - c
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        bad_hit = dist < own[good] + s - 1e-12
        if np.any(bad_hit):
            ok = False
            g = good[np.argmax(bad_hit)]
            detail = f"good point {g} touches safety ball {w}"
            break
    rep.add("good_avoids_bad_region", ok, detail)

    # the safety region stays within distance 2 of the domain
    if partition.safety_radii.size:
        ok2 = bool(np.all(partition.safety_radii <= 2.0 + 1e-12))
    else:
        ok2 = True
    rep.add("bad_region_near_domain", ok2, "" if ok2 else "a safety ball has radius > 2")

    # good holes are pairwise disjoint balls
    ok3, det3 = True, ""
    if good.size > 1:
        trunc = np.minimum(a, 1.0)
        reach = 2.0 * float(trunc[good].max()) / eps
        i, j = config.index.close_pairs(max(reach, 1e-9), norm="chebyshev")
        keep = np.isin(i, good) & np.isin(j, good)
        i, j = i[keep], j[keep]
        if i.size:
            diff = centers[i] - centers[j]
            dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            overlap = dist < trunc[i] + trunc[j] - 1e-12
            if np.any(overlap):
                ok3 = False
                k = np.argmax(overlap)
                det3 = f"good holes {i[k]} and {j[k]} overlap"
    rep.add("good_holes_disjoint", ok3, det3)
    return rep
