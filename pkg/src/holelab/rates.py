"""Rate experiments: predicted exponents, ensemble statistics, slope fits.

The monitored quantities are the bad-hole capacity sum, the hole overlap
count, the mesoscopic cell averages of the capacity density, the quenched
error surrogate combining all of them, and the grid-based dual norm of the
capacity measure.  Ensembles run one statistic over an epsilon grid and
replicate set; slopes are fitted on the log of ensemble means with a
bootstrap confidence interval over replicates.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .corrector import CorrectorField, build_capacity_measure, c0_constant
from .covering import (CubeCovering, RandomCovering, build_cube_covering,
                       build_random_covering, mesoscale_parameters,
                       trimmed_min_distances)
from .marks import MarkDistribution
from .partition import bad_capacity_sum, overlap_pairs, partition_configuration
from .process import MarkedConfiguration, ProcessSpec, sample_configuration, thin_configuration

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# predicted exponents
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TheoreticalExponents:
    d: int
    beta: float
    delta: float
    rate: float                 # decay exponent of the homogenization error
    k_exponent: float           # mesoscale: k ~ eps^(-k_exponent)
    kappa: float
    bad_capacity_exponent: float
    overlap_exponent: Optional[float]        # pair-count slope for the configured tail
    overlap_ball_exponents: tuple            # the two literature ball-count orders


def theoretical_exponents(d: int, beta_eff: float,
                          marks: Optional[MarkDistribution] = None) -> TheoreticalExponents:
    """Predicted exponents for dimension d and effective mark exponent beta.

    ``beta_eff`` may be +inf (bounded marks).  When ``marks`` is a Pareto law
    the expected slope of the mean overlap-pair count is derived from its
    actual tail index; bounded marks produce no overlaps at small epsilon
    and get None.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    if beta_eff <= 0:
        raise ValueError("beta must be positive (or +inf)")
    if math.isinf(beta_eff) or beta_eff > d - 2:
        delta = 2.0 / (d - 2) - (0.0 if math.isinf(beta_eff) else 2.0 * d / ((d + 2) * beta_eff))
        rate = d / (d + 2)
    else:
        delta = 4.0 / (d * d - 4.0)
        rate = d * beta_eff / (d * d - 4.0)
    bad_exp = 0.0 if math.isinf(beta_eff) else (2.0 / (d - 2) - delta) * beta_eff
    overlap = None
    if marks is not None and marks.kind == "pareto":
        alpha = marks.params[0]
        # mean pair count ~ eps^{-d} * integral over separations r of
        # r^{d-1} P(rho > eps^{-2/(d-2)} r); the integral is cut at the
        # hole-radius cap when alpha < d and converges on its own otherwise
        overlap = -d + 2.0 * alpha / (d - 2)
        if alpha < d:
            overlap -= (d - alpha)
    ball_orders = (float("nan"), float("nan"))
    if not math.isinf(beta_eff):
        ball_orders = (-d + 2 + beta_eff, -d + 2 + (2.0 / (d - 2)) * beta_eff)
    return TheoreticalExponents(
        d=d, beta=beta_eff, delta=delta, rate=rate,
        k_exponent=2.0 / (d + 2), kappa=2.0 / ((d - 1) * (d + 2)),
        bad_capacity_exponent=bad_exp, overlap_exponent=overlap,
        overlap_ball_exponents=ball_orders)


def pair_overlap_probability(marks: MarkDistribution, scale: float, s: float,
                             mark_cap: float = math.inf) -> float:
    """P(min(scale*rho1, 1) + min(scale*rho2, 1) > s) for independent marks.

    ``mark_cap`` truncates the law at a maximal mark value (marks above it
    contribute nothing); used to model what a finite ensemble can see.
    """
    if s <= 0:
        return 1.0
    if s >= 2.0:
        return 0.0

    if marks.kind == "constant":
        r = marks.params[0]
        if r > mark_cap:
            return 0.0
        return 1.0 if 2.0 * min(scale * r, 1.0) > s else 0.0

    cap_p = float(marks.tail(mark_cap)) if math.isfinite(mark_cap) else 0.0

    def tail_t(t: float) -> float:
        return max(float(marks.tail(t)) - cap_p, 0.0)

    top = min(s, 1.0)
    # P(A1 >= s) when the cap-at-one cannot reach s, plus the convolution
    # part, plus the radius-one atom when s > 1
    p = tail_t(s / scale) if s < 1.0 else 0.0

    def integrand(log_rho):
        rho = math.exp(log_rho)
        dens = _mark_density(marks, rho)
        return tail_t((s - scale * rho) / scale) * dens * rho

    lo = _mark_support_lo(marks)
    if s > 1.0:
        # the partner radius is capped at one, so only a1 > s - 1 can help
        lo = max(lo, (s - 1.0) / scale)
    hi = min(top / scale, _mark_support_hi(marks), mark_cap)
    if hi > lo:
        val, _ = quad(integrand, math.log(lo), math.log(hi), limit=200)
        p += val
    if s > 1.0:
        p += tail_t(1.0 / scale) * tail_t((s - 1.0) / scale)
    return min(p, 1.0)


def _mark_density(marks: MarkDistribution, rho: float) -> float:
    if marks.kind == "uniform":
        lo, hi = marks.params
        return 1.0 / (hi - lo) if lo <= rho <= hi else 0.0
    if marks.kind == "pareto":
        alpha, x = marks.params
        return alpha * x ** alpha * rho ** (-alpha - 1.0) if rho >= x else 0.0
    raise ValueError("no density for constant marks")


def _mark_support_lo(marks: MarkDistribution) -> float:
    return marks.params[0] if marks.kind == "uniform" else marks.params[1]


def _mark_support_hi(marks: MarkDistribution) -> float:
    return marks.params[1] if marks.kind == "uniform" else math.inf


def expected_overlap_pairs(spec: ProcessSpec, epsilon: float,
                           ensemble_draws: Optional[float] = None) -> float:
    """Exact-law expectation of the overlap-pair count at one epsilon.

    Continuum approximation of the pair sum: half the expected point count
    times the integral over separations of the pair overlap probability.

    For heavy tails the raw expectation is carried by mark values far
    beyond what a finite ensemble contains, so the mean measured over an
    ensemble of ``ensemble_draws`` total mark draws sits near the
    expectation of the law truncated at the typical ensemble maximum
    (P(rho > t) * draws = 1); pass the draw count to pre-register the
    slope such an ensemble is compared against.
    """
    d = spec.d
    scale = epsilon ** (d / (d - 2))
    marks = spec.marks
    vol = spec.domain.volume(d)
    n_points = vol / epsilon ** d
    if spec.process == "poisson":
        n_points *= spec.intensity

    mark_cap = math.inf
    if ensemble_draws is not None and marks.kind == "pareto":
        alpha, x = marks.params
        mark_cap = x * ensemble_draws ** (1.0 / alpha)

    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    r_min = 1.0 if spec.process == "lattice" else 1e-3
    r_max = 2.0 / epsilon

    def shell(log_r):
        r = math.exp(log_r)
        return area * r ** d * pair_overlap_probability(marks, scale, epsilon * r, mark_cap)

    with warnings.catch_warnings():
        # tail probabilities underflow the default absolute target; the
        # roundoff warning is immaterial at these magnitudes
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(shell, math.log(r_min), math.log(r_max), limit=400)
    lam = 1.0 if spec.process == "lattice" else spec.intensity
    return 0.5 * n_points * lam * val


# ----------------------------------------------------------------------
# cell averages and the quenched error surrogate
# ----------------------------------------------------------------------

def capacity_weights(config: MarkedConfiguration, idx: np.ndarray,
                     outer: Optional[np.ndarray] = None) -> np.ndarray:
    """Normalized per-point capacity contributions Y.

    Y equals the annulus capacity divided by c_d eps^d; for the lattice the
    outer radius is eps/4, otherwise the (trimmed) minimal distance must be
    supplied.  A nonpositive denominator means the inner ball reaches the
    outer sphere, which the thinning is supposed to prevent.
    """
    d = config.spec.d
    eps = config.spec.epsilon
    rho = config.rho[idx]
    if config.is_lattice and outer is None:
        den = 1.0 - 4.0 ** (d - 2) * eps ** 2 * rho ** (d - 2)
    else:
        if outer is None:
            outer = config.minimal_distances()[idx]
        big = np.asarray(outer, dtype=float) ** (d - 2)
        den = 1.0 - eps ** d * rho ** (d - 2) / big
    if np.any(den <= 0):
        raise ValueError("hole reaches its outer sphere; thin the configuration first")
    return rho ** (d - 2) / den


def cell_capacity_averages(config: MarkedConfiguration, covering, delta: float) -> np.ndarray:
    """Per-cell averaged capacity density S (one value per covering cell).

    Deterministic covering: sum of Y over the cell's thinned points divided
    by k^d.  Random covering: divided by |cell| / eps^d, with Y built from
    the trimmed distances.
    """
    thinned = thin_configuration(config, delta)
    if isinstance(covering, RandomCovering):
        base = covering.base
        if not np.array_equal(thinned, covering.thinned):
            raise ValueError("covering was built for a different thinned set")
        y = capacity_weights(config, thinned, outer=covering.tilde_r)
        s = np.zeros(base.n_cells)
        np.add.at(s, covering.cell_of, y)
        return s * config.spec.epsilon ** config.spec.d / covering.volumes
    y = capacity_weights(config, thinned)
    s = np.zeros(covering.n_cells)
    np.add.at(s, covering.point_cell[thinned], y)
    return s / float(covering.k) ** config.spec.d


def density_centering(spec: ProcessSpec) -> float:
    """Analytic centring E[rho^(d-2)], times the intensity for poisson."""
    m = spec.marks.moment(spec.d - 2)
    return m * spec.intensity if spec.process == "poisson" else m


def quenched_error_surrogate(config: MarkedConfiguration, partition, covering,
                             delta: float, k: int) -> float:
    """Scalar surrogate for the quenched homogenization error.

    Combines (i) the thinned second-moment term weighted by (k*eps)^2, (ii)
    the bad-hole capacity sum, (iii) interior and boundary cell-average
    deviations, and, on the poisson branch, (iv) the trimming penalty near
    cell boundaries.
    """
    spec = config.spec
    d, eps = spec.d, spec.epsilon
    if len(config) == 0:
        return 0.0
    thinned = thin_configuration(config, delta)
    rho_t = config.rho[thinned]
    center = density_centering(spec)

    base = covering.base if isinstance(covering, RandomCovering) else covering
    s_vals = cell_capacity_averages(config, covering, delta)
    live = base.meets_domain
    interior = base.interior & live
    boundary = live & ~interior
    dev = (s_vals - center) ** 2
    t_int = float(dev[interior].mean()) if np.any(interior) else 0.0
    t_bnd = float(dev[boundary].mean()) if np.any(boundary) else 0.0

    ke = k * eps
    if isinstance(covering, RandomCovering):
        weight = (eps / covering.tilde_r) ** d
        t_second = ke ** 2 * eps ** d * float(np.sum(rho_t ** (2 * (d - 2)) * weight))
        # points in the outer shell of their cell (outside the k-1 core)
        x = config.centers()[thinned]
        cells = covering.cell_of
        face_dist = np.minimum(x - base.lo[cells], base.hi[cells] - x).min(axis=1)
        in_band = face_dist < eps / 2.0
        t_band = eps ** (d + 2.0 * d / (d + 2)) * float(
            np.sum(rho_t[in_band] ** (2 * (d - 2))))
    else:
        t_second = ke ** 2 * eps ** d * float(np.sum(rho_t ** (2 * (d - 2))))
        t_band = 0.0
    t_bad = bad_capacity_sum(config, partition)
    return (math.sqrt(t_second + t_bad)
            + math.sqrt(t_int + ke ** 3 * t_bnd)
            + math.sqrt(t_band))


# ----------------------------------------------------------------------
# ensembles
# ----------------------------------------------------------------------

QUANTITIES = ("bad_capacity", "overlap_pairs", "s_variance", "det_rhs", "hminus")
_ALIASES = {
    "bad_capacity_sum": "bad_capacity",
    "S_variance": "s_variance",
    "det_estimate_rhs": "det_rhs",
    "mu_hminus": "hminus",
}


def canonical_quantity(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in QUANTITIES:
        raise ValueError(f"unknown quantity {name!r}; choose from {QUANTITIES}")
    return name


@dataclass
class EnsembleStat:
    quantity: str
    epsilon_grid: list
    replicates: int
    samples: np.ndarray        # (n_eps, n_reps)
    params: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def means(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    def sigmas(self) -> np.ndarray:
        if self.replicates < 2:
            return np.zeros(len(self.epsilon_grid))
        return self.samples.std(axis=1, ddof=1) / math.sqrt(self.replicates)

    def csv_rows(self, spec: ProcessSpec):
        beta = spec.marks.beta_eff
        for i, eps in enumerate(self.epsilon_grid):
            for r in range(self.replicates):
                yield (self.quantity, spec.d, beta, eps, r, self.samples[i, r])


def _delta_for(spec: ProcessSpec, params: dict) -> float:
    if params.get("delta") is not None:
        return params["delta"]
    return theoretical_exponents(spec.d, spec.marks.beta_eff).delta


def evaluate_quantity(spec: ProcessSpec, quantity: str, replicate: int,
                      params: dict) -> float:
    """One replicate of one monitored statistic (the ensemble worker)."""
    quantity = canonical_quantity(quantity)
    config = sample_configuration(spec, replicate)
    if quantity == "overlap_pairs":
        return float(overlap_pairs(config))

    delta = _delta_for(spec, params)
    if quantity == "bad_capacity":
        part = partition_configuration(config, delta)
        return bad_capacity_sum(config, part)

    k = params.get("k") or mesoscale_parameters(spec.d, spec.epsilon)[0]
    if quantity == "s_variance":
        cov = build_cube_covering(config, k) if config.is_lattice \
            else build_random_covering(config, k, delta)
        base = cov.base if isinstance(cov, RandomCovering) else cov
        s_vals = cell_capacity_averages(config, cov, delta)
        interior = base.interior & base.meets_domain
        if not np.any(interior):
            raise RuntimeError("no interior cells; enlarge the domain or reduce k*eps")
        center = density_centering(spec)
        return float(np.mean((s_vals[interior] - center) ** 2))

    if quantity == "det_rhs":
        part = partition_configuration(config, delta)
        cov = build_cube_covering(config, k) if config.is_lattice \
            else build_random_covering(config, k, delta)
        return quenched_error_surrogate(config, part, cov, delta, k)

    # quantity == "hminus": grid dual norm of the capacity density mismatch
    from .pde import Grid, deposit_measure, hminus_norm
    n = params.get("grid_n", 65)
    field_ = CorrectorField.from_configuration(config, delta)
    mu = build_capacity_measure(field_)
    grid = Grid.from_domain(spec.domain, n)
    g = deposit_measure(mu, c0_constant(spec), grid,
                        min_radius_factor=params.get("min_radius_factor", 0.0))
    return hminus_norm(g, grid)


def _worker(args):
    spec_json, quantity, eps, replicate, params = args
    try:
        spec = ProcessSpec.from_json(spec_json).with_epsilon(eps)
        return True, evaluate_quantity(spec, quantity, replicate, params)
    except Exception as exc:  # per-replicate failures are data, not aborts
        return False, repr(exc)


def ensemble_run(spec: ProcessSpec, quantity: str, epsilon_grid, replicates: int,
                 params: Optional[dict] = None, workers: int = 1) -> EnsembleStat:
    """Run one statistic over the epsilon grid with deterministic seeds.

    Per-replicate failures are recorded; more than 1% of failed jobs aborts
    the run.  Failed entries are filled with NaN and excluded from means.
    """
    quantity = canonical_quantity(quantity)
    params = dict(params or {})
    epsilon_grid = list(epsilon_grid)
    jobs = [(spec.to_json(), quantity, eps, r, params)
            for eps in epsilon_grid for r in range(replicates)]
    results = np.full(len(jobs), np.nan)
    failures = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_worker, jobs, chunksize=4))
    else:
        outcomes = [_worker(job) for job in jobs]
    for i, (ok, val) in enumerate(outcomes):
        if ok:
            results[i] = val
        else:
            failures.append((jobs[i][2], jobs[i][3], val))
            logger.warning("replicate failed: eps=%s rep=%s: %s",
                           jobs[i][2], jobs[i][3], val)
    if len(failures) > 0.01 * len(jobs):
        raise RuntimeError(f"{len(failures)} of {len(jobs)} replicates failed")
    samples = results.reshape(len(epsilon_grid), replicates)
    return EnsembleStat(quantity, epsilon_grid, replicates, samples, params, failures)


# ----------------------------------------------------------------------
# slope fitting
# ----------------------------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    ci: tuple
    theoretical: Optional[float]
    tolerance: float
    comparison: str            # "two_sided" | "at_least"
    passed: Optional[bool]
    used_epsilons: list
    dropped: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept, "r2": self.r2,
            "ci_lo": self.ci[0], "ci_hi": self.ci[1],
            "theoretical": self.theoretical, "tolerance": self.tolerance,
            "comparison": self.comparison, "pass": self.passed,
            "epsilons": self.used_epsilons, "dropped": self.dropped,
        }


def fit_loglog(eps, values):
    """Least-squares slope of log(values) against log(eps)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


_TARGET_FIELD = {
    "bad_capacity": "bad_capacity_exponent",
    "overlap_pairs": "overlap_exponent",
    "det_rhs": "rate",
}
_COMPARISON = {
    "bad_capacity": "at_least",
    "det_rhs": "at_least",
    "overlap_pairs": "two_sided",
}


def fit_rate(stat: EnsembleStat, theo: Optional[TheoreticalExponents] = None,
             target: Optional[float] = None, tolerance: float = 0.2,
             bootstrap: int = 1000, seed: int = 7) -> RateFit:
    """Fit the decay exponent of the ensemble means and compare to theory.

    Means are taken before logs.  Epsilons with nonpositive means are
    dropped with a warning; fewer than four surviving points refuses the
    fit.  The confidence interval resamples replicates (jointly across
    epsilons, matching the shared random numbers).
    """
    if len(stat.epsilon_grid) < 4:
        raise ValueError("need at least 4 epsilon values")
    if stat.replicates < 30 and stat.replicates != 1:
        raise ValueError("need at least 30 replicates (or a deterministic run)")
    means = np.nanmean(stat.samples, axis=1)
    eps = np.asarray(stat.epsilon_grid, dtype=float)
    keep = means > 0
    dropped = [float(e) for e in eps[~keep]]
    if dropped:
        logger.warning("dropping epsilons with nonpositive means: %s", dropped)
    if np.count_nonzero(keep) < 4:
        raise ValueError("fewer than 4 epsilons with positive means; fit refused")
    eps_k, means_k = eps[keep], means[keep]
    slope, intercept, r2 = fit_loglog(eps_k, means_k)

    rng = np.random.default_rng(seed)
    slopes = np.empty(bootstrap)
    n_rep = stat.replicates
    for b in range(bootstrap):
        sel = rng.integers(0, n_rep, size=n_rep)
        m = np.nanmean(stat.samples[:, sel], axis=1)[keep]
        if np.any(m <= 0):
            slopes[b] = np.nan
            continue
        slopes[b], _, _ = fit_loglog(eps_k, m)
    good = slopes[~np.isnan(slopes)]
    if good.size:
        ci = (float(np.percentile(good, 2.5)), float(np.percentile(good, 97.5)))
        ci = (min(ci[0], slope), max(ci[1], slope))
    else:
        ci = (slope, slope)

    if target is None and theo is not None:
        name = _TARGET_FIELD.get(stat.quantity)
        target = getattr(theo, name) if name else None
    comparison = _COMPARISON.get(stat.quantity, "two_sided")
    passed = None
    if target is not None:
        if comparison == "at_least":
            passed = slope >= target - tolerance
        else:
            passed = abs(slope - target) <= tolerance
    return RateFit(slope, intercept, r2, ci, target, tolerance, comparison,
                   passed, [float(e) for e in eps_k], dropped)
