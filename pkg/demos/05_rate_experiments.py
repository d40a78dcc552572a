"""Small annealed-rate experiments with slope fits.

Runs a reduced bad-capacity ensemble and a reduced error-surrogate
ensemble, fits the decay slopes, and compares them to the predicted
exponents.  (The full-size runs live in the acceptance suite.)
"""

from holelab import (DomainDescriptor, MarkDistribution, ProcessSpec,
                     ensemble_run, fit_rate, theoretical_exponents)

marks = MarkDistribution.pareto_for_beta(d=3, beta_eff=0.5)
theo = theoretical_exponents(3, 0.5, marks)
print(f"beta = 0.5: delta = {theo.delta}, error-rate exponent = {theo.rate}, "
      f"bad-capacity exponent = {theo.bad_capacity_exponent}")

spec = ProcessSpec(d=3, epsilon=1 / 8, process="lattice", marks=marks,
                   domain=DomainDescriptor("axis_cube", 1.0), master_seed=1)
grid = [1 / 8, 1 / 16, 1 / 32, 1 / 64]

stat = ensemble_run(spec, "bad_capacity", grid, replicates=60,
                    params={"delta": theo.delta})
fit = fit_rate(stat, theo=theo, tolerance=0.15)
print(f"\nbad-capacity means: {[f'{m:.4f}' for m in stat.means()]}")
print(f"fitted slope {fit.slope:.3f} (CI {fit.ci[0]:.3f}..{fit.ci[1]:.3f}), "
      f"annealed lower bound {fit.theoretical} - tol")

stat2 = ensemble_run(spec, "det_rhs", grid, replicates=30,
                     params={"delta": theo.delta})
fit2 = fit_rate(stat2, theo=theo, tolerance=0.15)
print(f"\nerror-surrogate means: {[f'{m:.4f}' for m in stat2.means()]}")
print(f"fitted slope {fit2.slope:.3f} vs predicted rate {fit2.theoretical}")
