"""Good/bad hole decomposition and overlap statistics.

Classifies a heavy-tailed Poisson configuration, verifies the structural
invariants of the decomposition, and tracks how the bad-capacity sum and
the overlap count react to the scale parameter.
"""

import numpy as np

from holelab import (DomainDescriptor, MarkDistribution, ProcessSpec,
                     bad_capacity_sum, overlap_pairs, sample_configuration,
                     verify_partition)
from holelab.partition import partition_configuration

marks = MarkDistribution.pareto_for_beta(d=3, beta_eff=0.5)

print("eps      points   good     J    K    C    I   bad-capacity   overlaps")
for eps in (1 / 8, 1 / 16, 1 / 32):
    spec = ProcessSpec(d=3, epsilon=eps, process="poisson", marks=marks,
                       domain=DomainDescriptor("axis_cube", 1.0),
                       intensity=1.0, master_seed=7)
    config = sample_configuration(spec, replicate=0)
    part = partition_configuration(config, delta=0.8)
    print(f"1/{round(1 / eps):<4d} {len(config):8d} {part.good.size:7d} "
          f"{part.bad_J.size:5d} {part.bad_K.size:4d} {part.bad_C.size:4d} "
          f"{part.bad_I_tilde.size:4d}   {bad_capacity_sum(config, part):12.5f}"
          f" {overlap_pairs(config):10d}")

# the invariants hold realization by realization
spec = ProcessSpec(d=3, epsilon=1 / 16, process="poisson", marks=marks,
                   domain=DomainDescriptor("axis_cube", 1.0), intensity=1.0,
                   master_seed=7)
config = sample_configuration(spec, 0)
report = verify_partition(config, partition_configuration(config, 0.8))
print("\ninvariant checks:")
for check in report.checks:
    print(f"  {check.name:26s} {'ok' if check.passed else 'FAILED ' + check.detail}")
