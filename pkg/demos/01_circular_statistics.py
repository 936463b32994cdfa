"""Von Mises primitives: densities, Bessel functions, sampling.

Run:  python demos/01_circular_statistics.py
"""

import numpy as np

from geohmm import (bessel_i0, bessel_ratio, resultant_to_kappa, vm_density,
                    vm_sample, wrap_angle)
from geohmm.circstats import circular_mean, mean_resultant_length

print("Modified Bessel function I0 and the resultant-length ratio A:")
for kappa in (0.0, 0.5, 1.0, 2.0, 10.0, 50.0):
    print("  kappa=%5.1f  I0=%12.6f  A=I1/I0=%.6f"
          % (kappa, bessel_i0(kappa), bessel_ratio(kappa)))

print("\nDensity of the von Mises distribution (mu=0):")
grid = np.linspace(-np.pi, np.pi, 9)
for kappa in (0.0, 2.0, 10.0):
    row = "  kappa=%4.1f  " % kappa
    row += "  ".join("%.3f" % vm_density(t, 0.0, kappa) for t in grid)
    print(row)

print("\nInverting A(kappa): concentration from a target resultant length")
for r in (0.1, 0.5, 0.697775, 0.9, 0.99):
    kappa = resultant_to_kappa(r)
    print("  r=%.6f -> kappa=%9.4f  (A(kappa)=%.6f)"
          % (r, kappa, bessel_ratio(kappa)))

print("\nSampling: 100k draws at mu=1.0, kappa=5")
rng = np.random.default_rng(42)
draws = vm_sample(1.0, 5.0, rng, size=100_000)
print("  circular mean   %.4f   (true 1.0)" % circular_mean(draws))
print("  resultant       %.4f   (A(5) = %.4f)"
      % (mean_resultant_length(draws), bessel_ratio(5.0)))

print("\nAngle wrapping into (-pi, pi]:")
for theta in (0.0, 3 * np.pi, -np.pi, 7.0):
    print("  wrap(%8.4f) = %8.4f" % (theta, wrap_angle(theta)))
