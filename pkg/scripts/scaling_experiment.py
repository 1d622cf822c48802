#!/usr/bin/env python3
"""Covariance-scaling experiment: the n-scaled count covariance against the
small-system limit constant, printed as a table.

Usage: python scripts/scaling_experiment.py [R] [seed]
"""

import sys

from voterdyn.dynamics import OneWayParams
from voterdyn.estimators import count_covariance, shared_vertex_covariance
from voterdyn.patterns import edge_pattern

R = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 20250801

params = OneWayParams(n=3, p0=0.3, gamma_mp=0.85, gamma_pm=0.15,
                      pi_plus=0.9, pi_minus=0.1, q0=0.85, horizon=1.0)
pattern = edge_pattern("+", "+")

target = shared_vertex_covariance(pattern, pattern, 1.0, 1.0, params, 20 * R, SEED, workers=2)
print(f"limit constant: {target.value:.6f} +- {target.std_error:.6f} "
      f"({target.replications} replications)")
print(f"{'n':>5} {'scaled covariance':>22} {'z vs limit':>11}")
for n in (25, 50, 100):
    cc = count_covariance(n, pattern, pattern, 1.0, 1.0, params, R, SEED + n, workers=2)
    z = (cc.scaled.value - target.value) / cc.scaled.combined_se(target)
    print(f"{n:>5} {cc.scaled.value:>14.6f} +- {cc.scaled.std_error:.6f} {z:>+10.2f}")
