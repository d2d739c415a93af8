"""Verification toolkit for narrow-escape eigenvalue asymptotics on the unit
disk and ball: explicit quasimodes, level-set geometry, a P1 finite element
reference solver, and a Monte Carlo exit-statistics sampler."""

__version__ = "0.1.0"
