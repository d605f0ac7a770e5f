"""collapselab: numerical laboratory for gravity-related collapse dynamics.

Modules
-------
core          unit system, probe parameters, characteristic scales
noise         counter-based streams, correlated potential field on lattices
pointer       Gaussian ansatz and grid solver for the localized states
jumps         piecewise-deterministic (jump) unraveling of the same dynamics
trajectories  equilibrium-regime centroid ensembles and moment laws
decoherence   two-point superpositions and mass-density decoherence rates
emergent      mean-field pair attraction between probes and coupling fits
pressure      hard-sphere gas bombardment analogue and pressure estimator
cli           command line front end
"""

__version__ = "0.1.0"

from .core import make_probe_params, characteristic_scales  # noqa: F401
