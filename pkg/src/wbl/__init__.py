"""Numerical laboratory for Walsh-quantized baker maps.

Submodules
----------
observables : trigonometric-polynomial observables with exact averages
classical   : baker dynamics, H(t), exact correlation sums V(a), V~
engine      : matrix-free quantized operator, coherent bases, traces
spectral    : spectral projectors and Haar-random eigenbasis sampling
stats       : fluctuation, off-diagonal, and equidistribution statistics
cli         : reproducible batch experiments (CSV/JSON/PNG emission)
"""

__version__ = "0.1.0"
