"""
opuclab: numerical experiments on orthogonal polynomials on the unit circle
with decaying Verblunsky coefficients.

Modules
-------
coeffs    coefficient sequences, weighted norms and dyadic partitions
szego     Szego recursion and transfer-matrix norms
prufer    Prufer radius and phase, WKB phase bookkeeping
measures  atomic Holder measures (Cantor-type)
wkb       WKB transform norms, block estimates, summation by parts
badset    angle scans, super-level sets and box dimension
cli       command-line front end
"""

__version__ = "0.1.0"
