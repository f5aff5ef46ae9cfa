"""cqmlab: quantum mechanics on a curved spacetime fibred over absolute time.

Modules
-------
- units     : dimension-tagged constants and the m/hbar, q/hbar rescalings
- fields    : chart-local scalar fields (expression or callable backed)
- geometry  : metric, connections, curvature, structural validation
- phase     : cosymplectic form, second-order connection, classical dynamics
- falg      : the Lie algebra of special quadratic functions
- quantum   : covariant quantum operators on grid wavefunctions
- solver    : Crank-Nicolson evolution, inner products, spectra
- cli       : scenario runner
"""

__version__ = "0.1.0"
