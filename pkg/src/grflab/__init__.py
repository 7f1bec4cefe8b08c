"""grflab: a numerical laboratory for generalized Ricci flow.

Couples metric/torsion/dilaton evolution on three desk-scale geometry
backends to backward conjugate heat solves, and certifies curvature
monotonicity formulas, entropy identities, and weighted log-Sobolev
inequalities by direct computation.
"""

__version__ = "0.1.0"
