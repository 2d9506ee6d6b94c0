"""Numerical toolkit for delay-coordinate embeddings of dynamical systems.

Modules, bottom up: ``geometry`` (test manifolds), ``dynamics`` (maps on
them), ``observables`` (perturbed polynomial observables), ``embedding``
(delay maps and projections), ``sampling`` (measures, indices, box
counting), ``regularity`` (bi-Lipschitz and rank checks), ``prediction``
(ball-averaged prediction error), ``lyapunov`` (direct and observed
exponents) and the ``config``/``runner``/``cli``/``acceptance`` harness.
"""

__version__ = "0.1.0"
