"""Continuous semantic vectors for boolean and polynomial expressions.

Submodules:

* ``expr``: expression ASTs, parsing, printing.
* ``semantics``: truth tables, polynomial normal forms, equivalence keys.
* ``datagen``: exhaustive enumeration, class splits, JSONL persistence.
* ``ndiff``: tensor engine with reverse-mode autodiff and RMSProp.
* ``models``: EqNet, TreeNN baselines, GRU, and tf-idf encoders.
* ``training``: hinge + subexpression-autoencoder training loop.
* ``evaluation``: kNN retrieval metrics, PR/ROC curves, PCA export.
* ``cli``: the ``semvec`` command.

Only the numpy-free modules are imported eagerly so the CLI can configure
thread pools before numerical code loads.
"""

from . import datagen, expr, rng, semantics
from .expr import Domain, Expr, parse, print_infix

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "Expr",
    "parse",
    "print_infix",
    "datagen",
    "expr",
    "rng",
    "semantics",
    "__version__",
]
