"""Sparse piecewise-linear RNNs for dynamical systems reconstruction.

Subpackages cover ground-truth simulation (:mod:`dsrtopo.dynamics`), the
masked PLRNN (:mod:`dsrtopo.model`), teacher-forced training
(:mod:`dsrtopo.training`), reconstruction metrics (:mod:`dsrtopo.metrics`),
iterative pruning (:mod:`dsrtopo.pruning`), graph analysis and topology
generators (:mod:`dsrtopo.graphs`), and a batch CLI (:mod:`dsrtopo.cli`).
"""

__version__ = "0.1.0"
