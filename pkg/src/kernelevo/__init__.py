"""Evolutionary optimization of kernels written in a small SSA IR.

Subpackages and modules:

* ``ir``        data model, text format, validation and dominance
* ``vm``        deterministic interpreter, cost model and error metric
* ``genome``    edits, patches and individuals
* ``operators`` mutation operators with SSA repair, messy crossover
* ``nsga``      non-dominated sorting and selection
* ``engine``    the search loop
* ``corpus``    benchmark kernels and test generation
"""

__version__ = "0.1.0"
