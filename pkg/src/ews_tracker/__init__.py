"""Document-grounded extraction of Early Warning System budget allocations.

The engine ingests parsed project documents (interchange JSON), chunks and
context-augments them, indexes the chunks in a dual lexical/dense store,
retrieves evidence with reciprocal-rank fusion, and runs one of several
classification + budget-allocation strategies whose outputs are evaluated
against expert gold annotations.
"""

__version__ = "0.1.0"

INDEX_FORMAT_VERSION = 1
