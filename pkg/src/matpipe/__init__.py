"""Match-action table pipelines for in-network classifier inference.

The package turns trained decision trees, random forests and linear SVMs
into table programs that a staged programmable pipeline can execute, plans
where the stages of a program go in a network, and runs packets through a
virtual data plane to check that the deployed program classifies exactly
like the reference fixed-point arithmetic.
"""

__version__ = "0.1.0"
