"""Copula modeling of multi-asset returns with quantum circuit Born machines.

The classical reference pipeline fits Student-t marginals and a t-copula;
the quantum pipeline trains a GHZ-entangled parameterized circuit on the
binned pseudo-samples. Both feed the same VaR / ES backtest.
"""

__version__ = "0.1.0"
