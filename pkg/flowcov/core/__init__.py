"""flowcov.core: foundation layer.

Contains the domain types, errors, config, grid parser, artifact formats and
every numerical module (network, markov, covariance, estimator, fields,
extremes, bench). This package has NO dependencies on flowcov.commands or
flowcov.registry.
"""
