"""flowcov: flow-informed covariance models on directed networks."""
