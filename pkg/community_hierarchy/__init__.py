"""
Hierarchical community detection core package.

The `detection` subsystem holds the numerical work: hierarchical SBM models and sampling,
bottom-up average linkage, the spectral top-down baseline, recovery thresholds and metrics.
The `experiments` subsystem drives reproducible batch runs (generate, fit, score, phase
diagrams, robustness sweeps) through a results repository, a bounded worker pool and a CLI.
"""
