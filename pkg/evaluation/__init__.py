"""
Evaluation package: metrics, recovery study and prediction benchmark.
"""
