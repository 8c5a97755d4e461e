"""Evaluation: records, metrics, baselines, dataset statistics and the harness."""
