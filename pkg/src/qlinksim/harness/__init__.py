"""Experiment harness: presets, workloads, metrics, runs and CLI."""
