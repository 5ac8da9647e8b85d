"""Experiment harness: configuration, the offline driver, the capture
benchmark, trajectory generators, the live service and the CLI."""
