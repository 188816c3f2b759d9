"""Experiment configuration, Monte-Carlo runner and CLI."""
