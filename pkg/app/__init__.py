"""Composite-index ranking application: configuration, logging and CLI."""
