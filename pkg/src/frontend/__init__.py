"""Command-line surface of the engine."""
