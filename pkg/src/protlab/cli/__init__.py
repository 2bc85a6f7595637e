"""Command-line surface: argument parsing, runtime wiring and exit codes."""

from .app import EXIT_IO, EXIT_OK, EXIT_PIPELINE, EXIT_USAGE, build_parser, dispatch

__all__ = ["EXIT_IO", "EXIT_OK", "EXIT_PIPELINE", "EXIT_USAGE", "build_parser", "dispatch"]
