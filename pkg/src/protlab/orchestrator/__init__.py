"""Hierarchical research planner, run journal and hypothesis reports."""
