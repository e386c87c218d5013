"""Hierarchical motion synthesis: clip retrieval, content/style re-synthesis
and learned transitions on joint-position skeletons."""

__version__ = "0.1.0"
