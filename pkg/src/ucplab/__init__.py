"""Grid laboratory for many-body unique continuation and density-functional checks."""

__version__ = "0.1.0"
