"""Random codebooks whose random subsets compress well, and the tools to check it."""

__version__ = "0.1.0"
