"""Active Subset - uncertainty-driven subject-level subset selection for imbalanced grouped data."""

__version__ = "0.1.0"
