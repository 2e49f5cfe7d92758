"""Two-outcome interference experiments under unitary and collapse dynamics."""

__version__ = "0.1.0"
