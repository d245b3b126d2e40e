"""Neural surrogates for peak significant wave height on evolving coastal landscapes."""

__version__ = "0.1.0"
