"""Multi-modal attention network for semantic retrieval of C functions."""

__version__ = "0.1.0"
