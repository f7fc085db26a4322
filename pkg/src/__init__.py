"""RFMR toolkit: the ribosome flow model on a ring and its interpretations."""

__version__ = "0.1.0"
