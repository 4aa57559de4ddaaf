"""entailforge: synthetic-data augmentation pipeline for NLI corpora."""

__version__ = "0.1.0"
