"""Multi-treebank transition-based dependency parsing with treebank embeddings."""

__version__ = "0.1.0"
