"""Coarse-to-fine document-grounded dialogue at desk scale: dense passage
retrieval, cross-encoder reranking, and joint span refinement + answer
generation, with training, evaluation, and serving."""

__version__ = "0.1.0"
