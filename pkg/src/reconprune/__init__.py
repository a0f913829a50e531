"""reconprune: train a saliency-scoring token pruner by adversarial
foreground/background pixel reconstruction, then prune visual tokens Top-K
at inference. Pure numpy, desk-scale."""

__version__ = "0.1.0"
