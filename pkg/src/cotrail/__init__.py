"""Multi-user activity-trail toolkit for B2B conversion prediction.

Pipeline stages: synthetic corpus generation with planted ground truth,
skip-gram activity embeddings, LSH neighbor retrieval, conversion-rate
seed lists with AUC-gated expansion, trail-augmented logistic-regression
conversion prediction, and conditional-entropy analysis of augmentation.
"""

from cotrail._backend import kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
