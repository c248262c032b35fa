"""Task-adaptive clustering for semi-supervised few-shot classification.

A metric-based few-shot learner: an embedding network and per-class reference
vectors are meta-trained across episodes; each task gets its own linear
projection space (the null space of reference/centroid error vectors) where
unlabeled samples are soft-clustered to refine class centroids, iteratively
rebuilding the projection before queries are classified.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
