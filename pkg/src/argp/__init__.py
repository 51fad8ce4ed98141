"""Adaptive-resolution Gaussian-process terrain mapping.

A 2D scalar field is mapped as a joint Gaussian belief over the leaf cells
of a uniform-subdivision tree.  Cells carry area-averaged field values whose
correlations come from an integral SE kernel; noisy averaged measurements
are fused with Kalman updates, and confidently uninteresting sibling cells
are merged into their parent to keep the map compact.  Baseline mappers,
a lawnmower pattern and a greedy planner, benchmark harnesses and a CLI
round out the experiment tooling.
"""

from .geometry import Rect
from .kernels import Hyperparams

__version__ = "0.1.0"

__all__ = ["Rect", "Hyperparams", "__version__"]
