"""Skeleton-stream recognition of medical-related human activities.

Pipeline: 25-joint skeleton sequences -> rasterized frame tensors ->
per-frame MBConv encoder -> ConvLSTM over time -> class posteriors ->
streamed event detection -> SMS alerting for critical activities.
"""

from skelwatch.tensor import Tensor, GradientTape, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "GradientTape", "backward", "__version__"]
