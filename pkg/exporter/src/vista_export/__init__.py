"""One-shot converter from a ResNet-18 checkpoint to the VSTW weight file.

Normalization layers are folded into convolution weights and biases using
their running statistics, so the consumer's inference graph is pure
conv/add/relu.
"""

from vista_export.export import ExportError, ExportSpec, export_weights, load_source_model

__all__ = ["ExportError", "ExportSpec", "export_weights", "load_source_model"]
