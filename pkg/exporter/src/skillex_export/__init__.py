"""Word-aligned encoder output export for skillex.

Runs a pretrained token encoder over a CoNLL corpus and writes the binary
embedding file (and optionally the per-token label-distribution file) that
skillex consumes.
"""

from .export import ExportConfig, ExportError, ExportSummary, export

__version__ = "0.1.0"

__all__ = ["ExportConfig", "ExportError", "ExportSummary", "export"]
