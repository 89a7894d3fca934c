"""Model adapter exposing segmentation and depth backends over the
gazeseg exec wire protocol.

The adapter is a separate process; the pipeline talks to it only via
stdin/stdout, so this package deliberately has no dependency on the
gazeseg library and carries its own minimal raster codecs.
"""

from .server import AdapterConfig, serve

__all__ = ["AdapterConfig", "serve"]
