"""skelgait: multi-level skeleton-graph sequence encoder for gait re-identification.

This top-level module stays import-light on purpose: the CLI must be able to
pin BLAS thread counts via environment variables before numpy is first
imported, so nothing here pulls in the numeric stack.
"""

__version__ = "0.1.0"
