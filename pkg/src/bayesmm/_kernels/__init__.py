"""Backend selection for the hot scalar kernel.

The compiled extension is preferred when the build produced it; otherwise the
pure-NumPy implementation of the identical algorithm is used. Both expose
``log_2f1_core(a, b, c, z, rel_tol, max_panels)`` and a ``BACKEND`` tag.
"""

try:
    from ._hyp2f1 import BACKEND, log_2f1_core
except ImportError:  # extension not built on this platform
    from ._hyp2f1_py import BACKEND, log_2f1_core

__all__ = ["BACKEND", "log_2f1_core"]
