"""Kernel backend selection.

Two interchangeable backends implement the hot per-episode kernels:

* ``tacnet._kernels._core`` -- Cython extension (built by setup.py)
* ``tacnet._kernels.pyref`` -- pure-numpy fallback

The compiled backend is used when importable; set ``TACNET_KERNELS`` to
``python`` or ``compiled`` to force one (``compiled`` raises if the extension
is missing).  ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import pyref

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None


def _select():
    requested = os.environ.get("TACNET_KERNELS", "auto")
    if requested == "python":
        return pyref
    if requested == "compiled":
        if _compiled is None:
            raise ImportError(
                "TACNET_KERNELS=compiled but tacnet._kernels._core is not built"
            )
        return _compiled
    if requested != "auto":
        raise ValueError(f"TACNET_KERNELS must be auto|python|compiled, got {requested!r}")
    return _compiled if _compiled is not None else pyref


_impl = _select()

BACKEND = _impl.BACKEND_NAME
nullspace_basis = _impl.nullspace_basis
softmax_neg_dists = _impl.softmax_neg_dists
refine_centroids_kernel = _impl.refine_centroids_kernel


def available_backends():
    """Names of importable backends (always includes ``python``)."""
    names = ["python"]
    if _compiled is not None:
        names.append("compiled")
    return names


def get_backend(name: str):
    """Return a backend module by name, for tests and benchmarks."""
    if name == "python":
        return pyref
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
