"""Kernel backend selection.

The compiled extension is used when it imports; ``CLOTHUNTANGLE_PURE=1``
forces the numpy fallback. ``CONTOUR_THREADS`` caps OpenMP worker threads in
the compiled narrow phase.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("CLOTHUNTANGLE_PURE"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def thread_count() -> int:
    raw = os.environ.get("CONTOUR_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def use(backend: str):
    """Switch backend at runtime (``"cython"`` or ``"python"``); returns the previous name."""
    global _impl, BACKEND
    prev = BACKEND
    if backend == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif backend == "cython":
        from . import _kernels

        _impl, BACKEND = _kernels, "cython"
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return prev


def query_overlaps(*args):
    return _impl.query_overlaps(*args)


def tri_tri_batch(x, faces, fa, fb):
    if BACKEND == "cython":
        return _impl.tri_tri_batch(x, faces, fa, fb, thread_count())
    return _impl.tri_tri_batch(x, faces, fa, fb)


def point_face_batch(x, faces, nodes, fids, eps):
    if BACKEND == "cython":
        return _impl.point_face_batch(x, faces, nodes, fids, float(eps), thread_count())
    return _impl.point_face_batch(x, faces, nodes, fids, eps)


def point_triangle_batch(p, x, faces, fids):
    return _impl.point_triangle_batch(p, x, faces, fids)


def cython_available() -> bool:
    """True when the compiled extension can be imported."""
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
