"""Tour kernel selection: compiled extension when built, pure Python otherwise."""

from __future__ import annotations

try:
    from . import _tourkernel as _impl
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from . import routing_py as _impl
    BACKEND = "python"

nn_order = _impl.nn_order
two_opt = _impl.two_opt
tour_length = _impl.tour_length
