"""Backend selection for the solver kernels.

DUALBATCH_BACKEND controls the default:
  auto    use numba when importable, else the interpreted kernels (default)
  numba   require numba (ImportError surfaces)
  python  force the interpreted kernels

Compiled kernels are cached on disk by numba, so only the first process pays
compilation. The interpreted variant executes the identical statements, so
each backend is deterministic on its own; across backends results agree to
libm rounding (~1e-15 relative, only where log/exp are involved).
"""

from __future__ import annotations

import os

from . import _kernels_impl
from .errors import ConfigError

_CHOICES = ("auto", "numba", "python")
_env = os.environ.get("DUALBATCH_BACKEND", "auto").strip().lower() or "auto"
if _env not in _CHOICES:
    raise ConfigError(
        f"DUALBATCH_BACKEND={_env!r} invalid; expected one of {_CHOICES}")

_namespaces: dict[str, dict] = {}


def _python_ns() -> dict:
    if "python" not in _namespaces:
        _namespaces["python"] = _kernels_impl.build(None)
    return _namespaces["python"]


def _numba_ns() -> dict:
    if "numba" not in _namespaces:
        from numba import njit
        _namespaces["numba"] = _kernels_impl.build(
            lambda f: njit(cache=True)(f))
    return _namespaces["numba"]


def get_backend(name: str = "active") -> dict:
    """Kernel namespace for a backend name (active|auto|numba|python)."""
    if name == "active":
        name = _env
    if name == "auto":
        try:
            return _numba_ns()
        except ImportError:
            return _python_ns()
    if name == "numba":
        try:
            return _numba_ns()
        except ImportError as exc:
            raise ConfigError("numba backend requested but not importable") from exc
    if name == "python":
        return _python_ns()
    raise ConfigError(f"unknown backend {name!r}")


def active_backend_name() -> str:
    """Resolved name of the default backend ('numba' or 'python')."""
    if _env == "python":
        return "python"
    if _env == "numba":
        return "numba"
    try:
        import numba  # noqa: F401
        return "numba"
    except ImportError:
        return "python"
