"""Hot-kernel backend selection.

Two interchangeable backends exist: ``numba`` (JIT-compiled loops, the
default when numba is importable) and ``numpy`` (pure vectorized
fallback). The environment variable DISTANA_NUMBA forces the choice:
"0" selects the numpy fallback, "1" requires numba. Anything else (or
unset) auto-detects.

Call sites fetch the active module through :func:`backend` on every
invocation, so tests and benchmarks can flip implementations at runtime
via :func:`set_backend` / :func:`use_backend`.
"""

import contextlib
import os

from . import numpy_backend

KERNEL_NAMES = (
    "lstm_cell_forward",
    "lstm_cell_backward",
    "gather_sum",
    "gather_sum_backward",
    "gather_slot",
    "gather_slot_backward",
    "wave2d_step",
    "ds1_frame",
)

_active_name = "numpy"
_active_module = numpy_backend


def _import_numba_backend():
    from . import numba_backend

    return numba_backend


def available_backends() -> tuple:
    names = ["numpy"]
    try:
        _import_numba_backend()
        names.insert(0, "numba")
    except ImportError:
        pass
    return tuple(names)


def set_backend(name: str) -> None:
    global _active_name, _active_module
    if name == "numpy":
        _active_name, _active_module = "numpy", numpy_backend
    elif name == "numba":
        _active_name, _active_module = "numba", _import_numba_backend()
    else:
        raise ValueError(f"unknown kernel backend {name!r}; use 'numba' or 'numpy'")


def active_backend() -> str:
    return _active_name


def backend():
    """The module implementing the kernels listed in KERNEL_NAMES."""
    return _active_module


@contextlib.contextmanager
def use_backend(name: str):
    previous = _active_name
    set_backend(name)
    try:
        yield _active_module
    finally:
        set_backend(previous)


def _select_initial_backend() -> None:
    flag = os.environ.get("DISTANA_NUMBA", "").strip()
    if flag == "0":
        set_backend("numpy")
    elif flag == "1":
        set_backend("numba")
    else:
        try:
            set_backend("numba")
        except ImportError:
            set_backend("numpy")


_select_initial_backend()
