"""linkqa: question answering over multiple KBs joined by full and partial links.

Submodules are imported lazily so the command-line entry point can pin
BLAS thread counts before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "kb",
    "mining",
    "cvec",
    "embedding",
    "records",
    "qa",
    "benchmark",
    "evaluation",
    "manifest",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
