"""Contour dynamics for planar patches advected by odd homogeneous kernels.

Submodules are imported lazily so the command-line entry point can
configure threading before any numerical library loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "analysis",
    "cde",
    "cli",
    "ellipse_oracle",
    "errors",
    "field",
    "geometry",
    "kernels",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        module = importlib.import_module(f".{name}", __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
